#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "audsim/config.hpp"
#include "audsim/rng.hpp"

namespace audsim {

/// Per-experiment pilot assignment: one pilot per user, reused verbatim on
/// every channel the user transmits in, plus the per-channel pilot matrices.
/// Immutable after construction; shared read-only across trial workers.
struct PilotBook {
  int pilot_length = 0;
  int num_channels = 0;
  int copies = 0;

  Eigen::MatrixXcd pilots;  // T_p x (Q*F), column q = pilot of user q
  std::vector<std::vector<int>> channel_sets;       // per user, sorted, size C
  std::vector<std::vector<int>> per_channel_users;  // per channel, ascending ids
  std::vector<Eigen::MatrixXcd> per_channel_matrix; // T_p x Q' each
  std::vector<std::vector<int>> global_to_local;    // per channel, -1 if absent

  int total_users() const { return static_cast<int>(pilots.cols()); }
};

/// Pilot symbols drawn uniformly from {(+-1 +-i)/sqrt(2*T_p)}; each column
/// has unit Euclidean norm by construction.
inline Eigen::MatrixXcd generate_pilots(int count, int pilot_length, Rng& rng) {
  if (count < 1 || pilot_length < 1)
    throw std::invalid_argument("generate_pilots: count and pilot_length must be positive");
  const double s = 1.0 / std::sqrt(2.0 * pilot_length);
  Eigen::MatrixXcd p(pilot_length, count);
  for (int q = 0; q < count; ++q) {
    for (int t = 0; t < pilot_length; ++t) {
      const std::uint64_t b = rng.bits();
      p(t, q) = {(b & 1) ? s : -s, (b & 2) ? s : -s};
    }
  }
  return p;
}

/// Modular round-robin assignment: user u gets channels {(u+j) mod F},
/// j = 0..C-1, so every channel hosts exactly Q*C of the Q*F users.
inline std::vector<std::vector<int>> assign_channels(int users_per_channel_base,
                                                     int num_channels,
                                                     int num_copies) {
  if (num_copies > num_channels)
    throw std::invalid_argument("assign_channels: C must not exceed F");
  const long total = static_cast<long>(users_per_channel_base) * num_channels;
  std::vector<std::vector<int>> sets(total);
  for (long u = 0; u < total; ++u) {
    sets[u].reserve(num_copies);
    for (int j = 0; j < num_copies; ++j)
      sets[u].push_back(static_cast<int>((u + j) % num_channels));
    std::sort(sets[u].begin(), sets[u].end());
  }
  return sets;
}

/// Randomized balanced alternative: a random permutation of the users fed
/// through the modular rule. Keeps |C_q| = C and Q*C users per channel.
inline std::vector<std::vector<int>> assign_channels_random(
    int users_per_channel_base, int num_channels, int num_copies, Rng& rng) {
  auto base = assign_channels(users_per_channel_base, num_channels, num_copies);
  const std::size_t n = base.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.bits() % i);
    std::swap(perm[i - 1], perm[j]);
  }
  std::vector<std::vector<int>> sets(n);
  for (std::size_t u = 0; u < n; ++u) sets[perm[u]] = std::move(base[u]);
  return sets;
}

/// Assembles the per-channel pilot matrices. Column order within a channel
/// is ascending global user id.
inline PilotBook build_pilot_matrices(const Eigen::MatrixXcd& pilots,
                                      const std::vector<std::vector<int>>& channel_sets) {
  if (pilots.cols() != static_cast<Eigen::Index>(channel_sets.size()))
    throw std::invalid_argument("build_pilot_matrices: pilot count != |channel_sets|");
  if (channel_sets.empty())
    throw std::invalid_argument("build_pilot_matrices: empty assignment");

  int num_channels = 0;
  for (const auto& s : channel_sets)
    for (int f : s) num_channels = std::max(num_channels, f + 1);

  PilotBook book;
  book.pilot_length = static_cast<int>(pilots.rows());
  book.num_channels = num_channels;
  book.copies = static_cast<int>(channel_sets.front().size());
  book.pilots = pilots;
  book.channel_sets = channel_sets;
  book.per_channel_users.assign(num_channels, {});
  for (std::size_t u = 0; u < channel_sets.size(); ++u)
    for (int f : channel_sets[u])
      book.per_channel_users[f].push_back(static_cast<int>(u));
  // ids arrive in ascending u already; keep the sort in case callers hand
  // in custom assignments
  for (auto& lst : book.per_channel_users) std::sort(lst.begin(), lst.end());

  book.per_channel_matrix.resize(num_channels);
  book.global_to_local.assign(num_channels,
                              std::vector<int>(channel_sets.size(), -1));
  for (int f = 0; f < num_channels; ++f) {
    const auto& users = book.per_channel_users[f];
    Eigen::MatrixXcd m(book.pilot_length, static_cast<Eigen::Index>(users.size()));
    for (std::size_t j = 0; j < users.size(); ++j) {
      m.col(static_cast<Eigen::Index>(j)) = pilots.col(users[j]);
      book.global_to_local[f][users[j]] = static_cast<int>(j);
    }
    book.per_channel_matrix[f] = std::move(m);
  }
  return book;
}

/// Book for one experiment configuration, fully determined by the seed.
inline PilotBook make_pilot_book(const ExperimentConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  auto pilots = generate_pilots(static_cast<int>(cfg.total_users()),
                                cfg.pilot_length, rng);
  auto sets = cfg.channel_assignment == ChannelAssignment::kRoundRobin
                  ? assign_channels(cfg.users_per_channel_base, cfg.num_channels,
                                    cfg.num_copies)
                  : assign_channels_random(cfg.users_per_channel_base,
                                           cfg.num_channels, cfg.num_copies, rng);
  return build_pilot_matrices(pilots, sets);
}

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

}  // namespace detail

/// Binary pilot-book dump for cross-implementation comparison.
/// Layout (all little-endian): "ASPB", u32 version, u32 T_p, u32 users,
/// u32 F, u32 C, then the pilot matrix column-major as (re,im) f64 pairs,
/// then each user's sorted channel set as u32.
inline void dump_pilot_book_binary(const PilotBook& book, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os.write("ASPB", 4);
  detail::put_u32(os, 1);
  detail::put_u32(os, static_cast<std::uint32_t>(book.pilot_length));
  detail::put_u32(os, static_cast<std::uint32_t>(book.total_users()));
  detail::put_u32(os, static_cast<std::uint32_t>(book.num_channels));
  detail::put_u32(os, static_cast<std::uint32_t>(book.copies));
  for (Eigen::Index q = 0; q < book.pilots.cols(); ++q)
    for (Eigen::Index t = 0; t < book.pilots.rows(); ++t) {
      detail::put_f64(os, book.pilots(t, q).real());
      detail::put_f64(os, book.pilots(t, q).imag());
    }
  for (const auto& s : book.channel_sets)
    for (int f : s) detail::put_u32(os, static_cast<std::uint32_t>(f));
  if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

inline PilotBook load_pilot_book_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (std::string(magic, 4) != "ASPB")
    throw std::runtime_error("'" + path + "' is not a pilot book dump");
  if (detail::get_u32(is) != 1) throw std::runtime_error("unsupported pilot book version");
  const int tp = static_cast<int>(detail::get_u32(is));
  const int users = static_cast<int>(detail::get_u32(is));
  detail::get_u32(is);  // F, reconstructed from the sets
  const int copies = static_cast<int>(detail::get_u32(is));
  Eigen::MatrixXcd pilots(tp, users);
  for (int q = 0; q < users; ++q)
    for (int t = 0; t < tp; ++t) {
      const double re = detail::get_f64(is);
      const double im = detail::get_f64(is);
      pilots(t, q) = {re, im};
    }
  std::vector<std::vector<int>> sets(users);
  for (auto& s : sets) {
    s.resize(copies);
    for (int& f : s) f = static_cast<int>(detail::get_u32(is));
  }
  if (!is) throw std::runtime_error("truncated pilot book dump '" + path + "'");
  return build_pilot_matrices(pilots, sets);
}

/// CSV dump: one row per user with its channel set and (re, im) symbol pairs.
inline void dump_pilot_book_csv(const PilotBook& book, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os << "user,channels";
  for (int t = 0; t < book.pilot_length; ++t) os << ",re_" << t << ",im_" << t;
  os << "\n";
  char buf[64];
  auto fmt = [&](double v) {
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, p);
  };
  for (int q = 0; q < book.total_users(); ++q) {
    os << q << ",";
    for (std::size_t i = 0; i < book.channel_sets[q].size(); ++i) {
      if (i) os << "|";
      os << book.channel_sets[q][i];
    }
    for (int t = 0; t < book.pilot_length; ++t)
      os << "," << fmt(book.pilots(t, q).real()) << ","
         << fmt(book.pilots(t, q).imag());
    os << "\n";
  }
}

}  // namespace audsim
