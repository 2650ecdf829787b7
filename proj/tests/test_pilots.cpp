#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <set>

#include "audsim/pilots.hpp"

using namespace audsim;

TEST_CASE("pilot symbols come from the scaled QPSK alphabet with unit norm") {
  Rng rng(7);
  const int tp = 8;
  auto pilots = generate_pilots(50, tp, rng);
  const double s = 1.0 / std::sqrt(2.0 * tp);
  for (int q = 0; q < 50; ++q) {
    for (int t = 0; t < tp; ++t) {
      const auto v = pilots(t, q);
      CHECK(std::abs(std::abs(v.real()) - s) < 1e-15);
      CHECK(std::abs(std::abs(v.imag()) - s) < 1e-15);
      // every entry has modulus 1/sqrt(T_p)
      CHECK(std::abs(std::abs(v) - 1.0 / std::sqrt(double(tp))) < 1e-12);
    }
    CHECK(std::abs(pilots.col(q).norm() - 1.0) < 1e-12);
  }
}

TEST_CASE("pilot of length one is a unit-modulus QPSK symbol") {
  Rng rng(3);
  auto pilots = generate_pilots(10, 1, rng);
  for (int q = 0; q < 10; ++q)
    CHECK(std::abs(std::abs(pilots(0, q)) - 1.0) < 1e-12);
}

TEST_CASE("pilot generation is reproducible from the seed") {
  Rng a(42), b(42);
  auto pa = generate_pilots(20, 16, a);
  auto pb = generate_pilots(20, 16, b);
  CHECK(pa == pb);
}

TEST_CASE("modular channel assignment partitions when C = 1") {
  auto sets = assign_channels(1, 2, 1);
  REQUIRE(sets.size() == 2);
  CHECK(sets[0] == std::vector<int>{0});
  CHECK(sets[1] == std::vector<int>{1});
}

TEST_CASE("assignment with C = F puts everyone everywhere") {
  auto sets = assign_channels(1, 2, 2);
  REQUIRE(sets.size() == 2);
  CHECK(sets[0] == std::vector<int>({0, 1}));
  CHECK(sets[1] == std::vector<int>({0, 1}));
}

TEST_CASE("every channel hosts exactly Q*C users") {
  // enumerate the modular assignment and count per-channel membership
  const int Q = 2, F = 4, C = 2;
  auto sets = assign_channels(Q, F, C);
  REQUIRE(sets.size() == static_cast<std::size_t>(Q * F));
  std::vector<int> load(F, 0);
  for (const auto& s : sets) {
    CHECK(static_cast<int>(s.size()) == C);
    std::set<int> uniq(s.begin(), s.end());
    CHECK(uniq.size() == s.size());
    for (int f : s) ++load[f];
  }
  for (int f = 0; f < F; ++f) CHECK(load[f] == Q * C);
}

TEST_CASE("randomized balanced assignment keeps the same load") {
  const int Q = 3, F = 4, C = 3;
  Rng rng(11);
  auto sets = assign_channels_random(Q, F, C, rng);
  std::vector<int> load(F, 0);
  for (const auto& s : sets) {
    CHECK(static_cast<int>(s.size()) == C);
    for (int f : s) ++load[f];
  }
  for (int f = 0; f < F; ++f) CHECK(load[f] == Q * C);
}

TEST_CASE("F = C gives identical per-channel matrices") {
  ExperimentConfig cfg;
  cfg.users_per_channel_base = 4;
  cfg.num_channels = 3;
  cfg.num_copies = 3;
  cfg.pilot_length = 8;
  cfg.fusion = FusionStrategy::kIndependentUnion;
  auto book = make_pilot_book(cfg, 5);
  REQUIRE(book.per_channel_matrix.size() == 3);
  CHECK(book.per_channel_matrix[0] == book.per_channel_matrix[1]);
  CHECK(book.per_channel_matrix[0] == book.per_channel_matrix[2]);
}

TEST_CASE("C = 1 gives pairwise-disjoint channel populations") {
  ExperimentConfig cfg;
  cfg.users_per_channel_base = 4;
  cfg.num_channels = 3;
  cfg.num_copies = 1;
  cfg.fusion = FusionStrategy::kIndependentUnion;
  auto book = make_pilot_book(cfg, 5);
  std::set<int> seen;
  for (const auto& users : book.per_channel_users) {
    for (int q : users) {
      CHECK(seen.count(q) == 0);
      seen.insert(q);
    }
  }
  CHECK(seen.size() == static_cast<std::size_t>(book.total_users()));
}

TEST_CASE("single user, single channel degenerates to one column") {
  Rng rng(1);
  auto pilots = generate_pilots(1, 6, rng);
  auto book = build_pilot_matrices(pilots, {{0}});
  REQUIRE(book.per_channel_matrix.size() == 1);
  CHECK(book.per_channel_matrix[0].rows() == 6);
  CHECK(book.per_channel_matrix[0].cols() == 1);
  CHECK(book.per_channel_matrix[0].col(0) == pilots.col(0));
}

TEST_CASE("book invariants: membership sum, column identity, gram diagonal") {
  ExperimentConfig cfg;
  cfg.users_per_channel_base = 6;
  cfg.num_channels = 4;
  cfg.num_copies = 2;
  cfg.pilot_length = 8;
  cfg.fusion = FusionStrategy::kIndependentUnion;
  auto book = make_pilot_book(cfg, 9);

  std::size_t member_sum = 0;
  for (const auto& users : book.per_channel_users) member_sum += users.size();
  CHECK(member_sum == static_cast<std::size_t>(6 * 4 * 2));

  for (int f = 0; f < book.num_channels; ++f) {
    const auto& users = book.per_channel_users[f];
    for (std::size_t j = 0; j < users.size(); ++j)
      CHECK(book.per_channel_matrix[f].col(j) == book.pilots.col(users[j]));
    Eigen::MatrixXcd gram =
        book.per_channel_matrix[f].adjoint() * book.per_channel_matrix[f];
    for (Eigen::Index i = 0; i < gram.rows(); ++i)
      CHECK(std::abs(gram(i, i).real() - 1.0) < 1e-12);
  }

  for (int q = 0; q < book.total_users(); ++q)
    for (int f : book.channel_sets[q])
      CHECK(book.global_to_local[f][q] >= 0);
}

TEST_CASE("book regeneration from the same seed is bit-identical") {
  ExperimentConfig cfg;
  cfg.users_per_channel_base = 5;
  cfg.num_channels = 2;
  cfg.num_copies = 2;
  cfg.fusion = FusionStrategy::kIndependentUnion;
  auto a = make_pilot_book(cfg, 77);
  auto b = make_pilot_book(cfg, 77);
  CHECK(a.pilots == b.pilots);
  CHECK(a.channel_sets == b.channel_sets);
}

TEST_CASE("binary dump round-trips") {
  ExperimentConfig cfg;
  cfg.users_per_channel_base = 3;
  cfg.num_channels = 2;
  cfg.num_copies = 2;
  cfg.pilot_length = 4;
  cfg.fusion = FusionStrategy::kIndependentUnion;
  auto book = make_pilot_book(cfg, 13);

  const std::string path = "pilot_book_test.aspb";
  dump_pilot_book_binary(book, path);
  auto loaded = load_pilot_book_binary(path);
  std::remove(path.c_str());

  CHECK(loaded.pilots == book.pilots);
  CHECK(loaded.channel_sets == book.channel_sets);
  CHECK(loaded.per_channel_users == book.per_channel_users);
}

TEST_CASE("csv dump writes one row per user") {
  ExperimentConfig cfg;
  cfg.users_per_channel_base = 3;
  cfg.num_channels = 2;
  cfg.num_copies = 1;
  cfg.pilot_length = 4;
  cfg.fusion = FusionStrategy::kIndependentUnion;
  auto book = make_pilot_book(cfg, 13);

  const std::string path = "pilot_book_test.csv";
  dump_pilot_book_csv(book, path);
  std::ifstream f(path);
  int rows = 0;
  std::string line;
  while (std::getline(f, line)) ++rows;
  f.close();
  std::remove(path.c_str());
  CHECK(rows == book.total_users() + 1);  // header + users
}
