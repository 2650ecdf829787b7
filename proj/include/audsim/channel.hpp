#pragma once

#include <Eigen/Dense>
#include <limits>
#include <stdexcept>
#include <vector>

#include "audsim/config.hpp"
#include "audsim/pilots.hpp"
#include "audsim/rng.hpp"

namespace audsim {

struct ActivityRealization {
  std::vector<std::uint8_t> active;  // flag per global user
  std::vector<int> active_set;       // ascending ids with flag set
  int population = 0;
};

/// Independent Bernoulli(p) activation per user; the active set may be empty.
inline ActivityRealization sample_activity(int num_users, double p, Rng& rng) {
  if (num_users < 1) throw std::invalid_argument("sample_activity: num_users must be positive");
  ActivityRealization a;
  a.population = num_users;
  a.active.assign(static_cast<std::size_t>(num_users), 0);
  for (int q = 0; q < num_users; ++q) {
    if (rng.bernoulli(p)) {
      a.active[q] = 1;
      a.active_set.push_back(q);
    }
  }
  return a;
}

/// Test-only deterministic overrides: fixed per-channel fading rows (Q' x M)
/// and/or fixed noise (T_p x M) replace the random draws.
struct SynthOverrides {
  const std::vector<Eigen::MatrixXcd>* fading = nullptr;
  const std::vector<Eigen::MatrixXcd>* noise = nullptr;
};

/// One Monte-Carlo frame. Y_f is assembled as signal + noise elementwise, so
/// signal + noise - received is exactly zero.
struct FrameRealization {
  ActivityRealization activity;
  std::vector<Eigen::MatrixXcd> system;    // X_f, Q' x M, zero rows when inactive
  std::vector<Eigen::MatrixXcd> signal;    // Phi_f * X_f
  std::vector<Eigen::MatrixXcd> noise;     // V_f, T_p x M, CN(0,1) entries
  std::vector<Eigen::MatrixXcd> received;  // Y_f
  double large_scale_fading = 1.0;  // beta, absorbed by power control
};

/// Synthesizes the received signal on every channel. Per-replica amplitude is
/// sqrt(T_p * Gamma / C): power control inverts the (unit) large-scale gain
/// and the transmit power splits evenly over the C copies. Fading is fresh
/// per (user, channel, antenna), noise fresh per (channel, symbol, antenna).
inline FrameRealization synthesize_frame(const PilotBook& book,
                                         const ActivityRealization& activity,
                                         const ExperimentConfig& cfg, Rng& rng,
                                         const SynthOverrides* ov = nullptr) {
  if (activity.population != book.total_users())
    throw std::invalid_argument("synthesize_frame: activity does not cover the population");

  const int F = book.num_channels;
  const int M = cfg.num_antennas;
  const int tp = book.pilot_length;
  const double amp =
      std::sqrt(static_cast<double>(tp) * cfg.snr_linear() / cfg.num_copies);

  FrameRealization frame;
  frame.activity = activity;
  frame.system.resize(F);
  frame.signal.resize(F);
  frame.noise.resize(F);
  frame.received.resize(F);

  for (int f = 0; f < F; ++f) {
    const auto& users = book.per_channel_users[f];
    const auto qprime = static_cast<Eigen::Index>(users.size());
    Eigen::MatrixXcd x = Eigen::MatrixXcd::Zero(qprime, M);
    for (Eigen::Index j = 0; j < qprime; ++j) {
      if (!activity.active[users[j]]) continue;
      for (int m = 0; m < M; ++m) {
        const std::complex<double> h =
            (ov && ov->fading) ? (*ov->fading)[f](j, m) : rng.complex_normal();
        x(j, m) = amp * h;
      }
    }
    Eigen::MatrixXcd v(tp, M);
    if (ov && ov->noise) {
      v = (*ov->noise)[f];
    } else {
      for (int m = 0; m < M; ++m)
        for (int t = 0; t < tp; ++t) v(t, m) = rng.complex_normal();
    }
    frame.signal[f] = book.per_channel_matrix[f] * x;
    frame.received[f] = frame.signal[f] + v;
    frame.system[f] = std::move(x);
    frame.noise[f] = std::move(v);
  }
  return frame;
}

/// Measured per-channel SNR ||Phi X||^2 / ||V||^2 (squared Frobenius norms).
/// Returns +inf for a noiseless channel, which only happens under test
/// overrides.
inline std::vector<double> per_channel_snr(const FrameRealization& frame) {
  std::vector<double> snr(frame.signal.size());
  for (std::size_t f = 0; f < frame.signal.size(); ++f) {
    const double den = frame.noise[f].squaredNorm();
    const double num = frame.signal[f].squaredNorm();
    snr[f] = den > 0.0 ? num / den : std::numeric_limits<double>::infinity();
  }
  return snr;
}

/// Active users of channel f (needed by the known-K stopping rule).
inline int active_count_in_channel(const PilotBook& book,
                                   const ActivityRealization& activity, int f) {
  int k = 0;
  for (int q : book.per_channel_users[f]) k += activity.active[q] ? 1 : 0;
  return k;
}

}  // namespace audsim
