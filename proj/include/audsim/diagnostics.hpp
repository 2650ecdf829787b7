#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace audsim {

struct RipReport {
  double delta = 0.0;  // restricted isometry constant of the given order
  int order = 0;
  int rows = 0;
  int cols = 0;
  std::uint64_t subsets = 0;  // number of column subsets enumerated
};

inline constexpr std::uint64_t kDefaultRipSubsetCap = 200000;

namespace detail {

// C(n,k), saturating just above the cap so callers can compare.
inline std::uint64_t binomial_capped(int n, int k, std::uint64_t cap) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t c = 1;
  for (int i = 1; i <= k; ++i) {
    c = c * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
    if (c > cap) return cap + 1;
  }
  return c;
}

}  // namespace detail

/// Brute-force restricted isometry constant: the worst deviation of any
/// order-subset Gram spectrum from unity, over every column subset. Exact
/// and exponential, so it refuses to run past the subset cap; this is a toy
/// diagnostic, never a certification tool for experiment-scale matrices.
inline RipReport isometry_constant(const Eigen::MatrixXcd& phi, int order,
                                   std::uint64_t subset_cap = kDefaultRipSubsetCap) {
  const int cols = static_cast<int>(phi.cols());
  const int rows = static_cast<int>(phi.rows());
  if (order < 1) throw std::invalid_argument("isometry_constant: order must be positive");
  if (order > rows)
    throw std::invalid_argument("isometry_constant: order exceeds the measurement length");
  if (order > cols)
    throw std::invalid_argument("isometry_constant: order exceeds the column count");
  const std::uint64_t count = detail::binomial_capped(cols, order, subset_cap);
  if (count > subset_cap)
    throw std::runtime_error(
        "isometry_constant: C(" + std::to_string(cols) + "," + std::to_string(order) +
        ") subsets required exceeds cap " + std::to_string(subset_cap));

  RipReport rep;
  rep.order = order;
  rep.rows = rows;
  rep.cols = cols;

  std::vector<int> idx(order);
  std::iota(idx.begin(), idx.end(), 0);
  Eigen::MatrixXcd sub(rows, order);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es;
  while (true) {
    for (int j = 0; j < order; ++j) sub.col(j) = phi.col(idx[j]);
    es.compute(sub.adjoint() * sub, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    rep.delta = std::max(rep.delta,
                         std::max(ev(order - 1) - 1.0, 1.0 - ev(0)));
    ++rep.subsets;

    int i = order - 1;
    while (i >= 0 && idx[i] == cols - order + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < order; ++j) idx[j] = idx[j - 1] + 1;
  }
  return rep;
}

/// SNR threshold (linear, on Gamma) below which perfect recovery of a
/// K-sparse signal is impossible for a matrix with isometry constant delta:
/// the squared right-hand side of the necessary condition
/// sqrt(Gamma) >= sqrt(K)(1+delta) / ((1-sqrt(K) delta) sqrt(MAR)).
/// Vacuous (sqrt(K) delta >= 1) cases return +inf.
inline double recovery_snr_bound(double delta, int sparsity, double mar) {
  if (sparsity < 1) throw std::invalid_argument("recovery_snr_bound: K must be positive");
  if (delta < 0.0) throw std::invalid_argument("recovery_snr_bound: delta must be non-negative");
  if (mar <= 0.0) throw std::invalid_argument("recovery_snr_bound: MAR must be positive");
  const double sk = std::sqrt(static_cast<double>(sparsity));
  if (sk * delta >= 1.0) return std::numeric_limits<double>::infinity();
  const double rhs = sk * (1.0 + delta) / ((1.0 - sk * delta) * std::sqrt(mar));
  return rhs * rhs;
}

/// Minimum-to-average power ratio over the active (non-zero) rows of a
/// system matrix. ||X||^2 is read as the sum of squared row norms, so the
/// divisor ||X||^2/K is the mean active-row power and equal-power rows give
/// exactly 1.
inline double mar(const Eigen::MatrixXcd& x) {
  double total = 0.0;
  double min_row = std::numeric_limits<double>::infinity();
  std::int64_t active = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double r = x.row(i).squaredNorm();
    if (r > 0.0) {
      ++active;
      total += r;
      min_row = std::min(min_row, r);
    }
  }
  if (active == 0) throw std::invalid_argument("mar: matrix has no active rows");
  return min_row / (total / static_cast<double>(active));
}

/// Expected per-channel active count p*Q*C, the quantity the harness checks
/// empirical activity against.
inline double expected_sparsity_check(double p, int users_per_channel_base,
                                      int num_copies) {
  return p * static_cast<double>(users_per_channel_base) *
         static_cast<double>(num_copies);
}

}  // namespace audsim
