#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

namespace audsim {

struct StoppingRule {
  enum class Mode { kKnownK, kResidualThreshold };
  Mode mode = Mode::kKnownK;
  int known_k = 0;       // target support size in known-K mode
  double epsilon = 0.0;  // correlation threshold in residual mode

  static StoppingRule known(int k) { return {Mode::kKnownK, k, 0.0}; }
  static StoppingRule residual(double eps) {
    return {Mode::kResidualThreshold, 0, eps};
  }
};

/// Residual-to-pilot correlations: entry q is the Euclidean norm over the M
/// antenna components of phi_q^H R. Conjugate transpose, not the plain
/// transpose: with complex pilots only the Hermitian product measures
/// alignment, and least-squares orthogonality of the residual holds in this
/// inner product.
inline Eigen::VectorXd correlations(const Eigen::MatrixXcd& residual,
                                    const Eigen::MatrixXcd& phi) {
  if (residual.rows() != phi.rows())
    throw std::invalid_argument("correlations: dimension mismatch");
  return (phi.adjoint() * residual).rowwise().norm();
}

/// Argmax with deterministic tie-breaking towards the lowest index.
inline int select_user(const Eigen::VectorXd& corr) {
  if (corr.size() == 0) throw std::invalid_argument("select_user: empty vector");
  int best = 0;
  for (int q = 1; q < corr.size(); ++q)
    if (corr(q) > corr(best)) best = q;
  return best;
}

struct LsEstimate {
  Eigen::MatrixXcd coeffs;  // k x M
  bool rank_deficient = false;
};

/// Least-squares fit of Y against the selected columns, via a rank-revealing
/// orthogonal factorization rather than explicit normal equations. A
/// rank-deficient selection yields the minimum-norm solution and raises the
/// degeneracy flag.
inline LsEstimate least_squares_estimate(const Eigen::MatrixXcd& y,
                                         const Eigen::MatrixXcd& phi_sel) {
  if (y.rows() != phi_sel.rows())
    throw std::invalid_argument("least_squares_estimate: dimension mismatch");
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXcd> cod(phi_sel);
  LsEstimate est;
  est.coeffs = cod.solve(y);
  est.rank_deficient = cod.rank() < phi_sel.cols();
  return est;
}

struct OmpResult {
  std::vector<int> selected;   // local column indices, in selection order
  Eigen::MatrixXcd estimate;   // k x M, rows aligned with 'selected'
  std::vector<double> residual_norm_history;  // pre-selection max correlation
  std::vector<double> residual_l2_history;    // ||R||_F after each iteration
  int iterations = 0;
  bool stopped_on_reselection = false;
  bool rank_deficient = false;
  Eigen::MatrixXcd residual;  // final residual
};

/// Greedy loop: correlate, pick the strongest fresh column, refit by least
/// squares over everything selected so far, update the residual.
///
/// Known-K mode runs exactly min(K, max_iters) iterations; residual mode
/// runs while the peak correlation stays at or above epsilon. Re-selection
/// of a used column is a numerical degeneracy (the residual is orthogonal to
/// selected columns after an exact fit) and stops the loop with a flag.
inline OmpResult run_omp(const Eigen::MatrixXcd& y, const Eigen::MatrixXcd& phi,
                         const StoppingRule& stop, int max_iters = -1) {
  const int rows = static_cast<int>(y.rows());
  const int cols = static_cast<int>(phi.cols());
  if (phi.rows() != y.rows())
    throw std::invalid_argument("run_omp: dimension mismatch");
  if (max_iters < 0) max_iters = rows;
  if (max_iters > rows)
    throw std::invalid_argument("run_omp: max_iters exceeds observation length");

  OmpResult res;
  res.estimate.resize(0, y.cols());
  res.residual = y;

  int target = max_iters;
  if (stop.mode == StoppingRule::Mode::kKnownK)
    target = std::min(stop.known_k, max_iters);
  if (target <= 0 || cols == 0) return res;

  std::vector<char> used(static_cast<std::size_t>(cols), 0);
  Eigen::MatrixXcd phi_sel(rows, target);

  while (static_cast<int>(res.selected.size()) < target) {
    const Eigen::VectorXd corr = correlations(res.residual, phi);
    const int pick = select_user(corr);
    const double peak = corr(pick);
    if (stop.mode == StoppingRule::Mode::kResidualThreshold && peak < stop.epsilon)
      break;
    if (used[pick]) {
      res.stopped_on_reselection = true;
      break;
    }
    used[pick] = 1;
    const auto k = static_cast<Eigen::Index>(res.selected.size());
    phi_sel.col(k) = phi.col(pick);
    res.selected.push_back(pick);

    auto ls = least_squares_estimate(y, phi_sel.leftCols(k + 1));
    res.rank_deficient = res.rank_deficient || ls.rank_deficient;
    res.residual = y - phi_sel.leftCols(k + 1) * ls.coeffs;
    res.estimate = std::move(ls.coeffs);
    res.residual_norm_history.push_back(peak);
    res.residual_l2_history.push_back(res.residual.norm());
  }
  res.iterations = static_cast<int>(res.selected.size());
  return res;
}

/// Detected set that a run with threshold eps >= the executed threshold
/// would have produced: the epsilon only ever stops the greedy loop, so the
/// trajectory is shared and the answer is a prefix.
inline std::vector<int> detected_prefix(const OmpResult& full, double eps) {
  std::size_t k = 0;
  while (k < full.selected.size() && full.residual_norm_history[k] >= eps) ++k;
  return {full.selected.begin(), full.selected.begin() + static_cast<long>(k)};
}

}  // namespace audsim
