#include <catch2/catch_amalgamated.hpp>

#include "audsim/diagnostics.hpp"
#include "audsim/pilots.hpp"

using namespace audsim;

TEST_CASE("orthonormal columns have zero isometry constant") {
  Eigen::MatrixXcd phi = Eigen::MatrixXcd::Identity(6, 4);
  for (int order = 1; order <= 3; ++order) {
    auto rep = isometry_constant(phi, order);
    CHECK(rep.delta < 1e-12);
  }
}

TEST_CASE("duplicated column drives the order-2 constant to one") {
  Rng rng(1);
  auto base = generate_pilots(1, 8, rng);
  Eigen::MatrixXcd phi(8, 2);
  phi.col(0) = base.col(0);
  phi.col(1) = base.col(0);
  auto rep = isometry_constant(phi, 2);
  CHECK(std::abs(rep.delta - 1.0) < 1e-12);
}

TEST_CASE("order-2 constant equals the maximum pairwise coherence") {
  Rng rng(2);
  auto phi = generate_pilots(12, 8, rng);  // unit-norm columns
  auto rep = isometry_constant(phi, 2);
  double coherence = 0.0;
  for (int i = 0; i < 12; ++i)
    for (int j = i + 1; j < 12; ++j)
      coherence = std::max(coherence,
                           std::abs((phi.col(i).adjoint() * phi.col(j))(0, 0)));
  CHECK(std::abs(rep.delta - coherence) < 1e-10);
  CHECK(rep.subsets == 66);  // C(12,2)
}

TEST_CASE("isometry constant is non-decreasing in the order") {
  Rng rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    auto phi = generate_pilots(12, 8, rng);
    double prev = 0.0;
    for (int order = 1; order <= 3; ++order) {
      const double d = isometry_constant(phi, order).delta;
      CHECK(d >= prev - 1e-12);
      prev = d;
    }
  }
}

TEST_CASE("subset cap is enforced with the required count") {
  Rng rng(4);
  auto phi = generate_pilots(30, 8, rng);
  try {
    isometry_constant(phi, 4, 1000);  // C(30,4) = 27405
    FAIL("expected a cap refusal");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("subsets") != std::string::npos);
  }
  CHECK_THROWS_AS(isometry_constant(phi, 9), std::invalid_argument);  // > T_p
}

TEST_CASE("recovery SNR bound hand cases") {
  CHECK(recovery_snr_bound(0.0, 1, 1.0) == 1.0);
  CHECK(recovery_snr_bound(0.0, 4, 1.0) == 4.0);
  // K=1, delta=0.5: (1.5/0.5)^2 = 9
  CHECK(std::abs(recovery_snr_bound(0.5, 1, 1.0) - 9.0) < 1e-12);
  CHECK(std::isinf(recovery_snr_bound(0.5, 4, 1.0)));  // sqrt(4)*0.5 = 1
  CHECK_THROWS_AS(recovery_snr_bound(0.1, 0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(recovery_snr_bound(-0.1, 1, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(recovery_snr_bound(0.1, 1, 0.0), std::invalid_argument);
}

TEST_CASE("MAR of equal-power rows is one") {
  Eigen::MatrixXcd x = Eigen::MatrixXcd::Zero(5, 2);
  x.row(1) << std::complex<double>(1, 0), std::complex<double>(0, 1);
  x.row(3) << std::complex<double>(0, -1), std::complex<double>(-1, 0);
  CHECK(std::abs(mar(x) - 1.0) < 1e-15);
}

TEST_CASE("MAR with squared row norms {1, 3} is one half") {
  Eigen::MatrixXcd x = Eigen::MatrixXcd::Zero(4, 1);
  x(0, 0) = 1.0;
  x(2, 0) = std::complex<double>(0.0, std::sqrt(3.0));
  CHECK(std::abs(mar(x) - 0.5) < 1e-12);
}

TEST_CASE("MAR matches a direct loop oracle on a random instance") {
  Rng rng(5);
  Eigen::MatrixXcd x(4, 3);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) x(i, j) = rng.complex_normal();

  double min_p = std::numeric_limits<double>::infinity(), sum = 0.0;
  for (int i = 0; i < 4; ++i) {
    double p = 0.0;
    for (int j = 0; j < 3; ++j) p += std::norm(x(i, j));
    min_p = std::min(min_p, p);
    sum += p;
  }
  const double oracle = min_p / (sum / 4.0);
  CHECK(std::abs(mar(x) - oracle) < 1e-12);
  CHECK(mar(x) <= 1.0 + 1e-12);
}

TEST_CASE("MAR of an all-zero matrix is a contract violation") {
  Eigen::MatrixXcd x = Eigen::MatrixXcd::Zero(3, 2);
  CHECK_THROWS_AS(mar(x), std::invalid_argument);
}

TEST_CASE("expected sparsity check") {
  CHECK(expected_sparsity_check(1.0 / 256.0, 256, 1) == 1.0);
  CHECK(expected_sparsity_check(1.0 / 256.0, 256, 4) == 4.0);
  CHECK(expected_sparsity_check(0.0, 256, 4) == 0.0);
}
