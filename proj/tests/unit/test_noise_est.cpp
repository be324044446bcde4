#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "popcomp/error.hpp"
#include "popcomp/kalman.hpp"
#include "popcomp/linalg.hpp"
#include "popcomp/noise_est.hpp"

using namespace popcomp;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

ResidualSample scalar_sample(double nu, double hph) {
  return {VectorXd::Constant(1, nu), MatrixXd::Ones(1, 1), MatrixXd::Constant(1, 1, hph)};
}

}  // namespace

TEST_CASE("R estimate examples") {
  ResidualHistory hist(10);
  CHECK_FALSE(estimate_R(hist).has_value());
  const double c = 0.7;
  for (int i = 0; i < 9; ++i) hist.push(scalar_sample(c, 0.0));
  CHECK_FALSE(estimate_R(hist).has_value());
  hist.push(scalar_sample(c, 0.0));
  REQUIRE(estimate_R(hist).has_value());
  CHECK((*estimate_R(hist))(0, 0) == doctest::Approx(10.0 * c * c / 9.0).epsilon(1e-14));

  // Old samples leave the window.
  for (int i = 0; i < 10; ++i) hist.push(scalar_sample(0.0, 0.3));
  CHECK(hist.size() == 10);
  CHECK((*estimate_R(hist))(0, 0) == 1e-8);

  CHECK_THROWS_AS(ResidualHistory(1), InputError);
}

TEST_CASE("negative raw R is floored") {
  ResidualHistory hist(2);
  hist.push(scalar_sample(0.0, 0.15));
  hist.push(scalar_sample(0.0, 0.15));
  // raw estimate -0.3
  CHECK((*estimate_R(hist))(0, 0) == 1e-8);
  NoiseOptions opts;
  opts.floor = 1e-6;
  CHECK((*estimate_R(hist, opts))(0, 0) == 1e-6);
}

TEST_CASE("R estimator Monte Carlo") {
  // nu ~ N(0, 2), H P H' = 1, W = 500. The estimate is
  // (2 chi2_500 - 500) / 499; P(0.7 <= R <= 1.3) = 0.98190 (chi-square CDF,
  // computed independently). The estimator mean is 500/499 * (2 - 1).
  constexpr double kInside = 0.98190;
  constexpr int kTrials = 4000;
  oracle::Rng rng(31);
  std::normal_distribution<double> nd(0.0, std::sqrt(2.0));
  int inside = 0;
  double total = 0.0;
  for (int t = 0; t < kTrials; ++t) {
    ResidualHistory hist(500);
    for (int i = 0; i < 500; ++i) hist.push(scalar_sample(nd(rng), 1.0));
    const double r = (*estimate_R(hist))(0, 0);
    total += r;
    inside += (r >= 0.7 && r <= 1.3) ? 1 : 0;
  }
  const double frac = static_cast<double>(inside) / kTrials;
  const double sd = std::sqrt(kInside * (1.0 - kInside) / kTrials);
  CHECK(std::abs(frac - kInside) <= 4.0 * sd);
  // sd of one estimate is sqrt(8 / 500) * 500 / 499
  CHECK(std::abs(total / kTrials - 500.0 / 499.0) <= 4.0 * 0.1268 / std::sqrt(kTrials));
}

TEST_CASE("Q estimate examples") {
  const MatrixXd one = MatrixXd::Ones(1, 1);
  // S - H F P F' H' - R = 3 - 1 - 1
  CHECK(estimate_Q(3.0 * one, one, one, one, one)(0, 0) == doctest::Approx(1.0));

  MatrixXd H(1, 2);
  H << 1, 1;
  const MatrixXd F = MatrixXd::Identity(2, 2);
  const MatrixXd P = MatrixXd::Zero(2, 2);
  const MatrixXd R = MatrixXd::Zero(1, 1);
  const MatrixXd Qd = estimate_Q(2.0 * one, H, F, P, R);
  CHECK(oracle::rel_diff(Qd, 0.5 * MatrixXd::Identity(2, 2)) < 1e-12);

  NoiseOptions full;
  full.diagonal_q = false;
  const MatrixXd Qf = estimate_Q(2.0 * one, H, F, P, R, full);
  CHECK(oracle::rel_diff(Qf, 0.25 * MatrixXd::Constant(2, 2, 2.0)) < 1e-12);

  CHECK(estimate_Q(MatrixXd::Zero(1, 1), H, F, P, R) == MatrixXd::Zero(2, 2));

  // Negative diagonal goes to the floor.
  CHECK(estimate_Q(0.5 * one, one, one, one, one)(0, 0) == 1e-8);
  CHECK_THROWS_AS(estimate_Q(one, H, MatrixXd::Identity(3, 3), P, R), InputError);
}

TEST_CASE("estimates are symmetric PSD; diagonal mode has zero off-diagonals") {
  oracle::Rng rng(32);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 4);
    const int p = 1 + static_cast<int>(rng() % 2);
    ResidualHistory hist(20);
    for (int i = 0; i < 20; ++i) {
      const MatrixXd H = oracle::random_matrix(p, n, rng);
      hist.push({oracle::random_vector(p, rng, -2, 2), H, oracle::random_spd(n, rng)});
    }
    const MatrixXd R = *estimate_R(hist);
    CHECK(linalg::is_symmetric(R, 1e-12));
    CHECK(linalg::min_eigenvalue(R) >= 0.0);

    const MatrixXd S = *empirical_residual_cov(hist);
    const MatrixXd H = oracle::random_matrix(p, n, rng);
    const MatrixXd F = MatrixXd::Identity(n, n) + 0.1 * oracle::random_matrix(n, n, rng);
    const MatrixXd P = 0.1 * oracle::random_spd(n, rng);
    const MatrixXd Qd = estimate_Q(S, H, F, P, R);
    CHECK((Qd - MatrixXd(Qd.diagonal().asDiagonal())).isZero(0.0));
    CHECK(Qd.diagonal().minCoeff() >= 0.0);

    NoiseOptions full;
    full.diagonal_q = false;
    const MatrixXd Qf = estimate_Q(S, H, F, P, R, full);
    CHECK(linalg::is_symmetric(Qf, 1e-10));
    CHECK(linalg::min_eigenvalue(Qf) >= -1e-12 * std::max(1.0, linalg::norm2(Qf)));
  }
}

// Scalar random walk x_k = x_{k-1} + w, z = h x + v with h = +-1. One of
// R and Q is estimated on the fly, the other is given.
struct Consistency {
  double r_avg = 0.0;
  double q_avg = 0.0;
};

Consistency run_walk(std::uint64_t seed, double q_true, double r_true, bool adapt_r) {
  oracle::Rng rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  LinearModel model{MatrixXd::Identity(1, 1), MatrixXd::Constant(1, 1, adapt_r ? q_true : 1e-4),
                    MatrixXd::Ones(1, 1), MatrixXd::Constant(1, 1, adapt_r ? 1.0 : r_true)};
  GaussianEstimate est{VectorXd::Zero(1), MatrixXd::Identity(1, 1)};
  ResidualHistory hist(50);
  double x = 0.0;
  Consistency out;
  int count = 0;
  for (int k = 0; k < 2000; ++k) {
    x += std::sqrt(q_true) * nd(rng);
    model.H(0, 0) = (rng() & 1U) ? 1.0 : -1.0;
    const double z = model.H(0, 0) * x + std::sqrt(r_true) * nd(rng);
    if (hist.full()) {
      if (adapt_r) {
        model.R = *estimate_R(hist);
      } else {
        model.Q = estimate_Q(*empirical_residual_cov(hist), model.H, model.F, est.cov, model.R);
      }
      out.r_avg += model.R(0, 0);
      out.q_avg += model.Q(0, 0);
      ++count;
    }
    const auto pred = predict(est, model);
    const auto upd = update(pred, VectorXd::Constant(1, z), model);
    hist.push({upd.innovation.nu, model.H, pred.cov});
    est = upd.posterior;
  }
  out.r_avg /= count;
  out.q_avg /= count;
  return out;
}

// Q is only recoverable when it is not buried in the sampling noise of the
// windowed residual covariance (sd about (P + Q + R) sqrt(2 / W)); with
// Q << R the floor on negative estimates biases the average upward.
TEST_CASE("windowed estimates are consistent on linear-Gaussian data") {
  const double q_true = 0.25;
  const double r_true = 0.25;
  double r_sum = 0.0;
  double q_sum = 0.0;
  for (std::uint64_t run = 0; run < 10; ++run) {
    r_sum += run_walk(100 + run, q_true, r_true, true).r_avg;
    q_sum += run_walk(200 + run, q_true, r_true, false).q_avg;
  }
  CHECK(std::abs(r_sum / 10 - r_true) <= 0.3 * r_true);
  CHECK(std::abs(q_sum / 10 - q_true) <= 0.3 * q_true);
}
