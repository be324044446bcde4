#pragma once

// Covariance matching of the measurement and process noise against the
// recent residual process.

#include <cstddef>
#include <deque>
#include <optional>

#include <Eigen/Dense>

namespace popcomp {

struct ResidualSample {
  Eigen::VectorXd nu;      // measurement residual
  Eigen::MatrixXd H;       // measurement matrix used for it
  Eigen::MatrixXd P_pred;  // P_{j|j-1}
};

/// Sliding window of the last W residual samples.
class ResidualHistory {
 public:
  explicit ResidualHistory(std::size_t window);

  void push(ResidualSample sample);

  bool full() const { return samples_.size() == window_; }
  std::size_t size() const { return samples_.size(); }
  std::size_t window() const { return window_; }
  const std::deque<ResidualSample>& samples() const { return samples_; }

 private:
  std::size_t window_;
  std::deque<ResidualSample> samples_;
};

struct NoiseOptions {
  /// Eigenvalue floor for R and replacement for negative Q variances.
  double floor = 1e-8;
  /// Zero the off-diagonal process noise.
  bool diagonal_q = true;
};

/// 1/(W-1) sum_j nu_j nu_j'. Empty when the window is not yet full.
std::optional<Eigen::MatrixXd> empirical_residual_cov(const ResidualHistory& hist);

/// 1/(W-1) sum_j (nu_j nu_j' - H_j P_{j|j-1} H_j'), with eigenvalues below
/// the floor raised to the floor. Empty when the window is not yet full.
std::optional<Eigen::MatrixXd> estimate_R(const ResidualHistory& hist,
                                          const NoiseOptions& opts = {});

/// (H'H)^+ H' (S - H F P F' H' - R) H (H'H)^+, optionally diagonalised;
/// negative variances are replaced by the floor.
Eigen::MatrixXd estimate_Q(const Eigen::MatrixXd& S, const Eigen::MatrixXd& H,
                           const Eigen::MatrixXd& F, const Eigen::MatrixXd& P_prev,
                           const Eigen::MatrixXd& R, const NoiseOptions& opts = {});

}  // namespace popcomp
