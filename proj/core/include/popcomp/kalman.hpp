#pragma once

#include <Eigen/Dense>

namespace popcomp {

/// Mean and covariance of a Gaussian belief over the state.
struct GaussianEstimate {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  Eigen::Index dim() const { return mean.size(); }
};

/// x_k = F x_{k-1} + u,  u ~ N(0, Q)
/// z_k = H x_k + v,      v ~ N(0, R)
struct LinearModel {
  Eigen::MatrixXd F;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd H;
  Eigen::MatrixXd R;

  Eigen::Index state_dim() const { return F.rows(); }
  Eigen::Index measurement_dim() const { return H.rows(); }

  /// Throws InputError on inconsistent shapes.
  void validate() const;
};

/// Measurement residual and its covariance.
struct Innovation {
  Eigen::VectorXd nu;
  Eigen::MatrixXd S;
};

struct KalmanUpdate {
  GaussianEstimate posterior;
  Innovation innovation;
};

/// Condition numbers of S above this are rejected.
inline constexpr double kMaxInnovationCondition = 1e12;

GaussianEstimate predict(const GaussianEstimate& prior, const LinearModel& model);

/// Measurement update with the Joseph-form covariance. Throws NumericalError
/// when S is singular or worse conditioned than kMaxInnovationCondition.
KalmanUpdate update(const GaussianEstimate& predicted, const Eigen::VectorXd& z,
                    const LinearModel& model);

/// (I - K H) P (I - K H)' + K R K'
Eigen::MatrixXd joseph_covariance(const Eigen::MatrixXd& P, const Eigen::MatrixXd& K,
                                  const Eigen::MatrixXd& H, const Eigen::MatrixXd& R);

/// Mean `value` in every coordinate (1/n when unset) and covariance var * I.
GaussianEstimate symmetric_prior(Eigen::Index n, double value, double var);

}  // namespace popcomp
