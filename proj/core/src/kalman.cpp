#include "popcomp/kalman.hpp"

#include <limits>
#include <sstream>
#include <string>

#include "popcomp/error.hpp"
#include "popcomp/linalg.hpp"

namespace popcomp {

namespace {

std::string shape(const Eigen::MatrixXd& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_square(const Eigen::MatrixXd& m, Eigen::Index n, const char* name) {
  if (m.rows() != n || m.cols() != n) {
    throw InputError(std::string(name) + " must be " + std::to_string(n) + "x" +
                     std::to_string(n) + ", got " + shape(m));
  }
}

}  // namespace

void LinearModel::validate() const {
  const Eigen::Index n = F.rows();
  require_square(F, n, "F");
  require_square(Q, n, "Q");
  if (H.cols() != n) {
    throw InputError("H has " + std::to_string(H.cols()) + " columns for state dim " +
                     std::to_string(n));
  }
  require_square(R, H.rows(), "R");
}

GaussianEstimate predict(const GaussianEstimate& prior, const LinearModel& model) {
  model.validate();
  if (prior.mean.size() != model.state_dim() || prior.cov.rows() != model.state_dim() ||
      prior.cov.cols() != model.state_dim()) {
    throw InputError("prior dimension does not match the model");
  }
  GaussianEstimate out;
  out.mean = model.F * prior.mean;
  out.cov = model.F * prior.cov * model.F.transpose() + model.Q;
  return out;
}

Eigen::MatrixXd joseph_covariance(const Eigen::MatrixXd& P, const Eigen::MatrixXd& K,
                                  const Eigen::MatrixXd& H, const Eigen::MatrixXd& R) {
  const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(P.rows(), P.cols()) - K * H;
  return A * P * A.transpose() + K * R * K.transpose();
}

KalmanUpdate update(const GaussianEstimate& predicted, const Eigen::VectorXd& z,
                    const LinearModel& model) {
  model.validate();
  if (z.size() != model.measurement_dim()) throw InputError("measurement size mismatch");
  if (predicted.mean.size() != model.state_dim()) {
    throw InputError("prediction dimension does not match the model");
  }
  const Eigen::MatrixXd& P = predicted.cov;
  const Eigen::MatrixXd& H = model.H;

  KalmanUpdate out;
  out.innovation.nu = z - H * predicted.mean;
  out.innovation.S = H * P * H.transpose() + model.R;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(out.innovation.S);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double smallest = sv(sv.size() - 1);
  const double cond = smallest > 0.0 ? sv(0) / smallest : std::numeric_limits<double>::infinity();
  if (!(cond <= kMaxInnovationCondition)) {
    std::ostringstream msg;
    msg << "residual covariance S is singular or ill-conditioned (condition " << cond << ")";
    throw NumericalError(msg.str(), cond);
  }

  // K = P H' S^-1, computed as (S^-1 H P)' since S and P are symmetric.
  const Eigen::MatrixXd K =
      out.innovation.S.ldlt().solve(H * P).transpose();
  out.posterior.mean = predicted.mean + K * out.innovation.nu;
  out.posterior.cov = linalg::symmetrize(joseph_covariance(P, K, H, model.R));
  return out;
}

GaussianEstimate symmetric_prior(Eigen::Index n, double value, double var) {
  GaussianEstimate out;
  out.mean = Eigen::VectorXd::Constant(n, value);
  out.cov = var * Eigen::MatrixXd::Identity(n, n);
  return out;
}

}  // namespace popcomp
