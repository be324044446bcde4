#include "popcomp/noise_est.hpp"

#include "popcomp/error.hpp"
#include "popcomp/linalg.hpp"

namespace popcomp {

ResidualHistory::ResidualHistory(std::size_t window) : window_(window) {
  if (window < 2) throw InputError("residual window must hold at least 2 samples");
}

void ResidualHistory::push(ResidualSample sample) {
  samples_.push_back(std::move(sample));
  if (samples_.size() > window_) samples_.pop_front();
}

std::optional<Eigen::MatrixXd> empirical_residual_cov(const ResidualHistory& hist) {
  if (!hist.full()) return std::nullopt;
  const Eigen::Index m = hist.samples().front().nu.size();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(m, m);
  for (const auto& s : hist.samples()) acc += s.nu * s.nu.transpose();
  return acc / static_cast<double>(hist.window() - 1);
}

std::optional<Eigen::MatrixXd> estimate_R(const ResidualHistory& hist,
                                          const NoiseOptions& opts) {
  if (!hist.full()) return std::nullopt;
  const Eigen::Index m = hist.samples().front().nu.size();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(m, m);
  for (const auto& s : hist.samples()) {
    acc += s.nu * s.nu.transpose() - s.H * s.P_pred * s.H.transpose();
  }
  acc /= static_cast<double>(hist.window() - 1);
  return linalg::clamp_eigenvalues(linalg::symmetrize(acc), opts.floor, opts.floor);
}

Eigen::MatrixXd estimate_Q(const Eigen::MatrixXd& S, const Eigen::MatrixXd& H,
                           const Eigen::MatrixXd& F, const Eigen::MatrixXd& P_prev,
                           const Eigen::MatrixXd& R, const NoiseOptions& opts) {
  const Eigen::Index n = H.cols();
  if (F.rows() != n || F.cols() != n || P_prev.rows() != n || P_prev.cols() != n ||
      S.rows() != H.rows() || S.cols() != H.rows() || R.rows() != H.rows() ||
      R.cols() != H.rows()) {
    throw InputError("estimate_Q: inconsistent dimensions");
  }
  const Eigen::MatrixXd excess =
      S - H * F * P_prev * F.transpose() * H.transpose() - R;
  const Eigen::MatrixXd G = linalg::pseudo_inverse(H.transpose() * H).matrix;
  Eigen::MatrixXd Q = linalg::symmetrize(G * H.transpose() * excess * H * G);

  if (opts.diagonal_q) {
    Eigen::VectorXd d = Q.diagonal();
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      if (d(i) < 0.0) d(i) = opts.floor;
    }
    return d.asDiagonal();
  }
  return linalg::clamp_eigenvalues(Q, 0.0, opts.floor);
}

}  // namespace popcomp
