#include "popcomp/linalg.hpp"

#include <algorithm>

namespace popcomp::linalg {

PseudoInverse pseudo_inverse(const Eigen::MatrixXd& m, double rel_cutoff) {
  PseudoInverse out;
  out.size = std::min(m.rows(), m.cols());
  if (m.size() == 0) {
    out.matrix = Eigen::MatrixXd::Zero(m.cols(), m.rows());
    return out;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double cutoff = rel_cutoff * sv(0);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff && sv(i) > 0.0) {
      inv(i) = 1.0 / sv(i);
      ++out.rank;
    }
  }
  out.matrix = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  return out;
}

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

double norm_inf(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return m.cwiseAbs().rowwise().sum().maxCoeff();
}

bool is_symmetric(const Eigen::MatrixXd& m, double rel_tol) {
  if (m.rows() != m.cols()) return false;
  const Eigen::MatrixXd diff = m - m.transpose();
  return norm_inf(diff) <= rel_tol * norm_inf(m);
}

double min_eigenvalue(const Eigen::MatrixXd& symmetric) {
  if (symmetric.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetric, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double norm2(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

Eigen::MatrixXd clamp_eigenvalues(const Eigen::MatrixXd& symmetric, double threshold,
                                  double floor) {
  if (symmetric.size() == 0) return symmetric;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(symmetric));
  Eigen::VectorXd ev = es.eigenvalues();
  bool changed = false;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < threshold) {
      ev(i) = floor;
      changed = true;
    }
  }
  if (!changed) return symmetric;
  const Eigen::MatrixXd& v = es.eigenvectors();
  return symmetrize(v * ev.asDiagonal() * v.transpose());
}

Eigen::MatrixXd block_diagonal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  out.topLeftCorner(a.rows(), a.cols()) = a;
  out.bottomRightCorner(b.rows(), b.cols()) = b;
  return out;
}

}  // namespace popcomp::linalg
