#pragma once

#include <Eigen/Dense>

namespace popcomp::linalg {

/// Singular values below this fraction of the largest are treated as zero.
inline constexpr double kPinvCutoff = 1e-12;

struct PseudoInverse {
  Eigen::MatrixXd matrix;
  Eigen::Index rank = 0;
  Eigen::Index size = 0;

  bool rank_deficient() const { return rank < size; }
};

/// Moore-Penrose pseudo-inverse through the SVD, with a relative singular
/// value cutoff.
PseudoInverse pseudo_inverse(const Eigen::MatrixXd& m, double rel_cutoff = kPinvCutoff);

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m);

/// ||m - m'||_inf <= tol * ||m||_inf
bool is_symmetric(const Eigen::MatrixXd& m, double rel_tol);

double min_eigenvalue(const Eigen::MatrixXd& symmetric);

/// Spectral norm (largest singular value).
double norm2(const Eigen::MatrixXd& m);

/// Infinity norm (max absolute row sum).
double norm_inf(const Eigen::MatrixXd& m);

/// Replace eigenvalues below `threshold` with `floor` and rebuild the matrix.
Eigen::MatrixXd clamp_eigenvalues(const Eigen::MatrixXd& symmetric, double threshold,
                                  double floor);

Eigen::MatrixXd block_diagonal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

}  // namespace popcomp::linalg
