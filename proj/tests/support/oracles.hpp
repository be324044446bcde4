#pragma once

// Reference implementations used only by tests. They avoid the code paths
// under test: the game replay recomputes everything from the raw outcome
// list, and the least-squares oracles use a null-space reduction instead of
// a KKT pseudo-inverse.

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "popcomp/mg_model.hpp"

namespace oracle {

using Rng = std::mt19937_64;

/// Decision row for the step after `outcomes` (oldest first), scoring each
/// strategy over the last `horizon` outcomes. Needs memory + horizon outcomes.
std::vector<int> replay_row(const std::vector<popcomp::AgentType>& types,
                            const std::vector<int>& outcomes, int memory, std::size_t horizon);

/// min (x - xp)' Pp^-1 (x - xp) + (z - Hx)' R^-1 (z - Hx)  s.t.  A x = b.
/// Pp and R must be positive definite.
struct LeastSquares {
  Eigen::VectorXd xp;
  Eigen::MatrixXd Pp;
  Eigen::MatrixXd H;
  Eigen::MatrixXd R;
  Eigen::VectorXd z;

  double objective(const Eigen::VectorXd& x) const;
};

struct LsSolution {
  Eigen::VectorXd x;
  Eigen::MatrixXd P;  // Z (Z' W Z)^-1 Z', W the Hessian
};

/// Null-space method. Rows of A may be linearly dependent if consistent.
LsSolution solve_equality_ls(const LeastSquares& ls, const Eigen::MatrixXd& A,
                             const Eigen::VectorXd& b);

/// Minimizer subject to x_i >= 0 for i < count, by enumerating every
/// candidate active set (count <= 10).
Eigen::VectorXd solve_nonnegative_ls(const LeastSquares& ls, Eigen::Index count);

Eigen::MatrixXd random_spd(Eigen::Index n, Rng& rng, double min_eig = 0.1, double max_eig = 3.0);
Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng);
Eigen::VectorXd random_vector(Eigen::Index n, Rng& rng, double lo = -1.0, double hi = 1.0);

/// Relative difference ||a - b||_inf / max(1, ||b||_inf).
double rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

}  // namespace oracle
