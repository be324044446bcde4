#pragma once

// Inequality-constrained recursive estimation.
//
// Each step fuses three sources of information about x_k in a single
// weighted least-squares problem:
//
//   z^c = [ F x_{k-1|k-1} ]    h^c(x) = [ x      ]    R^c = blkdiag(F P F' + Q, R, 0, 0)
//         [ z_k           ]             [ H x    ]
//         [ 0             ]             [ e(x)   ]
//         [ 0             ]             [ l_A(x) ]
//
// where e are equality constraints and l_A the currently active inequality
// constraints. The problem is solved through the pseudo-inverse of the KKT
// matrix [[R^c, H^c], [H^c', 0]], and an active-set loop with a feasibility
// line search enforces l(x) >= 0.

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "popcomp/kalman.hpp"

namespace popcomp {

/// A smooth scalar constraint function with its gradient. Linear
/// constraints a'x + b are flagged so their Jacobian rows can be reused
/// across inner iterations.
class ScalarConstraint {
 public:
  using ValueFn = std::function<double(const Eigen::VectorXd&)>;
  using GradientFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

  /// a'x + b
  static ScalarConstraint linear(Eigen::VectorXd a, double b);

  /// x_i (so that x_i >= 0 as an inequality). Lines searches snap the
  /// coordinate to exactly zero when this bound is touched.
  static ScalarConstraint coordinate(Eigen::Index dim, Eigen::Index i);

  static ScalarConstraint nonlinear(Eigen::Index dim, ValueFn value, GradientFn gradient);

  double value(const Eigen::VectorXd& x) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;

  Eigen::Index dim() const { return dim_; }
  bool is_linear() const { return linear_; }

  /// Index of the bounded coordinate for coordinate constraints, -1 otherwise.
  Eigen::Index coordinate_index() const { return coordinate_; }

  /// Same constraint acting on the leading coordinates of a larger state.
  ScalarConstraint padded(Eigen::Index new_dim) const;

 private:
  Eigen::Index dim_ = 0;
  bool linear_ = false;
  Eigen::Index coordinate_ = -1;
  Eigen::VectorXd a_;
  double b_ = 0.0;
  ValueFn value_;
  GradientFn gradient_;
};

/// Equality constraints e(x) = 0 and inequality constraints l(x) >= 0.
struct ConstraintSet {
  std::vector<ScalarConstraint> equality;
  std::vector<ScalarConstraint> inequality;

  /// x_i >= 0 for i < count, in a state of dimension dim.
  static ConstraintSet nonnegative(Eigen::Index dim, Eigen::Index count);

  bool all_linear() const;
  void validate(Eigen::Index dim) const;
};

/// Sorted indices into ConstraintSet::inequality treated as equalities.
using ActiveSet = std::vector<int>;

struct IterationControl {
  double tol = 1e-9;
  int max_iter = 20;

  void validate() const;
};

/// Stacked pseudo-measurement problem for one timestep.
struct FusionProblem {
  Eigen::VectorXd predicted_state;  // F x_{k-1|k-1}
  Eigen::MatrixXd predicted_cov;    // F P F' + Q
  Eigen::VectorXd measurement;      // z_k
  Eigen::MatrixXd H;
  Eigen::MatrixXd R;
  const ConstraintSet* constraints = nullptr;

  static FusionProblem assemble(const GaussianEstimate& prior, const Eigen::VectorXd& z,
                                const LinearModel& model, const ConstraintSet& constraints);

  Eigen::Index state_dim() const { return predicted_state.size(); }

  /// Rows in the stacked system for the given active set.
  Eigen::Index stacked_rows(const ActiveSet& active) const;

  Eigen::VectorXd stacked_measurement(const ActiveSet& active) const;             // z^c
  Eigen::VectorXd stacked_function(const Eigen::VectorXd& x,
                                   const ActiveSet& active) const;                // h^c(x)
  Eigen::MatrixXd stacked_noise(const ActiveSet& active) const;                   // R^c
};

/// H^c at x_lin: rows [I; H; grad e; grad l_A].
Eigen::MatrixXd linearize(const FusionProblem& problem, const ActiveSet& active,
                          const Eigen::VectorXd& x_lin);

struct FusionSolution {
  Eigen::VectorXd x;
  Eigen::MatrixXd P;
  /// Lagrange multipliers of the active inequality rows, in ActiveSet order.
  /// A negative multiplier means the constraint is pushing the solution
  /// outward and can be released.
  Eigen::VectorXd multipliers;
  bool rank_deficient = false;
};

/// Solves the equality-constrained fusion for the current active set:
///   [lambda; x] = KKT^+ [z^c - h^c(x_lin) + H^c x_lin; 0],  P = -(KKT^+)_{22}.
FusionSolution solve_equality_fusion(const FusionProblem& problem, const ActiveSet& active,
                                     const Eigen::VectorXd& x_lin);

struct LineSearchResult {
  Eigen::VectorXd x;
  ActiveSet touched;
  double t_max = 1.0;
};

/// Inequality values at or below this count as touching the boundary.
inline constexpr double kFeasibilityTol = 1e-12;

/// Moves from a feasible x_prev towards x_star as far as feasibility allows.
/// Throws InputError when x_prev is infeasible.
LineSearchResult line_search_to_feasible(const Eigen::VectorXd& x_prev,
                                         const Eigen::VectorXd& x_star,
                                         const std::vector<ScalarConstraint>& inequality);

struct ConstrainedStep {
  GaussianEstimate posterior;
  ActiveSet active;
  /// Pre-fusion residual z - H F x_{k-1|k-1} and S = H (F P F' + Q) H' + R.
  Innovation innovation;
  int iterations = 0;
  double t_max_min = 1.0;
  bool rank_deficient = false;
};

/// One timestep of the active-set constrained filter. The covariance is the
/// fusion covariance at the final inner iteration, without any correction
/// for the projection onto the feasible set.
ConstrainedStep constrained_step(const GaussianEstimate& prior, const Eigen::VectorXd& z,
                                 const LinearModel& model, const ConstraintSet& constraints,
                                 const ActiveSet& active, const IterationControl& ctrl = {});

}  // namespace popcomp
