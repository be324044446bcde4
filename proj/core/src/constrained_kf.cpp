#include "popcomp/constrained_kf.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "popcomp/error.hpp"
#include "popcomp/linalg.hpp"

namespace popcomp {

// ---------------------------------------------------------------------------
// ScalarConstraint

ScalarConstraint ScalarConstraint::linear(Eigen::VectorXd a, double b) {
  ScalarConstraint c;
  c.dim_ = a.size();
  c.linear_ = true;
  c.a_ = std::move(a);
  c.b_ = b;
  return c;
}

ScalarConstraint ScalarConstraint::coordinate(Eigen::Index dim, Eigen::Index i) {
  if (i < 0 || i >= dim) throw InputError("coordinate constraint index out of range");
  ScalarConstraint c = linear(Eigen::VectorXd::Unit(dim, i), 0.0);
  c.coordinate_ = i;
  return c;
}

ScalarConstraint ScalarConstraint::nonlinear(Eigen::Index dim, ValueFn value,
                                             GradientFn gradient) {
  if (!value || !gradient) throw InputError("nonlinear constraint needs value and gradient");
  ScalarConstraint c;
  c.dim_ = dim;
  c.value_ = std::move(value);
  c.gradient_ = std::move(gradient);
  return c;
}

double ScalarConstraint::value(const Eigen::VectorXd& x) const {
  if (x.size() != dim_) throw InputError("constraint evaluated at wrong dimension");
  return linear_ ? a_.dot(x) + b_ : value_(x);
}

Eigen::VectorXd ScalarConstraint::gradient(const Eigen::VectorXd& x) const {
  if (x.size() != dim_) throw InputError("constraint gradient at wrong dimension");
  if (linear_) return a_;
  Eigen::VectorXd g = gradient_(x);
  if (g.size() != dim_) throw InputError("constraint gradient has wrong dimension");
  return g;
}

ScalarConstraint ScalarConstraint::padded(Eigen::Index new_dim) const {
  if (new_dim < dim_) throw InputError("cannot pad a constraint to a smaller state");
  if (linear_) {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(new_dim);
    a.head(dim_) = a_;
    ScalarConstraint c = linear(std::move(a), b_);
    c.coordinate_ = coordinate_;
    return c;
  }
  const Eigen::Index old_dim = dim_;
  return nonlinear(
      new_dim,
      [f = value_, old_dim](const Eigen::VectorXd& x) { return f(x.head(old_dim)); },
      [g = gradient_, old_dim, new_dim](const Eigen::VectorXd& x) {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(new_dim);
        out.head(old_dim) = g(x.head(old_dim));
        return out;
      });
}

// ---------------------------------------------------------------------------
// ConstraintSet, IterationControl

ConstraintSet ConstraintSet::nonnegative(Eigen::Index dim, Eigen::Index count) {
  if (count > dim) throw InputError("more non-negativity constraints than coordinates");
  ConstraintSet out;
  for (Eigen::Index i = 0; i < count; ++i) {
    out.inequality.push_back(ScalarConstraint::coordinate(dim, i));
  }
  return out;
}

bool ConstraintSet::all_linear() const {
  auto lin = [](const ScalarConstraint& c) { return c.is_linear(); };
  return std::all_of(equality.begin(), equality.end(), lin) &&
         std::all_of(inequality.begin(), inequality.end(), lin);
}

void ConstraintSet::validate(Eigen::Index dim) const {
  for (const auto* list : {&equality, &inequality}) {
    for (const auto& c : *list) {
      if (c.dim() != dim) {
        throw InputError("constraint dimension " + std::to_string(c.dim()) +
                         " does not match state dimension " + std::to_string(dim));
      }
    }
  }
}

void IterationControl::validate() const {
  if (!(tol > 0.0)) throw InputError("convergence tolerance must be positive");
  if (max_iter < 1) throw InputError("max_iter must be at least 1");
}

// ---------------------------------------------------------------------------
// FusionProblem

FusionProblem FusionProblem::assemble(const GaussianEstimate& prior, const Eigen::VectorXd& z,
                                      const LinearModel& model,
                                      const ConstraintSet& constraints) {
  const GaussianEstimate pred = predict(prior, model);
  if (z.size() != model.measurement_dim()) throw InputError("measurement size mismatch");
  constraints.validate(model.state_dim());
  FusionProblem p;
  p.predicted_state = pred.mean;
  p.predicted_cov = pred.cov;
  p.measurement = z;
  p.H = model.H;
  p.R = model.R;
  p.constraints = &constraints;
  return p;
}

namespace {

const ConstraintSet& constraints_of(const FusionProblem& p) {
  static const ConstraintSet kEmpty;
  return p.constraints ? *p.constraints : kEmpty;
}

void check_active(const FusionProblem& p, const ActiveSet& active) {
  const auto n = static_cast<int>(constraints_of(p).inequality.size());
  for (int i : active) {
    if (i < 0 || i >= n) throw InputError("active constraint index out of range");
  }
}

}  // namespace

Eigen::Index FusionProblem::stacked_rows(const ActiveSet& active) const {
  const auto& cs = constraints_of(*this);
  return state_dim() + measurement.size() + static_cast<Eigen::Index>(cs.equality.size()) +
         static_cast<Eigen::Index>(active.size());
}

Eigen::VectorXd FusionProblem::stacked_measurement(const ActiveSet& active) const {
  Eigen::VectorXd zc = Eigen::VectorXd::Zero(stacked_rows(active));
  zc.head(state_dim()) = predicted_state;
  zc.segment(state_dim(), measurement.size()) = measurement;
  return zc;
}

Eigen::VectorXd FusionProblem::stacked_function(const Eigen::VectorXd& x,
                                                const ActiveSet& active) const {
  check_active(*this, active);
  const auto& cs = constraints_of(*this);
  const Eigen::Index n = state_dim();
  const Eigen::Index m = measurement.size();
  Eigen::VectorXd h(stacked_rows(active));
  h.head(n) = x;
  h.segment(n, m) = H * x;
  Eigen::Index row = n + m;
  for (const auto& e : cs.equality) h(row++) = e.value(x);
  for (int i : active) h(row++) = cs.inequality[static_cast<std::size_t>(i)].value(x);
  return h;
}

Eigen::MatrixXd FusionProblem::stacked_noise(const ActiveSet& active) const {
  const Eigen::Index n = state_dim();
  const Eigen::Index m = measurement.size();
  Eigen::MatrixXd rc = Eigen::MatrixXd::Zero(stacked_rows(active), stacked_rows(active));
  rc.topLeftCorner(n, n) = predicted_cov;
  rc.block(n, n, m, m) = R;
  return rc;
}

Eigen::MatrixXd linearize(const FusionProblem& problem, const ActiveSet& active,
                          const Eigen::VectorXd& x_lin) {
  check_active(problem, active);
  const auto& cs = constraints_of(problem);
  const Eigen::Index n = problem.state_dim();
  const Eigen::Index m = problem.measurement.size();
  Eigen::MatrixXd hc(problem.stacked_rows(active), n);
  hc.topRows(n).setIdentity();
  hc.middleRows(n, m) = problem.H;
  Eigen::Index row = n + m;
  for (const auto& e : cs.equality) hc.row(row++) = e.gradient(x_lin).transpose();
  for (int i : active) {
    hc.row(row++) = cs.inequality[static_cast<std::size_t>(i)].gradient(x_lin).transpose();
  }
  return hc;
}

namespace {

struct KktFactor {
  Eigen::MatrixXd Hc;
  linalg::PseudoInverse pinv;
};

KktFactor factor_kkt(const FusionProblem& problem, const ActiveSet& active,
                     const Eigen::VectorXd& x_lin) {
  KktFactor f;
  f.Hc = linearize(problem, active, x_lin);
  const Eigen::Index p = f.Hc.rows();
  const Eigen::Index n = f.Hc.cols();
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(p + n, p + n);
  kkt.topLeftCorner(p, p) = problem.stacked_noise(active);
  kkt.topRightCorner(p, n) = f.Hc;
  kkt.bottomLeftCorner(n, p) = f.Hc.transpose();
  f.pinv = linalg::pseudo_inverse(kkt);
  return f;
}

FusionSolution solve_with(const FusionProblem& problem, const ActiveSet& active,
                          const Eigen::VectorXd& x_lin, const KktFactor& f) {
  const Eigen::Index p = f.Hc.rows();
  const Eigen::Index n = f.Hc.cols();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p + n);
  rhs.head(p) = problem.stacked_measurement(active) -
                problem.stacked_function(x_lin, active) + f.Hc * x_lin;
  const Eigen::VectorXd sol = f.pinv.matrix * rhs;

  FusionSolution out;
  out.x = sol.tail(n);
  out.P = linalg::symmetrize(-f.pinv.matrix.bottomRightCorner(n, n));
  const auto n_active = static_cast<Eigen::Index>(active.size());
  out.multipliers = sol.segment(p - n_active, n_active);
  out.rank_deficient = f.pinv.rank_deficient();
  return out;
}

ActiveSet normalized(ActiveSet s) {
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

}  // namespace

FusionSolution solve_equality_fusion(const FusionProblem& problem, const ActiveSet& active,
                                     const Eigen::VectorXd& x_lin) {
  if (x_lin.size() != problem.state_dim()) throw InputError("linearization point size");
  return solve_with(problem, active, x_lin, factor_kkt(problem, active, x_lin));
}

// ---------------------------------------------------------------------------
// Line search

namespace {

// Largest t in [0, 1] with c(x + t d) >= 0, given c(x) >= 0 > c(x + d).
double boundary_step(const ScalarConstraint& c, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& d, double v_prev, double v_star) {
  if (c.is_linear()) {
    const double prev = std::max(v_prev, 0.0);
    return std::clamp(prev / (prev - v_star), 0.0, 1.0);
  }
  double lo = 0.0;
  double hi = 1.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (c.value(x + mid * d) >= 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

}  // namespace

LineSearchResult line_search_to_feasible(const Eigen::VectorXd& x_prev,
                                         const Eigen::VectorXd& x_star,
                                         const std::vector<ScalarConstraint>& inequality) {
  if (x_prev.size() != x_star.size()) throw InputError("line search endpoints differ in size");
  const Eigen::VectorXd d = x_star - x_prev;

  LineSearchResult out;
  std::vector<std::size_t> violated;
  for (std::size_t i = 0; i < inequality.size(); ++i) {
    const double v_prev = inequality[i].value(x_prev);
    if (v_prev < -kFeasibilityTol) {
      throw InputError("line search started from an infeasible point (constraint " +
                       std::to_string(i) + " = " + std::to_string(v_prev) + ")");
    }
    const double v_star = inequality[i].value(x_star);
    if (v_star < -kFeasibilityTol) {
      violated.push_back(i);
      out.t_max = std::min(out.t_max, boundary_step(inequality[i], x_prev, d, v_prev, v_star));
    }
  }
  out.x = x_prev + out.t_max * d;
  for (std::size_t i : violated) {
    const auto& c = inequality[i];
    if (c.value(out.x) <= kFeasibilityTol) {
      if (c.coordinate_index() >= 0) out.x(c.coordinate_index()) = 0.0;
      out.touched.push_back(static_cast<int>(i));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Active-set loop

ConstrainedStep constrained_step(const GaussianEstimate& prior, const Eigen::VectorXd& z,
                                 const LinearModel& model, const ConstraintSet& constraints,
                                 const ActiveSet& active_in, const IterationControl& ctrl) {
  ctrl.validate();
  const FusionProblem problem = FusionProblem::assemble(prior, z, model, constraints);

  ConstrainedStep out;
  out.innovation.nu = z - model.H * problem.predicted_state;
  out.innovation.S = model.H * problem.predicted_cov * model.H.transpose() + model.R;

  ActiveSet active = normalized(active_in);
  check_active(problem, active);

  // Linear constraints make H^c independent of the iterate, so the KKT
  // pseudo-inverse only changes with the active set.
  const bool cacheable = constraints.all_linear();
  std::map<ActiveSet, KktFactor> cache;

  Eigen::VectorXd x = prior.mean;
  Eigen::MatrixXd P = prior.cov;
  for (int j = 1; j <= ctrl.max_iter; ++j) {
    FusionSolution sol;
    if (cacheable) {
      auto it = cache.find(active);
      if (it == cache.end()) it = cache.emplace(active, factor_kkt(problem, active, x)).first;
      sol = solve_with(problem, active, x, it->second);
    } else {
      sol = solve_equality_fusion(problem, active, x);
    }
    out.rank_deficient = out.rank_deficient || sol.rank_deficient;
    // A pinned coordinate is exactly zero with zero variance; drop the
    // roundoff the pseudo-inverse leaves behind.
    for (int i : active) {
      const auto& c = constraints.inequality[static_cast<std::size_t>(i)];
      if (const Eigen::Index ci = c.coordinate_index(); ci >= 0) {
        sol.x(ci) = 0.0;
        sol.P.row(ci).setZero();
        sol.P.col(ci).setZero();
      }
    }

    LineSearchResult ls = line_search_to_feasible(x, sol.x, constraints.inequality);
    out.t_max_min = std::min(out.t_max_min, ls.t_max);

    ActiveSet next = active;
    next.insert(next.end(), ls.touched.begin(), ls.touched.end());
    next = normalized(std::move(next));

    // Release the constraint with the most negative multiplier once the
    // equality-constrained optimum has been reached without new contacts.
    if (ls.touched.empty() && sol.multipliers.size() > 0) {
      const double scale = std::max(1.0, sol.multipliers.cwiseAbs().maxCoeff());
      Eigen::Index worst = 0;
      const double most_negative = sol.multipliers.minCoeff(&worst);
      if (most_negative < -1e-10 * scale) {
        next.erase(std::find(next.begin(), next.end(), active[static_cast<std::size_t>(worst)]));
      }
    }

    const double step = (ls.x - x).cwiseAbs().maxCoeff();
    x = std::move(ls.x);
    P = std::move(sol.P);
    out.iterations = j;
    const bool changed = next != active;
    active = std::move(next);
    if (!changed && step <= ctrl.tol) break;
  }

  out.posterior.mean = std::move(x);
  out.posterior.cov = std::move(P);
  out.active = std::move(active);
  return out;
}

}  // namespace popcomp
