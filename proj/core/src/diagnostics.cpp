#include "popcomp/diagnostics.hpp"

#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "popcomp/error.hpp"

namespace popcomp {

std::optional<LogReturnResidual> log_return_residual(double r_prev, double z_obs, double z_hat) {
  if (!(r_prev > 0.0) || !(r_prev + z_obs > 0.0) || !(r_prev + z_hat > 0.0)) {
    return std::nullopt;
  }
  LogReturnResidual out;
  out.l = std::log(r_prev + z_obs) - std::log(r_prev);
  out.l_hat = std::log(r_prev + z_hat) - std::log(r_prev);
  out.l_tilde = out.l - out.l_hat;
  return out;
}

double delta_variance(double S, double r_prev) {
  if (!(r_prev > 0.0)) throw InputError("delta variance needs a positive previous rate");
  if (S < 0.0) throw InputError("residual variance must be non-negative");
  return S / (r_prev * r_prev);
}

bool CoverageTable::all_pass() const {
  for (const auto& l : levels) {
    if (!l.pass) return false;
  }
  return true;
}

CoverageTable coverage_check(std::span<const double> residuals,
                             std::span<const double> variances,
                             std::span<const double> kappas) {
  if (residuals.empty()) throw InputError("coverage check needs at least one residual");
  if (residuals.size() != variances.size()) {
    throw InputError("residuals and variances are not aligned");
  }
  CoverageTable out;
  out.count = residuals.size();
  const auto n = static_cast<double>(residuals.size());
  for (double kappa : kappas) {
    if (!(kappa > 0.0)) throw InputError("coverage levels must be positive");
    std::size_t outside = 0;
    for (std::size_t i = 0; i < residuals.size(); ++i) {
      if (std::abs(residuals[i]) > kappa * std::sqrt(variances[i])) ++outside;
    }
    CoverageLevel level;
    level.kappa = kappa;
    level.fraction_outside = static_cast<double>(outside) / n;
    level.chebyshev_bound = 1.0 / (kappa * kappa);
    level.pass = level.fraction_outside <= level.chebyshev_bound;
    out.levels.push_back(level);
  }
  double mean = 0.0;
  for (double r : residuals) mean += r;
  mean /= n;
  out.mean_residual = mean;
  if (residuals.size() > 1) {
    double ss = 0.0;
    for (double r : residuals) ss += (r - mean) * (r - mean);
    out.mean_residual_se = std::sqrt(ss / (n - 1.0) / n);
  }
  return out;
}

bool same_direction(double z, double z_hat) {
  auto sgn = [](double v) { return (v > 0.0) - (v < 0.0); };
  return sgn(z) == sgn(z_hat);
}

ResidualReport build_report(const EnsembleSummary& summary, const PriceSeries& series,
                            std::size_t rolling_window) {
  series.validate();
  ResidualReport out;
  out.rolling_window = rolling_window;
  std::vector<double> residuals;
  std::vector<double> variances;
  std::size_t hits = 0;
  std::size_t counted = 0;
  std::vector<int> hit_flags;
  for (const auto& s : summary.rows) {
    if (s.k == 0 || s.k >= series.size()) throw InputError("summary step outside the series");
    const double r_prev = series.rates[s.k - 1];
    ResidualRow row;
    row.k = s.k;
    row.var = delta_variance(std::max(s.S, 0.0), r_prev);
    row.band = 3.0 * std::sqrt(row.var);
    row.sem = s.sem / r_prev;
    const auto res = log_return_residual(r_prev, s.z, s.z_hat);
    if (res) {
      row.l = res->l;
      row.l_hat = res->l_hat;
      row.l_tilde = res->l_tilde;
      residuals.push_back(row.l_tilde);
      variances.push_back(row.var);
      const bool hit = same_direction(s.z, s.z_hat);
      hits += hit ? 1 : 0;
      ++counted;
      hit_flags.push_back(hit ? 1 : 0);
    } else {
      row.flagged = true;
      row.l = row.l_hat = row.l_tilde = std::numeric_limits<double>::quiet_NaN();
      ++out.flagged_steps;
      hit_flags.push_back(-1);
    }
    out.rows.push_back(row);
  }
  if (!residuals.empty()) out.coverage = coverage_check(residuals, variances);
  out.directional_accuracy =
      counted ? static_cast<double>(hits) / static_cast<double>(counted) : 0.0;

  // Trailing-window accuracy over unflagged steps.
  out.rolling_accuracy.assign(hit_flags.size(), std::numeric_limits<double>::quiet_NaN());
  if (rolling_window > 0) {
    std::size_t win_hits = 0;
    std::size_t win_count = 0;
    for (std::size_t i = 0; i < hit_flags.size(); ++i) {
      if (hit_flags[i] >= 0) {
        win_hits += static_cast<std::size_t>(hit_flags[i]);
        ++win_count;
      }
      if (i >= rolling_window && hit_flags[i - rolling_window] >= 0) {
        win_hits -= static_cast<std::size_t>(hit_flags[i - rolling_window]);
        --win_count;
      }
      if (i + 1 >= rolling_window && win_count > 0) {
        out.rolling_accuracy[i] = static_cast<double>(win_hits) / static_cast<double>(win_count);
      }
    }
  }
  return out;
}

void to_json(nlohmann::json& j, const CoverageTable& t) {
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& l : t.levels) {
    levels.push_back({{"kappa", l.kappa},
                      {"fraction_outside", l.fraction_outside},
                      {"chebyshev_bound", l.chebyshev_bound},
                      {"pass", l.pass}});
  }
  j = nlohmann::json{{"levels", std::move(levels)},
                     {"mean_residual", t.mean_residual},
                     {"mean_residual_se", t.mean_residual_se},
                     {"count", t.count},
                     {"pass", t.all_pass()}};
}

}  // namespace popcomp
