#pragma once

// Log-return residuals of ensemble predictions and their calibration.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "popcomp/ensemble.hpp"
#include "popcomp/series.hpp"

namespace popcomp {

struct LogReturnResidual {
  double l = 0.0;        // observed log return
  double l_hat = 0.0;    // predicted log return
  double l_tilde = 0.0;  // l - l_hat
};

/// Empty when r_prev, r_prev + z or r_prev + z_hat is not positive.
std::optional<LogReturnResidual> log_return_residual(double r_prev, double z_obs, double z_hat);

/// First-order variance of the log-return residual, S / r_prev^2.
double delta_variance(double S, double r_prev);

struct CoverageLevel {
  double kappa = 0.0;
  double fraction_outside = 0.0;
  double chebyshev_bound = 0.0;  // 1 / kappa^2
  bool pass = false;
};

struct CoverageTable {
  std::vector<CoverageLevel> levels;
  double mean_residual = 0.0;
  double mean_residual_se = 0.0;
  std::size_t count = 0;

  bool all_pass() const;
};

inline constexpr double kDefaultKappaValues[] = {1.0, 2.0, 3.0};
inline constexpr std::span<const double> kDefaultKappas{kDefaultKappaValues};

/// Fraction of |residual| > kappa * sqrt(var) per level, checked against
/// the Chebyshev bound. Throws InputError on empty or misaligned input.
CoverageTable coverage_check(std::span<const double> residuals,
                             std::span<const double> variances,
                             std::span<const double> kappas = kDefaultKappas);

struct ResidualRow {
  std::size_t k = 0;
  double l = 0.0;
  double l_hat = 0.0;
  double l_tilde = 0.0;
  double var = 0.0;
  double band = 0.0;  // 3 sqrt(var), centred on zero
  double sem = 0.0;   // ensemble standard error in log-return units
  bool flagged = false;
};

struct ResidualReport {
  std::vector<ResidualRow> rows;  // aligned with the summary rows
  std::size_t flagged_steps = 0;
  CoverageTable coverage;
  double directional_accuracy = 0.0;
  std::size_t rolling_window = 0;
  /// Directional accuracy over the trailing window, per row (NaN until the
  /// window fills).
  std::vector<double> rolling_accuracy;
};

/// Sign agreement of predicted and observed increments (zero matches zero).
bool same_direction(double z, double z_hat);

ResidualReport build_report(const EnsembleSummary& summary, const PriceSeries& series,
                            std::size_t rolling_window = 100);

void to_json(nlohmann::json& j, const CoverageTable& t);

}  // namespace popcomp
