#pragma once

// Ensemble inference: many independent filter runs over random subsets of
// agent types, averaged with equal weights.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "popcomp/bias_aug.hpp"
#include "popcomp/constrained_kf.hpp"
#include "popcomp/mg_model.hpp"
#include "popcomp/noise_est.hpp"
#include "popcomp/series.hpp"

namespace popcomp {

struct InitialConditions {
  /// Initial weight per type; 1/N when unset.
  std::optional<double> mean;
  double var = 1.0;
  double bias_mean = 0.0;
  double bias_var = 1.0;
};

struct NoiseConfig {
  /// Fallback noise before the residual window fills. With scale_fallback
  /// both are multiplied by the variance of the warm-up increments.
  double R0 = 1.0;
  double Q0 = 1e-4;
  bool scale_fallback = true;
  bool adapt_R = true;
  bool adapt_Q = true;
  /// Re-estimate every `cadence` steps once the window is full.
  std::size_t cadence = 1;
  NoiseOptions options;
};

struct RunConfig {
  int memory = 4;
  std::size_t subset_size = 5;
  std::size_t horizon = 10;
  std::size_t window = 50;
  std::size_t runs = 100;
  std::uint64_t seed = 1;
  BiasSpec bias = BiasSpec::measurement();
  IterationControl iteration;
  InitialConditions initial;
  NoiseConfig noise;
  TieBreak tie_break = TieBreak::CanonicalFirst;
  /// Worker threads for orchestrate; 0 picks the hardware concurrency.
  unsigned threads = 0;
  /// Keep the full posterior covariance in every StepRecord.
  bool record_covariance = false;

  void validate() const;

  /// First series index at which a prediction is made, m + T + 1.
  std::size_t first_step() const { return static_cast<std::size_t>(memory) + horizon + 1; }
};

void to_json(nlohmann::json& j, const RunConfig& c);
/// Missing keys keep their defaults. "bias" accepts "none", "measurement"
/// or a full BiasSpec object.
void from_json(const nlohmann::json& j, RunConfig& c);

struct StepRecord {
  std::size_t k = 0;
  double z = 0.0;
  double z_hat = 0.0;
  double nu = 0.0;
  double S = 0.0;
  Eigen::VectorXd x;     // composition estimate
  Eigen::VectorXd bias;  // bias estimate (empty without augmentation)
  ActiveSet active_set;
  int iterations = 0;
  double t_max_min = 1.0;
  Eigen::MatrixXd cov;   // only with RunConfig::record_covariance
};

struct RunRecord {
  std::size_t run_index = 0;
  std::uint64_t seed = 0;
  AgentSubset subset;
  std::vector<StepRecord> steps;
  bool flagged = false;
  std::string error;
  /// Steps at which the KKT system was numerically rank deficient.
  std::size_t rank_deficient_steps = 0;
};

/// Recursive filter for one run: builds the (optionally bias-augmented)
/// model each step, predicts, then fuses the observation.
class CompositionFilter {
 public:
  CompositionFilter(Eigen::Index n_types, const RunConfig& cfg, double warmup_variance);

  /// Predicts z_k from H_k before looking at z, then updates with z.
  StepRecord step(std::size_t k, const Eigen::RowVectorXd& H, double z);

  const GaussianEstimate& estimate() const { return estimate_; }
  const ActiveSet& active() const { return active_; }
  const Eigen::MatrixXd& R() const { return R_; }
  const Eigen::MatrixXd& Q() const { return Q_; }
  bool last_step_rank_deficient() const { return rank_deficient_; }

 private:
  void refresh_noise(const Eigen::MatrixXd& H_aug, const Eigen::MatrixXd& F);

  Eigen::Index n_types_;
  RunConfig cfg_;
  ConstraintSet constraints_;
  GaussianEstimate estimate_;
  ActiveSet active_;
  ResidualHistory history_;
  Eigen::MatrixXd R_;
  Eigen::MatrixXd Q_;
  std::size_t steps_since_refresh_ = 0;
  bool rank_deficient_ = false;
};

/// Variance of z_1 .. z_{m+T}; 1 when degenerate.
double warmup_variance(const PriceSeries& series, const RunConfig& cfg);

/// One filter run over the series with a fixed set of agent types. A
/// numerical failure truncates the record and flags it.
RunRecord run_single(const PriceSeries& series, const std::vector<AgentType>& subset,
                     const RunConfig& cfg, std::uint64_t seed);

struct SummaryRow {
  std::size_t k = 0;
  double z = 0.0;
  double z_hat = 0.0;
  double S = 0.0;
  double sem = 0.0;
};

struct EnsembleSummary {
  std::vector<SummaryRow> rows;
  std::size_t runs_total = 0;
  std::size_t runs_used = 0;
  std::vector<std::size_t> flagged_runs;
};

/// Equal-weight averages of z_hat and S over unflagged runs, plus the
/// standard error of the mean of z_hat. Independent of record order.
EnsembleSummary average_runs(const std::vector<RunRecord>& records);

/// Seed of run j derived from the master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t run);

struct EnsembleResult {
  EnsembleSummary summary;
  std::vector<RunRecord> records;
};

/// Draws cfg.runs random subsets and runs them, possibly in parallel.
/// Throws NumericalError when every run fails.
EnsembleResult orchestrate(const PriceSeries& series, const RunConfig& cfg);

}  // namespace popcomp
