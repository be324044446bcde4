#include "popcomp/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

#include "popcomp/error.hpp"
#include "popcomp/linalg.hpp"

namespace popcomp {

// ---------------------------------------------------------------------------
// RunConfig

void RunConfig::validate() const {
  if (memory < 1 || memory > kMaxMemory) throw InputError("memory must be in [1, 5]");
  if (subset_size < 1) throw InputError("subset size must be at least 1");
  if (horizon < 1) throw InputError("horizon must be at least 1");
  if (window < 2) throw InputError("noise window must be at least 2");
  if (runs < 1) throw InputError("run count must be at least 1");
  if (subset_size > pair_count(memory)) {
    throw InputError("subset size exceeds the number of agent types for this memory");
  }
  if (!(initial.var > 0.0) || !(initial.bias_var >= 0.0)) {
    throw InputError("initial variances must be positive");
  }
  if (!(noise.R0 > 0.0) || !(noise.Q0 >= 0.0)) throw InputError("fallback noise must be >= 0");
  if (noise.cadence < 1) throw InputError("noise cadence must be at least 1");
  iteration.validate();
  bias.validate(static_cast<Eigen::Index>(subset_size), 1);
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{
      {"memory", c.memory},
      {"subset_size", c.subset_size},
      {"horizon", c.horizon},
      {"window", c.window},
      {"runs", c.runs},
      {"seed", c.seed},
      {"bias", c.bias},
      {"iteration", {{"tol", c.iteration.tol}, {"max_iter", c.iteration.max_iter}}},
      {"initial",
       {{"mean", c.initial.mean ? nlohmann::json(*c.initial.mean) : nlohmann::json(nullptr)},
        {"var", c.initial.var},
        {"bias_mean", c.initial.bias_mean},
        {"bias_var", c.initial.bias_var}}},
      {"noise",
       {{"R0", c.noise.R0},
        {"Q0", c.noise.Q0},
        {"scale_fallback", c.noise.scale_fallback},
        {"adapt_R", c.noise.adapt_R},
        {"adapt_Q", c.noise.adapt_Q},
        {"cadence", c.noise.cadence},
        {"floor", c.noise.options.floor},
        {"diagonal_q", c.noise.options.diagonal_q}}},
      {"tie_break", c.tie_break == TieBreak::Random ? "random" : "canonical"},
      {"threads", c.threads},
  };
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  c.memory = j.value("memory", c.memory);
  c.subset_size = j.value("subset_size", c.subset_size);
  c.horizon = j.value("horizon", c.horizon);
  c.window = j.value("window", c.window);
  c.runs = j.value("runs", c.runs);
  c.seed = j.value("seed", c.seed);
  if (j.contains("bias")) {
    const auto& b = j.at("bias");
    if (b.is_string()) {
      const auto mode = b.get<std::string>();
      if (mode == "none") {
        c.bias = BiasSpec::none();
      } else if (mode == "measurement") {
        c.bias = BiasSpec::measurement();
      } else {
        throw InputError("bias must be \"none\", \"measurement\" or an object");
      }
    } else {
      c.bias = b.get<BiasSpec>();
    }
  }
  if (j.contains("iteration")) {
    const auto& it = j.at("iteration");
    c.iteration.tol = it.value("tol", c.iteration.tol);
    c.iteration.max_iter = it.value("max_iter", c.iteration.max_iter);
  }
  if (j.contains("initial")) {
    const auto& in = j.at("initial");
    if (in.contains("mean")) {
      c.initial.mean = in.at("mean").is_null() ? std::nullopt
                                               : std::optional<double>(in.at("mean").get<double>());
    }
    c.initial.var = in.value("var", c.initial.var);
    c.initial.bias_mean = in.value("bias_mean", c.initial.bias_mean);
    c.initial.bias_var = in.value("bias_var", c.initial.bias_var);
  }
  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    c.noise.R0 = n.value("R0", c.noise.R0);
    c.noise.Q0 = n.value("Q0", c.noise.Q0);
    c.noise.scale_fallback = n.value("scale_fallback", c.noise.scale_fallback);
    c.noise.adapt_R = n.value("adapt_R", c.noise.adapt_R);
    c.noise.adapt_Q = n.value("adapt_Q", c.noise.adapt_Q);
    c.noise.cadence = n.value("cadence", c.noise.cadence);
    c.noise.options.floor = n.value("floor", c.noise.options.floor);
    c.noise.options.diagonal_q = n.value("diagonal_q", c.noise.options.diagonal_q);
  }
  if (j.contains("tie_break")) {
    const auto tb = j.at("tie_break").get<std::string>();
    if (tb == "random") {
      c.tie_break = TieBreak::Random;
    } else if (tb == "canonical") {
      c.tie_break = TieBreak::CanonicalFirst;
    } else {
      throw InputError("tie_break must be \"canonical\" or \"random\"");
    }
  }
  c.threads = j.value("threads", c.threads);
}

// ---------------------------------------------------------------------------
// CompositionFilter

namespace {

Eigen::MatrixXd augmented_transition(Eigen::Index n, const BiasSpec& bias) {
  LinearModel base{Eigen::MatrixXd::Identity(n, n), Eigen::MatrixXd::Zero(n, n),
                   Eigen::MatrixXd::Zero(1, n), Eigen::MatrixXd::Identity(1, 1)};
  return augment_model(base, bias).F;
}

}  // namespace

CompositionFilter::CompositionFilter(Eigen::Index n_types, const RunConfig& cfg,
                                     double warmup_var)
    : n_types_(n_types), cfg_(cfg), history_(cfg.window) {
  if (n_types < 1) throw InputError("filter needs at least one agent type");
  cfg_.bias.validate(n_types, 1);
  const Eigen::Index nb = cfg_.bias.n_bias;

  constraints_ =
      augment_constraints(ConstraintSet::nonnegative(n_types, n_types), cfg_.bias, n_types);

  const double start = cfg_.initial.mean.value_or(1.0 / static_cast<double>(n_types));
  if (start < 0.0) throw InputError("initial composition must be non-negative");
  estimate_.mean = Eigen::VectorXd::Zero(n_types + nb);
  estimate_.mean.head(n_types).setConstant(start);
  estimate_.mean.tail(nb).setConstant(cfg_.initial.bias_mean);
  estimate_.cov = Eigen::MatrixXd::Zero(n_types + nb, n_types + nb);
  estimate_.cov.topLeftCorner(n_types, n_types).diagonal().setConstant(cfg_.initial.var);
  estimate_.cov.bottomRightCorner(nb, nb).diagonal().setConstant(cfg_.initial.bias_var);

  const double scale = cfg_.noise.scale_fallback ? warmup_var : 1.0;
  R_ = Eigen::MatrixXd::Constant(1, 1, cfg_.noise.R0 * scale);
  Q_ = linalg::block_diagonal(
      cfg_.noise.Q0 * scale * Eigen::MatrixXd::Identity(n_types, n_types),
      cfg_.bias.noise().asDiagonal().toDenseMatrix());
}

void CompositionFilter::refresh_noise(const Eigen::MatrixXd& H_aug, const Eigen::MatrixXd& F) {
  if (!history_.full()) return;
  const bool due = steps_since_refresh_ == 0;
  steps_since_refresh_ = (steps_since_refresh_ + 1) % cfg_.noise.cadence;
  if (!due) return;

  if (cfg_.noise.adapt_R) R_ = *estimate_R(history_, cfg_.noise.options);
  if (cfg_.noise.adapt_Q) {
    const Eigen::MatrixXd S = *empirical_residual_cov(history_);
    const Eigen::MatrixXd full = estimate_Q(S, H_aug, F, estimate_.cov, R_, cfg_.noise.options);
    // Bias terms keep their configured noise and no cross-correlation.
    Q_ = linalg::block_diagonal(full.topLeftCorner(n_types_, n_types_),
                                cfg_.bias.noise().asDiagonal().toDenseMatrix());
  }
}

StepRecord CompositionFilter::step(std::size_t k, const Eigen::RowVectorXd& H, double z) {
  if (H.size() != n_types_) throw InputError("decision row length differs from type count");
  const Eigen::MatrixXd H_aug = augment_measurement(H, cfg_.bias);
  const Eigen::MatrixXd F = augmented_transition(n_types_, cfg_.bias);
  refresh_noise(H_aug, F);

  const LinearModel model{F, Q_, H_aug, R_};
  const Eigen::MatrixXd P_pred = F * estimate_.cov * F.transpose() + Q_;

  StepRecord rec;
  rec.k = k;
  rec.z = z;
  rec.z_hat = (H_aug * (F * estimate_.mean))(0);
  rec.S = (H_aug * P_pred * H_aug.transpose() + R_)(0, 0);

  ConstrainedStep res = constrained_step(estimate_, Eigen::VectorXd::Constant(1, z), model,
                                         constraints_, active_, cfg_.iteration);
  if (!res.posterior.mean.allFinite() || !res.posterior.cov.allFinite()) {
    throw NumericalError("non-finite estimate at step " + std::to_string(k));
  }
  rec.nu = res.innovation.nu(0);
  history_.push({res.innovation.nu, H_aug, P_pred});

  estimate_ = std::move(res.posterior);
  active_ = std::move(res.active);
  rank_deficient_ = res.rank_deficient;

  const SplitEstimate split = extract(estimate_, cfg_.bias);
  rec.x = split.composition.mean;
  rec.bias = split.bias.mean;
  rec.active_set = active_;
  rec.iterations = res.iterations;
  rec.t_max_min = res.t_max_min;
  if (cfg_.record_covariance) rec.cov = estimate_.cov;
  return rec;
}

// ---------------------------------------------------------------------------
// Runs

double warmup_variance(const PriceSeries& series, const RunConfig& cfg) {
  const std::size_t first = cfg.first_step();
  if (series.size() < first) return 1.0;
  const auto z = series.increments();
  const std::size_t count = first - 1;
  if (count < 2) return 1.0;
  double mean = 0.0;
  for (std::size_t k = 1; k < first; ++k) mean += z[k];
  mean /= static_cast<double>(count);
  double var = 0.0;
  for (std::size_t k = 1; k < first; ++k) var += (z[k] - mean) * (z[k] - mean);
  var /= static_cast<double>(count - 1);
  return var > 0.0 ? var : 1.0;
}

RunRecord run_single(const PriceSeries& series, const std::vector<AgentType>& subset,
                     const RunConfig& cfg, std::uint64_t seed) {
  series.validate();
  if (subset.empty()) throw InputError("run needs at least one agent type");
  for (const auto& t : subset) {
    if (t.memory() != cfg.memory) throw InputError("agent type memory differs from config");
  }
  const std::size_t first = cfg.first_step();
  if (series.size() < first + 1) {
    throw InputError("series of length " + std::to_string(series.size()) +
                     " is too short; need at least " + std::to_string(first + 1));
  }

  RunRecord record;
  record.seed = seed;
  record.subset = AgentSubset{cfg.memory, subset, seed};

  const auto z = series.increments();
  OutcomeTape tape(cfg.memory, cfg.horizon);
  for (std::size_t k = 1; k < first; ++k) tape.push(winning_outcome(z[k]));

  CompositionFilter filter(static_cast<Eigen::Index>(subset.size()), cfg,
                           warmup_variance(series, cfg));
  std::mt19937_64 rng(seed);
  record.steps.reserve(series.size() - first);
  for (std::size_t k = first; k < series.size(); ++k) {
    const Eigen::RowVectorXd H = tape.decision_row(subset, cfg.tie_break, &rng);
    try {
      record.steps.push_back(filter.step(k, H, z[k]));
    } catch (const NumericalError& e) {
      record.flagged = true;
      record.error = "step " + std::to_string(k) + ": " + e.what();
      break;
    }
    if (filter.last_step_rank_deficient()) ++record.rank_deficient_steps;
    tape.push(winning_outcome(z[k]));
  }
  return record;
}

// ---------------------------------------------------------------------------
// Aggregation

namespace {

// Sum after sorting so the result does not depend on input order.
double ordered_sum(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  return std::accumulate(v.begin(), v.end(), 0.0);
}

// Mean that is exact when all values agree.
double ordered_mean(std::vector<double>& v) {
  const double sum = ordered_sum(v);
  if (v.front() == v.back()) return v.front();
  return sum / static_cast<double>(v.size());
}

}  // namespace

EnsembleSummary average_runs(const std::vector<RunRecord>& records) {
  EnsembleSummary out;
  out.runs_total = records.size();
  std::vector<const RunRecord*> valid;
  for (const auto& r : records) {
    if (r.flagged) {
      out.flagged_runs.push_back(r.run_index);
    } else {
      valid.push_back(&r);
    }
  }
  std::sort(out.flagged_runs.begin(), out.flagged_runs.end());
  if (valid.empty()) throw NumericalError("no unflagged runs to average");
  out.runs_used = valid.size();

  // Timesteps present in every valid run.
  std::map<std::size_t, std::vector<const StepRecord*>> by_k;
  for (const auto* r : valid) {
    for (const auto& s : r->steps) by_k[s.k].push_back(&s);
  }
  const auto M = static_cast<double>(valid.size());
  std::vector<double> zh;
  std::vector<double> ss;
  std::vector<double> dev;
  for (const auto& [k, steps] : by_k) {
    if (steps.size() != valid.size()) continue;
    zh.clear();
    ss.clear();
    for (const auto* s : steps) {
      zh.push_back(s->z_hat);
      ss.push_back(s->S);
    }
    SummaryRow row;
    row.k = k;
    row.z = steps.front()->z;
    row.z_hat = ordered_mean(zh);
    row.S = ordered_mean(ss);
    if (valid.size() > 1) {
      dev.clear();
      for (double v : zh) dev.push_back((v - row.z_hat) * (v - row.z_hat));
      const double var = ordered_sum(dev) / (M - 1.0);
      row.sem = std::sqrt(var / M);
    }
    out.rows.push_back(row);
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t run) {
  // splitmix64 finaliser over a combination of both inputs.
  auto mix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  return mix(mix(master) ^ (run * 0xd1342543de82ef95ULL + 1));
}

EnsembleResult orchestrate(const PriceSeries& series, const RunConfig& cfg) {
  cfg.validate();
  series.validate();
  if (series.size() < cfg.first_step() + 1) {
    throw InputError("series too short for memory " + std::to_string(cfg.memory) +
                     " and horizon " + std::to_string(cfg.horizon));
  }

  EnsembleResult out;
  out.records.resize(cfg.runs);
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    try {
      for (std::size_t j = next++; j < cfg.runs; j = next++) {
        const std::uint64_t seed = derive_seed(cfg.seed, j);
        const auto subset = sample_agent_subset(cfg.memory, cfg.subset_size, seed);
        RunRecord r = run_single(series, subset, cfg, seed);
        r.run_index = j;
        out.records[j] = std::move(r);
      }
    } catch (...) {
      const std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
      next = cfg.runs;
    }
  };

  unsigned threads = cfg.threads ? cfg.threads : std::thread::hardware_concurrency();
  threads = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(cfg.runs)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);

  out.summary = average_runs(out.records);
  return out;
}

}  // namespace popcomp
