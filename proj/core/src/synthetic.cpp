#include "popcomp/synthetic.hpp"

#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "popcomp/error.hpp"

namespace popcomp {

double SynthSpec::noise_sigma() const {
  if (sigma_z) return *sigma_z;
  return 0.1 * std::accumulate(weights.begin(), weights.end(), 0.0);
}

void SynthSpec::validate() const {
  if (planted.types.empty()) throw InputError("synthetic market needs planted agent types");
  if (weights.size() != planted.types.size()) {
    throw InputError("one planted weight per agent type");
  }
  for (double w : weights) {
    if (!(w >= 0.0)) throw InputError("planted weights must be non-negative");
  }
  for (const auto& t : planted.types) {
    if (t.memory() != planted.memory) throw InputError("planted types must share the memory");
  }
  if (horizon < 1) throw InputError("horizon must be at least 1");
  if (!(noise_sigma() >= 0.0)) throw InputError("sigma_z must be non-negative");
  if (!(r0 > 0.0)) throw InputError("r0 must be positive");
  if (length < warmup() + 2) {
    throw InputError("length must exceed the warm-up of m + T + 1 prices");
  }
  if (!initial_outcomes.empty()) {
    if (initial_outcomes.size() != warmup()) {
      throw InputError("initial_outcomes must hold m + T outcomes");
    }
    for (int w : initial_outcomes) {
      if (w != 1 && w != -1) throw InputError("initial outcomes must be +1 or -1");
    }
  }
}

void to_json(nlohmann::json& j, const SynthSpec& s) {
  j = nlohmann::json{{"subset", s.planted},
                     {"weights", s.weights},
                     {"horizon", s.horizon},
                     {"sigma_z", s.noise_sigma()},
                     {"bias", s.bias},
                     {"length", s.length},
                     {"seed", s.seed},
                     {"r0", s.r0}};
  if (!s.initial_outcomes.empty()) j["initial_outcomes"] = s.initial_outcomes;
}

void from_json(const nlohmann::json& j, SynthSpec& s) {
  s.weights = j.value("weights", s.weights);
  s.horizon = j.value("horizon", s.horizon);
  if (j.contains("sigma_z") && !j.at("sigma_z").is_null()) s.sigma_z = j.at("sigma_z").get<double>();
  s.bias = j.value("bias", s.bias);
  s.length = j.value("length", s.length);
  s.seed = j.value("seed", s.seed);
  s.r0 = j.value("r0", s.r0);
  s.initial_outcomes = j.value("initial_outcomes", s.initial_outcomes);
  if (j.contains("subset")) {
    s.planted = j.at("subset").get<AgentSubset>();
  } else {
    s.planted.memory = j.value("memory", s.planted.memory);
    s.planted.seed = s.seed;
    s.planted.types = sample_agent_subset(s.planted.memory, s.weights.size(), s.seed);
  }
}

namespace {

constexpr int kMaxAttempts = 6;

std::optional<SynthResult> attempt(const SynthSpec& spec, double sigma) {
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t warm = spec.warmup();
  const double weight_sum = std::accumulate(spec.weights.begin(), spec.weights.end(), 0.0);
  const double scale = weight_sum > 0.0 ? weight_sum : (sigma > 0.0 ? sigma : 1.0);
  const Eigen::Map<const Eigen::VectorXd> x_star(spec.weights.data(),
                                                 static_cast<Eigen::Index>(spec.weights.size()));

  std::vector<int> warm_outcomes = spec.initial_outcomes;
  if (warm_outcomes.empty()) {
    for (std::size_t i = 0; i < warm; ++i) warm_outcomes.push_back((rng() & 1U) ? 1 : -1);
  }

  SynthResult out;
  out.sigma_z = sigma;
  out.series.rates.reserve(spec.length);
  out.series.rates.push_back(spec.r0);
  OutcomeTape tape(spec.planted.memory, spec.horizon);
  for (std::size_t k = 1; k < spec.length; ++k) {
    TruthRow row;
    row.k = k;
    double z_raw = 0.0;
    if (k <= warm) {
      z_raw = -warm_outcomes[k - 1] * scale;
    } else {
      row.H = tape.decision_row(spec.planted.types);
      row.noise = sigma * noise(rng);
      z_raw = (row.H * x_star)(0) + row.noise + spec.bias;
    }
    const double r_prev = out.series.rates.back();
    const double r = r_prev + z_raw;
    if (!(r > 0.0)) return std::nullopt;
    out.series.rates.push_back(r);
    row.r = r;
    row.z = r - r_prev;
    row.w = winning_outcome(row.z);
    tape.push(row.w);
    out.truth.push_back(std::move(row));
  }
  return out;
}

}  // namespace

SynthResult generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  double sigma = spec.noise_sigma();
  std::vector<std::string> warnings;
  for (int i = 0; i < kMaxAttempts; ++i) {
    if (auto res = attempt(spec, sigma)) {
      res->warnings = std::move(warnings);
      return std::move(*res);
    }
    warnings.push_back("price reached zero with sigma_z=" + std::to_string(sigma) +
                       "; regenerating with half the noise");
    sigma *= 0.5;
  }
  throw InputError("synthetic price keeps reaching zero; increase r0");
}

std::size_t replay_mismatches(const PriceSeries& series, const std::vector<TruthRow>& truth,
                              const AgentSubset& planted, std::size_t horizon) {
  if (truth.size() + 1 != series.size()) throw InputError("truth log does not match series");
  const auto z = series.increments();
  OutcomeTape tape(planted.memory, horizon);
  std::size_t mismatches = 0;
  for (std::size_t k = 1; k < series.size(); ++k) {
    const TruthRow& row = truth[k - 1];
    if (tape.ready()) {
      const Eigen::RowVectorXd H = tape.decision_row(planted.types);
      if (row.H.size() != H.size() || row.H != H) ++mismatches;
    } else if (row.H.size() != 0) {
      ++mismatches;
    }
    if (winning_outcome(z[k]) != row.w) ++mismatches;
    tape.push(winning_outcome(z[k]));
  }
  return mismatches;
}

}  // namespace popcomp
