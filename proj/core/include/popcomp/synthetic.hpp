#pragma once

// Synthetic markets with a planted population, used as ground truth.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "popcomp/mg_model.hpp"
#include "popcomp/series.hpp"

namespace popcomp {

struct SynthSpec {
  AgentSubset planted;
  /// Planted composition x*, one non-negative weight per planted type.
  std::vector<double> weights;
  std::size_t horizon = 10;
  /// Measurement noise; 0.1 * sum(weights) when unset.
  std::optional<double> sigma_z;
  /// Constant measurement offset.
  double bias = 0.0;
  /// Number of prices r_0 .. r_{length-1}.
  std::size_t length = 2000;
  std::uint64_t seed = 1;
  double r0 = 1000.0;
  /// The first m + T winning outcomes; drawn at random when empty.
  std::vector<int> initial_outcomes;

  double noise_sigma() const;
  std::size_t warmup() const { return static_cast<std::size_t>(planted.memory) + horizon; }
  void validate() const;
};

void to_json(nlohmann::json& j, const SynthSpec& s);
/// Missing keys keep their defaults. Without "subset", planted types are
/// drawn with sample_agent_subset(memory, weights.size(), seed).
void from_json(const nlohmann::json& j, SynthSpec& s);

struct TruthRow {
  std::size_t k = 0;
  double r = 0.0;
  double z = 0.0;
  int w = 0;
  double noise = 0.0;
  /// Decision row of the planted types; empty during warm-up.
  Eigen::RowVectorXd H;
};

struct SynthResult {
  PriceSeries series;
  std::vector<TruthRow> truth;  // one row per k = 1 .. length-1
  double sigma_z = 0.0;         // noise actually used
  std::vector<std::string> warnings;
};

/// Plays the game forward: z_k = H_k x* + eps_k + bias, r_k = r_{k-1} + z_k.
/// Warm-up increments are -w_k * scale with scale = sum(x*) (or sigma, or 1).
/// If the price would reach zero the series is regenerated with half the
/// noise, up to a few times, before giving up with InputError.
SynthResult generate_synthetic(const SynthSpec& spec);

/// Number of steps whose replayed decision row differs from the truth log.
std::size_t replay_mismatches(const PriceSeries& series, const std::vector<TruthRow>& truth,
                              const AgentSubset& planted, std::size_t horizon);

}  // namespace popcomp
