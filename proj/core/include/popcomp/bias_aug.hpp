#pragma once

// Bias removal by state augmentation: x^b = [x; b] with
//   F^b = [[F, B], [0, I]],  H^b = [H, C],  Q^b = blkdiag(Q, diag(bias_noise)).

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "popcomp/constrained_kf.hpp"
#include "popcomp/kalman.hpp"

namespace popcomp {

struct BiasSpec {
  Eigen::Index n_bias = 0;
  /// state_dim x n_bias; empty means no coupling into the dynamics.
  Eigen::MatrixXd B;
  /// measurement_dim x n_bias; empty means no coupling into measurements.
  Eigen::MatrixXd C;
  /// Process-noise variance per bias term; empty means zero.
  Eigen::VectorXd bias_noise;

  static BiasSpec none() { return {}; }
  /// A single constant offset on a scalar measurement (B absent, C = 1).
  static BiasSpec measurement();

  /// B, C and bias noise with empty members expanded to zeros.
  Eigen::MatrixXd coupling_B(Eigen::Index state_dim) const;
  Eigen::MatrixXd coupling_C(Eigen::Index measurement_dim) const;
  Eigen::VectorXd noise() const;

  void validate(Eigen::Index state_dim, Eigen::Index measurement_dim) const;
};

void to_json(nlohmann::json& j, const BiasSpec& s);
void from_json(const nlohmann::json& j, BiasSpec& s);

LinearModel augment_model(const LinearModel& model, const BiasSpec& spec);

/// The first `state_dim` coordinates keep their constraints; bias
/// coordinates are unconstrained.
ConstraintSet augment_constraints(const ConstraintSet& constraints, const BiasSpec& spec,
                                  Eigen::Index state_dim);

/// Augmented measurement row [H, C].
Eigen::MatrixXd augment_measurement(const Eigen::MatrixXd& H, const BiasSpec& spec);

struct SplitEstimate {
  GaussianEstimate composition;
  GaussianEstimate bias;
};

/// Marginals of the state and bias blocks.
SplitEstimate extract(const GaussianEstimate& estimate, const BiasSpec& spec);

}  // namespace popcomp
