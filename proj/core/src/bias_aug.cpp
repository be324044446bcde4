#include "popcomp/bias_aug.hpp"

#include <string>

#include <nlohmann/json.hpp>

#include "popcomp/error.hpp"
#include "popcomp/linalg.hpp"

namespace popcomp {

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw InputError("matrix must be a list of rows");
  if (j.empty()) return {};
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw InputError("matrix rows must have equal length");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace

BiasSpec BiasSpec::measurement() {
  BiasSpec s;
  s.n_bias = 1;
  s.C = Eigen::MatrixXd::Ones(1, 1);
  s.bias_noise = Eigen::VectorXd::Zero(1);
  return s;
}

Eigen::MatrixXd BiasSpec::coupling_B(Eigen::Index state_dim) const {
  return B.size() == 0 ? Eigen::MatrixXd::Zero(state_dim, n_bias) : B;
}

Eigen::MatrixXd BiasSpec::coupling_C(Eigen::Index measurement_dim) const {
  return C.size() == 0 ? Eigen::MatrixXd::Zero(measurement_dim, n_bias) : C;
}

Eigen::VectorXd BiasSpec::noise() const {
  return bias_noise.size() == 0 ? Eigen::VectorXd::Zero(n_bias) : bias_noise;
}

void BiasSpec::validate(Eigen::Index state_dim, Eigen::Index measurement_dim) const {
  if (n_bias < 0) throw InputError("n_bias must be non-negative");
  if (B.size() != 0 && (B.rows() != state_dim || B.cols() != n_bias)) {
    throw InputError("bias B must be " + std::to_string(state_dim) + "x" +
                     std::to_string(n_bias));
  }
  if (C.size() != 0 && (C.rows() != measurement_dim || C.cols() != n_bias)) {
    throw InputError("bias C must be " + std::to_string(measurement_dim) + "x" +
                     std::to_string(n_bias));
  }
  if (bias_noise.size() != 0) {
    if (bias_noise.size() != n_bias) throw InputError("one bias noise variance per term");
    if ((bias_noise.array() < 0.0).any()) throw InputError("bias noise must be >= 0");
  }
}

void to_json(nlohmann::json& j, const BiasSpec& s) {
  j = nlohmann::json{{"n_bias", s.n_bias},
                     {"B", matrix_json(s.B)},
                     {"C", matrix_json(s.C)},
                     {"bias_noise", std::vector<double>(s.bias_noise.data(),
                                                        s.bias_noise.data() + s.bias_noise.size())}};
}

void from_json(const nlohmann::json& j, BiasSpec& s) {
  s = BiasSpec{};
  s.n_bias = j.at("n_bias").get<Eigen::Index>();
  if (j.contains("B")) s.B = matrix_from_json(j.at("B"));
  if (j.contains("C")) s.C = matrix_from_json(j.at("C"));
  if (j.contains("bias_noise")) {
    const auto v = j.at("bias_noise").get<std::vector<double>>();
    s.bias_noise = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
}

LinearModel augment_model(const LinearModel& model, const BiasSpec& spec) {
  model.validate();
  const Eigen::Index n = model.state_dim();
  const Eigen::Index m = model.measurement_dim();
  spec.validate(n, m);
  if (spec.n_bias == 0) return model;
  const Eigen::Index nb = spec.n_bias;

  LinearModel out;
  out.F = Eigen::MatrixXd::Zero(n + nb, n + nb);
  out.F.topLeftCorner(n, n) = model.F;
  out.F.topRightCorner(n, nb) = spec.coupling_B(n);
  out.F.bottomRightCorner(nb, nb).setIdentity();
  out.H = augment_measurement(model.H, spec);
  out.Q = linalg::block_diagonal(model.Q, spec.noise().asDiagonal().toDenseMatrix());
  out.R = model.R;
  return out;
}

Eigen::MatrixXd augment_measurement(const Eigen::MatrixXd& H, const BiasSpec& spec) {
  if (spec.n_bias == 0) return H;
  Eigen::MatrixXd out(H.rows(), H.cols() + spec.n_bias);
  out << H, spec.coupling_C(H.rows());
  return out;
}

ConstraintSet augment_constraints(const ConstraintSet& constraints, const BiasSpec& spec,
                                  Eigen::Index state_dim) {
  constraints.validate(state_dim);
  if (spec.n_bias == 0) return constraints;
  const Eigen::Index dim = state_dim + spec.n_bias;
  ConstraintSet out;
  for (const auto& c : constraints.equality) out.equality.push_back(c.padded(dim));
  for (const auto& c : constraints.inequality) out.inequality.push_back(c.padded(dim));
  return out;
}

SplitEstimate extract(const GaussianEstimate& estimate, const BiasSpec& spec) {
  const Eigen::Index total = estimate.mean.size();
  const Eigen::Index nb = spec.n_bias;
  if (nb < 0 || nb > total || estimate.cov.rows() != total || estimate.cov.cols() != total) {
    throw InputError("estimate dimension does not match the bias specification");
  }
  const Eigen::Index n = total - nb;
  SplitEstimate out;
  out.composition.mean = estimate.mean.head(n);
  out.composition.cov = estimate.cov.topLeftCorner(n, n);
  out.bias.mean = estimate.mean.tail(nb);
  out.bias.cov = estimate.cov.bottomRightCorner(nb, nb);
  return out;
}

}  // namespace popcomp
