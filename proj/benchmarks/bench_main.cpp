#include <benchmark/benchmark.h>

#include <random>

#include "popcomp/constrained_kf.hpp"
#include "popcomp/ensemble.hpp"
#include "popcomp/mg_model.hpp"
#include "popcomp/synthetic.hpp"

using namespace popcomp;

namespace {

void BM_ConstrainedStep(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 1.0);
  LinearModel model;
  model.F = Eigen::MatrixXd::Identity(n, n);
  model.Q = 1e-3 * Eigen::MatrixXd::Identity(n, n);
  model.H = Eigen::MatrixXd::NullaryExpr(1, n, [&] { return nd(rng) > 0 ? 1.0 : -1.0; });
  model.R = Eigen::MatrixXd::Identity(1, 1);
  const auto constraints = ConstraintSet::nonnegative(n, n);
  GaussianEstimate prior{Eigen::VectorXd::Constant(n, 0.05), Eigen::MatrixXd::Identity(n, n)};
  const Eigen::VectorXd z = Eigen::VectorXd::Constant(1, -3.0);
  for (auto _ : state) {
    auto step = constrained_step(prior, z, model, constraints, {});
    benchmark::DoNotOptimize(step.posterior.mean.data());
  }
}
BENCHMARK(BM_ConstrainedStep)->Arg(5)->Arg(20)->Arg(50);

void BM_DecisionRow(benchmark::State& state) {
  const int memory = static_cast<int>(state.range(0));
  const auto types = sample_agent_subset(memory, 50, 3);
  OutcomeTape tape(memory, 10);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 40; ++i) tape.push((rng() & 1U) ? 1 : -1);
  for (auto _ : state) {
    auto row = tape.decision_row(types);
    benchmark::DoNotOptimize(row.data());
  }
}
BENCHMARK(BM_DecisionRow)->Arg(2)->Arg(5);

void BM_RunSingle(benchmark::State& state) {
  SynthSpec spec;
  spec.planted.memory = 2;
  spec.planted.types = {AgentType::make(2, 5, 6), AgentType::make(2, 7, 14),
                        AgentType::make(2, 9, 10)};
  spec.weights = {0.5, 0.3, 0.2};
  spec.length = 2000;
  const auto series = generate_synthetic(spec).series;
  RunConfig cfg;
  cfg.memory = 4;
  cfg.subset_size = static_cast<std::size_t>(state.range(0));
  const auto subset = sample_agent_subset(cfg.memory, cfg.subset_size, 5);
  for (auto _ : state) {
    auto rec = run_single(series, subset, cfg, 5);
    benchmark::DoNotOptimize(rec.steps.data());
  }
}
BENCHMARK(BM_RunSingle)->Arg(5)->Arg(20)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
