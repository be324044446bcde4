#include "popcomp_tools/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "popcomp/diagnostics.hpp"
#include "popcomp/ensemble.hpp"
#include "popcomp/error.hpp"
#include "popcomp/io.hpp"
#include "popcomp/synthetic.hpp"

namespace popcomp::tools {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct SimulateArgs {
  std::string config;
  std::string out = "series.csv";
  std::string truth;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> length;
  std::optional<double> sigma;
  std::optional<double> bias;
};

struct InferArgs {
  std::string config;
  std::string series;
  std::string out;
  std::optional<std::size_t> runs;
  std::optional<std::size_t> subset_size;
  std::optional<int> memory;
  std::optional<std::size_t> horizon;
  std::optional<std::size_t> window;
  std::optional<std::string> bias;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  bool trace = false;
};

struct ReportArgs {
  std::string rundir;
  std::string out;
  std::size_t rolling = 100;
};

std::string run_file_name(std::size_t index, const char* suffix) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "run_%04zu%s", index, suffix);
  return buf;
}

int simulate(const SimulateArgs& a, std::ostream& out) {
  // Default planted types keep the outcome sequence mixing; many random
  // m = 2 triples lock into a one-sided trend.
  json j = {{"subset", {{"m", 2}, {"types", {{5, 6}, {7, 14}, {9, 10}}}}},
            {"weights", {0.5, 0.3, 0.2}},
            {"horizon", 10},
            {"length", 2000},
            {"r0", 1000.0},
            {"seed", 1}};
  if (!a.config.empty()) {
    const auto cfg = io::read_json(a.config);
    if (cfg.contains("memory") && !cfg.contains("subset")) j.erase("subset");
    j.update(cfg);
  }
  if (a.seed) j["seed"] = *a.seed;
  if (a.length) j["length"] = *a.length;
  if (a.sigma) j["sigma_z"] = *a.sigma;
  if (a.bias) j["bias"] = *a.bias;
  const auto spec = j.get<SynthSpec>();
  const auto result = generate_synthetic(spec);

  io::save_csv(result.series, a.out);
  if (!a.truth.empty()) io::write_truth_jsonl(result.truth, a.truth);

  json planted = spec.planted;
  out << "wrote " << result.series.size() << " prices to " << a.out << '\n';
  out << "planted types " << planted["types"].dump() << " weights "
      << json(spec.weights).dump() << " sigma_z " << result.sigma_z << '\n';
  for (const auto& w : result.warnings) out << "warning: " << w << '\n';
  return kExitOk;
}

int infer(const InferArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  if (!a.config.empty()) cfg = io::read_json(a.config).get<RunConfig>();
  if (a.runs) cfg.runs = *a.runs;
  if (a.subset_size) cfg.subset_size = *a.subset_size;
  if (a.memory) cfg.memory = *a.memory;
  if (a.horizon) cfg.horizon = *a.horizon;
  if (a.window) cfg.window = *a.window;
  if (a.seed) cfg.seed = *a.seed;
  if (a.threads) cfg.threads = *a.threads;
  if (a.bias) cfg.bias = *a.bias == "none" ? BiasSpec::none() : BiasSpec::measurement();
  if (cfg.runs == 0) {
    err << "error: --runs must be at least 1\n";
    return kExitUsage;
  }
  cfg.validate();

  const auto series = io::load_csv(a.series);
  const auto result = orchestrate(series, cfg);

  const fs::path dir(a.out);
  fs::create_directories(dir / "runs");
  io::write_summary_csv(result.summary, dir / "summary.csv");
  io::save_csv(series, dir / "series.csv");
  for (const auto& rec : result.records) {
    io::write_run_record(rec, dir / "runs" / run_file_name(rec.run_index, ".jsonl.gz"));
    if (a.trace) io::write_trace_jsonl(rec, dir / "runs" / run_file_name(rec.run_index, ".trace.jsonl"));
  }
  json meta{{"config", cfg},
            {"series_length", series.size()},
            {"runs_total", result.summary.runs_total},
            {"runs_used", result.summary.runs_used},
            {"flagged_runs", result.summary.flagged_runs}};
  io::write_json(meta, dir / "meta.json");

  out << "runs " << result.summary.runs_used << "/" << result.summary.runs_total
      << " used, " << result.summary.rows.size() << " predictions written to "
      << (dir / "summary.csv").string() << '\n';
  for (auto idx : result.summary.flagged_runs) {
    const auto& rec = result.records[idx];
    out << "flagged run " << idx << ": " << rec.error << '\n';
  }
  return kExitOk;
}

int report(const ReportArgs& a, std::ostream& out) {
  const fs::path dir(a.rundir);
  const auto summary_rows = io::read_summary_csv(dir / "summary.csv");
  const auto series = io::load_csv(dir / "series.csv");
  EnsembleSummary summary = summary_rows;
  if (fs::exists(dir / "meta.json")) {
    const auto meta = io::read_json(dir / "meta.json");
    summary.runs_total = meta.value("runs_total", std::size_t{0});
    summary.runs_used = meta.value("runs_used", std::size_t{0});
    summary.flagged_runs = meta.value("flagged_runs", std::vector<std::size_t>{});
  }
  const auto rep = build_report(summary, series, a.rolling);

  const fs::path csv = a.out.empty() ? dir / "report.csv" : fs::path(a.out);
  io::write_report_csv(rep, csv);
  fs::path json_path = csv;
  json_path.replace_extension(".json");
  json j{{"coverage", rep.coverage},
         {"directional_accuracy", rep.directional_accuracy},
         {"flagged_runs", summary.flagged_runs},
         {"flagged_steps", rep.flagged_steps},
         {"rows", rep.rows.size()}};
  io::write_json(j, json_path);

  const auto& cov = rep.coverage;
  out << "residuals " << cov.count << ", flagged steps " << rep.flagged_steps
      << ", flagged runs " << summary.flagged_runs.size() << '\n';
  out << std::setw(6) << "kappa" << std::setw(12) << "outside" << std::setw(12) << "bound"
      << "  ok\n";
  for (const auto& lv : cov.levels) {
    out << std::setw(6) << lv.kappa << std::setw(12) << std::setprecision(4) << lv.fraction_outside
        << std::setw(12) << lv.chebyshev_bound << "  " << (lv.pass ? "yes" : "NO") << '\n';
  }
  out << "mean residual " << cov.mean_residual << " (se " << cov.mean_residual_se << ")\n";
  out << "directional accuracy " << rep.directional_accuracy << '\n';

  const bool ok = summary.flagged_runs.empty() && cov.all_pass();
  return ok ? kExitOk : kExitCheckFailed;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trader-type composition inference from price series"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Generate a synthetic price series");
  s->add_option("--config", sim.config, "Generator JSON");
  s->add_option("--out", sim.out, "Output series CSV");
  s->add_option("--truth", sim.truth, "Output ground truth JSONL");
  s->add_option("--seed", sim.seed);
  s->add_option("--length", sim.length);
  s->add_option("--sigma", sim.sigma, "Measurement noise std");
  s->add_option("--bias", sim.bias, "Constant additive bias");

  InferArgs inf;
  auto* i = app.add_subcommand("infer", "Run the ensemble filter on a series");
  i->add_option("--config", inf.config, "Run configuration JSON");
  i->add_option("--series", inf.series, "Input series CSV")->required();
  i->add_option("--out", inf.out, "Output run directory")->required();
  i->add_option("--runs", inf.runs, "Ensemble size");
  i->add_option("--subset-size", inf.subset_size, "Agent types per run");
  i->add_option("--memory", inf.memory, "Memory length m");
  i->add_option("--horizon", inf.horizon, "Scoring horizon T");
  i->add_option("--window", inf.window, "Noise estimation window W");
  i->add_option("--bias", inf.bias)->check(CLI::IsMember({"none", "measurement"}));
  i->add_option("--seed", inf.seed);
  i->add_option("--threads", inf.threads);
  i->add_flag("--trace", inf.trace, "Write per-step solver traces");

  ReportArgs rep;
  auto* r = app.add_subcommand("report", "Residual diagnostics for a run directory");
  r->add_option("--rundir", rep.rundir, "Run directory")->required();
  r->add_option("--out", rep.out, "Output report CSV");
  r->add_option("--rolling", rep.rolling, "Rolling accuracy window");

  std::vector<const char*> argv{"popcomp"};
  argv.reserve(args.size() + 1);
  for (std::size_t a = 1; a < args.size(); ++a) argv.push_back(args[a].c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*s) return simulate(sim, out);
    if (*i) return infer(inf, out, err);
    if (*r) return report(rep, out);
  } catch (const InputError& e) {
    err << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitUsage;
}

}  // namespace popcomp::tools
