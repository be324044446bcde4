#pragma once

// File formats: CSV series and reports, JSON configs, JSON-lines records
// (gzip-compressed for run records).

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "popcomp/diagnostics.hpp"
#include "popcomp/ensemble.hpp"
#include "popcomp/series.hpp"
#include "popcomp/synthetic.hpp"

namespace popcomp::io {

/// Shortest decimal form that reads back to the same double.
std::string format_double(double v);

/// CSV with header `timestamp,rate`. Errors name the offending line.
PriceSeries parse_series_csv(std::istream& in, const std::string& source = "<stream>");
PriceSeries load_csv(const std::filesystem::path& path);
void save_csv(const PriceSeries& series, const std::filesystem::path& path);

/// Columns k,z,z_hat,S,sem
void write_summary_csv(const EnsembleSummary& summary, const std::filesystem::path& path);
EnsembleSummary read_summary_csv(const std::filesystem::path& path);

/// Columns k,l,l_hat,l_tilde,var,band
void write_report_csv(const ResidualReport& report, const std::filesystem::path& path);

/// One JSON object per line: {"k","r","z","w","noise","H"}.
void write_truth_jsonl(const std::vector<TruthRow>& truth, const std::filesystem::path& path);
std::vector<TruthRow> read_truth_jsonl(const std::filesystem::path& path);

/// Gzip-compressed JSON lines: a header object with run metadata followed
/// by one object per step.
void write_run_record(const RunRecord& record, const std::filesystem::path& path);
RunRecord read_run_record(const std::filesystem::path& path);

/// Per-step solver trace: {"k","j_iters","active_set","t_max_min"}.
void write_trace_jsonl(const RunRecord& record, const std::filesystem::path& path);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const nlohmann::json& j, const std::filesystem::path& path);

}  // namespace popcomp::io
