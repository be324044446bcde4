#include "popcomp/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "popcomp/error.hpp"

namespace popcomp::io {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  return in;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s == "nan") {
    out = std::nan("");
    return true;
  }
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last && first != last;
}

std::size_t parse_index(const std::string& s, const std::string& where) {
  std::size_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) {
    throw InputError(where + ": bad integer '" + s + "'");
  }
  return v;
}

json vector_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

// ---------------------------------------------------------------------------
// Series CSV

PriceSeries parse_series_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw InputError(source + ": empty file");
  strip_cr(line);
  if (line != "timestamp,rate") {
    throw InputError(source + ":1: expected header 'timestamp,rate', got '" + line + "'");
  }
  PriceSeries series;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto fields = split(line, ',');
    if (fields.size() != 2) throw InputError(where + ": expected 2 fields");
    double rate = 0.0;
    if (!parse_double(fields[1], rate) || !std::isfinite(rate)) {
      throw InputError(where + ": rate '" + fields[1] + "' is not a number");
    }
    if (rate <= 0.0) throw InputError(where + ": rate " + fields[1] + " is not positive");
    series.timestamps.push_back(fields[0]);
    series.rates.push_back(rate);
  }
  if (series.rates.empty()) throw InputError(source + ": no data rows");
  return series;
}

PriceSeries load_csv(const fs::path& path) {
  auto in = open_in(path);
  return parse_series_csv(in, path.string());
}

void save_csv(const PriceSeries& series, const fs::path& path) {
  series.validate();
  auto out = open_out(path);
  out << "timestamp,rate\n";
  for (std::size_t i = 0; i < series.rates.size(); ++i) {
    if (!series.timestamps.empty()) out << series.timestamps[i];
    out << ',' << format_double(series.rates[i]) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Summary and report CSV

void write_summary_csv(const EnsembleSummary& summary, const fs::path& path) {
  auto out = open_out(path);
  out << "k,z,z_hat,S,sem\n";
  for (const auto& r : summary.rows) {
    out << r.k << ',' << format_double(r.z) << ',' << format_double(r.z_hat) << ','
        << format_double(r.S) << ',' << format_double(r.sem) << '\n';
  }
}

EnsembleSummary read_summary_csv(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw InputError(path.string() + ": empty file");
  strip_cr(line);
  if (line != "k,z,z_hat,S,sem") throw InputError(path.string() + ":1: unexpected header");
  EnsembleSummary summary;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto f = split(line, ',');
    if (f.size() != 5) throw InputError(where + ": expected 5 fields");
    SummaryRow row;
    row.k = parse_index(f[0], where);
    if (!parse_double(f[1], row.z) || !parse_double(f[2], row.z_hat) ||
        !parse_double(f[3], row.S) || !parse_double(f[4], row.sem)) {
      throw InputError(where + ": malformed number");
    }
    summary.rows.push_back(row);
  }
  return summary;
}

void write_report_csv(const ResidualReport& report, const fs::path& path) {
  auto out = open_out(path);
  out << "k,l,l_hat,l_tilde,var,band\n";
  for (const auto& r : report.rows) {
    out << r.k << ',' << format_double(r.l) << ',' << format_double(r.l_hat) << ','
        << format_double(r.l_tilde) << ',' << format_double(r.var) << ','
        << format_double(r.band) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Truth log

void write_truth_jsonl(const std::vector<TruthRow>& truth, const fs::path& path) {
  auto out = open_out(path);
  for (const auto& t : truth) {
    json row{{"k", t.k}, {"r", t.r}, {"z", t.z}, {"w", t.w}, {"noise", t.noise}};
    row["H"] = t.H.size() ? json(std::vector<double>(t.H.data(), t.H.data() + t.H.size()))
                          : json(nullptr);
    out << row.dump() << '\n';
  }
}

std::vector<TruthRow> read_truth_jsonl(const fs::path& path) {
  auto in = open_in(path);
  std::vector<TruthRow> truth;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    TruthRow t;
    t.k = j.at("k").get<std::size_t>();
    t.r = j.at("r").get<double>();
    t.z = j.at("z").get<double>();
    t.w = j.at("w").get<int>();
    t.noise = j.value("noise", 0.0);
    if (!j.at("H").is_null()) t.H = vector_from_json(j.at("H")).transpose();
    truth.push_back(std::move(t));
  }
  return truth;
}

// ---------------------------------------------------------------------------
// Run records

namespace {

class GzWriter {
 public:
  explicit GzWriter(const fs::path& path) : file_(gzopen(path.string().c_str(), "wb6")) {
    if (!file_) throw InputError("cannot write " + path.string());
  }
  ~GzWriter() {
    if (file_) gzclose(file_);
  }
  GzWriter(const GzWriter&) = delete;
  GzWriter& operator=(const GzWriter&) = delete;

  void line(const std::string& s) {
    const std::string data = s + '\n';
    if (gzwrite(file_, data.data(), static_cast<unsigned>(data.size())) !=
        static_cast<int>(data.size())) {
      throw InputError("gzip write failed");
    }
  }

 private:
  gzFile file_;
};

std::vector<std::string> read_gz_lines(const fs::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f) throw InputError("cannot read " + path.string());
  std::string data;
  char buf[1 << 15];
  int n = 0;
  while ((n = gzread(f, buf, sizeof(buf))) > 0) data.append(buf, static_cast<std::size_t>(n));
  gzclose(f);
  if (n < 0) throw InputError(path.string() + ": corrupt gzip stream");
  std::vector<std::string> lines;
  std::istringstream ss(data);
  std::string line;
  while (std::getline(ss, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace

void write_run_record(const RunRecord& record, const fs::path& path) {
  GzWriter out(path);
  json header{{"run", record.run_index},
              {"seed", record.seed},
              {"subset", record.subset},
              {"flagged", record.flagged},
              {"error", record.error},
              {"rank_deficient_steps", record.rank_deficient_steps},
              {"steps", record.steps.size()}};
  out.line(header.dump());
  for (const auto& s : record.steps) {
    json row{{"k", s.k},
             {"z", s.z},
             {"z_hat", s.z_hat},
             {"nu", s.nu},
             {"S", s.S},
             {"x", vector_json(s.x)},
             {"bias", vector_json(s.bias)},
             {"active", s.active_set.size()},
             {"iters", s.iterations},
             {"t_max_min", s.t_max_min}};
    out.line(row.dump());
  }
}

RunRecord read_run_record(const fs::path& path) {
  const auto lines = read_gz_lines(path);
  if (lines.empty()) throw InputError(path.string() + ": empty run record");
  RunRecord r;
  const json header = json::parse(lines.front());
  r.run_index = header.at("run").get<std::size_t>();
  r.seed = header.at("seed").get<std::uint64_t>();
  r.subset = header.at("subset").get<AgentSubset>();
  r.flagged = header.at("flagged").get<bool>();
  r.error = header.value("error", std::string{});
  r.rank_deficient_steps = header.value("rank_deficient_steps", std::size_t{0});
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const json j = json::parse(lines[i]);
    StepRecord s;
    s.k = j.at("k").get<std::size_t>();
    s.z = j.at("z").get<double>();
    s.z_hat = j.at("z_hat").get<double>();
    s.nu = j.at("nu").get<double>();
    s.S = j.at("S").get<double>();
    s.x = vector_from_json(j.at("x"));
    s.bias = vector_from_json(j.at("bias"));
    s.iterations = j.at("iters").get<int>();
    s.t_max_min = j.at("t_max_min").get<double>();
    r.steps.push_back(std::move(s));
  }
  return r;
}

void write_trace_jsonl(const RunRecord& record, const fs::path& path) {
  auto out = open_out(path);
  for (const auto& s : record.steps) {
    out << json{{"k", s.k},
                {"j_iters", s.iterations},
                {"active_set", s.active_set},
                {"t_max_min", s.t_max_min}}
               .dump()
        << '\n';
  }
}

json read_json(const fs::path& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const fs::path& path) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

}  // namespace popcomp::io
