#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "popcomp/error.hpp"
#include "popcomp/io.hpp"

using namespace popcomp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const char* base = std::getenv("POPCOMP_TEST_TMP");
  fs::path dir = base != nullptr ? fs::path(base) : fs::temp_directory_path() / "popcomp_test";
  dir /= "io";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string error_of(const std::string& text) {
  std::istringstream in(text);
  try {
    io::parse_series_csv(in, "f.csv");
  } catch (const InputError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("series parsing examples") {
  std::istringstream in("timestamp,rate\r\n2020-01-01,1.5\r\n2020-01-02,2.0\r\n");
  const auto s = io::parse_series_csv(in);
  REQUIRE(s.size() == 2);
  CHECK(s.increments()[1] == 0.5);
  CHECK(s.timestamps[1] == "2020-01-02");

  CHECK(error_of("timestamp,rate\na,1\nb,-3\n").find("f.csv:3") != std::string::npos);
  CHECK(error_of("timestamp,rate\na,1\nb,-3\n").find("not positive") != std::string::npos);
  CHECK(error_of("timestamp,rate\na,x\n").find("not a number") != std::string::npos);
  CHECK(error_of("timestamp,rate\na,1,2\n").find("expected 2 fields") != std::string::npos);
  CHECK(error_of("").find("empty") != std::string::npos);
  CHECK(error_of("timestamp,rate\n").find("no data rows") != std::string::npos);
  CHECK_FALSE(error_of("time,price\na,1\n").empty());
  CHECK_THROWS_AS(io::load_csv(scratch("missing.csv")), InputError);
}

TEST_CASE("format_double reads back exactly") {
  oracle::Rng rng(71);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 10000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    CHECK(std::stod(io::format_double(v)) == v);
  }
  CHECK(io::format_double(0.5) == "0.5");
  CHECK(io::format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
}

TEST_CASE("series round trip is byte identical") {
  oracle::Rng rng(72);
  std::lognormal_distribution<double> ln(0.0, 1.0);
  PriceSeries s;
  for (int i = 0; i < 10000; ++i) {
    s.rates.push_back(ln(rng));
    s.timestamps.push_back("t" + std::to_string(i));
  }
  const auto a = scratch("a.csv");
  const auto b = scratch("b.csv");
  io::save_csv(s, a);
  const auto back = io::load_csv(a);
  CHECK(back.rates == s.rates);
  CHECK(back.timestamps == s.timestamps);
  io::save_csv(back, b);
  CHECK(slurp(a) == slurp(b));

  PriceSeries bad;
  bad.rates = {1.0, 0.0};
  CHECK_THROWS_AS(io::save_csv(bad, a), InputError);
}

TEST_CASE("summary and truth round trips") {
  EnsembleSummary sum;
  sum.rows = {{13, 0.25, -0.1, 0.3, 0.01}, {14, -1.0 / 3.0, 0.2, 1e-9, 0.0}};
  const auto p = scratch("summary.csv");
  io::write_summary_csv(sum, p);
  const auto back = io::read_summary_csv(p);
  REQUIRE(back.rows.size() == 2);
  CHECK(back.rows[1].k == 14);
  CHECK(back.rows[1].z == -1.0 / 3.0);
  CHECK(back.rows[0].sem == 0.01);

  std::vector<TruthRow> truth(2);
  truth[0].k = 1;
  truth[0].r = 100.0;
  truth[0].z = 1.0;
  truth[0].w = -1;
  truth[1].k = 2;
  truth[1].r = 99.5;
  truth[1].z = -0.5;
  truth[1].w = 1;
  truth[1].noise = 0.1;
  truth[1].H = Eigen::RowVectorXd::Constant(3, -1.0);
  const auto t = scratch("truth.jsonl");
  io::write_truth_jsonl(truth, t);
  const auto tb = io::read_truth_jsonl(t);
  REQUIRE(tb.size() == 2);
  CHECK(tb[0].H.size() == 0);
  CHECK(tb[1].H == truth[1].H);
  CHECK(tb[1].noise == 0.1);
}

TEST_CASE("run record round trip") {
  RunRecord rec;
  rec.run_index = 3;
  rec.seed = 0xdeadbeefcafeULL;
  rec.subset.memory = 2;
  rec.subset.types = {AgentType::make(2, 1, 3), AgentType::make(2, 4, 9)};
  rec.rank_deficient_steps = 1;
  for (std::size_t k = 13; k < 20; ++k) {
    StepRecord s;
    s.k = k;
    s.z = 0.1 * static_cast<double>(k);
    s.z_hat = -0.2;
    s.nu = s.z - s.z_hat;
    s.S = 0.7;
    s.x = Eigen::Vector2d(0.25, 0.0);
    s.bias = Eigen::VectorXd::Constant(1, 0.01);
    s.active_set = {1};
    s.iterations = 2;
    s.t_max_min = 0.5;
    rec.steps.push_back(s);
  }
  const auto p = scratch("run.jsonl.gz");
  io::write_run_record(rec, p);
  const auto raw = slurp(p);
  REQUIRE(raw.size() > 2);
  CHECK(static_cast<unsigned char>(raw[0]) == 0x1f);
  CHECK(static_cast<unsigned char>(raw[1]) == 0x8b);
  const auto back = io::read_run_record(p);
  CHECK(back.run_index == 3);
  CHECK(back.seed == rec.seed);
  CHECK(back.subset.types == rec.subset.types);
  CHECK(back.rank_deficient_steps == 1);
  REQUIRE(back.steps.size() == rec.steps.size());
  for (std::size_t i = 0; i < back.steps.size(); ++i) {
    CHECK(back.steps[i].k == rec.steps[i].k);
    CHECK(back.steps[i].z == rec.steps[i].z);
    CHECK(back.steps[i].x == rec.steps[i].x);
    CHECK(back.steps[i].bias == rec.steps[i].bias);
    CHECK(back.steps[i].t_max_min == 0.5);
  }
}

TEST_CASE("json helpers") {
  const auto p = scratch("cfg.json");
  io::write_json(nlohmann::json{{"runs", 5}}, p);
  CHECK(io::read_json(p).at("runs") == 5);
  std::ofstream(scratch("bad.json")) << "{runs: }";
  CHECK_THROWS_AS(io::read_json(scratch("bad.json")), InputError);
}
