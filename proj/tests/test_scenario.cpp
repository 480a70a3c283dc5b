#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "doctest.h"

#include "affreal/csv.hpp"
#include "affreal/error.hpp"
#include "affreal/oracle.hpp"
#include "affreal/scenario.hpp"

using namespace affreal;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const fs::path kScenarios = AFFREAL_SCENARIO_DIR;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "affreal_test_scenario" / name;
  fs::remove_all(dir);
  return dir;
}

RunOptions opts_in(const fs::path& dir) {
  RunOptions o;
  o.out_dir = dir;
  return o;
}

ScenarioConfig scenario(const std::string& name) { return ScenarioConfig::load(kScenarios / (name + ".json")); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

ErrorKind config_failure(const std::string& text) {
  try {
    ScenarioConfig::parse(text);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected a config error");
  return ErrorKind::InvalidArgument;
}

}  // namespace

TEST_CASE("analyze examples") {
  const fs::path dir = scratch("analyze");
  const Outcome hjmm = run_analyze(scenario("hjmm-linear"), opts_in(dir / "hjmm"));
  CHECK(hjmm.exit_code == kExitOk);
  const json a = read_json(dir / "hjmm" / "analysis.json");
  CHECK(a["verdict"] == "CERTIFIED");
  CHECK(a["subspace"]["dim"] == 1);

  CHECK(run_analyze(scenario("cable"), opts_in(dir / "cable")).exit_code == kExitOk);
  CHECK(read_json(dir / "cable" / "analysis.json")["subspace"]["dim"] == 1);

  const Outcome gauss = run_analyze(scenario("control-gaussian"), opts_in(dir / "gauss"));
  CHECK(gauss.exit_code == kExitNegative);
  CHECK(gauss.summary.find("NOT_DETECTED") != std::string::npos);
  const json g = read_json(dir / "gauss" / "analysis.json");
  CHECK(g["verdict"] == "NOT_DETECTED");
  CHECK(g["a_sigma"]["cap"] == 50);

  CHECK(run_analyze(scenario("control-inverse-linear"), opts_in(dir / "inv")).exit_code == kExitNegative);

  const Outcome esc = run_analyze(scenario("control-sigma-escapes"), opts_in(dir / "esc"));
  CHECK(esc.exit_code == kExitNegative);
  CHECK(esc.summary.find("clause 3") != std::string::npos);
  const json e = read_json(dir / "esc" / "analysis.json");
  CHECK(e["clauses"][0]["pass"] == true);
  CHECK(e["clauses"][1]["pass"].is_null());
  CHECK(e["clauses"][2]["pass"] == false);
}

TEST_CASE("every bundled certified scenario analyzes, simulates and verifies") {
  for (const char* name : {"hjmm-levy", "transport-1d", "transport-mortality-2d", "cable", "cable-2d", "heat-disk",
                           "hermite", "laguerre", "term-structure-2", "deterministic"}) {
    CAPTURE(name);
    const fs::path dir = scratch(std::string("all_") + name);
    const ScenarioConfig cfg = scenario(name);
    CHECK(run_analyze(cfg, opts_in(dir)).exit_code == kExitOk);
    CHECK(run_simulate(cfg, opts_in(dir)).exit_code == kExitOk);
    const Outcome v = run_verify(cfg, opts_in(dir));
    CHECK_MESSAGE(v.exit_code == kExitOk, v.summary);
  }
}

TEST_CASE("simulate outputs re-parse and are deterministic per seed") {
  const fs::path dir = scratch("simulate");
  const ScenarioConfig cfg = scenario("cable-2d");
  REQUIRE(run_simulate(cfg, opts_in(dir / "a")).exit_code == kExitOk);
  REQUIRE(run_simulate(cfg, opts_in(dir / "b")).exit_code == kExitOk);
  for (const char* f : {"psi.csv", "Y.csv", "r.csv", "increments.csv", "realization.json"}) {
    CAPTURE(f);
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }

  std::ifstream psi_in(dir / "a" / "psi.csv");
  std::ifstream y_in(dir / "a" / "Y.csv");
  std::ifstream r_in(dir / "a" / "r.csv");
  std::ifstream inc_in(dir / "a" / "increments.csv");
  const GridPath psi = read_grid_path_csv(psi_in);
  const CoordinatePath Y = read_coordinate_path_csv(y_in);
  const GridPath r = read_grid_path_csv(r_in);
  const IncrementMatrix inc = read_increments_csv(inc_in);
  const json meta = read_json(dir / "a" / "realization.json");
  CHECK(meta["dim"] == 2);
  CHECK(Y.coords.cols() == 2);
  CHECK(inc.dimension() == 2);
  CHECK(inc.n_steps() == 200);
  CHECK(psi.values.rows() == 201);
  CHECK(r.values.rows() == psi.values.rows());
  CHECK(r.x_grid == psi.x_grid);

  // r - psi is spanned by sin(x), sin(2x) with coefficients Y.
  for (Eigen::Index n : {Eigen::Index{0}, Eigen::Index{100}, Eigen::Index{200}}) {
    for (std::size_t i = 0; i < r.x_grid.size(); i += 37) {
      const double x = r.x_grid[i];
      const double expect = psi.values(n, static_cast<Eigen::Index>(i)) + Y.coords(n, 0) * std::sin(x) +
                            Y.coords(n, 1) * std::sin(2.0 * x);
      CHECK(std::abs(r.values(n, static_cast<Eigen::Index>(i)) - expect) <= 1e-9);
    }
  }

  RunOptions other = opts_in(dir / "c");
  other.seed = 99;
  REQUIRE(run_simulate(cfg, other).exit_code == kExitOk);
  CHECK(slurp(dir / "a" / "Y.csv") != slurp(dir / "c" / "Y.csv"));
}

TEST_CASE("the abstract Cauchy problem gives r = psi") {
  const fs::path dir = scratch("cauchy");
  REQUIRE(run_simulate(scenario("deterministic"), opts_in(dir)).exit_code == kExitOk);
  CHECK(slurp(dir / "r.csv") == slurp(dir / "psi.csv"));
}

TEST_CASE("OU moments from the simulate workflow, independent of the worker count") {
  const fs::path dir = scratch("ou");
  RunOptions one = opts_in(dir / "one");
  RunOptions four = opts_in(dir / "four");
  four.jobs = 4;
  const ScenarioConfig cfg = scenario("ou");
  REQUIRE(run_simulate(cfg, one).exit_code == kExitOk);
  REQUIRE(run_simulate(cfg, four).exit_code == kExitOk);
  CHECK(slurp(dir / "one" / "Y_moments.csv") == slurp(dir / "four" / "Y_moments.csv"));

  std::ifstream in(dir / "one" / "Y_moments.csv");
  const csv::Table t = csv::read_table(in);
  REQUIRE(t.header == std::vector<std::string>{"t", "mean_Y1", "var_Y1"});
  const double n = 10000.0;
  for (const auto& row : t.rows) {
    for (double target : {0.5, 1.0}) {
      if (std::abs(row[0] - target) > 1e-12) continue;
      const double var = (1.0 - std::exp(-2.0 * target)) / 2.0;
      CHECK(std::abs(row[2] - var) <= 3.0 * var * std::sqrt(2.0 / (n - 1.0)));
      CHECK(std::abs(row[1]) <= 3.0 * std::sqrt(var / n));
    }
  }
}

TEST_CASE("verify examples") {
  const fs::path dir = scratch("verify");
  const Outcome ok = run_verify(scenario("hjmm-linear"), opts_in(dir / "ok"));
  CHECK_MESSAGE(ok.exit_code == kExitOk, ok.summary);
  const json m = read_json(dir / "ok" / "metrics.json");
  CHECK(m["pass"] == true);
  CHECK(m["levels"][0]["sup_error"].get<double>() <= 0.02 * m["h0_norm"].get<double>());
  CHECK(m["ratios"][0].get<double>() <= 0.7);
  CHECK(m["levels"][1]["max_foliation_distance"].get<double>() <
        m["levels"][0]["max_foliation_distance"].get<double>());

  const Outcome bad = run_verify(scenario("control-corrupted-b"), opts_in(dir / "bad"));
  CHECK(bad.exit_code == kExitVerify);
  CHECK(bad.summary.find("sup_error") != std::string::npos);
  CHECK(read_json(dir / "bad" / "metrics.json")["pass"] == false);

  CHECK(run_verify(scenario("deterministic"), opts_in(dir / "det")).exit_code == kExitOk);
  CHECK(run_verify(scenario("control-gaussian"), opts_in(dir / "neg")).exit_code == kExitBuild);
}

TEST_CASE("eigen examples") {
  const fs::path dir = scratch("eigen");
  auto table = [&](const EigenRequest& req, const std::string& sub) {
    REQUIRE(run_eigen(req, opts_in(dir / sub)).exit_code == kExitOk);
    std::ifstream in(dir / sub / "eigen.csv");
    return csv::read_text_table(in);
  };
  const auto cable = table({Cable{}, 5}, "cable");
  REQUIRE(cable.rows.size() == 5);
  for (int n = 1; n <= 5; ++n) CHECK(std::stod(cable.rows[static_cast<std::size_t>(n - 1)][1]) == n * n);

  EigenRequest disk{HeatDisk{}, 2};
  disk.max_p = 1;
  disk.max_q = 2;
  const auto d = table(disk, "disk");
  std::map<std::string, double> by_label;
  for (const auto& row : d.rows) by_label[row[0]] = std::stod(row[1]);
  CHECK(by_label.at("0-1-0") < by_label.at("0-2-0"));
  CHECK(by_label.at("1-1-0") < by_label.at("1-2-0"));
  CHECK(by_label.at("1-1-1") == by_label.at("1-1-0"));

  const auto herm = table({Hermite{1}, 3}, "hermite");
  REQUIRE(herm.rows.size() == 3);
  for (int n = 0; n < 3; ++n) CHECK(std::stod(herm.rows[static_cast<std::size_t>(n)][1]) == n);

  CHECK(run_eigen({Translation{}, 3}, opts_in(dir / "bad")).exit_code == kExitConfig);
}

TEST_CASE("config diagnostics name the line or the field") {
  try {
    ScenarioConfig::parse("{\n  \"name\": \"x\",\n  \"operator\": }\n");
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ParseError);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  const std::string base = R"J({"name": "x", "operator": {"type": "cable"}, "driver": {"wiener": 1},
                               "volatility": ["sin(3*x)"], "h0": "sin(x)")J";
  CHECK_NOTHROW(ScenarioConfig::parse(base + "}"));
  try {
    ScenarioConfig::parse(base + R"J(, "grid": {"n_x": 0}})J");
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConfigError);
    CHECK(std::string(e.what()).find("grid.n_x") != std::string::npos);
  }
  CHECK(config_failure(R"J({"operator": {"type": "cable"}})J") == ErrorKind::ConfigError);
  CHECK(config_failure(R"J({"name": "x", "operator": {"type": "wave"}, "driver": {"wiener": 1}})J") ==
        ErrorKind::ConfigError);
  CHECK(config_failure(R"J({"name": "x", "operator": {"type": "cable"}, "driver": {"wiener": 2},
                           "volatility": ["sin(x)"], "h0": "sin(x)"})J") == ErrorKind::ConfigError);
  CHECK(config_failure(R"J({"name": "x", "operator": {"type": "cable"}, "driver": {"wiener": 1},
                           "volatility": ["sin(3*x"], "h0": "sin(x)"})J") == ErrorKind::ConfigError);
  CHECK(config_failure(R"J({"name": "x", "operator": {"type": "hermite"}, "driver": {"wiener": 1},
                           "volatility": ["sin(x)"], "h0": "0"})J") == ErrorKind::ConfigError);
  CHECK(config_failure(R"J({"name": "x", "operator": {"type": "cable"}, "driver": {"wiener": 1},
                           "volatility": [{"csv": "missing.csv"}], "h0": "0"})J") == ErrorKind::ConfigError);
  CHECK(config_failure(R"J({"name": "x", "operator": {"type": "cable"}, "driver": {"components": [{}]},
                           "volatility": ["sin(x)"], "h0": "0"})J") == ErrorKind::ConfigError);
}

TEST_CASE("sampled and tabulated curves") {
  const fs::path dir = scratch("table");
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "h0.csv");
    out << "x,value\n";
    for (int i = 0; i <= 120; ++i) out << i * 0.1 << "," << std::exp(-0.5 * i * 0.1) << "\n";
  }
  {
    std::ofstream out(dir / "s.json");
    out << R"J({"name": "tab", "operator": {"type": "translation"}, "driver": {"wiener": 1},
               "volatility": ["exp(-x)"], "h0": {"csv": "h0.csv"},
               "grid": {"x_max": 12, "n_x": 600, "window": 10}, "time": {"horizon": 1, "n_t": 200}})J";
  }
  const ScenarioConfig cfg = ScenarioConfig::load(dir / "s.json");
  CHECK(run_simulate(cfg, opts_in(dir / "out")).exit_code == kExitOk);
  CHECK(run_verify(cfg, opts_in(dir / "out")).exit_code == kExitOk);
}

TEST_CASE("coordinate path CSV round trip") {
  CoordinatePath p;
  p.t_grid = {0.0, 0.1, 0.2};
  p.coords = Eigen::MatrixXd::Random(3, 2);
  std::stringstream ss;
  write_coordinate_path_csv(ss, p);
  const CoordinatePath q = read_coordinate_path_csv(ss);
  CHECK(q.t_grid == p.t_grid);
  CHECK(q.coords == p.coords);
}

TEST_CASE("output directory resolution") {
  CHECK(default_out_dir(std::string("given")) == fs::path("given"));
  ::setenv("AFFREAL_OUT", "from_env", 1);
  CHECK(default_out_dir(std::nullopt) == fs::path("from_env"));
  ::unsetenv("AFFREAL_OUT");
  CHECK(default_out_dir(std::nullopt) == fs::path("affreal_out"));
}
