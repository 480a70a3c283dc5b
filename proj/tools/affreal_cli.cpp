#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "affreal/error.hpp"
#include "affreal/scenario.hpp"

namespace {

affreal::OperatorSpec operator_from_flags(const std::string& name, double tau, double lambda_c, double a, int d,
                                          double kappa, double speed, const std::string& geometry) {
  using namespace affreal;
  if (name == "translation") return Translation{};
  if (name == "transport") {
    return Transport{geometry == "mortality_wedge" ? TransportGeometry::MortalityWedge : TransportGeometry::HalfLine,
                     speed};
  }
  if (name == "cable") return Cable{tau, lambda_c};
  if (name == "heatdisk" || name == "heat_disk") return HeatDisk{a};
  if (name == "hermite") return Hermite{d};
  if (name == "laguerre") return Laguerre{d};
  if (name == "term_structure_2" || name == "ts2") return TermStructure2{kappa};
  throw Error(ErrorKind::ConfigError, "unknown operator '" + name + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Affine realizations of Levy-driven SPDEs: analyze, simulate, verify, eigen"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> paths;
  int jobs = 1;
  int refine = 1;

  auto common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", config, "Scenario JSON file");
    if (needs_config) opt->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "Output directory (default: $AFFREAL_OUT or ./affreal_out)");
  };

  auto* analyze = app.add_subcommand("analyze", "Detect A_sigma and check the three realization clauses");
  common(analyze, true);

  auto* simulate = app.add_subcommand("simulate", "Write psi, Y and r = psi + Y for the scenario");
  common(simulate, true);
  simulate->add_option("--seed", seed, "Base seed (overrides the config)");
  simulate->add_option("--paths", paths, "Number of Monte Carlo paths")->check(CLI::PositiveNumber);
  simulate->add_option("--jobs", jobs, "Worker threads for Monte Carlo paths")->check(CLI::PositiveNumber);

  auto* verify = app.add_subcommand("verify", "Compare the realization with the full-grid oracle");
  common(verify, true);
  verify->add_option("--seed", seed, "Base seed (overrides the config)");
  verify->add_option("--refine", refine, "Number of simultaneous (dx, dt) halvings")->check(CLI::PositiveNumber);

  std::string op_name;
  affreal::EigenRequest eig;
  double tau = 1.0, lambda_c = 1.0, a = 1.0, kappa = 1.0, speed = 1.0;
  int d = 1;
  std::string geometry = "half_line";
  std::optional<int> max_p, max_q;
  auto* eigen = app.add_subcommand("eigen", "Tabulate the eigensystem of a catalog operator");
  eigen->add_option("--out", out, "Output directory (default: $AFFREAL_OUT or ./affreal_out)");
  eigen->add_option("--operator", op_name, "cable | heatdisk | hermite | laguerre | ts2 | translation | transport")
      ->required();
  eigen->add_option("--count", eig.count, "Number of eigenpairs (see README for the per-operator meaning)")
      ->check(CLI::PositiveNumber);
  eigen->add_option("--samples", eig.samples, "Sample points per eigenfunction")->check(CLI::PositiveNumber);
  eigen->add_option("--max-p", max_p, "Heat disk: largest angular index p");
  eigen->add_option("--max-q", max_q, "Heat disk: largest radial index q");
  eigen->add_option("--tau", tau);
  eigen->add_option("--lambda", lambda_c);
  eigen->add_option("--a", a);
  eigen->add_option("--d", d);
  eigen->add_option("--kappa", kappa);
  eigen->add_option("--speed", speed);
  eigen->add_option("--geometry", geometry);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : affreal::kExitConfig;
  }

  affreal::RunOptions opts;
  opts.out_dir = affreal::default_out_dir(out);
  opts.seed = seed;
  opts.paths = paths;
  opts.jobs = jobs;
  opts.refine = refine;

  affreal::Outcome outcome;
  try {
    if (eigen->parsed()) {
      eig.op = operator_from_flags(op_name, tau, lambda_c, a, d, kappa, speed, geometry);
      eig.max_p = max_p;
      eig.max_q = max_q;
      outcome = affreal::run_eigen(eig, opts);
    } else {
      const auto cfg = affreal::ScenarioConfig::load(config);
      if (analyze->parsed()) outcome = affreal::run_analyze(cfg, opts);
      if (simulate->parsed()) outcome = affreal::run_simulate(cfg, opts);
      if (verify->parsed()) outcome = affreal::run_verify(cfg, opts);
    }
  } catch (const affreal::Error& e) {
    outcome = {affreal::kExitConfig, e.what()};
  }
  (outcome.exit_code == 0 ? std::cout : std::cerr) << outcome.summary << "\n";
  if (outcome.exit_code == 0) std::cout << "output: " << opts.out_dir.string() << "\n";
  return outcome.exit_code;
}
