#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "affreal/realization.hpp"

namespace affreal {

/// Stable process exit codes of the workflows.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitNegative = 3,
  kExitBuild = 4,
  kExitVerify = 5,
};

/// Parsed and validated scenario. The JSON layout is documented in
/// scenarios/schema.json; relative file references resolve against the
/// directory of the config file.
class ScenarioConfig {
 public:
  struct Impl;

  ScenarioConfig();
  ~ScenarioConfig();
  ScenarioConfig(ScenarioConfig&&) noexcept;
  ScenarioConfig& operator=(ScenarioConfig&&) noexcept;

  const std::string& name() const;
  const OperatorSpec& op() const;
  const Impl& impl() const { return *impl_; }

  /// Throws ConfigError naming the offending field, or ParseError with the
  /// line and column of malformed JSON.
  static ScenarioConfig parse(std::string_view json_text,
                              const std::filesystem::path& base_dir = {});
  static ScenarioConfig load(const std::filesystem::path& path);

 private:
  std::unique_ptr<Impl> impl_;
};

/// The scenario's functions realized on its grid (refined `factor` times in
/// space and time) together with the certified realization.
struct PreparedScenario {
  Discretization disc;
  std::vector<VolSpec> sigma;
  DriftSpec alpha;
  Function h0;
  int n_t = 0;
  double dt = 0.0;
  Realization realization;
};

/// Throws the builder's error (NotQuasiExponential, NotInvariant,
/// SigmaEscapesV, DriftConditionFails, ...) when no realization is certified.
PreparedScenario prepare_scenario(const ScenarioConfig& cfg, int factor = 1);

struct RunOptions {
  std::filesystem::path out_dir = "affreal_out";
  std::optional<std::uint64_t> seed;
  std::optional<int> paths;
  int jobs = 1;
  /// Number of simultaneous (dx, dt) halvings in verify.
  int refine = 1;
};

struct Outcome {
  int exit_code = kExitOk;
  std::string summary;
};

/// Output directory: the explicit value if given, else $AFFREAL_OUT, else
/// ./affreal_out.
std::filesystem::path default_out_dir(const std::optional<std::string>& explicit_dir);

/// A_sigma detection and the three realization clauses; writes analysis.json.
/// Exit 0 when certified, 3 with the failing clause or NOT_DETECTED otherwise.
Outcome run_analyze(const ScenarioConfig& cfg, const RunOptions& opts);

/// psi.csv, Y.csv, r.csv, increments.csv and realization.json for the first
/// path; Y_moments.csv with per-time means and variances when paths > 1.
Outcome run_simulate(const ScenarioConfig& cfg, const RunOptions& opts);

/// Realization against the full-grid oracle on the same increments, at the
/// configured grid and after each halving; writes metrics.json. Exit 5 when
/// the error bound or the refinement ratio fails.
Outcome run_verify(const ScenarioConfig& cfg, const RunOptions& opts);

struct EigenRequest {
  OperatorSpec op;
  int count = 5;
  /// Heat disk only: p <= max_p, q <= max_q (defaults from count).
  std::optional<int> max_p;
  std::optional<int> max_q;
  int samples = 101;
};

/// eigen.csv: index, eigenvalue, generator eigenvalue, then the eigenfunction
/// sampled along the domain (the ray phi = 0 for the disk, the first axis
/// for Hermite and Laguerre).
Outcome run_eigen(const EigenRequest& req, const RunOptions& opts);

/// Parses an operator object such as {"type": "cable", "tau": 1}.
OperatorSpec parse_operator_json(std::string_view json_text);

/// Time series of V-coordinates: header `t,Y1..Yd`.
void write_coordinate_path_csv(std::ostream& out, const CoordinatePath& path);
CoordinatePath read_coordinate_path_csv(std::istream& in);

}  // namespace affreal
