#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace affreal {

struct Atom {
  double size = 0.0;
  double prob = 0.0;
};

/// Finitely supported jump-size distribution.
struct AtomLaw {
  std::vector<Atom> atoms;
};

/// Two-sided exponential (Kou) jump sizes: with probability p_up the size is
/// Exp(rate_up), otherwise minus Exp(rate_down).
struct TwoSidedExpLaw {
  double p_up = 0.5;
  double rate_up = 1.0;
  double rate_down = 1.0;
};

using JumpLaw = std::variant<AtomLaw, TwoSidedExpLaw>;

/// Unvalidated description of one driver component, as read from a config.
struct RawLevyComponent {
  double brownian_vol = 0.0;
  double jump_intensity = 0.0;
  JumpLaw jump_law = AtomLaw{};
};

/// Validated component of a compensated Levy driver. Moments of the jump law
/// are cached at validation time.
struct LevyComponent {
  double brownian_vol = 0.0;
  double jump_intensity = 0.0;
  JumpLaw jump_law;
  double mean_jump = 0.0;
  double second_moment = 0.0;

  /// jump_intensity * E[size], subtracted per unit time so the component is a martingale.
  double compensation() const { return jump_intensity * mean_jump; }
  double variance_rate() const {
    return brownian_vol * brownian_vol + jump_intensity * second_moment;
  }
  bool pure_brownian() const { return jump_intensity == 0.0; }
};

/// R^m-valued Levy process whose components are independent, nontrivial,
/// square-integrable martingales.
class LevySpec {
 public:
  LevySpec() = default;
  explicit LevySpec(std::vector<LevyComponent> components)
      : components_(std::move(components)) {}

  std::size_t dimension() const { return components_.size(); }
  const std::vector<LevyComponent>& components() const { return components_; }
  const LevyComponent& operator[](std::size_t k) const { return components_[k]; }
  bool pure_brownian() const;

 private:
  std::vector<LevyComponent> components_;
};

LevySpec make_levy_spec(std::span<const RawLevyComponent> raw);
LevySpec wiener_spec(std::size_t m, double vol = 1.0);

struct IncrementMatrix {
  double dt = 0.0;
  Eigen::MatrixXd values;  // n_steps x m
  std::uint64_t seed = 0;

  Eigen::Index n_steps() const { return values.rows(); }
  Eigen::Index dimension() const { return values.cols(); }
};

/// Increments of the driver over n_steps steps of size dt. Component k draws
/// from its own generator stream derived from (seed, k), so results are
/// reproducible and independent of the number of components sampled.
IncrementMatrix sample_increments(const LevySpec& spec, double dt, int n_steps,
                                  std::uint64_t seed);

/// Sums consecutive groups of `factor` rows: the increments of the same
/// driving path on a grid `factor` times coarser.
IncrementMatrix aggregate_increments(const IncrementMatrix& fine, int factor);

/// Seed of path `path` in a Monte Carlo run with base seed `base`.
std::uint64_t path_seed(std::uint64_t base, std::uint64_t path);

/// Cumulant generating function Psi(z) = log E[exp(<z, X_1>)].
double cumulant(const LevySpec& spec, std::span<const double> z);
/// d Psi / d z_k evaluated at z_k (components are independent).
double cumulant_derivative(const LevySpec& spec, std::size_t k, double z_k);

/// CSV with header `t,dX1,...,dXm`; t is the right end of each step, so the
/// first t equals dt.
void write_increments_csv(std::ostream& out, const IncrementMatrix& inc);
IncrementMatrix read_increments_csv(std::istream& in);

}  // namespace affreal
