#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "affreal/discretization.hpp"
#include "affreal/expr.hpp"
#include "affreal/function.hpp"
#include "affreal/levy.hpp"
#include "affreal/operators.hpp"

namespace affreal {

/// Finite-dimensional subspace V with its samples on a discretization. The
/// discretization's weights fix the working inner product, hence the
/// complement U = V^perp and the projections Pi_V, Pi_U.
class Subspace {
 public:
  Subspace() = default;
  /// Throws InvalidArgument if the basis is dependent at tol_rank or the
  /// Gram matrix is not numerically positive definite.
  Subspace(std::vector<Function> basis, Discretization disc, std::string label = "V",
           double tol_rank = 1e-9);

  int dim() const { return static_cast<int>(basis_.size()); }
  const std::vector<Function>& basis() const { return basis_; }
  const Discretization& disc() const { return disc_; }
  /// Column i holds the samples of basis element i.
  const Eigen::MatrixXd& samples() const { return samples_; }
  const Eigen::MatrixXd& gram() const { return gram_; }
  const std::string& label() const { return label_; }

  /// Coordinates c of Pi_V h: G c = S^T W h.
  Eigen::VectorXd coordinates(const Eigen::VectorXd& h) const;
  Eigen::VectorXd project(const Eigen::VectorXd& h) const;
  /// Pi_U h = h - Pi_V h.
  Eigen::VectorXd residual(const Eigen::VectorXd& h) const;
  Eigen::VectorXd synthesize(const Eigen::VectorXd& coords) const;
  /// Symbolic sum_i coords_i v_i (zero function of the basis kind for dim 0).
  Function combine(const Eigen::VectorXd& coords) const;

  /// Same basis under another working inner product on the same nodes.
  Subspace with_discretization(const Discretization& disc) const;

 private:
  std::vector<Function> basis_;
  Discretization disc_;
  Eigen::MatrixXd samples_;
  Eigen::MatrixXd gram_;
  Eigen::LLT<Eigen::MatrixXd> gram_llt_;
  std::string label_;
};

enum class QEStatus { QuasiExponential, NotDetected };

struct QEResult {
  QEStatus status = QEStatus::NotDetected;
  FunctionBasis basis;
  int iterations = 0;
  std::vector<int> dims_per_iteration;
};

/// Smallest A-invariant space containing the generators, by Arnoldi-type
/// sweeps: each sweep applies A to the directions found in the previous one
/// and keeps the part orthogonal to everything found so far (relative
/// residual above tol_rank). Symbolic generators are handled exactly in
/// coefficient space, where the coefficient of x^j is scaled by j! so that
/// differentiation acts as a shift. Grid generators need `grid` and use the
/// finite-difference operator with its weighted inner product.
QEResult compute_A_sigma(const OperatorSpec& op, std::span<const Function> generators,
                         int dim_cap = 50, double tol_rank = 1e-9,
                         const Discretization* grid = nullptr);

struct InvarianceReport {
  bool invariant = false;
  int dim = 0;
  int extended_dim = 0;
  /// Largest relative residual of an image A v_i outside V, and its index.
  double max_residual = 0.0;
  int offending = -1;
  std::string offending_image;
};

/// Symbolic test: rank(V ∪ A V) == rank(V). Grid bases compare the weighted
/// residual of the finite-difference images against tol_rank.
InvarianceReport check_A_invariant(const OperatorSpec& op, const Subspace& V, double tol_rank = 1e-9);
/// Symbolic bases only; needs no inner product.
InvarianceReport check_A_invariant(const OperatorSpec& op, std::span<const Function> basis,
                                   double tol_rank = 1e-9);

/// coef(y) * shape, with y the V-coordinates of Pi_V h.
struct StateTerm {
  Expression coef;
  Function shape;
};

/// Drift alpha(h) = constant + sum_j coef_j(y) shape_j + map(h).
struct DriftSpec {
  std::optional<Function> constant;
  std::vector<StateTerm> state_terms;
  /// Arbitrary map on sample vectors; makes the drift opaque to the
  /// symbolic paths.
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> map;

  static DriftSpec zero() { return {}; }
  static DriftSpec of_constant(Function f) { return DriftSpec{std::move(f), {}, {}}; }
  bool is_constant() const { return state_terms.empty() && !map; }
};

/// sigma^k(h) = coef(y) * shape; an empty coef means the constant 1.
struct VolSpec {
  Function shape;
  Expression coef;

  bool state_dependent() const { return !coef.empty(); }
};

/// Drift with every shape sampled once on the nodes of V's discretization.
class SampledDrift {
 public:
  SampledDrift(const DriftSpec& alpha, const Subspace& V);
  Eigen::VectorXd operator()(const Eigen::VectorXd& h) const;
  bool constant() const { return coefs_.empty() && !map_; }

 private:
  Subspace V_;
  Eigen::VectorXd constant_;
  std::vector<Expression> coefs_;
  Eigen::MatrixXd shapes_;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> map_;
};

class SampledVol {
 public:
  SampledVol(const VolSpec& sigma, const Subspace& V);
  /// Scalar factor coef(y) at state h (1 for constant volatility).
  double factor(const Eigen::VectorXd& h) const;
  Eigen::VectorXd operator()(const Eigen::VectorXd& h) const { return factor(h) * shape_; }
  const Eigen::VectorXd& shape() const { return shape_; }
  bool state_dependent() const { return !coef_.empty(); }

 private:
  Subspace V_;
  Expression coef_;
  Eigen::VectorXd shape_;
};

Eigen::VectorXd evaluate_drift(const DriftSpec& alpha, const Eigen::VectorXd& h, const Subspace& V);
Eigen::VectorXd evaluate_vol(const VolSpec& sigma, const Eigen::VectorXd& h, const Subspace& V);

struct DriftCheck {
  bool constant_projection = false;
  double max_deviation = 0.0;
  /// True when the verdict comes from sampling rather than structure.
  bool sampled = false;
};

/// max over probes h and directions v of ||Pi_U alpha(h + v) - Pi_U alpha(h)||,
/// compared against tol * (1 + max ||alpha(h)||).
DriftCheck check_drift_projection_constant(const DriftSpec& alpha, const Subspace& V,
                                           std::span<const Eigen::VectorXd> probes,
                                           std::span<const Eigen::VectorXd> directions,
                                           double tol = 1e-8);

/// Finite-rank map T h = left * (coord * h), with left = -Pi_U A v_i and
/// coord the V-coordinate functional.
struct Correction {
  Eigen::MatrixXd left;
  Eigen::MatrixXd coord;

  Eigen::VectorXd apply(const Eigen::VectorXd& h) const { return left * (coord * h); }
  /// Operator norm in the working inner product.
  double norm(const Subspace& V) const;
};

/// T = -Pi_U A Pi_V, so that A + T maps V into V.
Correction make_semiinvariant_correction(const OperatorSpec& op, const Subspace& V);

enum class PsiMethod { ShiftExact, SpectralTruncation, GridImplicit };
enum class Scheme { Euler, ExpExact };

std::string_view to_string(PsiMethod m);
std::string_view to_string(Scheme s);

struct ClauseReport {
  bool invariant = false;
  bool drift_constant = false;
  bool drift_sampled = false;
  double drift_deviation = 0.0;
  bool sigma_in_V = false;
  double sigma_residual = 0.0;
  double invariance_residual = 0.0;
};

struct Realization {
  OperatorSpec op;
  Subspace V;
  /// A v_i = sum_j B(j, i) v_j.
  Eigen::MatrixXd B;
  std::vector<VolSpec> sigma;
  /// V-coordinates of each volatility shape.
  std::vector<Eigen::VectorXd> sigma_coords;
  DriftSpec drift;
  /// Pi_U and V-coordinates of the constant drift part.
  Function drift_u;
  Eigen::VectorXd drift_v;
  /// True when Pi_U alpha does not depend on the state.
  bool drift_u_constant = true;
  PsiMethod psi_method = PsiMethod::GridImplicit;
  ClauseReport clauses;
};

struct BuildOptions {
  double tol_rank = 1e-9;
  double tol_project = 1e-10;
  double tol_drift = 1e-8;
  std::optional<PsiMethod> psi_method;
};

/// Verifies the three realization clauses (A-invariance of V, constant
/// Pi_U alpha on leaves h + V, volatility ranges inside V) and assembles the
/// coordinate system. Throws NotInvariant, DriftConditionFails or
/// SigmaEscapesV naming the failed clause.
Realization build_realization(const OperatorSpec& op, const DriftSpec& alpha,
                              std::vector<VolSpec> sigma, const Subspace& V,
                              const BuildOptions& opts = {});

PsiMethod default_psi_method(const OperatorSpec& op, bool drift_u_constant);

struct Curve {
  std::vector<double> t_grid;
  Eigen::MatrixXd values;  // time x nodes
  std::vector<Function> exact_form;  // per time, when available
  /// Estimated norm of the discarded eigen-expansion tail (spectral method).
  double truncation_tail = 0.0;
  int modes_used = 0;
};

struct CoordinatePath {
  std::vector<double> t_grid;
  Eigen::MatrixXd coords;  // time x dim V
  std::uint64_t seed = 0;
};

struct GridPath {
  std::vector<double> t_grid;
  std::vector<double> x_grid;  // x for lines; flat node index for planes and modes
  Eigen::MatrixXd values;      // time x nodes
  std::uint64_t seed = 0;
};

std::vector<double> uniform_times(double horizon, int n_steps);

struct PsiOptions {
  /// Bound on the relative eigen-expansion tail of u0 and Pi_U alpha.
  double tail_bound = 1e-6;
  int max_modes = 8192;
};

/// u0 = h0 - Pi_V h0; returns (u0, V-coordinates of h0).
std::pair<Function, Eigen::VectorXd> split_initial(const Realization& R, const Function& h0);

/// psi' = A psi + Pi_U alpha(psi), psi(0) = u0 = Pi_U h0.
Curve solve_psi(const Realization& R, const Function& h0, const std::vector<double>& t_grid,
                const PsiOptions& opts = {});

CoordinatePath simulate_Y(const Realization& R, const Curve& psi, const Eigen::VectorXd& v0,
                          const IncrementMatrix& increments, Scheme scheme);

/// r(t_n) = psi(t_n) + sum_i Y_i(t_n) v_i.
GridPath reconstruct(const Curve& psi, const CoordinatePath& Y, const Subspace& V);

std::vector<double> node_coordinates(const Discretization& disc);

}  // namespace affreal
