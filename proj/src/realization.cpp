#include "affreal/realization.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>
#include <unsupported/Eigen/MatrixFunctions>

#include "affreal/csv.hpp"
#include "affreal/error.hpp"

namespace affreal {
namespace {

Function zero_function(const Discretization& disc) {
  switch (disc.kind()) {
    case Discretization::Kind::Line: return QExpFunction{};
    case Discretization::Kind::Plane: return SeparableFn{};
    case Discretization::Kind::Modal: return SpectralFn{};
  }
  return QExpFunction{};
}

// Samples of A f: exact symbolic image when f is symbolic, finite
// differences for grid samples.
Eigen::VectorXd image_samples(const OperatorSpec& op, const Function& f, const Discretization& disc) {
  if (kind_of(f) == FunctionKind::Grid) return apply_grid(op, sample(f, disc), disc);
  return sample(apply_exact(op, f), disc);
}

double factorial(int n) {
  double r = 1.0;
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}

// Coefficient of x^j scaled by j!, which turns d/dx on polynomial parts into
// a shift and keeps Krylov vectors of high-degree polynomials well scaled.
double key_scale(FunctionKind kind, const TermKey& k) {
  switch (kind) {
    case FunctionKind::QExp: return factorial(static_cast<int>(k[3]));
    case FunctionKind::Separable: return factorial(static_cast<int>(k[3])) * factorial(static_cast<int>(k[7]));
    default: return 1.0;
  }
}

CoefficientRow scaled_row(const Function& f) {
  const auto kind = kind_of(f);
  CoefficientRow row = coefficient_row(f);
  for (auto& [k, c] : row) c *= key_scale(kind, k);
  return row;
}

// Orthonormal directions of a growing symbolic span, in scaled coefficients.
class SymbolicArnoldi {
 public:
  SymbolicArnoldi(FunctionKind kind, double tol) : kind_(kind), tol_(tol) {}

  // Adds the part of f orthogonal to the current span when it is not
  // negligible; returns the new direction as a function.
  std::optional<Function> add(const Function& f) {
    CoefficientRow row = scaled_row(f);
    if (row.empty()) return std::nullopt;
    std::vector<CoefficientRow> rows = q_;
    rows.push_back(std::move(row));
    const CoefficientMatrix cm = coefficient_matrix(rows);
    const auto k = static_cast<Eigen::Index>(q_.size());
    Eigen::VectorXd v = cm.rows.row(k).transpose();
    const double nv = v.norm();
    if (nv == 0.0) return std::nullopt;
    if (k > 0) {
      const Eigen::MatrixXd Q = cm.rows.topRows(k);
      for (int pass = 0; pass < 2; ++pass) v -= Q.transpose() * (Q * v);
    }
    const double nr = v.norm();
    if (nr <= tol_ * nv) return std::nullopt;
    v /= nr;
    CoefficientRow q;
    CoefficientRow unscaled;
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      if (v(j) == 0.0) continue;
      const TermKey& key = cm.keys[static_cast<std::size_t>(j)];
      q.emplace_back(key, v(j));
      unscaled.emplace_back(key, v(j) / key_scale(kind_, key));
    }
    q_.push_back(std::move(q));
    return function_from_row(kind_, unscaled);
  }

  int size() const { return static_cast<int>(q_.size()); }

 private:
  FunctionKind kind_;
  double tol_;
  std::vector<CoefficientRow> q_;
};

class GridArnoldi {
 public:
  GridArnoldi(const Discretization& disc, double tol) : disc_(disc), tol_(tol) {}

  std::optional<Eigen::VectorXd> add(Eigen::VectorXd v) {
    const double nv = disc_.norm(v);
    if (nv == 0.0) return std::nullopt;
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& q : q_) v -= disc_.inner(q, v) * q;
    }
    const double nr = disc_.norm(v);
    if (nr <= tol_ * nv) return std::nullopt;
    v /= nr;
    q_.push_back(v);
    return v;
  }

  int size() const { return static_cast<int>(q_.size()); }

 private:
  const Discretization& disc_;
  double tol_;
  std::vector<Eigen::VectorXd> q_;
};

Eigen::MatrixXd sample_columns(std::span<const Function> fs, const Discretization& disc) {
  Eigen::MatrixXd m(disc.size(), static_cast<Eigen::Index>(fs.size()));
  for (std::size_t i = 0; i < fs.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = sample(fs[i], disc);
  return m;
}

std::vector<int> dirichlet_nodes(const OperatorSpec& op, const Discretization& disc) {
  if ((std::holds_alternative<Cable>(op) || std::holds_alternative<TermStructure2>(op)) &&
      disc.kind() == Discretization::Kind::Line) {
    return {0, disc.x().n - 1};
  }
  return {};
}

double transport_speed(const OperatorSpec& op) {
  if (const auto* t = std::get_if<Transport>(&op)) return t->speed;
  return 1.0;
}

// (e^{lam t} - 1) / lam, continuous at lam = 0.
double phi1(double lam, double t) {
  const double z = lam * t;
  if (std::abs(z) < 1e-8) return t * (1.0 + 0.5 * z);
  return std::expm1(z) / lam;
}

// ---- exact and interpolated transport semigroups ---------------------------

// Linear interpolation of one line of samples at x0 + i*dx + shift; values
// beyond the last node hold the last value (zero-gradient outflow).
Eigen::VectorXd shift_line(const Eigen::VectorXd& f, double dx, double shift) {
  const Eigen::Index n = f.size();
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pos = static_cast<double>(i) + shift / dx;
    if (pos >= static_cast<double>(n - 1)) {
      out(i) = f(n - 1);
      continue;
    }
    const auto j = static_cast<Eigen::Index>(std::floor(pos));
    const double w = pos - static_cast<double>(j);
    out(i) = (1.0 - w) * f(j) + w * f(j + 1);
  }
  return out;
}

// Cumulative trapezoid integral of one line of samples.
Eigen::VectorXd cumulative_line(const Eigen::VectorXd& f, double dx) {
  Eigen::VectorXd out(f.size());
  out(0) = 0.0;
  for (Eigen::Index i = 1; i < f.size(); ++i) out(i) = out(i - 1) + 0.5 * dx * (f(i - 1) + f(i));
  return out;
}

// Applies a per-line transform along the transport direction of `disc`.
template <class Fn>
Eigen::VectorXd per_line(const Discretization& disc, const Eigen::VectorXd& v, Fn fn) {
  if (disc.kind() == Discretization::Kind::Line) return fn(v, disc.x().dx);
  const auto& s = disc.x();
  Eigen::VectorXd out(v.size());
  for (int ib = 0; ib < disc.b().n; ++ib) {
    const Eigen::Index off = static_cast<Eigen::Index>(ib) * s.n;
    out.segment(off, s.n) = fn(Eigen::VectorXd(v.segment(off, s.n)), s.dx);
  }
  return out;
}

// S_t f for the transport semigroup, exact for symbolic f.
Function shift_symbolic(const Function& f, double d) {
  if (const auto* q = std::get_if<QExpFunction>(&f)) return shift(*q, d);
  const auto& sep = std::get<SeparableFn>(f);
  SeparableFn out;
  for (const auto& [xi, h] : sep.terms) out.terms.emplace_back(xi, shift(h, d));
  return out;
}

// int_0^t S_s a ds = (Ta(. + v t) - Ta) / v.
Function shift_integral_symbolic(const Function& a, double speed, double t) {
  auto one = [&](const QExpFunction& h) {
    const QExpFunction H = integrate_T(h);
    return (1.0 / speed) * (shift(H, speed * t) - H);
  };
  if (const auto* q = std::get_if<QExpFunction>(&a)) return one(*q);
  SeparableFn out;
  for (const auto& [xi, h] : std::get<SeparableFn>(a).terms) out.terms.emplace_back(xi, one(h));
  return out;
}

// ---- sine expansions for the Dirichlet operators ---------------------------

struct SineBasis {
  double length = 0.0;      // pi for the cable, 1 for the term structure
  double freq_unit = 1.0;   // n * freq_unit is the frequency of mode n
  double decay = 0.0;       // eigenfunctions carry exp(-decay * x)
  double norm_factor = 0.0; // coefficient = norm_factor * int f e^{decay x} sin(n f_u x) dx
};

SineBasis sine_basis(const OperatorSpec& op) {
  if (std::holds_alternative<Cable>(op)) return {std::numbers::pi, 1.0, 0.0, 2.0 / std::numbers::pi};
  const double kappa = std::get<TermStructure2>(op).kappa;
  return {1.0, std::numbers::pi, 1.0 / kappa, 2.0};
}

struct SineExpansion {
  std::vector<double> coefs;  // mode n = index + 1
  double tail = 0.0;          // relative L2 tail in the orthogonality weight
};

SineExpansion expand_symbolic(const QExpFunction& f, const SineBasis& sb, double tail_bound, int max_modes) {
  SineExpansion e;
  if (f.is_zero()) return e;
  const QExpFunction tilt = QExpFunction::monomial(1.0, 0, sb.decay);
  const QExpFunction g = multiply(f, tilt);  // f e^{decay x}
  // Parseval: int g^2 = (length / 2) sum c_n^2.
  const double total = integrate_T(multiply(g, g))(sb.length);
  const double mode_mass = 0.5 * sb.length;
  double partial = 0.0;
  int n = 0;
  for (int target = 32;; target *= 2) {
    for (; n < target; ++n) {
      const QExpFunction s = QExpFunction::monomial(1.0, 0, 0.0, (n + 1) * sb.freq_unit, Trig::Sin);
      const double c = sb.norm_factor * integrate_T(multiply(g, s))(sb.length);
      e.coefs.push_back(c);
      partial += c * c * mode_mass;
    }
    e.tail = total > 0.0 ? std::sqrt(std::max(0.0, total - partial) / total) : 0.0;
    if (e.tail <= tail_bound) return e;
    if (target >= max_modes) {
      throw Error(ErrorKind::TruncationTailTooLarge,
                  "eigen-expansion tail " + csv::format_double(e.tail) + " after " +
                      std::to_string(n) + " modes exceeds " + csv::format_double(tail_bound));
    }
  }
}

// Trapezoid coefficients of grid samples; the tail is measured on the grid.
SineExpansion expand_samples(const Eigen::VectorXd& f, const Discretization& disc, const SineBasis& sb,
                             double tail_bound, int max_modes) {
  SineExpansion e;
  const auto& g = disc.x();
  Eigen::VectorXd tilted(g.n), w(g.n);
  for (int i = 0; i < g.n; ++i) {
    tilted(i) = f(i) * std::exp(sb.decay * g.node(i));
    w(i) = (i == 0 || i == g.n - 1 ? 0.5 : 1.0) * g.dx;
  }
  const double total = (w.array() * tilted.array().square()).sum();
  if (total == 0.0) return e;
  const int modes = std::min(max_modes, g.n - 2);
  Eigen::VectorXd recon = Eigen::VectorXd::Zero(g.n);
  for (int n = 1; n <= modes; ++n) {
    double c = 0.0;
    Eigen::VectorXd s(g.n);
    for (int i = 0; i < g.n; ++i) s(i) = std::sin(n * sb.freq_unit * g.node(i));
    c = sb.norm_factor * (w.array() * tilted.array() * s.array()).sum();
    e.coefs.push_back(c);
    recon += c * s;
  }
  e.tail = std::sqrt((w.array() * (tilted - recon).array().square()).sum() / total);
  if (e.tail > tail_bound) {
    throw Error(ErrorKind::TruncationTailTooLarge,
                "eigen-expansion tail of grid data " + csv::format_double(e.tail) + " exceeds " +
                    csv::format_double(tail_bound));
  }
  return e;
}

SineExpansion expand(const Function& f, const Discretization& disc, const SineBasis& sb,
                     const PsiOptions& opts) {
  if (const auto* q = std::get_if<QExpFunction>(&f)) {
    return expand_symbolic(*q, sb, opts.tail_bound, opts.max_modes);
  }
  if (kind_of(f) == FunctionKind::Grid) {
    return expand_samples(sample(f, disc), disc, sb, opts.tail_bound, opts.max_modes);
  }
  throw Error(ErrorKind::MethodUnsupported, "sine expansion needs a quasi-exponential or grid function");
}

}  // namespace

// ---- Subspace ---------------------------------------------------------------

Subspace::Subspace(std::vector<Function> basis, Discretization disc, std::string label, double tol_rank)
    : basis_(std::move(basis)), disc_(std::move(disc)), label_(std::move(label)) {
  const auto d = static_cast<Eigen::Index>(basis_.size());
  if (d > 0) {
    const auto red = span_dimension(basis_, tol_rank);
    if (red.dim != d) {
      throw Error(ErrorKind::InvalidArgument, "basis of " + label_ + " is linearly dependent (rank " +
                                                  std::to_string(red.dim) + " of " + std::to_string(d) + ")");
    }
  }
  samples_ = sample_columns(basis_, disc_);
  gram_ = samples_.transpose() * disc_.weights().asDiagonal() * samples_;
  if (d > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram_, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (!(hi > 0.0) || lo <= 1e-10 * hi) {
      throw Error(ErrorKind::InvalidArgument,
                  "Gram matrix of " + label_ + " is not positive definite on the analysis window");
    }
    gram_llt_.compute(gram_);
  }
}

Eigen::VectorXd Subspace::coordinates(const Eigen::VectorXd& h) const {
  if (h.size() != disc_.size()) throw Error(ErrorKind::GridMismatch, "state does not match the grid of V");
  if (dim() == 0) return Eigen::VectorXd(0);
  return gram_llt_.solve(samples_.transpose() * (disc_.weights().array() * h.array()).matrix());
}

Eigen::VectorXd Subspace::project(const Eigen::VectorXd& h) const { return samples_ * coordinates(h); }
Eigen::VectorXd Subspace::residual(const Eigen::VectorXd& h) const { return h - project(h); }
Eigen::VectorXd Subspace::synthesize(const Eigen::VectorXd& coords) const { return samples_ * coords; }

Function Subspace::combine(const Eigen::VectorXd& coords) const {
  if (dim() == 0) return zero_function(disc_);
  return linear_combination(std::span<const double>(coords.data(), static_cast<std::size_t>(coords.size())),
                            basis_);
}

Subspace Subspace::with_discretization(const Discretization& disc) const {
  return Subspace(basis_, disc, label_);
}

// ---- A_sigma ------------------------------------------------------------------

QEResult compute_A_sigma(const OperatorSpec& op, std::span<const Function> generators, int dim_cap,
                         double tol_rank, const Discretization* grid) {
  validate(op);
  if (dim_cap < 1) throw Error(ErrorKind::InvalidArgument, "dim_cap must be positive");
  QEResult res;
  if (generators.empty()) {
    res.status = QEStatus::QuasiExponential;
    res.dims_per_iteration = {0, 0};
    return res;
  }
  const auto kind = kind_of(generators.front());
  for (const auto& g : generators) {
    if (kind_of(g) != kind) throw Error(ErrorKind::InvalidArgument, "generators of mixed kinds");
  }

  if (kind == FunctionKind::Grid) {
    if (!grid) throw Error(ErrorKind::InvalidArgument, "grid generators need a discretization");
    GridArnoldi arn(*grid, tol_rank);
    std::vector<Eigen::VectorXd> frontier;
    for (const auto& g : generators) {
      if (auto q = arn.add(sample(g, *grid))) frontier.push_back(*q);
    }
    res.dims_per_iteration.push_back(arn.size());
    std::vector<Eigen::VectorXd> all = frontier;
    while (!frontier.empty() && arn.size() <= dim_cap) {
      std::vector<Eigen::VectorXd> next;
      for (const auto& q : frontier) {
        if (auto n = arn.add(apply_grid(op, q, *grid))) next.push_back(*n);
      }
      ++res.iterations;
      res.dims_per_iteration.push_back(arn.size());
      all.insert(all.end(), next.begin(), next.end());
      frontier = std::move(next);
    }
    if (arn.size() > dim_cap) return res;
    res.status = QEStatus::QuasiExponential;
    res.dims_per_iteration.push_back(arn.size());
    res.basis.dim = arn.size();
    for (auto& v : all) res.basis.functions.push_back(GridFn{{v.data(), v.data() + v.size()}});
    return res;
  }

  SymbolicArnoldi arn(kind, tol_rank);
  std::vector<Function> frontier;
  for (const auto& g : generators) {
    if (auto q = arn.add(g)) frontier.push_back(std::move(*q));
  }
  res.dims_per_iteration.push_back(arn.size());
  std::vector<Function> all = frontier;
  while (!frontier.empty() && arn.size() <= dim_cap) {
    std::vector<Function> next;
    for (const auto& q : frontier) {
      if (auto n = arn.add(apply_exact(op, q))) next.push_back(std::move(*n));
    }
    ++res.iterations;
    res.dims_per_iteration.push_back(arn.size());
    all.insert(all.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  if (arn.size() > dim_cap) return res;
  res.status = QEStatus::QuasiExponential;
  if (all.empty()) return res;
  FunctionBasis echelon = echelon_basis(all, tol_rank);
  if (echelon.dim == static_cast<int>(all.size())) {
    res.basis = std::move(echelon);
  } else {
    res.basis = span_dimension(all, tol_rank);
    res.basis.functions = all;
    res.basis.dim = static_cast<int>(all.size());
  }
  return res;
}

// ---- invariance -------------------------------------------------------------

InvarianceReport check_A_invariant(const OperatorSpec& op, std::span<const Function> basis, double tol_rank) {
  InvarianceReport rep;
  if (basis.empty()) {
    rep.invariant = true;
    return rep;
  }
  std::vector<Function> all(basis.begin(), basis.end());
  std::vector<Function> images;
  for (const auto& v : basis) images.push_back(apply_exact(op, v));
  all.insert(all.end(), images.begin(), images.end());
  rep.dim = span_dimension(basis, tol_rank).dim;
  rep.extended_dim = span_dimension(all, tol_rank).dim;
  rep.invariant = rep.dim == rep.extended_dim;

  std::vector<CoefficientRow> rows;
  for (const auto& f : all) rows.push_back(coefficient_row(f));
  const CoefficientMatrix cm = coefficient_matrix(rows);
  const auto d = static_cast<Eigen::Index>(basis.size());
  const Eigen::MatrixXd Bt = cm.rows.topRows(d).transpose();
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Bt);
  for (Eigen::Index i = 0; i < d; ++i) {
    const Eigen::VectorXd img = cm.rows.row(d + i).transpose();
    const double n = img.norm();
    if (n == 0.0) continue;
    const double r = (img - Bt * qr.solve(img)).norm() / n;
    if (r > rep.max_residual) {
      rep.max_residual = r;
      rep.offending = static_cast<int>(i);
    }
  }
  if (rep.invariant) {
    rep.offending = -1;
  } else if (rep.offending >= 0) {
    rep.offending_image = describe(images[static_cast<std::size_t>(rep.offending)]);
  }
  return rep;
}

InvarianceReport check_A_invariant(const OperatorSpec& op, const Subspace& V, double tol_rank) {
  const bool grid = V.dim() > 0 && kind_of(V.basis().front()) == FunctionKind::Grid;
  if (!grid) return check_A_invariant(op, std::span<const Function>(V.basis()), tol_rank);
  InvarianceReport rep;
  rep.dim = V.dim();
  rep.extended_dim = V.dim();
  for (int i = 0; i < V.dim(); ++i) {
    const Eigen::VectorXd img = apply_grid(op, V.samples().col(i), V.disc());
    const double n = V.disc().norm(img);
    if (n == 0.0) continue;
    const double r = V.disc().norm(V.residual(img)) / n;
    if (r > rep.max_residual) {
      rep.max_residual = r;
      rep.offending = i;
    }
  }
  rep.invariant = rep.max_residual <= tol_rank;
  if (rep.invariant) {
    rep.offending = -1;
  } else {
    rep.extended_dim = V.dim() + 1;
    rep.offending_image = "finite-difference image of basis element " + std::to_string(rep.offending);
  }
  return rep;
}

// ---- drift and volatility -----------------------------------------------------

SampledDrift::SampledDrift(const DriftSpec& alpha, const Subspace& V) : V_(V), map_(alpha.map) {
  constant_ = alpha.constant ? sample(*alpha.constant, V.disc()) : Eigen::VectorXd::Zero(V.disc().size());
  shapes_.resize(V.disc().size(), static_cast<Eigen::Index>(alpha.state_terms.size()));
  for (std::size_t j = 0; j < alpha.state_terms.size(); ++j) {
    coefs_.push_back(alpha.state_terms[j].coef);
    shapes_.col(static_cast<Eigen::Index>(j)) = sample(alpha.state_terms[j].shape, V.disc());
  }
}

Eigen::VectorXd SampledDrift::operator()(const Eigen::VectorXd& h) const {
  Eigen::VectorXd out = constant_;
  if (!coefs_.empty()) {
    const Eigen::VectorXd y = V_.coordinates(h);
    const std::span<const double> ys(y.data(), static_cast<std::size_t>(y.size()));
    for (std::size_t j = 0; j < coefs_.size(); ++j) {
      out += coefs_[j](ys) * shapes_.col(static_cast<Eigen::Index>(j));
    }
  }
  if (map_) out += map_(h);
  return out;
}

SampledVol::SampledVol(const VolSpec& sigma, const Subspace& V)
    : V_(V), coef_(sigma.coef), shape_(sample(sigma.shape, V.disc())) {}

double SampledVol::factor(const Eigen::VectorXd& h) const {
  if (coef_.empty()) return 1.0;
  const Eigen::VectorXd y = V_.coordinates(h);
  return coef_(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
}

Eigen::VectorXd evaluate_drift(const DriftSpec& alpha, const Eigen::VectorXd& h, const Subspace& V) {
  return SampledDrift(alpha, V)(h);
}

Eigen::VectorXd evaluate_vol(const VolSpec& sigma, const Eigen::VectorXd& h, const Subspace& V) {
  return SampledVol(sigma, V)(h);
}

DriftCheck check_drift_projection_constant(const DriftSpec& alpha, const Subspace& V,
                                           std::span<const Eigen::VectorXd> probes,
                                           std::span<const Eigen::VectorXd> directions, double tol) {
  DriftCheck out;
  if (alpha.is_constant()) {
    out.constant_projection = true;
    return out;
  }
  out.sampled = true;
  const SampledDrift drift(alpha, V);
  double scale = 0.0;
  for (const auto& h : probes) {
    const Eigen::VectorXd a = drift(h);
    scale = std::max(scale, V.disc().norm(a));
    const Eigen::VectorXd base = V.residual(a);
    for (const auto& v : directions) {
      const Eigen::VectorXd moved = V.residual(drift(h + v));
      out.max_deviation = std::max(out.max_deviation, V.disc().norm(moved - base));
    }
  }
  out.constant_projection = out.max_deviation <= tol * (1.0 + scale);
  return out;
}

// ---- correction -------------------------------------------------------------------

Correction make_semiinvariant_correction(const OperatorSpec& op, const Subspace& V) {
  const auto& disc = V.disc();
  Correction T;
  T.left.resize(disc.size(), V.dim());
  for (int i = 0; i < V.dim(); ++i) {
    const Eigen::VectorXd img = image_samples(op, V.basis()[static_cast<std::size_t>(i)], disc);
    T.left.col(i) = -V.residual(img);
  }
  T.coord = V.dim() > 0 ? Eigen::MatrixXd(V.gram().llt().solve(V.samples().transpose() *
                                                               disc.weights().asDiagonal()))
                        : Eigen::MatrixXd(0, disc.size());
  return T;
}

double Correction::norm(const Subspace& V) const {
  if (left.cols() == 0) return 0.0;
  const Eigen::MatrixXd M = left.transpose() * V.disc().weights().asDiagonal() * left;
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(M, V.gram(), Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

// ---- build ------------------------------------------------------------------------

std::string_view to_string(PsiMethod m) {
  switch (m) {
    case PsiMethod::ShiftExact: return "SHIFT_EXACT";
    case PsiMethod::SpectralTruncation: return "SPECTRAL_TRUNCATION";
    case PsiMethod::GridImplicit: return "GRID_IMPLICIT";
  }
  return "?";
}

std::string_view to_string(Scheme s) { return s == Scheme::Euler ? "EULER" : "EXP_EXACT"; }

PsiMethod default_psi_method(const OperatorSpec& op, bool drift_u_constant) {
  if (!drift_u_constant) return PsiMethod::GridImplicit;
  if (is_transport_like(op)) return PsiMethod::ShiftExact;
  return PsiMethod::SpectralTruncation;
}

Realization build_realization(const OperatorSpec& op, const DriftSpec& alpha, std::vector<VolSpec> sigma,
                              const Subspace& V, const BuildOptions& opts) {
  validate(op);
  Realization R;
  R.op = op;
  R.V = V;
  R.drift = alpha;
  R.sigma = std::move(sigma);
  const auto& disc = V.disc();
  const int d = V.dim();

  // clause 1: A-invariance, and B in V-coordinates
  R.B = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    const Eigen::VectorXd img = image_samples(op, V.basis()[static_cast<std::size_t>(i)], disc);
    R.B.col(i) = V.coordinates(img);
    const double n = disc.norm(img);
    if (n > 0.0) {
      R.clauses.invariance_residual =
          std::max(R.clauses.invariance_residual, disc.norm(img - V.synthesize(R.B.col(i))) / n);
    }
  }
  const auto inv = check_A_invariant(op, V, opts.tol_rank);
  R.clauses.invariant = inv.invariant && R.clauses.invariance_residual <= 1e-8;
  if (!R.clauses.invariant) {
    std::string what = inv.offending >= 0 ? "A v_" + std::to_string(inv.offending + 1) + " = " + inv.offending_image
                                          : std::string("a basis image");
    throw Error(ErrorKind::NotInvariant,
                "clause 1 (A-invariance of V) fails: " + what + " leaves V (relative residual " +
                    csv::format_double(std::max(inv.max_residual, R.clauses.invariance_residual)) + ")");
  }

  // clause 3: volatility ranges inside V
  R.clauses.sigma_in_V = true;
  for (std::size_t k = 0; k < R.sigma.size(); ++k) {
    const Eigen::VectorXd s = sample(R.sigma[k].shape, disc);
    const double n = disc.norm(s);
    Eigen::VectorXd c = V.coordinates(s);
    if (n > 0.0) {
      const double r = disc.norm(s - V.synthesize(c)) / n;
      R.clauses.sigma_residual = std::max(R.clauses.sigma_residual, r);
      if (r > opts.tol_project) {
        R.clauses.sigma_in_V = false;
        throw Error(ErrorKind::SigmaEscapesV,
                    "clause 3 (volatility range in V) fails for sigma^" + std::to_string(k + 1) + " = " +
                        describe(R.sigma[k].shape) + ": relative projection residual " + csv::format_double(r));
      }
    }
    if (R.sigma[k].coef.max_variable() > d) {
      throw Error(ErrorKind::InvalidArgument, "volatility coefficient uses more coordinates than dim V");
    }
    R.sigma_coords.push_back(std::move(c));
  }

  // clause 2: Pi_U alpha constant on leaves h + V
  if (alpha.constant) {
    const Eigen::VectorXd a = sample(*alpha.constant, disc);
    R.drift_v = V.coordinates(a);
    if (d == 0 || kind_of(*alpha.constant) == kind_of(V.basis().front())) {
      R.drift_u = add(*alpha.constant, scale(-1.0, V.combine(R.drift_v)));
    } else {
      const Eigen::VectorXd r = V.residual(a);
      R.drift_u = GridFn{{r.data(), r.data() + r.size()}};
    }
  } else {
    R.drift_v = Eigen::VectorXd::Zero(d);
    R.drift_u = zero_function(disc);
  }
  R.drift_u_constant = !alpha.map;
  for (const auto& term : alpha.state_terms) {
    if (term.coef.max_variable() > d) {
      throw Error(ErrorKind::InvalidArgument, "drift coefficient uses more coordinates than dim V");
    }
    const Eigen::VectorXd s = sample(term.shape, disc);
    const double n = disc.norm(s);
    if (n > 0.0 && disc.norm(V.residual(s)) > opts.tol_project * n) R.drift_u_constant = false;
  }
  std::vector<Eigen::VectorXd> probes{Eigen::VectorXd::Zero(disc.size())};
  for (const auto& s : R.sigma) probes.push_back(sample(s.shape, disc));
  if (alpha.constant) probes.push_back(sample(*alpha.constant, disc));
  probes.push_back(Eigen::VectorXd::Ones(disc.size()));
  std::vector<Eigen::VectorXd> directions;
  for (int i = 0; i < d; ++i) {
    directions.push_back(V.samples().col(i));
    directions.push_back(-0.5 * V.samples().col(i));
  }
  if (d > 1) directions.push_back(V.samples().rowwise().sum());
  const auto dc = check_drift_projection_constant(alpha, V, probes, directions, opts.tol_drift);
  R.clauses.drift_constant = dc.constant_projection;
  R.clauses.drift_sampled = dc.sampled;
  R.clauses.drift_deviation = dc.max_deviation;
  if (!dc.constant_projection) {
    throw Error(ErrorKind::DriftConditionFails,
                "clause 2 (Pi_U alpha constant on h + V) fails: deviation " +
                    csv::format_double(dc.max_deviation) + " over sampled leaves");
  }

  R.psi_method = opts.psi_method.value_or(default_psi_method(op, R.drift_u_constant));
  return R;
}

// ---- psi ----------------------------------------------------------------------

std::vector<double> uniform_times(double horizon, int n_steps) {
  if (!(horizon > 0.0) || n_steps < 1) throw Error(ErrorKind::InvalidArgument, "time grid needs horizon > 0, n_t >= 1");
  std::vector<double> t(static_cast<std::size_t>(n_steps) + 1);
  for (int i = 0; i <= n_steps; ++i) t[static_cast<std::size_t>(i)] = horizon * i / n_steps;
  return t;
}

std::pair<Function, Eigen::VectorXd> split_initial(const Realization& R, const Function& h0) {
  const Eigen::VectorXd h = sample(h0, R.V.disc());
  Eigen::VectorXd v0 = R.V.coordinates(h);
  if (R.V.dim() == 0 || kind_of(h0) == kind_of(R.V.basis().front())) {
    return {add(h0, scale(-1.0, R.V.combine(v0))), v0};
  }
  const Eigen::VectorXd u = h - R.V.synthesize(v0);
  return {GridFn{{u.data(), u.data() + u.size()}}, v0};
}

Curve solve_psi(const Realization& R, const Function& h0, const std::vector<double>& t_grid,
                const PsiOptions& opts) {
  if (t_grid.empty()) throw Error(ErrorKind::InvalidArgument, "empty time grid");
  const auto& disc = R.V.disc();
  const auto [u0, v0] = split_initial(R, h0);
  Curve c;
  c.t_grid = t_grid;
  const auto nt = static_cast<Eigen::Index>(t_grid.size());
  c.values.resize(nt, disc.size());

  switch (R.psi_method) {
    case PsiMethod::ShiftExact: {
      if (!is_transport_like(R.op)) {
        throw Error(ErrorKind::MethodUnsupported, "SHIFT_EXACT needs a transport operator, got " + operator_name(R.op));
      }
      if (!R.drift_u_constant) {
        throw Error(ErrorKind::MethodUnsupported, "SHIFT_EXACT needs a state-independent Pi_U alpha");
      }
      const double v = transport_speed(R.op);
      const bool u_sym = kind_of(u0) != FunctionKind::Grid;
      const bool a_sym = kind_of(R.drift_u) != FunctionKind::Grid;
      const bool has_a = !is_zero(R.drift_u);
      Eigen::VectorXd u_samples, a_cumulative;
      if (!u_sym) u_samples = sample(u0, disc);
      if (!a_sym && has_a) {
        a_cumulative = per_line(disc, sample(R.drift_u, disc), [](const Eigen::VectorXd& f, double dx) {
          return cumulative_line(f, dx);
        });
      }
      for (Eigen::Index n = 0; n < nt; ++n) {
        const double t = t_grid[static_cast<std::size_t>(n)];
        Eigen::VectorXd row;
        if (u_sym) {
          Function exact = shift_symbolic(u0, v * t);
          if (has_a && a_sym) exact = add(exact, shift_integral_symbolic(R.drift_u, v, t));
          row = sample(exact, disc);
          if (!has_a || a_sym) c.exact_form.push_back(std::move(exact));
        } else {
          row = per_line(disc, u_samples, [&](const Eigen::VectorXd& f, double dx) { return shift_line(f, dx, v * t); });
          if (has_a && a_sym) row += sample(shift_integral_symbolic(R.drift_u, v, t), disc);
        }
        if (has_a && !a_sym) {
          const Eigen::VectorXd moved = per_line(
              disc, a_cumulative, [&](const Eigen::VectorXd& f, double dx) { return shift_line(f, dx, v * t); });
          row += (moved - a_cumulative) / v;
        }
        c.values.row(n) = row.transpose();
      }
      if (c.exact_form.size() != static_cast<std::size_t>(nt)) c.exact_form.clear();
      return c;
    }

    case PsiMethod::SpectralTruncation: {
      if (!R.drift_u_constant) {
        throw Error(ErrorKind::MethodUnsupported, "SPECTRAL_TRUNCATION needs a state-independent Pi_U alpha");
      }
      if (is_spectral(R.op)) {
        const Eigen::VectorXd u = sample(u0, disc);
        const Eigen::VectorXd a = sample(R.drift_u, disc);
        Eigen::VectorXd lam(disc.size());
        for (std::size_t i = 0; i < disc.modes().size(); ++i) {
          lam(static_cast<Eigen::Index>(i)) = mode_generator_eigenvalue(R.op, disc.modes()[i]);
        }
        for (Eigen::Index n = 0; n < nt; ++n) {
          const double t = t_grid[static_cast<std::size_t>(n)];
          for (Eigen::Index i = 0; i < disc.size(); ++i) {
            c.values(n, i) = std::exp(lam(i) * t) * u(i) + phi1(lam(i), t) * a(i);
          }
        }
        c.modes_used = static_cast<int>(disc.size());
        return c;
      }
      if (!std::holds_alternative<Cable>(R.op) && !std::holds_alternative<TermStructure2>(R.op)) {
        throw Error(ErrorKind::MethodUnsupported, "SPECTRAL_TRUNCATION is unavailable for " + operator_name(R.op));
      }
      if (disc.kind() != Discretization::Kind::Line) {
        throw Error(ErrorKind::MethodUnsupported, "sine expansions need a line grid");
      }
      const SineBasis sb = sine_basis(R.op);
      const SineExpansion eu = expand(u0, disc, sb, opts);
      const SineExpansion ea = is_zero(R.drift_u) ? SineExpansion{} : expand(R.drift_u, disc, sb, opts);
      c.truncation_tail = std::max(eu.tail, ea.tail);
      const std::size_t modes = std::max(eu.coefs.size(), ea.coefs.size());
      c.modes_used = static_cast<int>(modes);
      double cmax = 0.0;
      for (double v : eu.coefs) cmax = std::max(cmax, std::abs(v));
      for (double v : ea.coefs) cmax = std::max(cmax, std::abs(v));
      std::vector<std::size_t> kept;
      for (std::size_t m = 0; m < modes; ++m) {
        const double cu = m < eu.coefs.size() ? eu.coefs[m] : 0.0;
        const double ca = m < ea.coefs.size() ? ea.coefs[m] : 0.0;
        if (std::max(std::abs(cu), std::abs(ca)) > 1e-16 * cmax) kept.push_back(m);
      }
      const auto& g = disc.x();
      Eigen::MatrixXd phi(static_cast<Eigen::Index>(kept.size()), g.n);
      Eigen::MatrixXd coef(nt, static_cast<Eigen::Index>(kept.size()));
      for (std::size_t j = 0; j < kept.size(); ++j) {
        const std::size_t m = kept[j];
        const int n = static_cast<int>(m) + 1;
        for (int i = 0; i < g.n; ++i) {
          const double x = g.node(i);
          phi(static_cast<Eigen::Index>(j), i) = std::exp(-sb.decay * x) * std::sin(n * sb.freq_unit * x);
        }
        const double lam = mode_generator_eigenvalue(R.op, {n});
        const double cu = m < eu.coefs.size() ? eu.coefs[m] : 0.0;
        const double ca = m < ea.coefs.size() ? ea.coefs[m] : 0.0;
        for (Eigen::Index k = 0; k < nt; ++k) {
          const double t = t_grid[static_cast<std::size_t>(k)];
          coef(k, static_cast<Eigen::Index>(j)) = std::exp(lam * t) * cu + phi1(lam, t) * ca;
        }
      }
      c.values = coef * phi;
      return c;
    }

    case PsiMethod::GridImplicit: {
      const Eigen::SparseMatrix<double> A = grid_operator(R.op, disc);
      const SampledDrift drift(R.drift, R.V);
      const auto pinned = dirichlet_nodes(R.op, disc);
      Eigen::VectorXd psi = sample(u0, disc);
      const Eigen::VectorXd boundary = psi;
      c.values.row(0) = psi.transpose();
      Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
      double factored_dt = -1.0;
      Eigen::SparseMatrix<double> I(disc.size(), disc.size());
      I.setIdentity();
      for (Eigen::Index n = 1; n < nt; ++n) {
        const double dt = t_grid[static_cast<std::size_t>(n)] - t_grid[static_cast<std::size_t>(n - 1)];
        if (!(dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "time grid must increase");
        if (std::abs(dt - factored_dt) > 1e-12 * dt) {
          Eigen::SparseMatrix<double> M = I - dt * A;
          M.makeCompressed();
          lu.compute(M);
          if (lu.info() != Eigen::Success) throw Error(ErrorKind::LinearSolveFailure, "implicit psi step");
          factored_dt = dt;
        }
        const Eigen::VectorXd rhs = psi + dt * R.V.residual(drift(psi));
        psi = lu.solve(rhs);
        for (int i : pinned) psi(i) = boundary(i);
        c.values.row(n) = psi.transpose();
      }
      return c;
    }
  }
  return c;
}

// ---- Y ----------------------------------------------------------------------------

CoordinatePath simulate_Y(const Realization& R, const Curve& psi, const Eigen::VectorXd& v0,
                          const IncrementMatrix& increments, Scheme scheme) {
  const int d = R.V.dim();
  const auto m = static_cast<Eigen::Index>(R.sigma.size());
  const auto nt = static_cast<Eigen::Index>(psi.t_grid.size());
  if (v0.size() != d) throw Error(ErrorKind::GridMismatch, "v0 has the wrong dimension");
  if (increments.n_steps() != nt - 1) {
    throw Error(ErrorKind::GridMismatch, "increment count " + std::to_string(increments.n_steps()) +
                                             " does not match " + std::to_string(nt - 1) + " time steps");
  }
  if (increments.dimension() != m) {
    throw Error(ErrorKind::GridMismatch, "driver dimension does not match the number of volatilities");
  }
  for (Eigen::Index n = 1; n < nt; ++n) {
    const double dt = psi.t_grid[static_cast<std::size_t>(n)] - psi.t_grid[static_cast<std::size_t>(n - 1)];
    if (std::abs(dt - increments.dt) > 1e-9 * increments.dt) {
      throw Error(ErrorKind::GridMismatch, "increment dt does not match the time grid");
    }
  }
  CoordinatePath Y;
  Y.t_grid = psi.t_grid;
  Y.seed = increments.seed;
  Y.coords.resize(nt, d);
  Y.coords.row(0) = v0.transpose();
  if (nt == 1 || d == 0) {
    for (Eigen::Index n = 1; n < nt; ++n) Y.coords.row(n) = v0.transpose();
    return Y;
  }

  Eigen::MatrixXd S(d, m);
  for (Eigen::Index k = 0; k < m; ++k) S.col(k) = R.sigma_coords[static_cast<std::size_t>(k)];
  bool state_vol = false;
  for (const auto& s : R.sigma) state_vol = state_vol || s.state_dependent();
  const bool y_independent = R.drift.is_constant() && !state_vol;
  const double dt = increments.dt;

  if (scheme == Scheme::ExpExact) {
    if (!y_independent) {
      throw Error(ErrorKind::SchemeUnsupported, "EXP_EXACT needs state-independent drift and volatility");
    }
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(2 * d, 2 * d);
    aug.topLeftCorner(d, d) = R.B * dt;
    aug.topRightCorner(d, d) = Eigen::MatrixXd::Identity(d, d) * dt;
    const Eigen::MatrixXd expo = aug.exp();
    const Eigen::MatrixXd E = expo.topLeftCorner(d, d);
    const Eigen::VectorXd drift_step = expo.topRightCorner(d, d) * R.drift_v;
    const Eigen::MatrixXd noise = (R.B * (0.5 * dt)).exp() * S;
    Eigen::VectorXd y = v0;
    for (Eigen::Index n = 1; n < nt; ++n) {
      y = E * y + drift_step + noise * increments.values.row(n - 1).transpose();
      Y.coords.row(n) = y.transpose();
    }
    return Y;
  }

  std::vector<Expression> vol_coef;
  for (const auto& s : R.sigma) vol_coef.push_back(s.coef);
  std::vector<Eigen::VectorXd> state_shape_coords;
  for (const auto& term : R.drift.state_terms) {
    state_shape_coords.push_back(R.V.coordinates(sample(term.shape, R.V.disc())));
  }
  const bool need_psi = !y_independent;
  Eigen::VectorXd y = v0;
  for (Eigen::Index n = 1; n < nt; ++n) {
    Eigen::VectorXd drift = R.B * y + R.drift_v;
    Eigen::VectorXd yfull = y;
    if (need_psi) {
      if (psi.values.cols() != R.V.disc().size()) throw Error(ErrorKind::GridMismatch, "psi is not sampled on V's grid");
      yfull = R.V.coordinates(psi.values.row(n - 1).transpose()) + y;
    }
    const std::span<const double> ys(yfull.data(), static_cast<std::size_t>(yfull.size()));
    for (std::size_t j = 0; j < R.drift.state_terms.size(); ++j) {
      drift += R.drift.state_terms[j].coef(ys) * state_shape_coords[j];
    }
    if (R.drift.map) {
      const Eigen::VectorXd h = psi.values.row(n - 1).transpose() + R.V.synthesize(y);
      drift += R.V.coordinates(R.drift.map(h));
    }
    Eigen::VectorXd step = y + drift * dt;
    for (Eigen::Index k = 0; k < m; ++k) {
      step += vol_coef[static_cast<std::size_t>(k)](ys) * increments.values(n - 1, k) * S.col(k);
    }
    y = std::move(step);
    Y.coords.row(n) = y.transpose();
  }
  return Y;
}

std::vector<double> node_coordinates(const Discretization& disc) {
  if (disc.kind() == Discretization::Kind::Line) return disc.x().nodes();
  std::vector<double> idx(static_cast<std::size_t>(disc.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<double>(i);
  return idx;
}

GridPath reconstruct(const Curve& psi, const CoordinatePath& Y, const Subspace& V) {
  if (psi.t_grid.size() != Y.t_grid.size()) throw Error(ErrorKind::GridMismatch, "psi and Y have different time grids");
  for (std::size_t i = 0; i < psi.t_grid.size(); ++i) {
    if (std::abs(psi.t_grid[i] - Y.t_grid[i]) > 1e-12 * (1.0 + std::abs(psi.t_grid[i]))) {
      throw Error(ErrorKind::GridMismatch, "psi and Y have different time grids");
    }
  }
  if (psi.values.cols() != V.disc().size() || Y.coords.cols() != V.dim()) {
    throw Error(ErrorKind::GridMismatch, "psi or Y does not match V");
  }
  GridPath r;
  r.t_grid = psi.t_grid;
  r.x_grid = node_coordinates(V.disc());
  r.seed = Y.seed;
  r.values = psi.values;
  if (V.dim() > 0) r.values += Y.coords * V.samples().transpose();
  return r;
}

}  // namespace affreal
