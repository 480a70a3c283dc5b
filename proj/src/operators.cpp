#include "affreal/operators.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "affreal/error.hpp"
#include "affreal/special.hpp"

namespace affreal {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

constexpr double kPi = std::numbers::pi;

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw Error(ErrorKind::InvalidArgument, std::string(what) + " must be positive");
  }
}

// Multi-indices beta in N^d with |beta| < count, ordered by |beta| then
// lexicographically descending.
std::vector<ModeLabel> multi_indices(int d, int count) {
  std::vector<ModeLabel> out;
  for (int total = 0; total < count; ++total) {
    ModeLabel beta(static_cast<std::size_t>(d), 0);
    auto rec = [&](auto&& self, int pos, int left) -> void {
      if (pos == d - 1) {
        beta[static_cast<std::size_t>(pos)] = left;
        out.push_back(beta);
        return;
      }
      for (int k = left; k >= 0; --k) {
        beta[static_cast<std::size_t>(pos)] = k;
        self(self, pos + 1, left - k);
      }
    };
    rec(rec, 0, total);
  }
  return out;
}

int label_total(const ModeLabel& label) {
  int s = 0;
  for (int b : label) s += b;
  return s;
}

void check_label(const OperatorSpec& op, const ModeLabel& label) {
  const bool ok = std::visit(
      Overloaded{
          [&](const HeatDisk&) {
            return label.size() == 3 && label[0] >= 0 && label[1] >= 1 &&
                   (label[2] == 0 || (label[2] == 1 && label[0] >= 1));
          },
          [&](const Hermite& h) {
            if (static_cast<int>(label.size()) != h.d) return false;
            for (int b : label) if (b < 0) return false;
            return true;
          },
          [&](const Laguerre& l) {
            if (static_cast<int>(label.size()) != l.d) return false;
            for (int b : label) if (b < 0) return false;
            return true;
          },
          [&](const Cable&) { return label.size() == 1 && label[0] >= 1; },
          [&](const TermStructure2&) { return label.size() == 1 && label[0] >= 1; },
          [&](const auto&) { return false; },
      },
      op);
  if (!ok) {
    throw Error(ErrorKind::DomainError,
                "mode " + mode_text(label) + " is not in the catalog of " + operator_name(op));
  }
}

// Tolerance for boundary values of a quasi-exponential on [0, len].
double boundary_tolerance(const QExpFunction& f, double len) {
  double scale = 1.0;
  for (const auto& t : f.terms()) {
    scale += std::abs(t.coef) * std::pow(len, t.power) * std::exp(std::max(0.0, t.rate) * len);
  }
  return 1e-9 * scale;
}

void require_dirichlet(const QExpFunction& f, double len, const std::string& name) {
  const double tol = boundary_tolerance(f, len);
  if (std::abs(f(0.0)) > tol || std::abs(f(len)) > tol) {
    throw Error(ErrorKind::DomainError,
                name + " needs zero boundary values, got f(0) = " + std::to_string(f(0.0)) +
                    ", f(" + std::to_string(len) + ") = " + std::to_string(f(len)));
  }
}

void require_interval(const Discretization& disc, double len, const std::string& name) {
  const auto& g = disc.x();
  if (std::abs(g.x0) > 1e-9 * len || std::abs(g.back() - len) > 1e-9 * len) {
    throw Error(ErrorKind::DomainError, name + " grid must span [0, " + std::to_string(len) + "]");
  }
}

void require_interior(int n) {
  if (n - 2 < 4) throw Error(ErrorKind::GridTooSmall, "fewer than 4 interior grid points");
}

using Triplets = std::vector<Eigen::Triplet<double>>;

// Forward difference scaled by c on one line of nodes offset, offset+stride, ...;
// the last node keeps a zero row.
void add_forward(Triplets& t, Eigen::Index offset, Eigen::Index stride, int n, double dx, double c) {
  for (int i = 0; i + 1 < n; ++i) {
    const Eigen::Index row = offset + i * stride;
    t.emplace_back(row, row, -c / dx);
    t.emplace_back(row, row + stride, c / dx);
  }
}

}  // namespace

void validate(const OperatorSpec& op) {
  std::visit(Overloaded{
                 [](const Translation&) {},
                 [](const Transport& t) { require_positive(t.speed, "transport speed"); },
                 [](const Cable& c) {
                   require_positive(c.tau, "tau");
                   require_positive(c.lambda_c, "lambda_c");
                 },
                 [](const HeatDisk& h) { require_positive(h.a, "diffusivity a"); },
                 [](const Hermite& h) {
                   if (h.d < 1) throw Error(ErrorKind::InvalidArgument, "dimension d must be positive");
                 },
                 [](const Laguerre& l) {
                   if (l.d < 1) throw Error(ErrorKind::InvalidArgument, "dimension d must be positive");
                 },
                 [](const TermStructure2& t) { require_positive(t.kappa, "kappa"); },
             },
             op);
}

std::string operator_name(const OperatorSpec& op) {
  return std::visit(Overloaded{
                        [](const Translation&) { return std::string("translation"); },
                        [](const Transport& t) {
                          return std::string(t.geometry == TransportGeometry::HalfLine
                                                 ? "transport-half-line"
                                                 : "transport-mortality");
                        },
                        [](const Cable&) { return std::string("cable"); },
                        [](const HeatDisk&) { return std::string("heat-disk"); },
                        [](const Hermite&) { return std::string("hermite"); },
                        [](const Laguerre&) { return std::string("laguerre"); },
                        [](const TermStructure2&) { return std::string("term-structure-2"); },
                    },
                    op);
}

bool is_spectral(const OperatorSpec& op) {
  return std::holds_alternative<HeatDisk>(op) || std::holds_alternative<Hermite>(op) ||
         std::holds_alternative<Laguerre>(op);
}

bool is_transport_like(const OperatorSpec& op) {
  return std::holds_alternative<Translation>(op) || std::holds_alternative<Transport>(op);
}

FunctionKind symbolic_kind(const OperatorSpec& op) {
  if (is_spectral(op)) return FunctionKind::Spectral;
  if (const auto* t = std::get_if<Transport>(&op); t && t->geometry == TransportGeometry::MortalityWedge) {
    return FunctionKind::Separable;
  }
  return FunctionKind::QExp;
}

double mode_generator_eigenvalue(const OperatorSpec& op, const ModeLabel& label) {
  check_label(op, label);
  return std::visit(
      Overloaded{
          [&](const HeatDisk& h) {
            const double z = bessel_zero(label[0], label[1]);
            return -h.a * z * z;
          },
          [&](const Hermite&) { return static_cast<double>(label_total(label)); },
          [&](const Laguerre&) { return static_cast<double>(label_total(label)); },
          [&](const Cable& c) {
            const double n = label[0];
            return -(c.lambda_c * c.lambda_c * n * n + 1.0) / c.tau;
          },
          [&](const TermStructure2& t) {
            const double n = label[0];
            return -(1.0 + n * n * kPi * kPi * t.kappa * t.kappa) / (2.0 * t.kappa);
          },
          [&](const auto&) -> double {
            throw Error(ErrorKind::UnsupportedOperator, "continuous spectrum");
          },
      },
      op);
}

std::vector<EigenPair> heat_disk_eigenpairs(const HeatDisk& op, int max_p, int max_q) {
  validate(op);
  std::vector<EigenPair> out;
  for (int p = 0; p <= max_p; ++p) {
    for (int q = 1; q <= max_q; ++q) {
      const double z = bessel_zero(p, q);
      for (int c = 0; c <= (p > 0 ? 1 : 0); ++c) {
        ModeLabel label{p, q, c};
        out.push_back({z * z, -op.a * z * z, SpectralFn{{{label, 1.0}}}, label});
      }
    }
  }
  return out;
}

std::vector<EigenPair> eigenpairs(const OperatorSpec& op, int count) {
  validate(op);
  if (count < 1) throw Error(ErrorKind::InvalidArgument, "eigenpair count must be positive");
  std::vector<EigenPair> out;
  std::visit(
      Overloaded{
          [&](const Cable& c) {
            for (int n = 1; n <= count; ++n) {
              out.push_back({static_cast<double>(n) * n,
                             -(c.lambda_c * c.lambda_c * n * n + 1.0) / c.tau,
                             QExpFunction::monomial(1.0, 0, 0.0, n, Trig::Sin), {n}});
            }
          },
          [&](const TermStructure2& t) {
            for (int n = 1; n <= count; ++n) {
              const double lam = (1.0 + n * n * kPi * kPi * t.kappa * t.kappa) / (2.0 * t.kappa);
              out.push_back({lam, -lam, QExpFunction::monomial(1.0, 0, -1.0 / t.kappa, n * kPi, Trig::Sin),
                             {n}});
            }
          },
          [&](const HeatDisk& h) { out = heat_disk_eigenpairs(h, count - 1, count); },
          [&](const Hermite& h) {
            for (auto& beta : multi_indices(h.d, count)) {
              const double n = label_total(beta);
              out.push_back({n, n, SpectralFn{{{beta, 1.0}}}, beta});
            }
          },
          [&](const Laguerre& l) {
            for (auto& beta : multi_indices(l.d, count)) {
              const double n = label_total(beta);
              out.push_back({n, n, SpectralFn{{{beta, 1.0}}}, beta});
            }
          },
          [&](const auto&) {
            throw Error(ErrorKind::UnsupportedOperator,
                        operator_name(op) + " has continuous spectrum; no eigenpairs");
          },
      },
      op);
  return out;
}

double evaluate_mode(const OperatorSpec& op, const ModeLabel& label, std::span<const double> point) {
  check_label(op, label);
  auto need = [&](std::size_t n) {
    if (point.size() != n) {
      throw Error(ErrorKind::InvalidArgument, "point has " + std::to_string(point.size()) +
                                                  " coordinates, expected " + std::to_string(n));
    }
  };
  return std::visit(
      Overloaded{
          [&](const Cable&) {
            need(1);
            return std::sin(label[0] * point[0]);
          },
          [&](const TermStructure2& t) {
            need(1);
            return std::exp(-point[0] / t.kappa) * std::sin(label[0] * kPi * point[0]);
          },
          [&](const HeatDisk&) {
            need(2);
            const double z = bessel_zero(label[0], label[1]);
            const double ang = label[0] * point[1];
            return (label[2] == 0 ? std::cos(ang) : std::sin(ang)) * bessel_j(label[0], z * point[0]);
          },
          [&](const Hermite& h) {
            need(static_cast<std::size_t>(h.d));
            double v = 1.0;
            for (std::size_t i = 0; i < label.size(); ++i) v *= hermite(label[i], point[i]);
            return v;
          },
          [&](const Laguerre& l) {
            need(static_cast<std::size_t>(l.d));
            double v = 1.0;
            for (std::size_t i = 0; i < label.size(); ++i) v *= laguerre(label[i], point[i]);
            return v;
          },
          [&](const auto&) -> double { throw Error(ErrorKind::UnsupportedOperator, "no modes"); },
      },
      op);
}

std::string mode_text(const ModeLabel& label) {
  std::string s;
  for (std::size_t i = 0; i < label.size(); ++i) {
    if (i) s += '-';
    s += std::to_string(label[i]);
  }
  return s;
}

Function apply_exact(const OperatorSpec& op, const Function& f) {
  validate(op);
  const FunctionKind want = symbolic_kind(op);
  if (kind_of(f) != want) {
    throw Error(ErrorKind::DomainError, operator_name(op) + " acts exactly on " +
                                            std::string(to_string(want)) + " functions, got " +
                                            std::string(to_string(kind_of(f))));
  }
  if (is_spectral(op)) {
    SpectralFn out;
    for (const auto& [label, c] : std::get<SpectralFn>(f).coefs) {
      const double lam = mode_generator_eigenvalue(op, label);
      if (c * lam != 0.0) out.coefs[label] = c * lam;
    }
    return out;
  }
  if (want == FunctionKind::Separable) {
    const double speed = std::get<Transport>(op).speed;
    SeparableFn out;
    for (const auto& [xi, h] : std::get<SeparableFn>(f).terms) {
      QExpFunction dh = speed * differentiate(h);
      if (!dh.is_zero() && !xi.is_zero()) out.terms.emplace_back(xi, std::move(dh));
    }
    return out;
  }
  const auto& q = std::get<QExpFunction>(f);
  return std::visit(
      Overloaded{
          [&](const Translation&) -> Function { return differentiate(q); },
          [&](const Transport& t) -> Function { return t.speed * differentiate(q); },
          [&](const Cable& c) -> Function {
            require_dirichlet(q, kPi, "cable operator");
            const QExpFunction d2 = differentiate(differentiate(q));
            return (1.0 / c.tau) * (c.lambda_c * c.lambda_c * d2 - q);
          },
          [&](const TermStructure2& t) -> Function {
            require_dirichlet(q, 1.0, "term-structure operator");
            const QExpFunction d1 = differentiate(q);
            return 0.5 * t.kappa * differentiate(d1) + d1;
          },
          [&](const auto&) -> Function { throw Error(ErrorKind::DomainError, "unreachable"); },
      },
      op);
}

Eigen::SparseMatrix<double> grid_operator(const OperatorSpec& op, const Discretization& disc) {
  validate(op);
  const auto n = disc.size();
  Triplets t;
  if (is_spectral(op)) {
    if (disc.kind() != Discretization::Kind::Modal) {
      throw Error(ErrorKind::DomainError, operator_name(op) + " needs a modal discretization");
    }
    for (std::size_t i = 0; i < disc.modes().size(); ++i) {
      const auto idx = static_cast<Eigen::Index>(i);
      t.emplace_back(idx, idx, mode_generator_eigenvalue(op, disc.modes()[i]));
    }
  } else if (symbolic_kind(op) == FunctionKind::Separable) {
    if (disc.kind() != Discretization::Kind::Plane) {
      throw Error(ErrorKind::DomainError, "mortality transport needs a characteristic plane grid");
    }
    const auto& s = disc.x();
    require_interior(s.n);
    const double speed = std::get<Transport>(op).speed;
    for (int ib = 0; ib < disc.b().n; ++ib) {
      add_forward(t, static_cast<Eigen::Index>(ib) * s.n, 1, s.n, s.dx, speed);
    }
  } else {
    if (disc.kind() != Discretization::Kind::Line) {
      throw Error(ErrorKind::DomainError, operator_name(op) + " needs a line grid");
    }
    const auto& g = disc.x();
    require_interior(g.n);
    const double dx = g.dx;
    std::visit(
        Overloaded{
            [&](const Translation&) { add_forward(t, 0, 1, g.n, dx, 1.0); },
            [&](const Transport& tr) { add_forward(t, 0, 1, g.n, dx, tr.speed); },
            [&](const Cable& c) {
              require_interval(disc, kPi, "cable");
              const double k = c.lambda_c * c.lambda_c / (c.tau * dx * dx);
              for (int i = 1; i + 1 < g.n; ++i) {
                t.emplace_back(i, i - 1, k);
                t.emplace_back(i, i, -2.0 * k - 1.0 / c.tau);
                t.emplace_back(i, i + 1, k);
              }
            },
            [&](const TermStructure2& ts) {
              require_interval(disc, 1.0, "term-structure");
              const double k = 0.5 * ts.kappa / (dx * dx);
              for (int i = 1; i + 1 < g.n; ++i) {
                t.emplace_back(i, i - 1, k);
                t.emplace_back(i, i, -2.0 * k - 1.0 / dx);
                t.emplace_back(i, i + 1, k + 1.0 / dx);
              }
            },
            [&](const auto&) {},
        },
        op);
  }
  Eigen::SparseMatrix<double> m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

Eigen::VectorXd apply_grid(const OperatorSpec& op, const Eigen::VectorXd& values,
                           const Discretization& disc) {
  if (values.size() != disc.size()) {
    throw Error(ErrorKind::GridMismatch, "value vector does not match the grid");
  }
  return grid_operator(op, disc) * values;
}

}  // namespace affreal
