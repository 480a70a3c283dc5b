#include "affreal/discretization.hpp"

#include <cmath>
#include <map>

#include "affreal/error.hpp"

namespace affreal {
namespace {

Eigen::VectorXd trapezoid(const UniformGrid& g, double window, const QExpFunction& weight) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(g.n);
  int last = -1;
  for (int i = 0; i < g.n; ++i) {
    if (g.node(i) <= window + 1e-9 * g.dx) last = i;
  }
  if (last < 1) throw Error(ErrorKind::GridTooSmall, "analysis window holds fewer than two nodes");
  for (int i = 0; i <= last; ++i) {
    const double wf = weight(g.node(i));
    if (!(wf > 0.0) || !std::isfinite(wf)) {
      throw Error(ErrorKind::InvalidArgument, "inner-product weight must be positive on the grid");
    }
    w(i) = (i == 0 || i == last ? 0.5 : 1.0) * g.dx * wf;
  }
  return w;
}

}  // namespace

std::vector<double> UniformGrid::nodes() const {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = node(i);
  return v;
}

UniformGrid UniformGrid::span(double a, double b, int intervals) {
  if (intervals <= 0 || !(b > a)) throw Error(ErrorKind::InvalidArgument, "empty grid span");
  return UniformGrid{a, (b - a) / intervals, intervals + 1};
}

Discretization Discretization::line(UniformGrid x, double window, const QExpFunction& weight) {
  Discretization d;
  d.kind_ = Kind::Line;
  d.x_ = x;
  d.window_ = window;
  d.weight_fn_ = weight;
  d.weights_ = trapezoid(x, window, weight);
  return d;
}

Discretization Discretization::plane(UniformGrid b, UniformGrid s, double s_window,
                                     const QExpFunction& weight) {
  Discretization d;
  d.kind_ = Kind::Plane;
  d.x_ = s;
  d.b_ = b;
  d.window_ = s_window;
  d.weight_fn_ = weight;
  const Eigen::VectorXd wb = trapezoid(b, b.back(), QExpFunction::constant(1.0));
  const Eigen::VectorXd ws = trapezoid(s, s_window, weight);
  d.weights_.resize(static_cast<Eigen::Index>(b.n) * s.n);
  for (int ib = 0; ib < b.n; ++ib) {
    d.weights_.segment(static_cast<Eigen::Index>(ib) * s.n, s.n) = wb(ib) * ws;
  }
  return d;
}

Discretization Discretization::modal(std::vector<ModeLabel> modes, std::vector<double> mode_weights) {
  if (modes.empty()) throw Error(ErrorKind::GridTooSmall, "modal discretization without modes");
  Discretization d;
  d.kind_ = Kind::Modal;
  d.weights_ = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(modes.size()));
  if (!mode_weights.empty()) {
    if (mode_weights.size() != modes.size()) {
      throw Error(ErrorKind::InvalidArgument, "one weight per mode required");
    }
    for (std::size_t i = 0; i < modes.size(); ++i) {
      if (!(mode_weights[i] > 0.0)) throw Error(ErrorKind::InvalidArgument, "mode weights must be positive");
      d.weights_(static_cast<Eigen::Index>(i)) = mode_weights[i];
    }
  }
  d.modes_ = std::move(modes);
  d.weight_fn_ = QExpFunction::constant(1.0);
  return d;
}

double Discretization::inner(const Eigen::VectorXd& f, const Eigen::VectorXd& g) const {
  if (f.size() != size() || g.size() != size()) {
    throw Error(ErrorKind::GridMismatch, "vector length does not match the discretization");
  }
  return (weights_.array() * f.array() * g.array()).sum();
}

double Discretization::norm(const Eigen::VectorXd& f) const { return std::sqrt(inner(f, f)); }

Discretization Discretization::reweighted(const QExpFunction& weight) const {
  switch (kind_) {
    case Kind::Line: return line(x_, window_, weight);
    case Kind::Plane: return plane(b_, x_, window_, weight);
    case Kind::Modal: return *this;
  }
  return *this;
}

bool Discretization::same_nodes(const Discretization& other) const {
  return kind_ == other.kind_ && x_ == other.x_ && b_ == other.b_ && modes_ == other.modes_ &&
         size() == other.size();
}

Eigen::VectorXd sample(const Function& f, const Discretization& disc) {
  Eigen::VectorXd v(disc.size());
  switch (kind_of(f)) {
    case FunctionKind::QExp: {
      if (disc.kind() != Discretization::Kind::Line) {
        throw Error(ErrorKind::DomainError, "quasi-exponential functions sample on line grids only");
      }
      const auto& q = std::get<QExpFunction>(f);
      for (int i = 0; i < disc.x().n; ++i) v(i) = q(disc.x().node(i));
      return v;
    }
    case FunctionKind::Separable: {
      if (disc.kind() != Discretization::Kind::Plane) {
        throw Error(ErrorKind::DomainError, "separable functions sample on characteristic planes only");
      }
      v.setZero();
      const auto& s = disc.x();
      const auto& b = disc.b();
      for (const auto& [xi, h] : std::get<SeparableFn>(f).terms) {
        std::vector<double> hs(static_cast<std::size_t>(s.n));
        for (int is = 0; is < s.n; ++is) hs[static_cast<std::size_t>(is)] = h(s.node(is));
        for (int ib = 0; ib < b.n; ++ib) {
          const double xv = xi(b.node(ib));
          for (int is = 0; is < s.n; ++is) {
            v(static_cast<Eigen::Index>(ib) * s.n + is) += xv * hs[static_cast<std::size_t>(is)];
          }
        }
      }
      return v;
    }
    case FunctionKind::Spectral: {
      if (disc.kind() != Discretization::Kind::Modal) {
        throw Error(ErrorKind::DomainError, "spectral functions sample on modal discretizations only");
      }
      std::map<ModeLabel, Eigen::Index> pos;
      for (std::size_t i = 0; i < disc.modes().size(); ++i) {
        pos[disc.modes()[i]] = static_cast<Eigen::Index>(i);
      }
      v.setZero();
      for (const auto& [label, c] : std::get<SpectralFn>(f).coefs) {
        auto it = pos.find(label);
        if (it == pos.end()) {
          if (c == 0.0) continue;
          throw Error(ErrorKind::DomainError, "mode not present in the modal discretization");
        }
        v(it->second) = c;
      }
      return v;
    }
    case FunctionKind::Grid: {
      const auto& g = std::get<GridFn>(f).values;
      if (static_cast<Eigen::Index>(g.size()) != disc.size()) {
        throw Error(ErrorKind::GridMismatch, "grid samples do not match the discretization size");
      }
      for (std::size_t i = 0; i < g.size(); ++i) v(static_cast<Eigen::Index>(i)) = g[i];
      return v;
    }
  }
  return v;
}

}  // namespace affreal
