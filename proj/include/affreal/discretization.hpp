#pragma once

#include <vector>

#include <Eigen/Dense>

#include "affreal/function.hpp"
#include "affreal/qexp.hpp"

namespace affreal {

/// Nodes x0 + i*dx, i = 0..n-1.
struct UniformGrid {
  double x0 = 0.0;
  double dx = 1.0;
  int n = 0;

  double node(int i) const { return x0 + i * dx; }
  double back() const { return node(n - 1); }
  std::vector<double> nodes() const;
  static UniformGrid span(double a, double b, int intervals);
  bool operator==(const UniformGrid&) const = default;
};

/// A finite representation of the state space: nodal values on a line or a
/// (b, s) characteristic plane, or coefficients on a set of spectral modes.
/// `weights` define the working inner product <f, g> = sum_i w_i f_i g_i;
/// they vanish on nodes outside the analysis window.
class Discretization {
 public:
  enum class Kind { Line, Plane, Modal };

  /// Trapezoid weights times weight(x) on [x0, window]; zero beyond.
  static Discretization line(UniformGrid x, double window, const QExpFunction& weight);
  /// Tensor grid, node index = ib * s.n + is; weight applies in s.
  static Discretization plane(UniformGrid b, UniformGrid s, double s_window,
                              const QExpFunction& weight);
  /// Weight 1 per mode unless `mode_weights` is given.
  static Discretization modal(std::vector<ModeLabel> modes, std::vector<double> mode_weights = {});

  Kind kind() const { return kind_; }
  Eigen::Index size() const { return weights_.size(); }
  const Eigen::VectorXd& weights() const { return weights_; }
  const UniformGrid& x() const { return x_; }
  const UniformGrid& b() const { return b_; }
  const std::vector<ModeLabel>& modes() const { return modes_; }
  double window() const { return window_; }
  const QExpFunction& weight_function() const { return weight_fn_; }

  double inner(const Eigen::VectorXd& f, const Eigen::VectorXd& g) const;
  double norm(const Eigen::VectorXd& f) const;

  /// Same geometry with a different weight function (ignored for modal).
  Discretization reweighted(const QExpFunction& weight) const;

  bool same_nodes(const Discretization& other) const;

 private:
  Kind kind_ = Kind::Line;
  UniformGrid x_;  // line nodes, or s nodes of the plane
  UniformGrid b_;
  std::vector<ModeLabel> modes_;
  Eigen::VectorXd weights_;
  double window_ = 0.0;
  QExpFunction weight_fn_;
};

/// Values of `f` on the nodes (or modes) of `disc`.
Eigen::VectorXd sample(const Function& f, const Discretization& disc);

}  // namespace affreal
