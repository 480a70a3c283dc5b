#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "affreal/levy.hpp"
#include "affreal/operators.hpp"
#include "affreal/realization.hpp"

namespace affreal {

/// Default theta: 1/2 for second-order and spectral operators; for
/// transport, explicit upwind (0) when speed * dt <= dx, else implicit (1).
double default_theta(const OperatorSpec& op, const Discretization& disc, double dt);

/// Full-grid theta scheme
///   (I - theta dt A) r_{n+1} = (I + (1 - theta) dt A) r_n + dt alpha(r_n) + sum_k sigma^k(r_n) dX^k_n
/// on the nodes of `frame.disc()`. `frame` also supplies the coordinates y
/// for state-dependent coefficients. Dirichlet nodes keep their initial
/// values. Throws UnstableConfig for theta < 1/2 on second-order operators
/// or an explicit transport step beyond the CFL limit.
GridPath solve_spde_grid(const OperatorSpec& op, const DriftSpec& alpha, std::span<const VolSpec> sigma,
                         const Eigen::VectorXd& h0, const IncrementMatrix& increments, const Subspace& frame,
                         std::optional<double> theta = std::nullopt);

struct PathComparison {
  /// sup over t of the weighted L2 norm of a(t) - b(t).
  double sup_error = 0.0;
  /// sup_error / sup over t of ||a(t)||.
  double relative = 0.0;
  std::vector<double> per_time;
};

PathComparison compare_paths(const GridPath& a, const GridPath& b, const Discretization& disc);

/// Per time: ||Pi_U (path(t) - psi(t))|| in the working inner product.
std::vector<double> foliation_distance(const GridPath& path, const Curve& psi, const Subspace& V);

/// max over interior time indices and states h = psi(t) + sum_i c_i v_i of
/// ||Pi_U (A_grid h + alpha(h) - psi'(t))||, psi' by central differences.
double tangency_residual(const OperatorSpec& op, const DriftSpec& alpha, const Curve& psi, const Subspace& V,
                         std::span<const int> t_indices, std::span<const Eigen::VectorXd> h_coords);

/// First row: x-grid; then one row `t,value_1..value_N` per time.
void write_grid_path_csv(std::ostream& out, const GridPath& path);
GridPath read_grid_path_csv(std::istream& in);

}  // namespace affreal
