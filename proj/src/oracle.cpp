#include "affreal/oracle.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>

#include <Eigen/SparseLU>

#include "affreal/csv.hpp"
#include "affreal/error.hpp"

namespace affreal {
namespace {

bool second_order(const OperatorSpec& op) { return !is_transport_like(op); }

std::vector<int> pinned_nodes(const OperatorSpec& op, const Discretization& disc) {
  if ((std::holds_alternative<Cable>(op) || std::holds_alternative<TermStructure2>(op)) &&
      disc.kind() == Discretization::Kind::Line) {
    return {0, disc.x().n - 1};
  }
  return {};
}

double speed_of(const OperatorSpec& op) {
  if (const auto* t = std::get_if<Transport>(&op)) return t->speed;
  return 1.0;
}

}  // namespace

double default_theta(const OperatorSpec& op, const Discretization& disc, double dt) {
  if (second_order(op)) return 0.5;
  return speed_of(op) * dt <= disc.x().dx * (1.0 + 1e-12) ? 0.0 : 1.0;
}

GridPath solve_spde_grid(const OperatorSpec& op, const DriftSpec& alpha, std::span<const VolSpec> sigma,
                         const Eigen::VectorXd& h0, const IncrementMatrix& increments, const Subspace& frame,
                         std::optional<double> theta_opt) {
  const auto& disc = frame.disc();
  if (h0.size() != disc.size()) throw Error(ErrorKind::GridMismatch, "h0 does not match the grid");
  if (static_cast<std::size_t>(increments.dimension()) != sigma.size()) {
    throw Error(ErrorKind::GridMismatch, "driver dimension does not match the number of volatilities");
  }
  const double dt = increments.dt;
  if (!(dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "increment dt must be positive");
  const double theta = theta_opt.value_or(default_theta(op, disc, dt));
  if (theta < 0.0 || theta > 1.0) throw Error(ErrorKind::InvalidArgument, "theta must lie in [0, 1]");
  if (second_order(op) && theta < 0.5) {
    throw Error(ErrorKind::UnstableConfig, "theta < 1/2 is not unconditionally stable for " + operator_name(op));
  }
  if (!second_order(op) && theta < 0.5 && speed_of(op) * dt > disc.x().dx * (1.0 + 1e-12)) {
    throw Error(ErrorKind::UnstableConfig, "explicit upwind step violates the CFL limit speed * dt <= dx");
  }

  const Eigen::SparseMatrix<double> A = grid_operator(op, disc);
  Eigen::SparseMatrix<double> I(disc.size(), disc.size());
  I.setIdentity();
  Eigen::SparseMatrix<double> explicit_part = I + ((1.0 - theta) * dt) * A;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  if (theta > 0.0) {
    Eigen::SparseMatrix<double> M = I - (theta * dt) * A;
    M.makeCompressed();
    lu.compute(M);
    if (lu.info() != Eigen::Success) throw Error(ErrorKind::LinearSolveFailure, "theta-scheme matrix is singular");
  }

  const SampledDrift drift(alpha, frame);
  std::vector<SampledVol> vols;
  for (const auto& s : sigma) vols.emplace_back(s, frame);
  const auto pinned = pinned_nodes(op, disc);

  GridPath path;
  const Eigen::Index n_steps = increments.n_steps();
  path.t_grid = uniform_times(dt * static_cast<double>(n_steps), static_cast<int>(n_steps));
  path.x_grid = node_coordinates(disc);
  path.seed = increments.seed;
  path.values.resize(n_steps + 1, disc.size());
  path.values.row(0) = h0.transpose();
  Eigen::VectorXd r = h0;
  for (Eigen::Index n = 0; n < n_steps; ++n) {
    Eigen::VectorXd rhs = explicit_part * r + dt * drift(r);
    for (std::size_t k = 0; k < vols.size(); ++k) {
      const double dx = increments.values(n, static_cast<Eigen::Index>(k));
      if (dx != 0.0) rhs += (vols[k].factor(r) * dx) * vols[k].shape();
    }
    if (theta > 0.0) {
      r = lu.solve(rhs);
    } else {
      r = std::move(rhs);
    }
    for (int i : pinned) r(i) = h0(i);
    path.values.row(n + 1) = r.transpose();
  }
  return path;
}

PathComparison compare_paths(const GridPath& a, const GridPath& b, const Discretization& disc) {
  if (a.values.rows() != b.values.rows() || a.values.cols() != b.values.cols() || a.values.cols() != disc.size()) {
    throw Error(ErrorKind::GridMismatch, "paths have different shapes");
  }
  for (std::size_t i = 0; i < a.t_grid.size() && i < b.t_grid.size(); ++i) {
    if (std::abs(a.t_grid[i] - b.t_grid[i]) > 1e-9 * (1.0 + std::abs(a.t_grid[i]))) {
      throw Error(ErrorKind::GridMismatch, "paths have different time grids");
    }
  }
  PathComparison c;
  double sup_a = 0.0;
  for (Eigen::Index n = 0; n < a.values.rows(); ++n) {
    const Eigen::VectorXd ra = a.values.row(n).transpose();
    const Eigen::VectorXd d = ra - b.values.row(n).transpose();
    const double e = disc.norm(d);
    c.per_time.push_back(e);
    c.sup_error = std::max(c.sup_error, e);
    sup_a = std::max(sup_a, disc.norm(ra));
  }
  c.relative = sup_a > 0.0 ? c.sup_error / sup_a : c.sup_error;
  return c;
}

std::vector<double> foliation_distance(const GridPath& path, const Curve& psi, const Subspace& V) {
  if (path.values.rows() != psi.values.rows() || path.values.cols() != psi.values.cols() ||
      path.values.cols() != V.disc().size()) {
    throw Error(ErrorKind::GridMismatch, "path, psi and V do not share a grid");
  }
  std::vector<double> out;
  for (Eigen::Index n = 0; n < path.values.rows(); ++n) {
    const Eigen::VectorXd d = (path.values.row(n) - psi.values.row(n)).transpose();
    out.push_back(V.disc().norm(V.residual(d)));
  }
  return out;
}

double tangency_residual(const OperatorSpec& op, const DriftSpec& alpha, const Curve& psi, const Subspace& V,
                         std::span<const int> t_indices, std::span<const Eigen::VectorXd> h_coords) {
  const auto A = grid_operator(op, V.disc());
  const SampledDrift drift(alpha, V);
  const auto nt = static_cast<int>(psi.t_grid.size());
  double worst = 0.0;
  for (int n : t_indices) {
    if (n < 1 || n + 1 >= nt) continue;
    const double span = psi.t_grid[static_cast<std::size_t>(n + 1)] - psi.t_grid[static_cast<std::size_t>(n - 1)];
    const Eigen::VectorXd dpsi = (psi.values.row(n + 1) - psi.values.row(n - 1)).transpose() / span;
    const Eigen::VectorXd base = psi.values.row(n).transpose();
    for (const auto& c : h_coords) {
      const Eigen::VectorXd h = base + V.synthesize(c);
      const Eigen::VectorXd g = A * h + drift(h) - dpsi;
      worst = std::max(worst, V.disc().norm(V.residual(g)));
    }
  }
  return worst;
}

void write_grid_path_csv(std::ostream& out, const GridPath& path) {
  std::vector<std::string> head{"x"};
  for (double x : path.x_grid) head.push_back(csv::format_double(x));
  csv::write_row(out, head);
  std::vector<double> row;
  for (Eigen::Index n = 0; n < path.values.rows(); ++n) {
    row.assign(1, path.t_grid[static_cast<std::size_t>(n)]);
    for (Eigen::Index i = 0; i < path.values.cols(); ++i) row.push_back(path.values(n, i));
    csv::write_row(out, row);
  }
}

GridPath read_grid_path_csv(std::istream& in) {
  const csv::Table t = csv::read_table(in);
  GridPath p;
  if (t.header.empty() || t.header.front() != "x") {
    throw Error(ErrorKind::ParseError, "grid path CSV must start with an x-grid row");
  }
  for (std::size_t i = 1; i < t.header.size(); ++i) {
    const std::string& cell = t.header[i];
    double v = 0.0;
    const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
      throw Error(ErrorKind::ParseError, "x-grid entry " + std::to_string(i) + " is not a number");
    }
    p.x_grid.push_back(v);
  }
  p.values.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(p.x_grid.size()));
  for (std::size_t n = 0; n < t.rows.size(); ++n) {
    p.t_grid.push_back(t.rows[n][0]);
    for (std::size_t i = 0; i < p.x_grid.size(); ++i) {
      p.values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(i)) = t.rows[n][i + 1];
    }
  }
  return p;
}

}  // namespace affreal
