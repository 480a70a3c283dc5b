#include "affreal/hjmm.hpp"

#include <string>

#include "affreal/csv.hpp"
#include "affreal/error.hpp"
#include "affreal/function.hpp"
#include "affreal/operators.hpp"
#include "affreal/realization.hpp"

namespace affreal {
namespace {

SpanBasis to_qexp_basis(const FunctionBasis& fb) {
  SpanBasis out;
  out.dim = fb.dim;
  out.keys = fb.keys;
  out.coefficient_matrix = fb.coefficient_matrix;
  for (const auto& f : fb.functions) out.functions.push_back(std::get<QExpFunction>(f));
  return out;
}

}  // namespace

QExpFunction hjm_drift_wiener(std::span<const QExpFunction> sigma) {
  QExpFunction out;
  for (const auto& s : sigma) out += multiply(s, integrate_T(s));
  return out;
}

Eigen::VectorXd hjm_drift_levy_grid(const LevySpec& driver, std::span<const QExpFunction> sigma,
                                    std::span<const double> grid) {
  if (sigma.size() != driver.dimension()) {
    throw Error(ErrorKind::InvalidArgument, "one volatility per driver component required");
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t k = 0; k < sigma.size(); ++k) {
    if (sigma[k].is_zero()) continue;
    const QExpFunction Ts = integrate_T(sigma[k]);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double x = grid[i];
      double dpsi = 0.0;
      try {
        dpsi = cumulant_derivative(driver, k, -Ts(x));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::MomentExplosion) throw;
        throw Error(ErrorKind::MomentExplosion, "at x = " + csv::format_double(x) + ", component " +
                                                    std::to_string(k + 1) + ": " + e.what());
      }
      out(static_cast<Eigen::Index>(i)) -= sigma[k](x) * dpsi;
    }
  }
  return out;
}

SpanBasis product_closure(std::span<const QExpFunction> V, double tol_rank) {
  std::vector<Function> all(V.begin(), V.end());
  std::vector<QExpFunction> integrals;
  for (const auto& v : V) integrals.push_back(integrate_T(v));
  for (const auto& h : V) {
    for (const auto& g : integrals) all.emplace_back(multiply(h, g));
  }
  std::erase_if(all, [](const Function& f) { return is_zero(f); });
  if (all.empty()) return {};
  return to_qexp_basis(echelon_basis(all, tol_rank));
}

SpanBasis hjmm_realization_subspace(std::span<const QExpFunction> sigma, int dim_cap, double tol_rank) {
  std::vector<Function> gens(sigma.begin(), sigma.end());
  std::erase_if(gens, [](const Function& f) { return is_zero(f); });
  const QEResult qe = compute_A_sigma(Translation{}, gens, dim_cap, tol_rank);
  if (qe.status != QEStatus::QuasiExponential) {
    throw Error(ErrorKind::NotQuasiExponential,
                "A_sigma did not stabilize below dimension " + std::to_string(dim_cap));
  }
  std::vector<QExpFunction> base;
  for (const auto& f : qe.basis.functions) base.push_back(std::get<QExpFunction>(f));
  return product_closure(base, tol_rank);
}

}  // namespace affreal
