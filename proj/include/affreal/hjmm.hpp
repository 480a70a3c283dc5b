#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "affreal/levy.hpp"
#include "affreal/qexp.hpp"

namespace affreal {

/// sum_k sigma^k * T sigma^k, the no-arbitrage forward-rate drift for a
/// standard Wiener driver.
QExpFunction hjm_drift_wiener(std::span<const QExpFunction> sigma);

/// -sum_k sigma^k(x) dPsi_k(-T sigma^k(x)) on the grid, the drift
/// d/dx Psi(-T sigma) for a general Levy driver with independent components.
/// Throws MomentExplosion naming the grid point where -T sigma leaves the
/// exponential-moment region.
Eigen::VectorXd hjm_drift_levy_grid(const LevySpec& driver, std::span<const QExpFunction> sigma,
                                    std::span<const double> grid);

/// V + P(V), P(V) spanned by v_i * T v_j, as a reduced echelon basis.
SpanBasis product_closure(std::span<const QExpFunction> V, double tol_rank = 1e-9);

/// A_sigma + P(A_sigma) under d/dx; contains every sigma^k and the Wiener
/// drift. Throws NotQuasiExponential when A_sigma does not stabilize below
/// dim_cap.
SpanBasis hjmm_realization_subspace(std::span<const QExpFunction> sigma, int dim_cap = 50,
                                    double tol_rank = 1e-9);

}  // namespace affreal
