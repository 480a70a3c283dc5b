#pragma once

#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "affreal/discretization.hpp"
#include "affreal/function.hpp"

namespace affreal {

/// A = d/dx on the half-line (forward-curve shift).
struct Translation {};

enum class TransportGeometry {
  HalfLine,        // C = R_+, v = speed
  MortalityWedge,  // C = {(s, y) : y >= -s}, v = (1, -1)
};

/// A = <v, grad>. Functions live in characteristic coordinates (b, s) with
/// y = x(b) + s v, x(b) on the inflow boundary; A acts as d/ds.
struct Transport {
  TransportGeometry geometry = TransportGeometry::HalfLine;
  double speed = 1.0;
};

/// A = (lambda_c^2 d^2/dx^2 - 1) / tau on (0, pi), Dirichlet.
struct Cable {
  double tau = 1.0;
  double lambda_c = 1.0;
};

/// A = a Laplacian on the unit disk, Dirichlet. Spectral only.
struct HeatDisk {
  double a = 1.0;
};

/// A = -Laplacian/2 + <x, grad> on R^d with Gaussian weight. Spectral only.
struct Hermite {
  int d = 1;
};

/// A = -(<x, d^2> + <1 - x, grad>) on R_+^d with exponential weight. Spectral only.
struct Laguerre {
  int d = 1;
};

/// SPDE drift (kappa/2) d^2/dx^2 + d/dx on (0, 1), Dirichlet. The catalog
/// eigenvalues are those of -(kappa/2) d^2/dx^2 - d/dx.
struct TermStructure2 {
  double kappa = 1.0;
};

using OperatorSpec =
    std::variant<Translation, Transport, Cable, HeatDisk, Hermite, Laguerre, TermStructure2>;

void validate(const OperatorSpec& op);
std::string operator_name(const OperatorSpec& op);
bool is_spectral(const OperatorSpec& op);
bool is_transport_like(const OperatorSpec& op);
/// Natural symbolic representation accepted by apply_exact.
FunctionKind symbolic_kind(const OperatorSpec& op);

struct EigenPair {
  /// Eigenvalue of the catalog eigenproblem (cable: n^2, heat disk:
  /// lambda_pq^2, Hermite/Laguerre: |beta|, term structure:
  /// (1 + n^2 pi^2 kappa^2) / (2 kappa)).
  double eigenvalue = 0.0;
  /// Eigenvalue of the SPDE drift operator applied by apply_exact.
  double generator_eigenvalue = 0.0;
  Function eigenfunction;
  ModeLabel index;
};

/// Cable / term structure: n = 1..count. Hermite / Laguerre: every
/// multi-index with |beta| < count. Heat disk: p < count, q <= count.
std::vector<EigenPair> eigenpairs(const OperatorSpec& op, int count);
std::vector<EigenPair> heat_disk_eigenpairs(const HeatDisk& op, int max_p, int max_q);

/// Generator eigenvalue of a spectral mode label.
double mode_generator_eigenvalue(const OperatorSpec& op, const ModeLabel& label);
/// Catalog eigenfunction of `label` at `point` ((r, phi) for the disk, x in
/// R^d for Hermite/Laguerre).
double evaluate_mode(const OperatorSpec& op, const ModeLabel& label, std::span<const double> point);
std::string mode_text(const ModeLabel& label);

/// Exact image A f inside the operator's symbolic family. Throws DomainError
/// when f is not representable (wrong kind, Dirichlet values violated,
/// unknown mode labels).
Function apply_exact(const OperatorSpec& op, const Function& f);

/// Finite-difference (or diagonal modal) matrix of the operator on `disc`.
///   first derivatives: first-order upwind along the transport direction;
///   the last node of each line has zero derivative (far-field outflow);
///   second derivatives: second-order central; Dirichlet rows are zero.
Eigen::SparseMatrix<double> grid_operator(const OperatorSpec& op, const Discretization& disc);
Eigen::VectorXd apply_grid(const OperatorSpec& op, const Eigen::VectorXd& values,
                           const Discretization& disc);

}  // namespace affreal
