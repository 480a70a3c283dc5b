#pragma once

#include <map>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "affreal/qexp.hpp"

namespace affreal {

/// Index of an eigenfunction in a spectral catalog: (p, q, 0|1) for cos|sin
/// disk modes, or a multi-index beta for Hermite/Laguerre products.
using ModeLabel = std::vector<int>;

/// Finite eigen-expansion: coefficient per mode label.
struct SpectralFn {
  std::map<ModeLabel, double> coefs;

  bool operator==(const SpectralFn&) const = default;
};

/// Finite sum of products xi(b) * h(s) on the characteristic coordinates of a
/// transport domain: b parametrizes the inflow boundary, s the time along v.
struct SeparableFn {
  std::vector<std::pair<QExpFunction, QExpFunction>> terms;
};

/// Samples on the nodes of a discretization; carries no symbolic structure.
struct GridFn {
  std::vector<double> values;
};

using Function = std::variant<QExpFunction, SpectralFn, SeparableFn, GridFn>;

enum class FunctionKind { QExp, Spectral, Separable, Grid };

FunctionKind kind_of(const Function& f);
std::string_view to_string(FunctionKind kind);

bool is_zero(const Function& f);
/// Linear combination sum_i c_i f_i of functions of one kind.
Function linear_combination(std::span<const double> coefs, std::span<const Function> funcs);
Function add(const Function& a, const Function& b);
Function scale(double s, const Function& f);

CoefficientRow coefficient_row(const Function& f);
Function function_from_row(FunctionKind kind, const CoefficientRow& row);

std::string describe(const Function& f);

using FunctionBasis = BasicSpanBasis<Function>;

/// Rank of the span of `funcs` (all of one kind) and the selected pivot rows.
FunctionBasis span_dimension(std::span<const Function> funcs, double tol_rank = 1e-9);
/// Reduced row echelon basis of the span: each element has coefficient 1 on
/// its own pivot key and 0 on the other pivot keys.
FunctionBasis echelon_basis(std::span<const Function> funcs, double tol_rank = 1e-9);

}  // namespace affreal
