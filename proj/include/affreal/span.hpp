#pragma once

#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace affreal {

/// Canonical identifier of one basis element of a symbolic function family,
/// e.g. (rate, freq, kind, power) for quasi-exponential terms.
using TermKey = std::vector<double>;

/// Sparse coefficient vector of a symbolic function over term keys.
using CoefficientRow = std::vector<std::pair<TermKey, double>>;

/// Rows laid out densely over the union of their keys. Key components closer
/// than the key tolerance are identified.
struct CoefficientMatrix {
  std::vector<TermKey> keys;
  Eigen::MatrixXd rows;
};

CoefficientMatrix coefficient_matrix(std::span<const CoefficientRow> rows);

struct RowReduction {
  int rank = 0;
  /// Indices of the input rows chosen as a basis (pivoted QR order, sorted).
  std::vector<int> pivot_rows;
  /// rank x keys reduced row echelon form of the unit-normalized rows; each
  /// row has a 1 at its pivot key and zeros at the other pivot keys.
  Eigen::MatrixXd echelon;
  std::vector<int> pivot_keys;
};

/// Numerical rank (singular values above tol_rank * sigma_max of the
/// unit-normalized rows) plus a basis selection.
RowReduction reduce_rows(const Eigen::MatrixXd& rows, double tol_rank);

template <class Fn>
struct BasicSpanBasis {
  std::vector<Fn> functions;
  int dim = 0;
  std::vector<TermKey> keys;
  Eigen::MatrixXd coefficient_matrix;  // functions x keys
};

}  // namespace affreal
