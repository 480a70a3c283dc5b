#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "affreal/span.hpp"

namespace affreal {

enum class Trig { Cos = 0, Sin = 1 };

/// coef * x^power * exp(rate x) * cos|sin(freq x)
struct QExpTerm {
  double coef = 0.0;
  int power = 0;
  double rate = 0.0;
  double freq = 0.0;
  Trig kind = Trig::Cos;
};

/// Absolute tolerance used to identify rates and frequencies of two terms.
inline constexpr double kKeyTolerance = 1e-12;

/// Element of the quasi-exponential algebra on the half-line.
///
/// Always stored in canonical form: terms sorted by (rate, freq, kind, power),
/// one term per key, no zero coefficients, and freq == 0 only with Cos.
class QExpFunction {
 public:
  QExpFunction() = default;
  explicit QExpFunction(std::vector<QExpTerm> terms);

  static QExpFunction constant(double c);
  static QExpFunction monomial(double coef, int power, double rate = 0.0,
                               double freq = 0.0, Trig kind = Trig::Cos);

  const std::vector<QExpTerm>& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  double operator()(double x) const;

  QExpFunction operator+(const QExpFunction& other) const;
  QExpFunction operator-(const QExpFunction& other) const;
  QExpFunction operator-() const;
  QExpFunction& operator+=(const QExpFunction& other);
  friend QExpFunction operator*(double s, const QExpFunction& f);

  /// (rate, freq, kind, power) for every term.
  CoefficientRow coefficient_row() const;
  static QExpFunction from_row(const CoefficientRow& row);

 private:
  std::vector<QExpTerm> terms_;
};

QExpFunction differentiate(const QExpFunction& f);
/// Antiderivative vanishing at 0.
QExpFunction integrate_T(const QExpFunction& f);
QExpFunction multiply(const QExpFunction& f, const QExpFunction& g);
/// x -> f(x + s).
QExpFunction shift(const QExpFunction& f, double s);
std::vector<double> evaluate(const QExpFunction& f, std::span<const double> grid);

/// Taylor polynomial of exp(-x^2) up to x^degree: a polynomial stand-in for
/// the Gaussian, whose derivatives leave every finite quasi-exponential span.
QExpFunction gaussian_taylor(int degree);

/// Max coefficient mismatch over the union of keys.
double coefficient_distance(const QExpFunction& f, const QExpFunction& g);

/// `c * x^j * exp(m*x) * cos(n*x) + ...`; "0" for the zero function.
std::string to_string(const QExpFunction& f);

/// Parses sums and products of numbers, `pi`, `x`, `x^j`, and exp/cos/sin of
/// affine arguments `a*x + b`. The textual form produced by to_string is a
/// subset of the accepted grammar.
QExpFunction parse_qexp(std::string_view text);

using SpanBasis = BasicSpanBasis<QExpFunction>;

SpanBasis span_dimension(std::span<const QExpFunction> funcs, double tol_rank = 1e-9);

}  // namespace affreal
