#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>

namespace affreal {

/// Real-valued expression in variables y1..yd, e.g. "0.2 * sqrt(1 + y1^2)".
/// Supports + - * / ^, parentheses, numbers, pi, and the functions sqrt,
/// exp, log, tanh, sin, cos, abs.
class Expression {
 public:
  struct Node;

  Expression() = default;
  /// Throws ParseError with the column of the offending token, or when a
  /// variable index exceeds `n_vars`.
  static Expression parse(std::string_view text, int n_vars);
  static Expression constant(double c);

  /// A default-constructed (empty) expression evaluates to 1.
  double operator()(std::span<const double> y) const;
  const std::string& text() const { return text_; }
  bool empty() const { return !root_; }
  /// Highest variable index referenced (0 if none).
  int max_variable() const { return max_var_; }

 private:
  std::shared_ptr<const Node> root_;
  std::string text_;
  int max_var_ = 0;
};

}  // namespace affreal
