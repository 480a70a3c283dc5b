#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"

#include "affreal/error.hpp"
#include "affreal/function.hpp"
#include "affreal/qexp.hpp"
#include "support.hpp"

using namespace affreal;
using affreal::testing::max_abs_coef;
using affreal::testing::random_qexp;

namespace {

QExpFunction e(double rate, double coef = 1.0, int power = 0) {
  return QExpFunction::monomial(coef, power, rate);
}
QExpFunction trig(Trig kind, double freq, double coef = 1.0) {
  return QExpFunction::monomial(coef, 0, 0.0, freq, kind);
}

bool same(const QExpFunction& f, const QExpFunction& g, double tol = 1e-12) {
  return coefficient_distance(f, g) <= tol;
}

}  // namespace

TEST_CASE("canonical form") {
  const QExpFunction f({{2.0, 1, -1.0, 0.0, Trig::Cos},
                        {1.0, 0, 0.0, 0.0, Trig::Cos},
                        {-2.0, 1, -1.0, 0.0, Trig::Cos},
                        {5.0, 0, 0.0, 0.0, Trig::Sin}});
  REQUIRE(f.terms().size() == 1);
  CHECK(f.terms()[0].coef == 1.0);
  CHECK(QExpFunction::monomial(0.0, 3).is_zero());

  const QExpFunction g({{1.0, 0, 0.0, 1.0, Trig::Sin}, {1.0, 0, -1.0, 0.0, Trig::Cos}});
  CHECK(g.terms()[0].rate == -1.0);
  CHECK(g.terms()[1].kind == Trig::Sin);
}

TEST_CASE("differentiate examples") {
  CHECK(same(differentiate(e(-0.7)), e(-0.7, -0.7)));
  CHECK(same(differentiate(e(-1.0, 1.0, 1)), e(-1.0) - e(-1.0, 1.0, 1)));
  CHECK(same(differentiate(trig(Trig::Sin, 2.0)), trig(Trig::Cos, 2.0, 2.0)));
  CHECK(differentiate(QExpFunction::constant(3.0)).is_zero());
}

TEST_CASE("integrate_T examples") {
  CHECK(same(integrate_T(e(-1.0)), QExpFunction::constant(1.0) - e(-1.0)));
  CHECK(same(integrate_T(QExpFunction::constant(1.0)), QExpFunction::monomial(1.0, 1)));
  CHECK(same(integrate_T(trig(Trig::Cos, 1.0)), trig(Trig::Sin, 1.0)));
  // x e^{-x} -> 1 - e^{-x} - x e^{-x}
  CHECK(same(integrate_T(e(-1.0, 1.0, 1)), QExpFunction::constant(1.0) - e(-1.0) - e(-1.0, 1.0, 1)));
}

TEST_CASE("multiply examples") {
  CHECK(same(multiply(e(-1.0), QExpFunction::constant(1.0) - e(-1.0)), e(-1.0) - e(-2.0)));
  const QExpFunction f = parse_qexp("2*x*exp(-0.5*x)*sin(3*x) + 1");
  CHECK(same(multiply(f, QExpFunction::constant(1.0)), f));
  CHECK(same(multiply(trig(Trig::Cos, 1.0), trig(Trig::Cos, 1.0)),
             QExpFunction::constant(0.5) + trig(Trig::Cos, 2.0, 0.5)));
  CHECK(same(multiply(trig(Trig::Sin, 1.0), trig(Trig::Cos, 1.0)), trig(Trig::Sin, 2.0, 0.5)));
}

TEST_CASE("evaluate examples") {
  const double g[] = {0.0, 1.0, 2.0};
  CHECK(evaluate(e(0.0), g) == std::vector<double>{1.0, 1.0, 1.0});
  const double z[] = {0.0};
  CHECK(evaluate(e(-1.0, 1.0, 1), z)[0] == 0.0);
  const double l[] = {std::log(2.0)};
  CHECK(evaluate(e(-1.0), l)[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("span_dimension examples") {
  std::vector<QExpFunction> a{e(-1.0), e(-1.0, 2.0)};
  CHECK(span_dimension(a).dim == 1);
  std::vector<QExpFunction> b{e(-1.0), e(-1.0, 1.0, 1)};
  CHECK(span_dimension(b).dim == 2);
  const double phi = 0.37;
  std::vector<QExpFunction> c{trig(Trig::Sin, 1.0), trig(Trig::Cos, 1.0),
                              trig(Trig::Sin, 1.0, std::cos(phi)) + trig(Trig::Cos, 1.0, std::sin(phi))};
  const SpanBasis s = span_dimension(c);
  CHECK(s.dim == 2);
  CHECK(s.coefficient_matrix.rows() == 2);
}

TEST_CASE("shift is the translation semigroup") {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 50; ++i) {
    const QExpFunction f = random_qexp(rng);
    const QExpFunction g = shift(f, 0.75);
    for (double x : {0.0, 0.3, 1.1, 2.9}) {
      CHECK(g(x) == doctest::Approx(f(x + 0.75)).epsilon(1e-10).scale(1.0));
    }
  }
}

TEST_CASE("calculus identities on 200 random functions") {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 200; ++i) {
    const QExpFunction f = random_qexp(rng);
    const double scale = std::max(1.0, max_abs_coef(f));
    CHECK(coefficient_distance(differentiate(integrate_T(f)), f) <= 1e-12 * scale);
    const QExpFunction expected = f - QExpFunction::constant(f(0.0));
    CHECK(coefficient_distance(integrate_T(differentiate(f)), expected) <= 1e-12 * scale);
  }
}

TEST_CASE("multiply is commutative and pointwise") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> xs(0.0, 4.0);
  for (int i = 0; i < 200; ++i) {
    const QExpFunction f = random_qexp(rng);
    const QExpFunction g = random_qexp(rng);
    const QExpFunction fg = multiply(f, g);
    CHECK(coefficient_distance(fg, multiply(g, f)) <= 1e-12 * std::max(1.0, max_abs_coef(fg)));
    std::vector<double> grid(8);
    for (double& x : grid) x = xs(rng);
    std::sort(grid.begin(), grid.end());
    const auto a = evaluate(fg, grid);
    const auto fa = evaluate(f, grid);
    const auto ga = evaluate(g, grid);
    for (std::size_t k = 0; k < grid.size(); ++k) CHECK(std::abs(a[k] - fa[k] * ga[k]) <= 1e-10);
  }
}

TEST_CASE("span_dimension is permutation and scaling invariant") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> s(0.1, 10.0);
  for (int i = 0; i < 50; ++i) {
    std::vector<QExpFunction> fs;
    for (int k = 0; k < 4; ++k) fs.push_back(random_qexp(rng, 3));
    fs.push_back(fs[0] + 2.0 * fs[1]);
    const int dim = span_dimension(fs).dim;
    std::vector<QExpFunction> perm(fs.rbegin(), fs.rend());
    for (auto& f : perm) f = s(rng) * f;
    CHECK(span_dimension(perm).dim == dim);
  }
}

TEST_CASE("text round trip through the parser") {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 100; ++i) {
    const QExpFunction f = random_qexp(rng);
    const QExpFunction g = parse_qexp(to_string(f));
    CHECK(coefficient_distance(f, g) <= 1e-15 * std::max(1.0, max_abs_coef(f)));
  }
  CHECK(to_string(QExpFunction{}) == "0");
}

TEST_CASE("parser grammar") {
  CHECK(same(parse_qexp("exp(-x)"), e(-1.0)));
  CHECK(same(parse_qexp("x^2 * exp(-2*x)"), e(-2.0, 1.0, 2)));
  CHECK(same(parse_qexp("sin(3*x) - 0.5"), trig(Trig::Sin, 3.0) - QExpFunction::constant(0.5)));
  CHECK(same(parse_qexp("(1 + x) * (1 - x)"), QExpFunction::constant(1.0) - QExpFunction::monomial(1.0, 2)));
  // cos(x + 1) = cos 1 cos x - sin 1 sin x
  CHECK(same(parse_qexp("cos(x + 1)"),
             trig(Trig::Cos, 1.0, std::cos(1.0)) - trig(Trig::Sin, 1.0, std::sin(1.0)), 1e-14));
  CHECK(same(parse_qexp("exp(-x + 2)"), e(-1.0, std::exp(2.0)), 1e-13));
  CHECK(same(parse_qexp("2*pi*x"), QExpFunction::monomial(2.0 * std::numbers::pi, 1)));

  for (const char* bad : {"", "exp(x^2)", "1/x", "foo(x)", "exp(-x", "x**2", "y"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(parse_qexp(bad), Error);
  }
}

TEST_CASE("echelon basis of a mixed Function span") {
  std::vector<Function> fs{e(-1.0) + e(-2.0), e(-2.0), QExpFunction::constant(0.0) + e(-1.0)};
  const FunctionBasis b = echelon_basis(fs);
  CHECK(b.dim == 2);
  for (const Function& f : b.functions) CHECK(kind_of(f) == FunctionKind::QExp);

  std::vector<Function> modes{SpectralFn{{{{1}, 1.0}, {{2}, 1.0}}}, SpectralFn{{{{2}, 3.0}}}};
  CHECK(span_dimension(std::span<const Function>(modes)).dim == 2);
}
