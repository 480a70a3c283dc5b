#include "affreal/qexp.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <complex>
#include <numbers>
#include <tuple>

#include "affreal/csv.hpp"
#include "affreal/error.hpp"

namespace affreal {
namespace {

constexpr double kCancelRelative = 1e-14;

std::vector<double> clustered(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  std::vector<double> reps;
  double last = 0.0;
  for (double v : values) {
    if (reps.empty() || v - last > kKeyTolerance) reps.push_back(v);
    last = v;
  }
  return reps;
}

double snap_to(const std::vector<double>& reps, double v) {
  // reps are cluster minima; pick the last representative <= v + tol
  auto it = std::upper_bound(reps.begin(), reps.end(), v + kKeyTolerance);
  return it == reps.begin() ? v : *(it - 1);
}

std::vector<QExpTerm> canonicalize(std::vector<QExpTerm> terms) {
  std::vector<QExpTerm> norm;
  norm.reserve(terms.size());
  for (auto t : terms) {
    if (t.coef == 0.0 || !std::isfinite(t.coef)) {
      if (!std::isfinite(t.coef)) {
        throw Error(ErrorKind::InvalidArgument, "non-finite quasi-exponential coefficient");
      }
      continue;
    }
    if (t.power < 0) throw Error(ErrorKind::InvalidArgument, "negative power");
    if (std::abs(t.rate) <= kKeyTolerance) t.rate = 0.0;
    if (std::abs(t.freq) <= kKeyTolerance) t.freq = 0.0;
    if (t.freq < 0.0) {
      t.freq = -t.freq;
      if (t.kind == Trig::Sin) t.coef = -t.coef;
    }
    if (t.freq == 0.0 && t.kind == Trig::Sin) continue;
    norm.push_back(t);
  }
  if (norm.empty()) return norm;

  std::vector<double> rates;
  std::vector<double> freqs;
  for (const auto& t : norm) {
    rates.push_back(t.rate);
    freqs.push_back(t.freq);
  }
  const auto rate_reps = clustered(std::move(rates));
  const auto freq_reps = clustered(std::move(freqs));
  for (auto& t : norm) {
    t.rate = snap_to(rate_reps, t.rate);
    t.freq = snap_to(freq_reps, t.freq);
  }
  auto key = [](const QExpTerm& t) {
    return std::make_tuple(t.rate, t.freq, static_cast<int>(t.kind), t.power);
  };
  std::sort(norm.begin(), norm.end(),
            [&](const QExpTerm& a, const QExpTerm& b) { return key(a) < key(b); });
  // A merged coefficient that is tiny against its own addends is a
  // cancellation residue and is dropped; small but genuine terms survive.
  std::vector<QExpTerm> merged;
  std::vector<double> addend_scale;
  for (const auto& t : norm) {
    if (!merged.empty() && key(merged.back()) == key(t)) {
      merged.back().coef += t.coef;
      addend_scale.back() = std::max(addend_scale.back(), std::abs(t.coef));
    } else {
      merged.push_back(t);
      addend_scale.push_back(std::abs(t.coef));
    }
  }
  std::vector<QExpTerm> kept;
  kept.reserve(merged.size());
  for (std::size_t i = 0; i < merged.size(); ++i) {
    if (std::abs(merged[i].coef) > kCancelRelative * addend_scale[i]) kept.push_back(merged[i]);
  }
  merged = std::move(kept);
  return merged;
}

double term_value(const QExpTerm& t, double x) {
  double v = t.coef;
  if (t.power > 0) v *= std::pow(x, t.power);
  if (t.rate != 0.0) v *= std::exp(t.rate * x);
  if (t.freq != 0.0 || t.kind == Trig::Sin) {
    v *= t.kind == Trig::Cos ? std::cos(t.freq * x) : std::sin(t.freq * x);
  }
  return v;
}

// ---------------------------------------------------------------- parser

class Parser {
 public:
  explicit Parser(std::string_view text) : s_(text) {}

  QExpFunction parse() {
    auto f = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return f;
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorKind::ParseError,
                "at column " + std::to_string(pos_ + 1) + " of '" + std::string(s_) + "': " + what);
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }
  bool accept_word(std::string_view w) {
    skip();
    if (s_.substr(pos_, w.size()) != w) return false;
    const std::size_t end = pos_ + w.size();
    if (end < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[end])) || s_[end] == '_')) {
      return false;
    }
    pos_ = end;
    return true;
  }

  QExpFunction expr() {
    auto f = term();
    for (;;) {
      if (accept('+')) {
        f += term();
      } else if (accept('-')) {
        f += -term();
      } else {
        return f;
      }
    }
  }

  QExpFunction term() {
    auto f = unary();
    for (;;) {
      if (accept('*')) {
        f = multiply(f, unary());
      } else if (accept('/')) {
        const auto d = unary();
        if (d.terms().size() != 1 || d.terms()[0].power != 0 || d.terms()[0].rate != 0.0 ||
            d.terms()[0].freq != 0.0) {
          fail("division only by nonzero constants");
        }
        f = (1.0 / d.terms()[0].coef) * f;
      } else {
        return f;
      }
    }
  }

  QExpFunction unary() {
    if (accept('-')) return -unary();
    if (accept('+')) return unary();
    return primary();
  }

  // Returns (a, b) for an argument a*x + b.
  std::pair<double, double> affine_argument() {
    const auto arg = expr();
    double a = 0.0;
    double b = 0.0;
    for (const auto& t : arg.terms()) {
      if (t.rate != 0.0 || t.freq != 0.0 || t.power > 1) {
        fail("function argument must be affine in x");
      }
      (t.power == 1 ? a : b) += t.coef;
    }
    return {a, b};
  }

  QExpFunction primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (accept('(')) {
      auto f = expr();
      expect(')');
      return f;
    }
    if (accept_word("pi")) return QExpFunction::constant(std::numbers::pi);
    if (accept_word("x")) {
      int power = 1;
      if (accept('^')) {
        skip();
        const char* begin = s_.data() + pos_;
        auto res = std::from_chars(begin, s_.data() + s_.size(), power);
        if (res.ec != std::errc() || power < 0) fail("expected nonnegative integer exponent");
        pos_ += static_cast<std::size_t>(res.ptr - begin);
      }
      return QExpFunction::monomial(1.0, power);
    }
    for (std::string_view fn : {"exp", "cos", "sin"}) {
      if (accept_word(fn)) {
        expect('(');
        const auto [a, b] = affine_argument();
        expect(')');
        if (fn == "exp") return QExpFunction::monomial(std::exp(b), 0, a);
        const double cb = std::cos(b);
        const double sb = std::sin(b);
        if (fn == "cos") {
          return QExpFunction({{cb, 0, 0.0, a, Trig::Cos}, {-sb, 0, 0.0, a, Trig::Sin}});
        }
        return QExpFunction({{sb, 0, 0.0, a, Trig::Cos}, {cb, 0, 0.0, a, Trig::Sin}});
      }
    }
    fail("unknown token");
  }

  QExpFunction number() {
    skip();
    const char* begin = s_.data() + pos_;
    double v = 0.0;
    auto res = std::from_chars(begin, s_.data() + s_.size(), v);
    if (res.ec != std::errc()) fail("malformed number");
    pos_ += static_cast<std::size_t>(res.ptr - begin);
    return QExpFunction::constant(v);
  }
};

}  // namespace

QExpFunction::QExpFunction(std::vector<QExpTerm> terms) : terms_(canonicalize(std::move(terms))) {}

QExpFunction QExpFunction::constant(double c) { return QExpFunction({{c, 0, 0.0, 0.0, Trig::Cos}}); }

QExpFunction QExpFunction::monomial(double coef, int power, double rate, double freq, Trig kind) {
  return QExpFunction({{coef, power, rate, freq, kind}});
}

double QExpFunction::operator()(double x) const {
  double v = 0.0;
  for (const auto& t : terms_) v += term_value(t, x);
  return v;
}

QExpFunction QExpFunction::operator+(const QExpFunction& other) const {
  auto t = terms_;
  t.insert(t.end(), other.terms_.begin(), other.terms_.end());
  return QExpFunction(std::move(t));
}

QExpFunction QExpFunction::operator-(const QExpFunction& other) const { return *this + (-other); }

QExpFunction QExpFunction::operator-() const { return -1.0 * *this; }

QExpFunction& QExpFunction::operator+=(const QExpFunction& other) {
  *this = *this + other;
  return *this;
}

QExpFunction operator*(double s, const QExpFunction& f) {
  auto t = f.terms_;
  for (auto& term : t) term.coef *= s;
  return QExpFunction(std::move(t));
}

CoefficientRow QExpFunction::coefficient_row() const {
  CoefficientRow row;
  row.reserve(terms_.size());
  for (const auto& t : terms_) {
    row.emplace_back(TermKey{t.rate, t.freq, static_cast<double>(t.kind), static_cast<double>(t.power)},
                     t.coef);
  }
  return row;
}

QExpFunction QExpFunction::from_row(const CoefficientRow& row) {
  std::vector<QExpTerm> t;
  t.reserve(row.size());
  for (const auto& [k, c] : row) {
    t.push_back({c, static_cast<int>(k.at(3)), k.at(0), k.at(1),
                 k.at(2) == 0.0 ? Trig::Cos : Trig::Sin});
  }
  return QExpFunction(std::move(t));
}

QExpFunction differentiate(const QExpFunction& f) {
  std::vector<QExpTerm> out;
  for (const auto& t : f.terms()) {
    if (t.power > 0) out.push_back({t.coef * t.power, t.power - 1, t.rate, t.freq, t.kind});
    if (t.rate != 0.0) out.push_back({t.coef * t.rate, t.power, t.rate, t.freq, t.kind});
    if (t.freq != 0.0) {
      if (t.kind == Trig::Cos) {
        out.push_back({-t.coef * t.freq, t.power, t.rate, t.freq, Trig::Sin});
      } else {
        out.push_back({t.coef * t.freq, t.power, t.rate, t.freq, Trig::Cos});
      }
    }
  }
  return QExpFunction(std::move(out));
}

QExpFunction integrate_T(const QExpFunction& f) {
  std::vector<QExpTerm> out;
  double at_zero = 0.0;
  for (const auto& t : f.terms()) {
    if (t.rate == 0.0 && t.freq == 0.0) {
      out.push_back({t.coef / (t.power + 1), t.power + 1, 0.0, 0.0, Trig::Cos});
      continue;
    }
    // int x^j e^{zx} dx = e^{zx} sum_k (-1)^k j!/(j-k)! x^{j-k} / z^{k+1}
    const std::complex<double> z(t.rate, t.freq);
    std::complex<double> a = 1.0 / z;
    for (int k = 0; k <= t.power; ++k) {
      if (k > 0) a *= -static_cast<double>(t.power - k + 1) / z;
      const int p = t.power - k;
      // cos kind is Re(c x^j e^{zx}), sin kind is Im(c x^j e^{zx})
      const double cc = t.kind == Trig::Cos ? a.real() : a.imag();
      const double sc = t.kind == Trig::Cos ? -a.imag() : a.real();
      out.push_back({t.coef * cc, p, t.rate, t.freq, Trig::Cos});
      out.push_back({t.coef * sc, p, t.rate, t.freq, Trig::Sin});
      if (p == 0) at_zero += t.coef * cc;
    }
  }
  out.push_back({-at_zero, 0, 0.0, 0.0, Trig::Cos});
  return QExpFunction(std::move(out));
}

QExpFunction multiply(const QExpFunction& f, const QExpFunction& g) {
  std::vector<QExpTerm> out;
  out.reserve(2 * f.terms().size() * g.terms().size());
  for (const auto& a : f.terms()) {
    for (const auto& b : g.terms()) {
      const double c = 0.5 * a.coef * b.coef;
      const int p = a.power + b.power;
      const double r = a.rate + b.rate;
      const double diff = a.freq - b.freq;
      const double sum = a.freq + b.freq;
      if (a.kind == Trig::Cos && b.kind == Trig::Cos) {
        out.push_back({c, p, r, diff, Trig::Cos});
        out.push_back({c, p, r, sum, Trig::Cos});
      } else if (a.kind == Trig::Sin && b.kind == Trig::Sin) {
        out.push_back({c, p, r, diff, Trig::Cos});
        out.push_back({-c, p, r, sum, Trig::Cos});
      } else if (a.kind == Trig::Sin) {
        // sin(a) cos(b) = (sin(a+b) + sin(a-b)) / 2
        out.push_back({c, p, r, sum, Trig::Sin});
        out.push_back({c, p, r, diff, Trig::Sin});
      } else {
        // cos(a) sin(b) = (sin(a+b) - sin(a-b)) / 2
        out.push_back({c, p, r, sum, Trig::Sin});
        out.push_back({-c, p, r, diff, Trig::Sin});
      }
    }
  }
  return QExpFunction(std::move(out));
}

QExpFunction shift(const QExpFunction& f, double s) {
  std::vector<QExpTerm> out;
  for (const auto& t : f.terms()) {
    const double growth = t.coef * std::exp(t.rate * s);
    const double c = std::cos(t.freq * s);
    const double sn = std::sin(t.freq * s);
    double binom = 1.0;
    for (int k = t.power; k >= 0; --k) {
      // binom = C(power, k); (x + s)^power = sum_k C(power, k) s^(power-k) x^k
      const double a = growth * binom * std::pow(s, t.power - k);
      if (t.freq == 0.0) {
        out.push_back({a, k, t.rate, 0.0, Trig::Cos});
      } else if (t.kind == Trig::Cos) {
        out.push_back({a * c, k, t.rate, t.freq, Trig::Cos});
        out.push_back({-a * sn, k, t.rate, t.freq, Trig::Sin});
      } else {
        out.push_back({a * c, k, t.rate, t.freq, Trig::Sin});
        out.push_back({a * sn, k, t.rate, t.freq, Trig::Cos});
      }
      binom = binom * k / (t.power - k + 1);
    }
  }
  return QExpFunction(std::move(out));
}

std::vector<double> evaluate(const QExpFunction& f, std::span<const double> grid) {
  std::vector<double> v(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) v[i] = f(grid[i]);
  return v;
}

QExpFunction gaussian_taylor(int degree) {
  if (degree < 0) throw Error(ErrorKind::InvalidArgument, "Taylor degree must be nonnegative");
  std::vector<QExpTerm> terms;
  double c = 1.0;
  for (int k = 0; 2 * k <= degree; ++k) {
    if (k > 0) c = -c / k;
    terms.push_back({c, 2 * k, 0.0, 0.0, Trig::Cos});
  }
  return QExpFunction(std::move(terms));
}

double coefficient_distance(const QExpFunction& f, const QExpFunction& g) {
  const CoefficientRow rows[] = {f.coefficient_row(), g.coefficient_row()};
  const auto m = coefficient_matrix(rows);
  if (m.rows.cols() == 0) return 0.0;
  return (m.rows.row(0) - m.rows.row(1)).cwiseAbs().maxCoeff();
}

std::string to_string(const QExpFunction& f) {
  if (f.is_zero()) return "0";
  std::string s;
  for (const auto& t : f.terms()) {
    if (!s.empty()) s += " + ";
    s += csv::format_double(t.coef) + " * x^" + std::to_string(t.power) + " * exp(" +
         csv::format_double(t.rate) + "*x) * " + (t.kind == Trig::Cos ? "cos(" : "sin(") +
         csv::format_double(t.freq) + "*x)";
  }
  return s;
}

QExpFunction parse_qexp(std::string_view text) { return Parser(text).parse(); }

SpanBasis span_dimension(std::span<const QExpFunction> funcs, double tol_rank) {
  std::vector<CoefficientRow> rows;
  rows.reserve(funcs.size());
  for (const auto& f : funcs) rows.push_back(f.coefficient_row());
  auto cm = coefficient_matrix(rows);
  const auto red = reduce_rows(cm.rows, tol_rank);
  SpanBasis out;
  out.dim = red.rank;
  for (int i : red.pivot_rows) out.functions.push_back(funcs[static_cast<std::size_t>(i)]);
  out.keys = std::move(cm.keys);
  out.coefficient_matrix.resize(red.rank, cm.rows.cols());
  for (int r = 0; r < red.rank; ++r) out.coefficient_matrix.row(r) = cm.rows.row(red.pivot_rows[static_cast<std::size_t>(r)]);
  return out;
}

}  // namespace affreal
