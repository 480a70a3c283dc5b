#include "affreal/special.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "affreal/error.hpp"

namespace affreal {
namespace {

constexpr double kSeriesLimit = 8.0;

double bessel_series(int p, double x) {
  const double half = 0.5 * x;
  double term = 1.0;
  for (int i = 1; i <= p; ++i) term *= half / i;
  double sum = term;
  const double q = -half * half;
  for (int k = 1; k < 500; ++k) {
    term *= q / (static_cast<double>(k) * (k + p));
    sum += term;
    if (std::abs(term) <= 1e-17 * std::abs(sum) && k > half) break;
  }
  return sum;
}

double bessel_miller(int p, double x) {
  constexpr double kBig = 1e10;
  const double top = std::max(static_cast<double>(p), x);
  int m = static_cast<int>(top + 20.0 * std::sqrt(top)) + 20;
  m += m % 2;
  double next = 0.0;  // J_{j+1}
  double cur = 1e-30;  // J_j, arbitrary seed at j = m
  double norm = 0.0;
  double ans = 0.0;
  for (int j = m; j > 0; --j) {
    const double prev = 2.0 * j / x * cur - next;  // J_{j-1}
    next = cur;
    cur = prev;
    if (std::abs(cur) > kBig) {
      cur /= kBig;
      next /= kBig;
      norm /= kBig;
      ans /= kBig;
    }
    const int idx = j - 1;
    if (idx == p) ans = cur;
    if (idx > 0 && idx % 2 == 0) norm += 2.0 * cur;
  }
  norm += cur;
  return ans / norm;
}

}  // namespace

double bessel_j(int p, double x) {
  if (p < 0) throw Error(ErrorKind::InvalidArgument, "bessel_j needs p >= 0");
  if (!(x >= 0.0)) throw Error(ErrorKind::InvalidArgument, "bessel_j needs x >= 0");
  if (x == 0.0) return p == 0 ? 1.0 : 0.0;
  if (x <= kSeriesLimit) return bessel_series(p, x);
  return bessel_miller(p, x);
}

double bessel_j_derivative(int p, double x) {
  if (p == 0) return -bessel_j(1, x);
  return 0.5 * (bessel_j(p - 1, x) - bessel_j(p + 1, x));
}

double bessel_zero(int p, int q) {
  if (p < 0 || p > 20 || q < 1 || q > 50) {
    throw Error(ErrorKind::InvalidArgument, "bessel_zero supports 0 <= p <= 20, 1 <= q <= 50");
  }
  constexpr double step = 0.1;
  double a = std::max(0.5, static_cast<double>(p));
  double fa = bessel_j(p, a);
  const double limit = p + (q + 2) * 3.5 + 20.0;
  int found = 0;
  while (a < limit) {
    const double b = a + step;
    const double fb = bessel_j(p, b);
    if (fa == 0.0 || fa * fb < 0.0) {
      if (++found == q) {
        double lo = a;
        double hi = b;
        double flo = fa;
        if (fa == 0.0) return a;
        while (hi - lo > 1e-15 * hi) {
          const double mid = 0.5 * (lo + hi);
          const double fm = bessel_j(p, mid);
          if (fm == 0.0) return mid;
          if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
          } else {
            hi = mid;
          }
        }
        double r = 0.5 * (lo + hi);
        for (int it = 0; it < 2; ++it) {
          const double d = bessel_j_derivative(p, r);
          if (d == 0.0) break;
          const double nr = r - bessel_j(p, r) / d;
          if (nr < lo - 1e-12 || nr > hi + 1e-12) break;
          r = nr;
        }
        return r;
      }
    }
    a = b;
    fa = fb;
  }
  throw Error(ErrorKind::BracketFailure,
              "no sign change for zero " + std::to_string(q) + " of J_" + std::to_string(p));
}

double hermite(int n, double x) {
  if (n < 0) throw Error(ErrorKind::InvalidArgument, "negative Hermite index");
  double h0 = 1.0;
  if (n == 0) return h0;
  double h1 = 2.0 * x;
  for (int k = 1; k < n; ++k) {
    const double h2 = 2.0 * x * h1 - 2.0 * k * h0;
    h0 = h1;
    h1 = h2;
  }
  return h1;
}

double laguerre(int n, double x) {
  if (n < 0) throw Error(ErrorKind::InvalidArgument, "negative Laguerre index");
  double l0 = 1.0;
  if (n == 0) return l0;
  double l1 = 1.0 - x;
  for (int k = 1; k < n; ++k) {
    const double l2 = ((2.0 * k + 1.0 - x) * l1 - k * l0) / (k + 1.0);
    l0 = l1;
    l1 = l2;
  }
  return l1;
}

std::vector<double> hermite_coefficients(int n) {
  std::vector<double> h0{1.0};
  if (n == 0) return h0;
  std::vector<double> h1{0.0, 2.0};
  for (int k = 1; k < n; ++k) {
    std::vector<double> h2(static_cast<std::size_t>(k) + 2, 0.0);
    for (std::size_t i = 0; i < h1.size(); ++i) h2[i + 1] += 2.0 * h1[i];
    for (std::size_t i = 0; i < h0.size(); ++i) h2[i] -= 2.0 * k * h0[i];
    h0 = std::move(h1);
    h1 = std::move(h2);
  }
  return h1;
}

std::vector<double> laguerre_coefficients(int n) {
  std::vector<double> c(static_cast<std::size_t>(n) + 1);
  double binom = 1.0;
  double fact = 1.0;
  for (int k = 0; k <= n; ++k) {
    if (k > 0) {
      binom *= static_cast<double>(n - k + 1) / k;
      fact *= k;
    }
    c[static_cast<std::size_t>(k)] = (k % 2 ? -1.0 : 1.0) * binom / fact;
  }
  return c;
}

}  // namespace affreal
