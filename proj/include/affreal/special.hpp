#pragma once

#include <vector>

namespace affreal {

/// Bessel function of the first kind J_p(x), x >= 0. Power series for
/// x <= 8, Miller backward recurrence (normalized by J_0 + 2 sum J_2k = 1)
/// beyond.
double bessel_j(int p, double x);

/// J_p'(x) = (J_{p-1}(x) - J_{p+1}(x)) / 2, with J_{-1} = -J_1.
double bessel_j_derivative(int p, double x);

/// q-th positive zero of J_p, found by scanning for a sign change of
/// bessel_j, bisection, and Newton polishing. Supported for p <= 20, q <= 50.
double bessel_zero(int p, int q);

/// Physicists' Hermite polynomial H_n (H_0 = 1, H_1 = 2x), orthogonal under
/// exp(-x^2).
double hermite(int n, double x);
/// Classical Laguerre polynomial L_n (L_0 = 1, L_1 = 1 - x), orthonormal under exp(-x).
double laguerre(int n, double x);

/// Monomial coefficients (index = power) of H_n and L_n.
std::vector<double> hermite_coefficients(int n);
std::vector<double> laguerre_coefficients(int n);

}  // namespace affreal
