#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "affreal/qexp.hpp"

namespace affreal::testing {

// Random quasi-exponential with keys drawn from small discrete sets, so that
// distinct draws rarely collide only up to rounding.
inline QExpFunction random_qexp(std::mt19937_64& rng, int max_terms = 4, int max_power = 2) {
  static const double rates[] = {-2.0, -1.5, -1.0, -0.5, 0.0, 0.5};
  static const double freqs[] = {0.0, 0.5, 1.0, 2.0, 3.0};
  std::uniform_int_distribution<int> n_terms(1, max_terms);
  std::uniform_int_distribution<int> pick_rate(0, 5);
  std::uniform_int_distribution<int> pick_freq(0, 4);
  std::uniform_int_distribution<int> pick_power(0, max_power);
  std::uniform_int_distribution<int> pick_kind(0, 1);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  std::vector<QExpTerm> terms;
  const int n = n_terms(rng);
  for (int i = 0; i < n; ++i) {
    QExpTerm t;
    t.coef = coef(rng);
    t.power = pick_power(rng);
    t.rate = rates[pick_rate(rng)];
    t.freq = freqs[pick_freq(rng)];
    t.kind = pick_kind(rng) ? Trig::Sin : Trig::Cos;
    terms.push_back(t);
  }
  return QExpFunction(std::move(terms));
}

inline double max_abs_coef(const QExpFunction& f) {
  double m = 0.0;
  for (const auto& t : f.terms()) m = std::max(m, std::abs(t.coef));
  return m;
}

}  // namespace affreal::testing
