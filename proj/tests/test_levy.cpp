#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"

#include "affreal/error.hpp"
#include "affreal/levy.hpp"

using namespace affreal;

namespace {

RawLevyComponent symmetric_jumps(double intensity) {
  RawLevyComponent c;
  c.jump_intensity = intensity;
  c.jump_law = AtomLaw{{{+1.0, 0.5}, {-1.0, 0.5}}};
  return c;
}

ErrorKind kind_of_failure(const std::vector<RawLevyComponent>& raw) {
  try {
    make_levy_spec(raw);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::InvalidArgument;
}

struct Moments {
  double mean = 0.0;
  double var = 0.0;
  double se_mean = 0.0;
  double se_var = 0.0;
};

Moments moments(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  Moments m;
  for (double x : xs) m.mean += x;
  m.mean /= n;
  double m4 = 0.0;
  for (double x : xs) {
    const double d = x - m.mean;
    m.var += d * d;
    m4 += d * d * d * d;
  }
  m.var /= n - 1.0;
  m4 /= n;
  m.se_mean = std::sqrt(m.var / n);
  m.se_var = std::sqrt(std::max(m4 - m.var * m.var, 0.0) / n);
  return m;
}

}  // namespace

TEST_CASE("make_levy_spec accepts the basic component shapes") {
  RawLevyComponent wiener;
  wiener.brownian_vol = 1.0;
  const LevySpec w = make_levy_spec(std::vector{wiener});
  CHECK(w.dimension() == 1);
  CHECK(w.pure_brownian());
  CHECK(w[0].compensation() == 0.0);

  const LevySpec j = make_levy_spec(std::vector{symmetric_jumps(2.0)});
  CHECK_FALSE(j.pure_brownian());
  CHECK(j[0].compensation() == doctest::Approx(0.0));
  CHECK(j[0].variance_rate() == doctest::Approx(2.0));
}

TEST_CASE("make_levy_spec rejects invalid components") {
  CHECK(kind_of_failure({RawLevyComponent{}}) == ErrorKind::ZeroComponent);

  RawLevyComponent bad = symmetric_jumps(1.0);
  bad.jump_law = AtomLaw{{{1.0, 0.5}, {-1.0, 0.4}}};
  CHECK(kind_of_failure({bad}) == ErrorKind::BadProbabilities);

  RawLevyComponent neg;
  neg.brownian_vol = -1.0;
  CHECK_THROWS_AS(make_levy_spec(std::vector{neg}), Error);

  CHECK_THROWS_AS(make_levy_spec(std::vector<RawLevyComponent>{}), Error);
}

TEST_CASE("two-sided exponential law has closed-form compensation") {
  RawLevyComponent c;
  c.jump_intensity = 3.0;
  c.jump_law = TwoSidedExpLaw{0.3, 2.0, 4.0};
  const LevySpec s = make_levy_spec(std::vector{c});
  const double mean = 0.3 / 2.0 - 0.7 / 4.0;
  const double second = 0.3 * 2.0 / 4.0 + 0.7 * 2.0 / 16.0;
  CHECK(s[0].compensation() == doctest::Approx(3.0 * mean).epsilon(1e-14));
  CHECK(s[0].variance_rate() == doctest::Approx(3.0 * second).epsilon(1e-14));
}

TEST_CASE("sample_increments is deterministic per seed") {
  const LevySpec spec = make_levy_spec(std::vector{symmetric_jumps(2.0), RawLevyComponent{0.5, 0.0, AtomLaw{}}});
  const IncrementMatrix a = sample_increments(spec, 0.01, 100, 42);
  const IncrementMatrix b = sample_increments(spec, 0.01, 100, 42);
  const IncrementMatrix c = sample_increments(spec, 0.01, 100, 43);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
  CHECK(a.n_steps() == 100);
  CHECK(a.dimension() == 2);

  // Stream k depends only on (seed, k).
  const LevySpec first = make_levy_spec(std::vector{symmetric_jumps(2.0)});
  const IncrementMatrix d = sample_increments(first, 0.01, 100, 42);
  CHECK(d.values.col(0) == a.values.col(0));
}

TEST_CASE("Wiener column has mean 0 and variance dt") {
  const LevySpec spec = wiener_spec(1);
  const IncrementMatrix inc = sample_increments(spec, 0.01, 20000, 7);
  std::vector<double> xs(inc.values.data(), inc.values.data() + inc.values.size());
  const Moments m = moments(xs);
  CHECK(std::abs(m.mean) <= 3.0 * m.se_mean);
  CHECK(std::abs(m.var - 0.01) <= 3.0 * m.se_var);
}

TEST_CASE("symmetric jump driver: Var X_1 = intensity * E[size^2] = 2") {
  const LevySpec spec = make_levy_spec(std::vector{symmetric_jumps(2.0)});
  std::vector<double> terminal;
  for (std::uint64_t p = 0; p < 10000; ++p) {
    const IncrementMatrix inc = sample_increments(spec, 0.01, 100, path_seed(11, p));
    terminal.push_back(inc.values.sum());
  }
  const Moments m = moments(terminal);
  CHECK(std::abs(m.mean) <= 3.0 * m.se_mean);
  CHECK(std::abs(m.var - 2.0) <= 3.0 * m.se_var);
}

TEST_CASE("compensated two-sided exponential increments are centred") {
  RawLevyComponent c;
  c.jump_intensity = 5.0;
  c.jump_law = TwoSidedExpLaw{0.8, 1.5, 3.0};
  const LevySpec spec = make_levy_spec(std::vector{c});
  std::vector<double> terminal;
  for (std::uint64_t p = 0; p < 10000; ++p) {
    terminal.push_back(sample_increments(spec, 0.1, 10, path_seed(5, p)).values.sum());
  }
  const Moments m = moments(terminal);
  CHECK(std::abs(m.mean) <= 3.0 * m.se_mean);
  CHECK(std::abs(m.var - spec[0].variance_rate()) <= 3.0 * m.se_var);
}

TEST_CASE("cumulant values") {
  const LevySpec w = wiener_spec(1);
  const double one[] = {1.0};
  const double zero[] = {0.0};
  CHECK(cumulant(w, one) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(cumulant(w, zero) == 0.0);

  // 2 (cosh 1 - 1), evaluated independently and frozen.
  const LevySpec j = make_levy_spec(std::vector{symmetric_jumps(2.0)});
  CHECK(cumulant(j, one) == doctest::Approx(1.0861612696304874).epsilon(1e-14));
  CHECK(cumulant(j, zero) == 0.0);
}

TEST_CASE("cumulant derivative matches central differences") {
  RawLevyComponent kou;
  kou.brownian_vol = 0.3;
  kou.jump_intensity = 2.0;
  kou.jump_law = TwoSidedExpLaw{0.4, 5.0, 6.0};
  const LevySpec spec = make_levy_spec(std::vector{symmetric_jumps(1.5), kou});
  for (double z : {-2.0, -0.5, 0.0, 0.7, 2.5}) {
    for (std::size_t k = 0; k < 2; ++k) {
      const double h = 1e-5;
      double zp[2] = {0.0, 0.0};
      double zm[2] = {0.0, 0.0};
      zp[k] = z + h;
      zm[k] = z - h;
      const double fd = (cumulant(spec, zp) - cumulant(spec, zm)) / (2.0 * h);
      CHECK(cumulant_derivative(spec, k, z) == doctest::Approx(fd).epsilon(1e-7));
    }
  }
}

TEST_CASE("cumulant outside the moment region throws MomentExplosion") {
  RawLevyComponent kou;
  kou.jump_intensity = 1.0;
  kou.jump_law = TwoSidedExpLaw{0.5, 2.0, 3.0};
  const LevySpec spec = make_levy_spec(std::vector{kou});
  const double z[] = {2.5};
  try {
    cumulant(spec, z);
    FAIL("expected MomentExplosion");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MomentExplosion);
  }
  CHECK_THROWS_AS(cumulant_derivative(spec, 0, -3.0), Error);
}

TEST_CASE("empirical log-mgf matches the cumulant at small z") {
  const LevySpec spec = make_levy_spec(std::vector{symmetric_jumps(2.0)});
  const double z = 0.3;
  std::vector<double> e;
  for (std::uint64_t p = 0; p < 20000; ++p) {
    e.push_back(std::exp(z * sample_increments(spec, 1.0, 1, path_seed(3, p)).values(0, 0)));
  }
  const Moments m = moments(e);
  const double zz[] = {z};
  const double target = std::exp(cumulant(spec, zz));
  CHECK(std::abs(m.mean - target) <= 3.0 * m.se_mean);
}

TEST_CASE("aggregate_increments sums consecutive rows") {
  const IncrementMatrix fine = sample_increments(wiener_spec(2), 0.01, 8, 1);
  const IncrementMatrix coarse = aggregate_increments(fine, 4);
  REQUIRE(coarse.n_steps() == 2);
  CHECK(coarse.dt == doctest::Approx(0.04));
  CHECK(coarse.values(1, 1) == doctest::Approx(fine.values.block(4, 1, 4, 1).sum()));
  CHECK_THROWS_AS(aggregate_increments(fine, 3), Error);
}

TEST_CASE("increment CSV round trip") {
  const IncrementMatrix inc = sample_increments(wiener_spec(3), 0.002, 25, 9);
  std::stringstream ss;
  write_increments_csv(ss, inc);
  const std::string text = ss.str();
  CHECK(text.rfind("t,dX1,dX2,dX3\n", 0) == 0);
  const IncrementMatrix back = read_increments_csv(ss);
  CHECK(back.values == inc.values);
  CHECK(back.dt == doctest::Approx(inc.dt).epsilon(1e-12));

  std::stringstream bad("time,a\n0.1,2\n");
  CHECK_THROWS_AS(read_increments_csv(bad), Error);
}
