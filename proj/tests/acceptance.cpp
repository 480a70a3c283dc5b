// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "affreal/error.hpp"
#include "affreal/hjmm.hpp"
#include "affreal/levy.hpp"
#include "affreal/operators.hpp"
#include "affreal/qexp.hpp"
#include "affreal/realization.hpp"
#include "affreal/scenario.hpp"
#include "affreal/special.hpp"
#include "bessel_oracle.hpp"
#include "support.hpp"

using namespace affreal;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;
const fs::path kScenarios = AFFREAL_SCENARIO_DIR;

struct Verdict {
  bool pass = true;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

QExpFunction ex(double rate, double coef = 1.0, int power = 0) { return QExpFunction::monomial(coef, power, rate); }
QExpFunction sinx(double n, double coef = 1.0) { return QExpFunction::monomial(coef, 0, 0.0, n, Trig::Sin); }

Verdict eigen_catalogs() {
  Verdict v;
  double cable = 0.0, ts = 0.0, zero = 0.0, disk = 0.0;
  for (const auto& e : eigenpairs(Cable{}, 10)) cable = std::max(cable, std::abs(e.eigenvalue - e.index[0] * e.index[0]));
  for (double kappa : {0.5, 1.0, 2.0}) {
    for (const auto& e : eigenpairs(TermStructure2{kappa}, 10)) {
      const double n = e.index[0];
      const double expect = (1.0 + n * n * kPi * kPi * kappa * kappa) / (2.0 * kappa);
      ts = std::max(ts, std::abs(e.eigenvalue - expect) / expect);
    }
  }
  bool integer = true;
  for (const OperatorSpec& op : {OperatorSpec{Hermite{1}}, OperatorSpec{Hermite{2}}, OperatorSpec{Laguerre{1}},
                                 OperatorSpec{Laguerre{3}}}) {
    for (const auto& e : eigenpairs(op, 5)) {
      int n = 0;
      for (int b : e.index) n += b;
      integer = integer && e.eigenvalue == n;
    }
  }
  for (const auto& e : heat_disk_eigenpairs(HeatDisk{}, 5, 5)) {
    const double z = testing::bessel_zeros_oracle(e.index[0], e.index[1])[static_cast<std::size_t>(e.index[1] - 1)];
    zero = std::max(zero, std::abs(bessel_zero(e.index[0], e.index[1]) - z));
    disk = std::max(disk, std::abs(e.eigenvalue - z * z) / (z * z));
  }
  v.pass = cable <= 1e-12 && ts <= 1e-12 && integer && zero <= 1e-10 && disk <= 1e-10;
  v.detail = "cable max err " + fmt(cable) + ", term-structure rel err " + fmt(ts) + ", Hermite/Laguerre " +
             (integer ? "exact" : "MISMATCH") + ", Bessel zeros max err " + fmt(zero) + ", disk rel err " + fmt(disk);
  return v;
}

// Random member of the quasi-exponential family: sum_i p_i(x) e^{l_i x} +
// sum_j (q_j(x) cos(n_j x) + r_j(x) sin(n_j x)) e^{m_j x}, degrees <= p.
QExpFunction family_member(std::mt19937_64& rng, int& generators, int& p) {
  std::uniform_int_distribution<int> count(0, 3);
  std::uniform_int_distribution<int> pick(0, 2);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  std::vector<double> rates{-2.0, -1.5, -1.0, -0.5, 0.0, 0.3, 0.7};
  std::vector<std::pair<double, double>> waves;
  for (double m : {-1.0, -0.5, 0.0}) {
    for (double n : {0.5, 1.0, 2.0, 3.0}) waves.emplace_back(m, n);
  }
  std::shuffle(rates.begin(), rates.end(), rng);
  std::shuffle(waves.begin(), waves.end(), rng);
  int nI = 0, nJ = 0;
  while (nI + nJ == 0) nI = count(rng), nJ = count(rng);
  p = pick(rng);
  auto poly = [&](double rate, double freq, Trig kind) {
    std::vector<QExpTerm> terms;
    std::uniform_int_distribution<int> deg(0, p);
    const int d = deg(rng);
    for (int j = 0; j <= d; ++j) terms.push_back({coef(rng), j, rate, freq, kind});
    return QExpFunction(terms);
  };
  QExpFunction f;
  for (int i = 0; i < nI; ++i) f += poly(rates[static_cast<std::size_t>(i)], 0.0, Trig::Cos);
  for (int j = 0; j < nJ; ++j) {
    const auto [m, n] = waves[static_cast<std::size_t>(j)];
    f += poly(m, n, Trig::Cos) + poly(m, n, Trig::Sin);
  }
  generators = nI + nJ;
  return f;
}

Verdict quasi_exponential_detection() {
  Verdict v;
  std::mt19937_64 rng(72);
  int worst_slack = 1 << 30;
  for (int i = 0; i < 20; ++i) {
    int generators = 0, p = 0;
    const std::vector<Function> sigma{family_member(rng, generators, p)};
    const QEResult r = compute_A_sigma(Translation{}, sigma, 50);
    const int bound = generators * (p + 1) * 2;
    const bool inv = check_A_invariant(Translation{}, std::span<const Function>(r.basis.functions)).invariant;
    if (r.status != QEStatus::QuasiExponential || r.basis.dim > bound || !inv) v.pass = false;
    worst_slack = std::min(worst_slack, bound - r.basis.dim);
  }
  const std::vector<Function> gauss{gaussian_taylor(60)};
  const QEResult g = compute_A_sigma(Translation{}, gauss, 50);
  const Discretization d =
      Discretization::line(UniformGrid::span(0.0, 12.0, 600), 10.0, QExpFunction::monomial(1.0, 0, 0.1));
  GridFn samples;
  for (double x : d.x().nodes()) samples.values.push_back(1.0 / (1.0 + x));
  const std::vector<Function> inv{samples};
  const QEResult h = compute_A_sigma(Translation{}, inv, 50, 1e-9, &d);
  v.pass = v.pass && g.status == QEStatus::NotDetected && h.status == QEStatus::NotDetected;
  v.detail = "20 family members detected within bound (min slack " + std::to_string(worst_slack) +
             "), exp(-x^2) surrogate " + (g.status == QEStatus::NotDetected ? "NOT_DETECTED" : "DETECTED") +
             ", 1/(1+x) samples " + (h.status == QEStatus::NotDetected ? "NOT_DETECTED" : "DETECTED") + " at cap 50";
  return v;
}

// A function of the scenario's kind outside V.
Function non_member(const OperatorSpec& op, const Realization& R) {
  if (std::holds_alternative<Cable>(op)) return sinx(7.0, 0.1);
  if (std::holds_alternative<TermStructure2>(op)) return QExpFunction::monomial(0.1, 0, -1.0, 5.0 * kPi, Trig::Sin);
  if (symbolic_kind(op) == FunctionKind::Separable) return SeparableFn{{{QExpFunction::constant(1.0), ex(-3.7, 0.1)}}};
  if (symbolic_kind(op) == FunctionKind::Spectral) {
    std::set<ModeLabel> used;
    for (const auto& f : R.V.basis()) {
      for (const auto& [label, c] : std::get<SpectralFn>(f).coefs) used.insert(label);
    }
    for (const auto& label : R.V.disc().modes()) {
      if (!used.count(label)) return SpectralFn{{{label, 0.1}}};
    }
  }
  return ex(-3.7, 0.1);
}

Verdict realization_round_trip() {
  Verdict v;
  const fs::path out = fs::temp_directory_path() / "affreal_acceptance" / "analyze";
  int scenarios = 0;
  std::string failures;
  for (const auto& entry : fs::directory_iterator(kScenarios)) {
    const std::string name = entry.path().stem().string();
    if (entry.path().extension() != ".json" || name == "schema" || name.rfind("control-", 0) == 0) continue;
    ++scenarios;
    const ScenarioConfig cfg = ScenarioConfig::load(entry.path());
    RunOptions o;
    o.out_dir = out / name;
    bool ok = run_analyze(cfg, o).exit_code == kExitOk;
    if (ok) {
      std::ifstream in(o.out_dir / "analysis.json");
      const json a = json::parse(in);
      for (const auto& c : a["clauses"]) ok = ok && c["pass"] == true;
    }
    const PreparedScenario P = prepare_scenario(cfg);
    const Realization& R = P.realization;
    std::vector<VolSpec> sigma = P.sigma;
    sigma[0].shape = add(sigma[0].shape, non_member(cfg.op(), R));
    try {
      build_realization(cfg.op(), P.alpha, sigma, R.V);
      ok = false;
    } catch (const Error& e) {
      ok = ok && e.kind() == ErrorKind::SigmaEscapesV;
    }
    if (!ok) failures += " " + name;
  }
  v.pass = failures.empty() && scenarios >= 8;
  v.detail = std::to_string(scenarios) + " certified scenarios pass all three clauses; perturbed sigma gives "
             "SigmaEscapesV" + (failures.empty() ? std::string() : ", failing:" + failures);
  return v;
}

Verdict oracle_equivalence() {
  Verdict v;
  const ScenarioConfig cfg = ScenarioConfig::load(kScenarios / "hjmm-linear.json");
  RunOptions o;
  o.out_dir = fs::temp_directory_path() / "affreal_acceptance" / "verify";
  const Outcome out = run_verify(cfg, o);
  std::ifstream in(o.out_dir / "metrics.json");
  const json m = json::parse(in);
  const auto& l0 = m["levels"][0];
  const double dx = 22.0 / (l0["nodes"].get<double>() - 1.0);
  const double err = l0["sup_error"].get<double>();
  const double bound = 0.02 * m["h0_norm"].get<double>();
  const double ratio = m["ratios"][0].get<double>();
  const bool setup = std::abs(dx - 0.01) < 1e-12 && std::abs(l0["dt"].get<double>() - 1e-3) < 1e-15;
  v.pass = out.exit_code == kExitOk && setup && err <= bound && ratio <= 0.7;
  v.detail = "dx " + fmt(dx) + ", dt " + fmt(l0["dt"].get<double>()) + ": sup error " + fmt(err) + " <= " +
             fmt(bound) + " (0.02 |h0|), halving ratio " + fmt(ratio) + " <= 0.7";
  return v;
}

Verdict complement_independence() {
  Verdict v;
  const QExpFunction h0 = sinx(1, 0.4) + sinx(2, -0.3) + sinx(3, 0.2) + sinx(7, 0.05);
  const IncrementMatrix inc = sample_increments(wiener_spec(2), 1e-3, 1000, 12);
  const auto t = uniform_times(1.0, 1000);
  const std::vector<VolSpec> sigma{VolSpec{sinx(1, 0.3), {}}, VolSpec{sinx(1, 0.1) + sinx(2, 0.2), {}}};
  const DriftSpec alpha = DriftSpec::of_constant(sinx(2, 0.05) + sinx(4, 0.1));
  std::vector<Eigen::MatrixXd> paths;
  for (const QExpFunction& w : {QExpFunction::constant(1.0), ex(0.5) + QExpFunction::monomial(1.0, 2)}) {
    const Discretization d = Discretization::line(UniformGrid::span(0.0, kPi, 400), kPi, w);
    const Realization R = build_realization(Cable{0.5, 1.2}, alpha, sigma, Subspace({sinx(1), sinx(2)}, d));
    const auto [u0, v0] = split_initial(R, h0);
    const Curve psi = solve_psi(R, h0, t);
    paths.push_back(reconstruct(psi, simulate_Y(R, psi, v0, inc, Scheme::ExpExact), R.V).values);
  }
  const double rel = (paths[0] - paths[1]).cwiseAbs().maxCoeff() / paths[0].cwiseAbs().maxCoeff();
  v.pass = rel <= 1e-8;
  v.detail = "cable, dim V = 2, weights 1 and exp(x/2) + x^2: relative sup difference " + fmt(rel) + " <= 1e-8";
  return v;
}

Verdict semiinvariance_correction() {
  Verdict v;
  const Discretization d =
      Discretization::line(UniformGrid::span(0.0, 30.0, 3000), 20.0, QExpFunction::monomial(1.0, 0, 0.1));
  const QExpFunction b = ex(-1.0, 1.0, 1);
  const Subspace V({b}, d);
  const Correction T = make_semiinvariant_correction(Translation{}, V);
  const Eigen::VectorXd vs = sample(b, d);
  const Eigen::VectorXd img = sample(apply_exact(Translation{}, b), d) + T.apply(vs);
  const double res = d.norm(V.residual(img));
  const double before = d.norm(V.residual(sample(apply_exact(Translation{}, b), d)));
  v.pass = res <= 1e-10;
  v.detail = "V = span{x exp(-x)} under translation: |Pi_U A v| = " + fmt(before) + ", |Pi_U (A + T) v| = " +
             fmt(res) + " <= 1e-10";
  return v;
}

Verdict hjm_drift_identities() {
  Verdict v;
  const std::vector<QExpFunction> s{ex(-1.0)};
  const QExpFunction a = hjm_drift_wiener(s);
  const auto& t = a.terms();
  const bool exact = t.size() == 2 && t[0].rate == -2.0 && t[0].coef == -1.0 && t[1].rate == -1.0 &&
                     t[1].coef == 1.0 && t[0].power == 0 && t[1].power == 0 && t[0].freq == 0.0 && t[1].freq == 0.0;

  std::vector<double> xs;
  for (int i = 0; i <= 400; ++i) xs.push_back(0.05 * i);
  std::mt19937_64 rng(4);
  double levy = 0.0;
  for (int i = 0; i < 20; ++i) {
    std::vector<QExpFunction> sig{testing::random_qexp(rng, 3), testing::random_qexp(rng, 2)};
    if (i == 0) sig = {ex(-1.0), QExpFunction{}};
    const Eigen::VectorXd g = hjm_drift_levy_grid(wiener_spec(2), sig, xs);
    const QExpFunction w = hjm_drift_wiener(sig);
    for (std::size_t k = 0; k < xs.size(); ++k) {
      levy = std::max(levy, std::abs(g(static_cast<Eigen::Index>(k)) - w(xs[k])) / std::max(1.0, std::abs(w(xs[k]))));
    }
  }

  std::mt19937_64 rb(61);
  std::uniform_int_distribution<int> dim(1, 4);
  int violations = 0;
  for (int i = 0; i < 50; ++i) {
    std::vector<QExpFunction> V;
    const int d = dim(rb);
    while (static_cast<int>(V.size()) < d) {
      V.push_back(testing::random_qexp(rb, 3));
      if (span_dimension(V).dim < static_cast<int>(V.size())) V.pop_back();
    }
    if (product_closure(V).dim > d + d * d) ++violations;
  }
  v.pass = exact && levy <= 1e-10 && violations == 0;
  v.detail = std::string("Wiener drift of exp(-x) is ") + (exact ? "exactly exp(-x) - exp(-2x)" : "WRONG") +
             ", Levy grid vs closed form max err " + fmt(levy) + ", product-closure bound held on 50 bases (" +
             std::to_string(violations) + " violations)";
  return v;
}

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  for (double x : xs) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(xs.size() - 1);
  return m;
}

Verdict stochastic_moments() {
  Verdict v;
  constexpr int N = 10000;
  const Discretization d =
      Discretization::line(UniformGrid::span(0.0, 12.0, 240), 10.0, QExpFunction::monomial(1.0, 0, 0.1));
  const Realization R = build_realization(Translation{}, DriftSpec::zero(), {VolSpec{ex(-1.0), {}}},
                                          Subspace({ex(-1.0)}, d));
  if (R.B.size() != 1 || std::abs(R.B(0, 0) + 1.0) > 1e-12) return {false, "B != [-1]"};
  Curve psi;
  psi.t_grid = uniform_times(1.0, 100);
  psi.values = Eigen::MatrixXd::Zero(101, d.size());
  std::vector<double> half, one;
  for (int p = 0; p < N; ++p) {
    const IncrementMatrix inc = sample_increments(wiener_spec(1), 0.01, 100, path_seed(808, static_cast<std::uint64_t>(p)));
    const CoordinatePath y = simulate_Y(R, psi, Eigen::VectorXd::Zero(1), inc, Scheme::ExpExact);
    half.push_back(y.coords(50, 0));
    one.push_back(y.coords(100, 0));
  }
  double worst = 0.0;
  for (const auto& [xs, t] : {std::pair{half, 0.5}, std::pair{one, 1.0}}) {
    const Moments m = moments(xs);
    const double target = (1.0 - std::exp(-2.0 * t)) / 2.0;
    worst = std::max(worst, std::abs(m.var - target) / (m.var * std::sqrt(2.0 / (N - 1.0))));
  }

  RawLevyComponent kou;
  kou.jump_intensity = 2.0;
  kou.jump_law = TwoSidedExpLaw{0.4, 5.0, 6.0};
  RawLevyComponent atoms;
  atoms.brownian_vol = 0.2;
  atoms.jump_intensity = 1.5;
  atoms.jump_law = AtomLaw{{{0.5, 0.3}, {-0.2, 0.7}}};
  const LevySpec driver = make_levy_spec(std::vector{kou, atoms});
  std::vector<std::vector<double>> ends(2);
  for (int p = 0; p < N; ++p) {
    const IncrementMatrix inc = sample_increments(driver, 0.01, 100, path_seed(909, static_cast<std::uint64_t>(p)));
    for (int k = 0; k < 2; ++k) ends[static_cast<std::size_t>(k)].push_back(inc.values.col(k).sum());
  }
  double worst_mean = 0.0;
  for (const auto& e : ends) {
    const Moments m = moments(e);
    worst_mean = std::max(worst_mean, std::abs(m.mean) / std::sqrt(m.var / N));
  }
  v.pass = worst <= 3.0 && worst_mean <= 3.0;
  v.detail = "OU variance at t = 0.5, 1 within " + fmt(worst) + " SE; compensated jump means within " +
             fmt(worst_mean) + " SE (limit 3, 10^4 paths)";
  return v;
}

Verdict funalg_calculus() {
  Verdict v;
  std::mt19937_64 rng(2024);
  double di = 0.0, id = 0.0, mul = 0.0;
  std::uniform_real_distribution<double> xs(0.0, 5.0);
  for (int i = 0; i < 200; ++i) {
    const QExpFunction f = testing::random_qexp(rng);
    const QExpFunction g = testing::random_qexp(rng);
    const double scale = std::max(1.0, testing::max_abs_coef(f));
    di = std::max(di, coefficient_distance(differentiate(integrate_T(f)), f) / scale);
    id = std::max(id, coefficient_distance(integrate_T(differentiate(f)), f - QExpFunction::constant(f(0.0))) / scale);
    const QExpFunction fg = multiply(f, g);
    for (int k = 0; k < 8; ++k) {
      const double x = xs(rng);
      mul = std::max(mul, std::abs(fg(x) - f(x) * g(x)) / std::max(1.0, std::abs(f(x) * g(x))));
    }
  }
  v.pass = di <= 1e-12 && id <= 1e-12 && mul <= 1e-10;
  v.detail = "200 random functions: D T f - f " + fmt(di) + ", T D f - (f - f(0)) " + fmt(id) +
             " (coefficient level, <= 1e-12), multiply vs pointwise product " + fmt(mul) + " <= 1e-10";
  return v;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double limit_seconds;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria{
      {"eigen catalogs", 5.0, eigen_catalogs},
      {"quasi-exponential detection", 10.0, quasi_exponential_detection},
      {"realization round trip", 0.0, realization_round_trip},
      {"oracle equivalence", 60.0, oracle_equivalence},
      {"complement independence", 0.0, complement_independence},
      {"semi-invariance correction", 0.0, semiinvariance_correction},
      {"HJM drift identities", 0.0, hjm_drift_identities},
      {"stochastic moments", 30.0, stochastic_moments},
      {"funalg calculus", 0.0, funalg_calculus},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& c = criteria[i];
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string timing = fmt(secs) + " s";
    if (c.limit_seconds > 0.0) {
      timing += " < " + fmt(c.limit_seconds) + " s";
      if (secs >= c.limit_seconds) {
        v.pass = false;
        timing += " EXCEEDED";
      }
    }
    if (!v.pass) ++failed;
    std::printf("[%s] criterion %zu (%s): %s [%s]\n", v.pass ? "PASS" : "FAIL", i + 1, c.name, v.detail.c_str(),
                timing.c_str());
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
