#include "affreal/levy.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

#include "affreal/csv.hpp"
#include "affreal/error.hpp"

namespace affreal {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct JumpMoments {
  double mean;
  double second;
};

JumpMoments validate_law(const JumpLaw& law, std::size_t k) {
  const std::string where = "component " + std::to_string(k + 1);
  if (const auto* atoms = std::get_if<AtomLaw>(&law)) {
    if (atoms->atoms.empty()) {
      throw Error(ErrorKind::BadProbabilities, where + ": jump law has no atoms");
    }
    double total = 0.0;
    double mean = 0.0;
    double second = 0.0;
    for (const auto& a : atoms->atoms) {
      if (!std::isfinite(a.size)) {
        throw Error(ErrorKind::InfiniteVariance, where + ": non-finite jump size");
      }
      if (!(a.prob >= 0.0) || !std::isfinite(a.prob)) {
        throw Error(ErrorKind::BadProbabilities, where + ": negative atom probability");
      }
      total += a.prob;
      mean += a.prob * a.size;
      second += a.prob * a.size * a.size;
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw Error(ErrorKind::BadProbabilities,
                  where + ": atom probabilities sum to " + std::to_string(total));
    }
    return {mean, second};
  }
  const auto& kou = std::get<TwoSidedExpLaw>(law);
  if (!(kou.p_up >= 0.0 && kou.p_up <= 1.0)) {
    throw Error(ErrorKind::BadProbabilities, where + ": p_up outside [0,1]");
  }
  const bool up = kou.p_up > 0.0;
  const bool down = kou.p_up < 1.0;
  if ((up && !(kou.rate_up > 0.0 && std::isfinite(kou.rate_up))) ||
      (down && !(kou.rate_down > 0.0 && std::isfinite(kou.rate_down)))) {
    throw Error(ErrorKind::InfiniteVariance,
                where + ": exponential jump rates must be positive");
  }
  const double mean = (up ? kou.p_up / kou.rate_up : 0.0) -
                      (down ? (1.0 - kou.p_up) / kou.rate_down : 0.0);
  const double second =
      (up ? 2.0 * kou.p_up / (kou.rate_up * kou.rate_up) : 0.0) +
      (down ? 2.0 * (1.0 - kou.p_up) / (kou.rate_down * kou.rate_down) : 0.0);
  return {mean, second};
}

// E[exp(z S)] and E[S exp(z S)] for the jump size S.
std::pair<double, double> jump_mgf(const LevyComponent& c, double z) {
  if (const auto* atoms = std::get_if<AtomLaw>(&c.jump_law)) {
    double m0 = 0.0;
    double m1 = 0.0;
    for (const auto& a : atoms->atoms) {
      const double e = std::exp(z * a.size);
      m0 += a.prob * e;
      m1 += a.prob * a.size * e;
    }
    if (!std::isfinite(m0) || !std::isfinite(m1)) {
      throw Error(ErrorKind::MomentExplosion,
                  "exponential moment overflows at z = " + std::to_string(z));
    }
    return {m0, m1};
  }
  const auto& kou = std::get<TwoSidedExpLaw>(c.jump_law);
  double m0 = 0.0;
  double m1 = 0.0;
  if (kou.p_up > 0.0) {
    if (z >= kou.rate_up) {
      throw Error(ErrorKind::MomentExplosion,
                  "z = " + std::to_string(z) + " >= rate_up = " + std::to_string(kou.rate_up));
    }
    const double d = kou.rate_up - z;
    m0 += kou.p_up * kou.rate_up / d;
    m1 += kou.p_up * kou.rate_up / (d * d);
  }
  if (kou.p_up < 1.0) {
    if (z <= -kou.rate_down) {
      throw Error(ErrorKind::MomentExplosion,
                  "z = " + std::to_string(z) + " <= -rate_down = " +
                      std::to_string(-kou.rate_down));
    }
    const double d = kou.rate_down + z;
    const double q = 1.0 - kou.p_up;
    m0 += q * kou.rate_down / d;
    m1 -= q * kou.rate_down / (d * d);
  }
  return {m0, m1};
}

}  // namespace

bool LevySpec::pure_brownian() const {
  for (const auto& c : components_) {
    if (!c.pure_brownian()) return false;
  }
  return true;
}

LevySpec make_levy_spec(std::span<const RawLevyComponent> raw) {
  if (raw.empty()) {
    throw Error(ErrorKind::InvalidArgument, "driver needs at least one component");
  }
  std::vector<LevyComponent> out;
  out.reserve(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) {
    const auto& r = raw[k];
    if (!(r.brownian_vol >= 0.0) || !(r.jump_intensity >= 0.0) ||
        !std::isfinite(r.brownian_vol) || !std::isfinite(r.jump_intensity)) {
      throw Error(ErrorKind::InvalidArgument,
                  "component " + std::to_string(k + 1) +
                      ": brownian_vol and jump_intensity must be finite and nonnegative");
    }
    LevyComponent c;
    c.brownian_vol = r.brownian_vol;
    c.jump_intensity = r.jump_intensity;
    c.jump_law = r.jump_law;
    if (r.jump_intensity > 0.0) {
      const auto m = validate_law(r.jump_law, k);
      c.mean_jump = m.mean;
      c.second_moment = m.second;
    }
    if (c.variance_rate() == 0.0) {
      throw Error(ErrorKind::ZeroComponent,
                  "component " + std::to_string(k + 1) + " is identically zero");
    }
    out.push_back(std::move(c));
  }
  return LevySpec(std::move(out));
}

LevySpec wiener_spec(std::size_t m, double vol) {
  std::vector<RawLevyComponent> raw(m, RawLevyComponent{vol, 0.0, AtomLaw{}});
  return make_levy_spec(raw);
}

std::uint64_t path_seed(std::uint64_t base, std::uint64_t path) {
  return splitmix64(splitmix64(base) ^ (path * 0xd1b54a32d192ed03ULL + 1));
}

IncrementMatrix sample_increments(const LevySpec& spec, double dt, int n_steps,
                                  std::uint64_t seed) {
  if (!(dt > 0.0) || n_steps <= 0) {
    throw Error(ErrorKind::InvalidArgument, "sample_increments needs dt > 0 and n_steps > 0");
  }
  const auto m = static_cast<Eigen::Index>(spec.dimension());
  IncrementMatrix inc{dt, Eigen::MatrixXd::Zero(n_steps, m), seed};
  const double sqdt = std::sqrt(dt);
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto& c = spec[static_cast<std::size_t>(k)];
    std::mt19937_64 gen(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(k) + 0x51ed)));
    std::normal_distribution<double> normal(0.0, 1.0);
    const bool jumps = c.jump_intensity > 0.0;
    std::poisson_distribution<int> count(jumps ? c.jump_intensity * dt : 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::discrete_distribution<std::size_t> pick;
    const auto* atoms = std::get_if<AtomLaw>(&c.jump_law);
    if (jumps && atoms != nullptr) {
      std::vector<double> w;
      for (const auto& a : atoms->atoms) w.push_back(a.prob);
      pick = std::discrete_distribution<std::size_t>(w.begin(), w.end());
    }
    const double drift = -c.compensation() * dt;
    for (int n = 0; n < n_steps; ++n) {
      double dx = c.brownian_vol > 0.0 ? c.brownian_vol * sqdt * normal(gen) : 0.0;
      if (jumps) {
        const int nj = count(gen);
        for (int j = 0; j < nj; ++j) {
          if (atoms != nullptr) {
            dx += atoms->atoms[pick(gen)].size;
          } else {
            const auto& kou = std::get<TwoSidedExpLaw>(c.jump_law);
            const bool up = unif(gen) < kou.p_up;
            const double e = -std::log1p(-unif(gen));
            dx += up ? e / kou.rate_up : -e / kou.rate_down;
          }
        }
        dx += drift;
      }
      inc.values(n, k) = dx;
    }
  }
  return inc;
}

IncrementMatrix aggregate_increments(const IncrementMatrix& fine, int factor) {
  if (factor <= 0 || fine.n_steps() % factor != 0) {
    throw Error(ErrorKind::InvalidArgument,
                "aggregation factor must divide the number of steps");
  }
  const Eigen::Index n = fine.n_steps() / factor;
  IncrementMatrix out{fine.dt * factor, Eigen::MatrixXd::Zero(n, fine.dimension()), fine.seed};
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values.row(i) = fine.values.middleRows(i * factor, factor).colwise().sum();
  }
  return out;
}

double cumulant(const LevySpec& spec, std::span<const double> z) {
  if (z.size() != spec.dimension()) {
    throw Error(ErrorKind::InvalidArgument, "cumulant argument has wrong dimension");
  }
  double psi = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    const auto& c = spec[k];
    psi += 0.5 * c.brownian_vol * c.brownian_vol * z[k] * z[k];
    if (c.jump_intensity > 0.0) {
      const auto [m0, m1] = jump_mgf(c, z[k]);
      psi += c.jump_intensity * (m0 - 1.0 - z[k] * c.mean_jump);
    }
  }
  return psi;
}

double cumulant_derivative(const LevySpec& spec, std::size_t k, double z_k) {
  const auto& c = spec[k];
  double d = c.brownian_vol * c.brownian_vol * z_k;
  if (c.jump_intensity > 0.0) {
    const auto [m0, m1] = jump_mgf(c, z_k);
    d += c.jump_intensity * (m1 - c.mean_jump);
  }
  return d;
}

void write_increments_csv(std::ostream& out, const IncrementMatrix& inc) {
  std::vector<std::string> header{"t"};
  for (Eigen::Index k = 0; k < inc.dimension(); ++k) {
    header.push_back("dX" + std::to_string(k + 1));
  }
  csv::write_row(out, header);
  std::vector<double> row(static_cast<std::size_t>(inc.dimension()) + 1);
  for (Eigen::Index n = 0; n < inc.n_steps(); ++n) {
    row[0] = static_cast<double>(n + 1) * inc.dt;
    for (Eigen::Index k = 0; k < inc.dimension(); ++k) {
      row[static_cast<std::size_t>(k) + 1] = inc.values(n, k);
    }
    csv::write_row(out, row);
  }
}

IncrementMatrix read_increments_csv(std::istream& in) {
  const auto table = csv::read_table(in);
  if (table.header.size() < 2 || table.header[0] != "t") {
    throw Error(ErrorKind::ParseError, "increment CSV must start with header t,dX1,...");
  }
  if (table.rows.empty()) {
    throw Error(ErrorKind::ParseError, "increment CSV has no rows");
  }
  const auto m = static_cast<Eigen::Index>(table.header.size() - 1);
  IncrementMatrix inc{table.rows[0][0], Eigen::MatrixXd(table.rows.size(), m), 0};
  for (std::size_t n = 0; n < table.rows.size(); ++n) {
    for (Eigen::Index k = 0; k < m; ++k) {
      inc.values(static_cast<Eigen::Index>(n), k) = table.rows[n][static_cast<std::size_t>(k) + 1];
    }
  }
  return inc;
}

}  // namespace affreal
