#include "affreal/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <numbers>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "affreal/csv.hpp"
#include "affreal/error.hpp"
#include "affreal/expr.hpp"
#include "affreal/hjmm.hpp"
#include "affreal/oracle.hpp"

namespace affreal {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kClauseNames[] = {
    "clause 1 (A-invariance of V)",
    "clause 2 (Pi_U alpha constant on h + V)",
    "clause 3 (volatility ranges in V)",
};

[[noreturn]] void config_error(const std::string& field, const std::string& message) {
  throw Error(ErrorKind::ConfigError, "field '" + field + "': " + message);
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::string item(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

const json* child(const json& j, const char* key) {
  if (!j.is_object()) return nullptr;
  const auto it = j.find(key);
  return it == j.end() || it->is_null() ? nullptr : &*it;
}

double get_number(const json& j, const std::string& path, const char* key, std::optional<double> fallback = {}) {
  const json* v = child(j, key);
  if (!v) {
    if (fallback) return *fallback;
    config_error(join(path, key), "required number is missing");
  }
  if (!v->is_number()) config_error(join(path, key), "expected a number");
  const double x = v->get<double>();
  if (!std::isfinite(x)) config_error(join(path, key), "expected a finite number");
  return x;
}

double get_positive(const json& j, const std::string& path, const char* key, std::optional<double> fallback = {}) {
  const double x = get_number(j, path, key, fallback);
  if (!(x > 0.0)) config_error(join(path, key), "expected a positive number");
  return x;
}

int get_count(const json& j, const std::string& path, const char* key, std::optional<int> fallback = {}) {
  const json* v = child(j, key);
  if (!v) {
    if (fallback) return *fallback;
    config_error(join(path, key), "required integer is missing");
  }
  if (!v->is_number_integer() || v->get<long long>() <= 0 || v->get<long long>() > 100000000) {
    config_error(join(path, key), "expected a positive integer");
  }
  return v->get<int>();
}

std::string get_string(const json& j, const std::string& path, const char* key,
                       std::optional<std::string> fallback = {}) {
  const json* v = child(j, key);
  if (!v) {
    if (fallback) return *fallback;
    config_error(join(path, key), "required string is missing");
  }
  if (!v->is_string()) config_error(join(path, key), "expected a string");
  return v->get<std::string>();
}

QExpFunction qexp_field(const std::string& text, const std::string& path) {
  try {
    return parse_qexp(text);
  } catch (const Error& e) {
    config_error(path, e.what());
  }
}

Expression expression_field(const std::string& text, const std::string& path, int n_vars) {
  try {
    return Expression::parse(text, n_vars);
  } catch (const Error& e) {
    config_error(path, e.what());
  }
}

ModeLabel parse_mode_label(const std::string& text, const std::string& path) {
  ModeLabel label;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, '-')) {
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos) {
      config_error(path, "mode label '" + text + "' is not of the form p-q-k");
    }
    label.push_back(std::stoi(part));
  }
  if (label.empty()) config_error(path, "empty mode label");
  return label;
}

double interpolate(const std::vector<double>& xs, const std::vector<double>& vs, double x) {
  if (x <= xs.front()) return vs.front();
  if (x >= xs.back()) return vs.back();
  const auto hi = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin());
  const double w = (x - xs[hi - 1]) / (xs[hi] - xs[hi - 1]);
  return (1.0 - w) * vs[hi - 1] + w * vs[hi];
}

/// A function given symbolically, or by samples that are re-taken on every
/// grid (an expression in x, or a linearly interpolated CSV table).
struct FunctionSource {
  enum class Kind { Symbolic, Expression, Table };
  Kind kind = Kind::Symbolic;
  Function symbolic = QExpFunction{};
  affreal::Expression expr;
  std::vector<double> xs;
  std::vector<double> vs;
  std::string field;

  bool is_symbolic() const { return kind == Kind::Symbolic; }

  Function realize(const Discretization& d) const {
    if (is_symbolic()) return symbolic;
    if (d.kind() != Discretization::Kind::Line) config_error(field, "sampled functions need a line grid");
    GridFn g;
    for (double x : d.x().nodes()) {
      const double xv[] = {x};
      g.values.push_back(kind == Kind::Expression ? expr(xv) : interpolate(xs, vs, x));
    }
    return g;
  }
};

FunctionSource read_table_source(const fs::path& file, const std::string& path) {
  std::ifstream in(file);
  if (!in) config_error(path, "cannot open '" + file.string() + "'");
  csv::Table t;
  try {
    t = csv::read_table(in);
  } catch (const Error& e) {
    config_error(path, e.what());
  }
  if (t.header.size() != 2 || t.rows.size() < 2) config_error(path, "expected columns x,value with at least 2 rows");
  FunctionSource src;
  src.kind = FunctionSource::Kind::Table;
  for (const auto& row : t.rows) {
    if (!src.xs.empty() && row[0] <= src.xs.back()) config_error(path, "x column must increase");
    src.xs.push_back(row[0]);
    src.vs.push_back(row[1]);
  }
  return src;
}

FunctionSource parse_function(const json& j, const std::string& path, const fs::path& base_dir) {
  FunctionSource src;
  if (j.is_string()) {
    src.symbolic = qexp_field(j.get<std::string>(), path);
  } else if (j.is_number()) {
    src.symbolic = QExpFunction::constant(j.get<double>());
  } else if (!j.is_object() || j.size() != 1) {
    config_error(path, "expected a function text or an object with one of qexp, modes, separable, sampled, csv, "
                       "gaussian_taylor");
  } else if (const json* q = child(j, "qexp")) {
    if (!q->is_string()) config_error(join(path, "qexp"), "expected a string");
    src.symbolic = qexp_field(q->get<std::string>(), join(path, "qexp"));
  } else if (const json* m = child(j, "modes")) {
    if (!m->is_object()) config_error(join(path, "modes"), "expected an object of label: coefficient");
    SpectralFn f;
    for (const auto& [label, coef] : m->items()) {
      const std::string p = join(join(path, "modes"), label);
      if (!coef.is_number()) config_error(p, "expected a number");
      if (coef.get<double>() != 0.0) f.coefs[parse_mode_label(label, p)] = coef.get<double>();
    }
    src.symbolic = f;
  } else if (const json* s = child(j, "separable")) {
    if (!s->is_array()) config_error(join(path, "separable"), "expected an array of {b, s} terms");
    SeparableFn f;
    for (std::size_t i = 0; i < s->size(); ++i) {
      const std::string p = item(join(path, "separable"), i);
      f.terms.emplace_back(qexp_field(get_string((*s)[i], p, "b"), join(p, "b")),
                           qexp_field(get_string((*s)[i], p, "s"), join(p, "s")));
    }
    src.symbolic = f;
  } else if (const json* e = child(j, "sampled")) {
    if (!e->is_string()) config_error(join(path, "sampled"), "expected an expression in x");
    static const std::regex bare_x(R"(\bx\b)");
    src.kind = FunctionSource::Kind::Expression;
    src.expr = expression_field(std::regex_replace(e->get<std::string>(), bare_x, "y1"), join(path, "sampled"), 1);
  } else if (const json* c = child(j, "csv")) {
    if (!c->is_string()) config_error(join(path, "csv"), "expected a file name");
    src = read_table_source(base_dir / c->get<std::string>(), join(path, "csv"));
  } else if (const json* g = child(j, "gaussian_taylor")) {
    if (!g->is_number_integer() || g->get<int>() < 0) config_error(join(path, "gaussian_taylor"), "expected a degree");
    src.symbolic = gaussian_taylor(g->get<int>());
  } else {
    config_error(path, "unknown function form '" + j.begin().key() + "'");
  }
  src.field = path;
  return src;
}

OperatorSpec parse_operator(const json& j, const std::string& path) {
  if (!j.is_object()) config_error(path, "expected an object");
  const std::string type = get_string(j, path, "type");
  OperatorSpec op;
  if (type == "translation") {
    op = Translation{};
  } else if (type == "transport") {
    const std::string geo = get_string(j, path, "geometry", "half_line");
    TransportGeometry g = TransportGeometry::HalfLine;
    if (geo == "mortality_wedge") {
      g = TransportGeometry::MortalityWedge;
    } else if (geo != "half_line") {
      config_error(join(path, "geometry"), "expected half_line or mortality_wedge");
    }
    op = Transport{g, get_number(j, path, "speed", 1.0)};
  } else if (type == "cable") {
    op = Cable{get_number(j, path, "tau", 1.0), get_number(j, path, "lambda_c", 1.0)};
  } else if (type == "heat_disk") {
    op = HeatDisk{get_number(j, path, "a", 1.0)};
  } else if (type == "hermite") {
    op = Hermite{get_count(j, path, "d", 1)};
  } else if (type == "laguerre") {
    op = Laguerre{get_count(j, path, "d", 1)};
  } else if (type == "term_structure_2") {
    op = TermStructure2{get_number(j, path, "kappa", 1.0)};
  } else {
    config_error(join(path, "type"), "unknown operator '" + type + "'");
  }
  try {
    validate(op);
  } catch (const Error& e) {
    config_error(path, e.what());
  }
  return op;
}

LevySpec parse_driver(const json& j, const std::string& path) {
  if (!j.is_object()) config_error(path, "expected an object");
  if (const json* w = child(j, "wiener")) {
    if (!w->is_number_integer() || w->get<int>() <= 0) config_error(join(path, "wiener"), "expected a dimension");
    return wiener_spec(w->get<std::size_t>(), get_positive(j, path, "vol", 1.0));
  }
  const json* comps = child(j, "components");
  if (!comps || !comps->is_array() || comps->empty()) {
    config_error(path, "expected 'wiener': m or a non-empty 'components' array");
  }
  std::vector<RawLevyComponent> raw;
  for (std::size_t i = 0; i < comps->size(); ++i) {
    const json& c = (*comps)[i];
    const std::string p = item(join(path, "components"), i);
    RawLevyComponent r;
    r.brownian_vol = get_number(c, p, "brownian_vol", 0.0);
    r.jump_intensity = get_number(c, p, "jump_intensity", 0.0);
    if (const json* law = child(c, "jump_law")) {
      const std::string lp = join(p, "jump_law");
      const std::string type = get_string(*law, lp, "type");
      if (type == "atoms") {
        const json* atoms = child(*law, "atoms");
        if (!atoms || !atoms->is_array()) config_error(join(lp, "atoms"), "expected an array of {size, prob}");
        AtomLaw a;
        for (std::size_t k = 0; k < atoms->size(); ++k) {
          const std::string ap = item(join(lp, "atoms"), k);
          a.atoms.push_back({get_number((*atoms)[k], ap, "size"), get_number((*atoms)[k], ap, "prob")});
        }
        r.jump_law = a;
      } else if (type == "two_sided_exp") {
        r.jump_law = TwoSidedExpLaw{get_number(*law, lp, "p_up"), get_positive(*law, lp, "rate_up"),
                                    get_positive(*law, lp, "rate_down")};
      } else {
        config_error(join(lp, "type"), "expected atoms or two_sided_exp");
      }
    }
    raw.push_back(r);
  }
  try {
    return make_levy_spec(raw);
  } catch (const Error& e) {
    config_error(path, e.what());
  }
}

void collect_modes(const Function& f, std::set<ModeLabel>& out) {
  if (const auto* s = std::get_if<SpectralFn>(&f)) {
    for (const auto& [label, c] : s->coefs) out.insert(label);
  }
}

int parse_int_field(const json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<long long>() < 0) config_error(path, "expected a non-negative integer");
  return j.get<int>();
}

}  // namespace

struct ScenarioConfig::Impl {
  enum class DriftKind { Zero, Constant, HjmWiener, HjmLevy };
  struct Vol {
    FunctionSource shape;
    Expression coef;
  };
  struct Term {
    Expression coef;
    FunctionSource shape;
  };
  struct Offset {
    int row = 0;
    int col = 0;
    double value = 0.0;
  };

  std::string name;
  OperatorSpec op;
  LevySpec driver;
  std::vector<Vol> vols;
  DriftKind drift_kind = DriftKind::Zero;
  std::optional<FunctionSource> drift_constant;
  std::vector<Term> drift_terms;
  FunctionSource h0;
  std::optional<std::vector<FunctionSource>> subspace;
  bool hjmm_subspace = false;

  double x_min = 0.0;
  double x_max = 0.0;
  double window = 0.0;
  int n_x = 0;
  double b_max = 1.0;
  int n_b = 10;
  std::vector<ModeLabel> modes;
  QExpFunction weight;
  std::string weight_text;

  double horizon = 1.0;
  int n_t = 100;
  std::uint64_t seed = 1;
  int paths = 1;

  BuildOptions build;
  int dim_cap = 50;
  Scheme scheme = Scheme::ExpExact;
  PsiOptions psi;

  double verify_bound = 0.02;
  double verify_ratio = 0.7;
  std::optional<double> theta;
  std::optional<Offset> b_offset;
};

ScenarioConfig::ScenarioConfig() : impl_(std::make_unique<Impl>()) {}
ScenarioConfig::~ScenarioConfig() = default;
ScenarioConfig::ScenarioConfig(ScenarioConfig&&) noexcept = default;
ScenarioConfig& ScenarioConfig::operator=(ScenarioConfig&&) noexcept = default;

const std::string& ScenarioConfig::name() const { return impl_->name; }
const OperatorSpec& ScenarioConfig::op() const { return impl_->op; }

ScenarioConfig ScenarioConfig::parse(std::string_view text, const fs::path& base_dir) {
  json root;
  try {
    root = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(ErrorKind::ParseError, "JSON syntax error at line " + std::to_string(line) + ", column " +
                                           std::to_string(col) + ": " + e.what());
  }
  if (!root.is_object()) config_error("(root)", "expected an object");

  ScenarioConfig cfg;
  Impl& c = *cfg.impl_;
  c.name = get_string(root, "", "name");
  const json* op = child(root, "operator");
  if (!op) config_error("operator", "required object is missing");
  c.op = parse_operator(*op, "operator");
  const FunctionKind kind = symbolic_kind(c.op);

  const json* driver = child(root, "driver");
  if (!driver) config_error("driver", "required object is missing");
  c.driver = parse_driver(*driver, "driver");

  auto function = [&](const json& j, const std::string& path) {
    FunctionSource src = parse_function(j, path, base_dir);
    if (src.is_symbolic() && kind_of(src.symbolic) != kind) {
      config_error(path, "expected a " + std::string(to_string(kind)) + " function for the " + operator_name(c.op) +
                             " operator");
    }
    if (!src.is_symbolic() && kind != FunctionKind::QExp) {
      config_error(path, "sampled functions are only available on line operators");
    }
    return src;
  };

  const json* vols = child(root, "volatility");
  if (!vols || !vols->is_array()) config_error("volatility", "expected an array with one entry per driver component");
  if (vols->size() != c.driver.dimension()) {
    config_error("volatility", "has " + std::to_string(vols->size()) + " entries but the driver has " +
                                   std::to_string(c.driver.dimension()) + " components");
  }
  for (std::size_t k = 0; k < vols->size(); ++k) {
    const std::string p = item("volatility", k);
    const json& v = (*vols)[k];
    Impl::Vol vol;
    if (v.is_object() && child(v, "shape")) {
      vol.shape = function(*child(v, "shape"), join(p, "shape"));
      if (child(v, "coef")) vol.coef = expression_field(get_string(v, p, "coef"), join(p, "coef"), 64);
    } else {
      vol.shape = function(v, p);
    }
    c.vols.push_back(std::move(vol));
  }

  if (const json* d = child(root, "drift")) {
    const std::string type = d->is_string() ? d->get<std::string>() : get_string(*d, "drift", "type");
    if (type == "zero") {
      c.drift_kind = Impl::DriftKind::Zero;
    } else if (type == "constant") {
      c.drift_kind = Impl::DriftKind::Constant;
      if (const json* f = child(*d, "function")) c.drift_constant = function(*f, "drift.function");
      if (const json* terms = child(*d, "state_terms")) {
        if (!terms->is_array()) config_error("drift.state_terms", "expected an array of {coef, shape}");
        for (std::size_t i = 0; i < terms->size(); ++i) {
          const std::string p = item("drift.state_terms", i);
          const json* shape = child((*terms)[i], "shape");
          if (!shape) config_error(join(p, "shape"), "required function is missing");
          c.drift_terms.push_back({expression_field(get_string((*terms)[i], p, "coef"), join(p, "coef"), 64),
                                   function(*shape, join(p, "shape"))});
        }
      }
    } else if (type == "hjm_wiener" || type == "hjm_levy") {
      c.drift_kind = type == "hjm_wiener" ? Impl::DriftKind::HjmWiener : Impl::DriftKind::HjmLevy;
      if (!std::holds_alternative<Translation>(c.op)) config_error("drift", type + " needs the translation operator");
      for (std::size_t k = 0; k < c.vols.size(); ++k) {
        if (!c.vols[k].shape.is_symbolic() || !c.vols[k].coef.empty()) {
          config_error(item("volatility", k), type + " needs state-independent quasi-exponential volatilities");
        }
      }
      if (type == "hjm_wiener" && !c.driver.pure_brownian()) {
        config_error("drift", "hjm_wiener needs a Brownian driver; use hjm_levy for jumps");
      }
    } else {
      config_error("drift.type", "expected zero, constant, hjm_wiener or hjm_levy");
    }
  }

  const json* h0 = child(root, "h0");
  if (!h0) config_error("h0", "required initial curve is missing");
  c.h0 = function(*h0, "h0");

  if (const json* s = child(root, "subspace"); s && s->is_string()) {
    if (s->get<std::string>() != "hjmm") config_error("subspace", "expected \"hjmm\" or an array of basis functions");
    if (!std::holds_alternative<Translation>(c.op)) config_error("subspace", "hjmm needs the translation operator");
    for (std::size_t k = 0; k < c.vols.size(); ++k) {
      if (!c.vols[k].shape.is_symbolic()) config_error(item("volatility", k), "hjmm needs symbolic volatilities");
    }
    c.hjmm_subspace = true;
  } else if (s) {
    if (!s->is_array()) config_error("subspace", "expected \"hjmm\" or an array of basis functions");
    c.subspace.emplace();
    for (std::size_t i = 0; i < s->size(); ++i) {
      FunctionSource f = function((*s)[i], item("subspace", i));
      if (!f.is_symbolic()) config_error(item("subspace", i), "basis functions must be symbolic");
      c.subspace->push_back(std::move(f));
    }
  }

  static const json kEmpty = json::object();
  const json& grid = child(root, "grid") ? *child(root, "grid") : kEmpty;
  const bool transport = is_transport_like(c.op);
  if (kind == FunctionKind::Spectral) {
    std::set<ModeLabel> labels;
    for (const auto& e : eigenpairs(c.op, get_count(grid, "grid", "modes", 6))) labels.insert(e.index);
    for (const auto& v : c.vols) collect_modes(v.shape.symbolic, labels);
    collect_modes(c.h0.symbolic, labels);
    if (c.drift_constant) collect_modes(c.drift_constant->symbolic, labels);
    for (const auto& t : c.drift_terms) collect_modes(t.shape.symbolic, labels);
    if (c.subspace) {
      for (const auto& f : *c.subspace) collect_modes(f.symbolic, labels);
    }
    for (const auto& l : labels) {
      try {
        mode_generator_eigenvalue(c.op, l);
      } catch (const Error& e) {
        config_error("grid.modes", e.what());
      }
    }
    c.modes.assign(labels.begin(), labels.end());
  } else {
    if (std::holds_alternative<Cable>(c.op) || std::holds_alternative<TermStructure2>(c.op)) {
      const double end = std::holds_alternative<Cable>(c.op) ? std::numbers::pi : 1.0;
      if (child(grid, "x_max") && std::abs(get_number(grid, "grid", "x_max") - end) > 1e-12) {
        config_error("grid.x_max", "the " + operator_name(c.op) + " domain ends at " + csv::format_double(end));
      }
      c.x_max = end;
      c.n_x = get_count(grid, "grid", "n_x", 200);
    } else {
      c.x_max = get_positive(grid, "grid", "x_max");
      c.n_x = get_count(grid, "grid", "n_x");
    }
    c.window = get_positive(grid, "grid", "window", c.x_max);
    if (kind == FunctionKind::Separable) {
      c.b_max = get_positive(grid, "grid", "b_max", 1.0);
      c.n_b = get_count(grid, "grid", "n_b", 10);
    }
  }
  c.weight_text = child(root, "complement_weight") ? get_string(root, "", "complement_weight")
                                                    : (transport ? "exp(0.1*x)" : "1");
  c.weight = qexp_field(c.weight_text, "complement_weight");

  const json& time = child(root, "time") ? *child(root, "time") : kEmpty;
  c.horizon = get_positive(time, "time", "horizon", 1.0);
  c.n_t = get_count(time, "time", "n_t", 100);

  if (const json* s = child(root, "seeds")) {
    if (const json* b = child(*s, "base")) {
      if (!b->is_number_unsigned()) config_error("seeds.base", "expected a non-negative integer");
      c.seed = b->get<std::uint64_t>();
    }
    c.paths = get_count(*s, "seeds", "paths", 1);
  }

  if (const json* t = child(root, "tolerances")) {
    c.build.tol_rank = get_positive(*t, "tolerances", "tol_rank", c.build.tol_rank);
    c.build.tol_project = get_positive(*t, "tolerances", "tol_project", c.build.tol_project);
    c.build.tol_drift = get_positive(*t, "tolerances", "tol_drift", c.build.tol_drift);
    c.dim_cap = get_count(*t, "tolerances", "dim_cap", c.dim_cap);
    c.psi.tail_bound = get_positive(*t, "tolerances", "tail_bound", c.psi.tail_bound);
  }

  if (child(root, "scheme")) {
    const std::string s = get_string(root, "", "scheme");
    if (s == "euler") {
      c.scheme = Scheme::Euler;
    } else if (s != "exp_exact") {
      config_error("scheme", "expected euler or exp_exact");
    }
  }
  if (child(root, "psi_method")) {
    const std::string m = get_string(root, "", "psi_method");
    if (m == "shift_exact") {
      c.build.psi_method = PsiMethod::ShiftExact;
    } else if (m == "spectral_truncation") {
      c.build.psi_method = PsiMethod::SpectralTruncation;
    } else if (m == "grid_implicit") {
      c.build.psi_method = PsiMethod::GridImplicit;
    } else {
      config_error("psi_method", "expected shift_exact, spectral_truncation or grid_implicit");
    }
  }

  if (const json* v = child(root, "verify")) {
    c.verify_bound = get_positive(*v, "verify", "bound", c.verify_bound);
    c.verify_ratio = get_positive(*v, "verify", "ratio", c.verify_ratio);
    if (child(*v, "theta")) {
      const double th = get_number(*v, "verify", "theta");
      if (th < 0.0 || th > 1.0) config_error("verify.theta", "expected a value in [0, 1]");
      c.theta = th;
    }
  }

  if (const json* d = child(root, "debug")) {
    if (const json* o = child(*d, "b_offset")) {
      c.b_offset = Impl::Offset{parse_int_field(o->value("row", json(0)), "debug.b_offset.row"),
                                parse_int_field(o->value("col", json(0)), "debug.b_offset.col"),
                                get_number(*o, "debug.b_offset", "value")};
    }
  }
  return cfg;
}

ScenarioConfig ScenarioConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.parent_path());
}

fs::path default_out_dir(const std::optional<std::string>& explicit_dir) {
  if (explicit_dir && !explicit_dir->empty()) return *explicit_dir;
  if (const char* env = std::getenv("AFFREAL_OUT"); env && *env) return env;
  return "affreal_out";
}

OperatorSpec parse_operator_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ParseError, e.what());
  }
  return parse_operator(j, "operator");
}

void write_coordinate_path_csv(std::ostream& out, const CoordinatePath& path) {
  std::vector<std::string> header{"t"};
  for (Eigen::Index i = 0; i < path.coords.cols(); ++i) header.push_back("Y" + std::to_string(i + 1));
  csv::write_row(out, header);
  std::vector<double> row;
  for (Eigen::Index n = 0; n < path.coords.rows(); ++n) {
    row.assign(1, path.t_grid[static_cast<std::size_t>(n)]);
    for (Eigen::Index i = 0; i < path.coords.cols(); ++i) row.push_back(path.coords(n, i));
    csv::write_row(out, row);
  }
}

CoordinatePath read_coordinate_path_csv(std::istream& in) {
  const csv::Table t = csv::read_table(in);
  if (t.header.empty() || t.header[0] != "t") throw Error(ErrorKind::ParseError, "coordinate CSV must start with t");
  CoordinatePath p;
  const auto d = static_cast<Eigen::Index>(t.header.size() - 1);
  p.coords.resize(static_cast<Eigen::Index>(t.rows.size()), d);
  for (std::size_t n = 0; n < t.rows.size(); ++n) {
    p.t_grid.push_back(t.rows[n][0]);
    for (Eigen::Index i = 0; i < d; ++i) p.coords(static_cast<Eigen::Index>(n), i) = t.rows[n][static_cast<std::size_t>(i + 1)];
  }
  return p;
}

namespace {

using Impl = ScenarioConfig::Impl;

/// Grid, functions and time step at refinement factor `factor`.
struct Level {
  Discretization disc;
  std::vector<VolSpec> sigma;
  DriftSpec alpha;
  Function h0;
  int n_t = 0;
  double dt = 0.0;
};

Discretization make_disc(const Impl& c, int factor) {
  switch (symbolic_kind(c.op)) {
    case FunctionKind::Spectral: return Discretization::modal(c.modes);
    case FunctionKind::Separable:
      return Discretization::plane(UniformGrid::span(0.0, c.b_max, c.n_b),
                                   UniformGrid::span(c.x_min, c.x_max, c.n_x * factor), c.window, c.weight);
    default: return Discretization::line(UniformGrid::span(c.x_min, c.x_max, c.n_x * factor), c.window, c.weight);
  }
}

std::vector<QExpFunction> qexp_vols(const Impl& c, bool scale_by_vol) {
  std::vector<QExpFunction> out;
  for (std::size_t k = 0; k < c.vols.size(); ++k) {
    const double s = scale_by_vol ? c.driver[k].brownian_vol : 1.0;
    out.push_back(s * std::get<QExpFunction>(c.vols[k].shape.symbolic));
  }
  return out;
}

Level prepare(const Impl& c, int factor) {
  Level L{make_disc(c, factor), {}, {}, {}, c.n_t * factor, c.horizon / (c.n_t * factor)};
  for (const auto& v : c.vols) L.sigma.push_back(VolSpec{v.shape.realize(L.disc), v.coef});
  switch (c.drift_kind) {
    case Impl::DriftKind::Zero: break;
    case Impl::DriftKind::Constant:
      if (c.drift_constant) L.alpha.constant = c.drift_constant->realize(L.disc);
      for (const auto& t : c.drift_terms) L.alpha.state_terms.push_back({t.coef, t.shape.realize(L.disc)});
      break;
    case Impl::DriftKind::HjmWiener: L.alpha = DriftSpec::of_constant(hjm_drift_wiener(qexp_vols(c, true))); break;
    case Impl::DriftKind::HjmLevy: {
      const auto nodes = L.disc.x().nodes();
      const Eigen::VectorXd a = hjm_drift_levy_grid(c.driver, qexp_vols(c, false), nodes);
      L.alpha = DriftSpec::of_constant(GridFn{{a.data(), a.data() + a.size()}});
      break;
    }
  }
  L.h0 = c.h0.realize(L.disc);
  return L;
}

struct Certified {
  std::optional<QEResult> qe;
  Realization R;
};

/// V is the explicit subspace if given, A_sigma + P(A_sigma) for "hjmm", and
/// A_sigma otherwise.
std::vector<Function> candidate_basis(const Impl& c, const Level& L, std::optional<QEResult>& qe) {
  if (c.subspace) {
    std::vector<Function> basis;
    for (const auto& f : *c.subspace) basis.push_back(f.realize(L.disc));
    return basis;
  }
  std::vector<Function> gens;
  for (const auto& s : L.sigma) {
    if (!is_zero(s.shape)) gens.push_back(s.shape);
  }
  qe = compute_A_sigma(c.op, gens, c.dim_cap, c.build.tol_rank, &L.disc);
  if (qe->status == QEStatus::NotDetected) {
    std::string dims;
    for (int d : qe->dims_per_iteration) dims += (dims.empty() ? "" : ",") + std::to_string(d);
    throw Error(ErrorKind::NotQuasiExponential,
                "A_sigma not detected below cap " + std::to_string(c.dim_cap) + " (dims " + dims + ")");
  }
  if (c.hjmm_subspace) {
    const SpanBasis V = hjmm_realization_subspace(qexp_vols(c, false), c.dim_cap, c.build.tol_rank);
    return {V.functions.begin(), V.functions.end()};
  }
  return qe->basis.functions;
}

Certified certify(const Impl& c, const Level& L, std::optional<QEResult>* qe_out = nullptr) {
  Certified out;
  std::vector<Function> basis;
  try {
    basis = candidate_basis(c, L, out.qe);
  } catch (...) {
    if (qe_out) *qe_out = out.qe;
    throw;
  }
  if (qe_out) *qe_out = out.qe;
  const Subspace V(basis, L.disc, "V", c.build.tol_rank);
  out.R = build_realization(c.op, L.alpha, L.sigma, V, c.build);
  if (c.b_offset) {
    const auto& o = *c.b_offset;
    if (o.row >= out.R.B.rows() || o.col >= out.R.B.cols()) {
      throw Error(ErrorKind::ConfigError, "field 'debug.b_offset': entry outside the " +
                                              std::to_string(out.R.B.rows()) + "x" + std::to_string(out.R.B.cols()) +
                                              " matrix B");
    }
    out.R.B(o.row, o.col) += o.value;
  }
  return out;
}

int clause_of(ErrorKind k) {
  switch (k) {
    case ErrorKind::NotInvariant: return 1;
    case ErrorKind::DriftConditionFails: return 2;
    case ErrorKind::SigmaEscapesV: return 3;
    default: return 0;
  }
}

bool is_config(ErrorKind k) { return k == ErrorKind::ConfigError || k == ErrorKind::ParseError; }

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json basis_json(const std::vector<Function>& basis) {
  json out = json::array();
  for (const auto& f : basis) out.push_back(describe(f));
  return out;
}

json qe_json(const QEResult& qe, int cap) {
  return {{"status", qe.status == QEStatus::QuasiExponential ? "QUASI_EXPONENTIAL" : "NOT_DETECTED"},
          {"dim", qe.basis.dim},
          {"iterations", qe.iterations},
          {"dims_per_iteration", qe.dims_per_iteration},
          {"cap", cap}};
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorKind::ConfigError, "cannot write '" + file.string() + "'");
  out << text;
}

void write_json(const fs::path& file, const json& j) { write_text(file, j.dump(2) + "\n"); }

template <class Fn>
void write_with(const fs::path& file, Fn&& fn) {
  std::ostringstream ss;
  fn(ss);
  write_text(file, ss.str());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::ConfigError, "cannot create output directory '" + dir.string() + "'");
}

GridPath curve_path(const Curve& psi, const Discretization& disc) {
  return GridPath{psi.t_grid, node_coordinates(disc), psi.values, 0};
}

json realization_json(const Impl& c, const Level& L, const Realization& R, const Curve& psi) {
  std::vector<json> coords;
  for (const auto& s : R.sigma_coords) coords.push_back(vector_json(s));
  return {{"scenario", c.name},
          {"operator", operator_name(c.op)},
          {"dim", R.V.dim()},
          {"basis", basis_json(R.V.basis())},
          {"B", matrix_json(R.B)},
          {"sigma_coords", coords},
          {"drift_v", vector_json(R.drift_v)},
          {"drift_u", describe(R.drift_u)},
          {"drift_u_constant", R.drift_u_constant},
          {"psi_method", std::string(to_string(R.psi_method))},
          {"scheme", std::string(to_string(c.scheme))},
          {"weight", c.weight_text},
          {"nodes", L.disc.size()},
          {"horizon", c.horizon},
          {"n_t", L.n_t},
          {"dt", L.dt},
          {"psi_modes_used", psi.modes_used},
          {"psi_truncation_tail", psi.truncation_tail}};
}

Outcome failure(int code, const std::string& what) { return {code, what}; }

/// Per-path coordinate series, computed in parallel and returned in path order.
std::vector<CoordinatePath> simulate_paths(const Impl& c, const Level& L, const Realization& R, const Curve& psi,
                                           const Eigen::VectorXd& v0, std::uint64_t seed, int paths, int jobs) {
  std::vector<CoordinatePath> out(static_cast<std::size_t>(paths));
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (int p = next++; p < paths; p = next++) {
      try {
        const IncrementMatrix inc =
            sample_increments(c.driver, L.dt, L.n_t, path_seed(seed, static_cast<std::uint64_t>(p)));
        out[static_cast<std::size_t>(p)] = simulate_Y(R, psi, v0, inc, c.scheme);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const int n = std::clamp(jobs, 1, std::max(1, paths));
  std::vector<std::thread> pool;
  for (int w = 1; w < n; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace

PreparedScenario prepare_scenario(const ScenarioConfig& cfg, int factor) {
  if (factor < 1) throw Error(ErrorKind::InvalidArgument, "refinement factor must be positive");
  Level L = prepare(cfg.impl(), factor);
  Certified cert = certify(cfg.impl(), L);
  return {std::move(L.disc), std::move(L.sigma), std::move(L.alpha), std::move(L.h0), L.n_t, L.dt, std::move(cert.R)};
}

Outcome run_analyze(const ScenarioConfig& cfg, const RunOptions& opts) {
  const Impl& c = cfg.impl();
  json report{{"scenario", c.name}, {"operator", operator_name(c.op)}};
  json clauses = json::array();
  for (int k = 0; k < 3; ++k) clauses.push_back({{"clause", k + 1}, {"name", kClauseNames[k]}, {"pass", nullptr}});
  Outcome outcome;
  std::optional<QEResult> qe;
  try {
    ensure_dir(opts.out_dir);
    const Level L = prepare(c, 1);
    const Certified cert = certify(c, L, &qe);
    const Realization& R = cert.R;
    clauses[0]["pass"] = true;
    clauses[0]["residual"] = R.clauses.invariance_residual;
    clauses[1]["pass"] = true;
    clauses[1]["deviation"] = R.clauses.drift_deviation;
    clauses[1]["sampled"] = R.clauses.drift_sampled;
    clauses[2]["pass"] = true;
    clauses[2]["residual"] = R.clauses.sigma_residual;
    report["verdict"] = "CERTIFIED";
    report["subspace"] = {{"dim", R.V.dim()}, {"basis", basis_json(R.V.basis())}};
    report["B"] = matrix_json(R.B);
    report["psi_method"] = std::string(to_string(R.psi_method));
    outcome = {kExitOk, "CERTIFIED: realization of dim " + std::to_string(R.V.dim()) + " (" +
                            std::string(to_string(R.psi_method)) + ")"};
  } catch (const Error& e) {
    if (is_config(e.kind())) return failure(kExitConfig, e.what());
    const int clause = clause_of(e.kind());
    report["reason"] = e.what();
    if (clause > 0) {
      // Clauses are evaluated in the order 1, 3, 2; those before the failure passed.
      for (int k : {1, 3, 2}) {
        clauses[static_cast<std::size_t>(k - 1)]["pass"] = k != clause;
        if (k == clause) break;
      }
      report["verdict"] = "CLAUSE_FAILED";
      report["failed_clause"] = kClauseNames[clause - 1];
      outcome = {kExitNegative, std::string(kClauseNames[clause - 1]) + " failed: " + e.what()};
    } else if (e.kind() == ErrorKind::NotQuasiExponential || e.kind() == ErrorKind::DomainError ||
               e.kind() == ErrorKind::MomentExplosion) {
      report["verdict"] = e.kind() == ErrorKind::NotQuasiExponential ? "NOT_DETECTED" : "NO_REALIZATION";
      outcome = {kExitNegative, (e.kind() == ErrorKind::NotQuasiExponential ? "NOT_DETECTED: " : "") +
                                    std::string(e.what())};
    } else {
      report["verdict"] = "ERROR";
      outcome = {kExitBuild, e.what()};
    }
  }
  if (qe) report["a_sigma"] = qe_json(*qe, c.dim_cap);
  report["clauses"] = clauses;
  try {
    write_json(opts.out_dir / "analysis.json", report);
  } catch (const Error& e) {
    return failure(kExitConfig, e.what());
  }
  return outcome;
}

Outcome run_simulate(const ScenarioConfig& cfg, const RunOptions& opts) {
  const Impl& c = cfg.impl();
  const std::uint64_t seed = opts.seed.value_or(c.seed);
  const int paths = opts.paths.value_or(c.paths);
  try {
    ensure_dir(opts.out_dir);
  } catch (const Error& e) {
    return failure(kExitConfig, e.what());
  }
  try {
    const Level L = prepare(c, 1);
    const Certified cert = certify(c, L);
    const Realization& R = cert.R;
    const Curve psi = solve_psi(R, L.h0, uniform_times(c.horizon, L.n_t), c.psi);
    const auto [u0, v0] = split_initial(R, L.h0);
    const auto Ys = simulate_paths(c, L, R, psi, v0, seed, std::max(paths, 1), opts.jobs);
    const GridPath r = reconstruct(psi, Ys.front(), R.V);
    const IncrementMatrix inc = sample_increments(c.driver, L.dt, L.n_t, path_seed(seed, 0));

    write_with(opts.out_dir / "psi.csv", [&](std::ostream& o) { write_grid_path_csv(o, curve_path(psi, L.disc)); });
    write_with(opts.out_dir / "Y.csv", [&](std::ostream& o) { write_coordinate_path_csv(o, Ys.front()); });
    write_with(opts.out_dir / "r.csv", [&](std::ostream& o) { write_grid_path_csv(o, r); });
    write_with(opts.out_dir / "increments.csv", [&](std::ostream& o) { write_increments_csv(o, inc); });
    if (paths > 1) {
      write_with(opts.out_dir / "Y_moments.csv", [&](std::ostream& o) {
        std::vector<std::string> header{"t"};
        for (int i = 1; i <= R.V.dim(); ++i) {
          header.push_back("mean_Y" + std::to_string(i));
          header.push_back("var_Y" + std::to_string(i));
        }
        csv::write_row(o, header);
        const double n = static_cast<double>(paths);
        for (std::size_t t = 0; t < psi.t_grid.size(); ++t) {
          std::vector<double> row{psi.t_grid[t]};
          for (Eigen::Index i = 0; i < R.V.dim(); ++i) {
            double mean = 0.0;
            for (const auto& Y : Ys) mean += Y.coords(static_cast<Eigen::Index>(t), i);
            mean /= n;
            double ss = 0.0;
            for (const auto& Y : Ys) ss += std::pow(Y.coords(static_cast<Eigen::Index>(t), i) - mean, 2);
            row.push_back(mean);
            row.push_back(ss / (n - 1.0));
          }
          csv::write_row(o, row);
        }
      });
    }
    json meta = realization_json(c, L, R, psi);
    meta["seed"] = seed;
    meta["path_seed"] = path_seed(seed, 0);
    meta["paths"] = paths;
    write_json(opts.out_dir / "realization.json", meta);
    return {kExitOk, "simulated " + std::to_string(paths) + " path(s), dim V = " + std::to_string(R.V.dim())};
  } catch (const Error& e) {
    return failure(is_config(e.kind()) ? kExitConfig : kExitBuild, e.what());
  }
}

Outcome run_verify(const ScenarioConfig& cfg, const RunOptions& opts) {
  const Impl& c = cfg.impl();
  const std::uint64_t seed = opts.seed.value_or(c.seed);
  const int K = std::max(1, opts.refine);
  const int finest = 1 << K;
  json levels = json::array();
  std::vector<double> errors;
  double h0_norm = 0.0;
  try {
    ensure_dir(opts.out_dir);
  } catch (const Error& e) {
    return failure(kExitConfig, e.what());
  }
  try {
    const IncrementMatrix fine =
        sample_increments(c.driver, c.horizon / (c.n_t * finest), c.n_t * finest, path_seed(seed, 0));
    for (int k = 0; k <= K; ++k) {
      const int factor = 1 << k;
      const Level L = prepare(c, factor);
      const Certified cert = certify(c, L);
      const Realization& R = cert.R;
      const IncrementMatrix inc = factor == finest ? fine : aggregate_increments(fine, finest / factor);
      const Curve psi = solve_psi(R, L.h0, uniform_times(c.horizon, L.n_t), c.psi);
      const auto [u0, v0] = split_initial(R, L.h0);
      const GridPath r = reconstruct(psi, simulate_Y(R, psi, v0, inc, c.scheme), R.V);
      const Eigen::VectorXd h0 = sample(L.h0, L.disc);
      const GridPath o = solve_spde_grid(c.op, L.alpha, L.sigma, h0, inc, R.V, c.theta);
      const PathComparison cmp = compare_paths(r, o, L.disc);
      const auto fol = foliation_distance(o, psi, R.V);
      const std::vector<int> idx{L.n_t / 4, L.n_t / 2, 3 * L.n_t / 4};
      const std::vector<Eigen::VectorXd> probes{Eigen::VectorXd::Zero(R.V.dim()), Eigen::VectorXd::Ones(R.V.dim())};
      if (k == 0) h0_norm = L.disc.norm(h0);
      errors.push_back(cmp.sup_error);
      levels.push_back({{"factor", factor},
                        {"nodes", L.disc.size()},
                        {"n_t", L.n_t},
                        {"dt", L.dt},
                        {"sup_error", cmp.sup_error},
                        {"relative_error", cmp.relative},
                        {"max_foliation_distance", *std::max_element(fol.begin(), fol.end())},
                        {"tangency_residual", tangency_residual(c.op, L.alpha, psi, R.V, idx, probes)}});
    }
  } catch (const Error& e) {
    return failure(is_config(e.kind()) ? kExitConfig : kExitBuild, e.what());
  }

  const double scale = h0_norm > 0.0 ? h0_norm : 1.0;
  const double bound = c.verify_bound * scale;
  std::string failed;
  if (!(errors[0] <= bound)) {
    failed = "sup_error " + csv::format_double(errors[0]) + " above bound " + csv::format_double(bound);
  }
  json ratios = json::array();
  for (std::size_t k = 1; k < errors.size(); ++k) {
    // Below the floor the coarse run already agrees to rounding.
    const bool resolved = errors[k - 1] <= 1e-12 * scale;
    const double ratio = resolved ? 0.0 : errors[k] / errors[k - 1];
    ratios.push_back(ratio);
    if (failed.empty() && !(ratio <= c.verify_ratio)) {
      failed = "refinement ratio " + csv::format_double(ratio) + " above " + csv::format_double(c.verify_ratio);
    }
  }
  json metrics{{"scenario", c.name},   {"seed", seed},          {"levels", levels},
               {"h0_norm", h0_norm},   {"bound", bound},        {"ratio_limit", c.verify_ratio},
               {"ratios", ratios},     {"pass", failed.empty()}};
  if (!failed.empty()) metrics["failed_metric"] = failed;
  try {
    write_json(opts.out_dir / "metrics.json", metrics);
  } catch (const Error& e) {
    return failure(kExitConfig, e.what());
  }
  if (!failed.empty()) return failure(kExitVerify, "verification failed: " + failed);
  std::string ratio_text;
  for (const auto& r : ratios) ratio_text += " " + csv::format_double(r.get<double>());
  return {kExitOk, "verified: sup_error " + csv::format_double(errors[0]) + " <= " + csv::format_double(bound) +
                       ", ratios" + ratio_text};
}

Outcome run_eigen(const EigenRequest& req, const RunOptions& opts) {
  std::vector<EigenPair> pairs;
  try {
    validate(req.op);
    if (const auto* h = std::get_if<HeatDisk>(&req.op); h && (req.max_p || req.max_q)) {
      pairs = heat_disk_eigenpairs(*h, req.max_p.value_or(req.count - 1), req.max_q.value_or(req.count));
    } else {
      pairs = eigenpairs(req.op, req.count);
    }
  } catch (const Error& e) {
    return failure(kExitConfig, e.what());
  }
  const int S = std::max(req.samples, 2);
  std::vector<double> xs;
  double lo = 0.0;
  double hi = 1.0;
  if (std::holds_alternative<Cable>(req.op)) hi = std::numbers::pi;
  if (std::holds_alternative<Hermite>(req.op)) lo = -3.0, hi = 3.0;
  if (std::holds_alternative<Laguerre>(req.op)) hi = 6.0;
  for (int i = 0; i < S; ++i) xs.push_back(lo + (hi - lo) * i / (S - 1));

  std::ostringstream out;
  std::vector<std::string> header{"index", "eigenvalue", "generator_eigenvalue"};
  for (double x : xs) header.push_back("f@" + csv::format_double(x));
  csv::write_row(out, header);
  for (const auto& e : pairs) {
    std::vector<std::string> row{mode_text(e.index), csv::format_double(e.eigenvalue),
                                 csv::format_double(e.generator_eigenvalue)};
    for (double x : xs) {
      double v = 0.0;
      if (const auto* q = std::get_if<QExpFunction>(&e.eigenfunction)) {
        v = (*q)(x);
      } else {
        std::vector<double> point(std::holds_alternative<HeatDisk>(req.op) ? 2 : e.index.size(), 0.0);
        point[0] = x;
        v = evaluate_mode(req.op, e.index, point);
      }
      row.push_back(csv::format_double(v));
    }
    csv::write_row(out, row);
  }
  try {
    ensure_dir(opts.out_dir);
    write_text(opts.out_dir / "eigen.csv", out.str());
  } catch (const Error& e) {
    return failure(kExitConfig, e.what());
  }
  std::string values;
  for (std::size_t i = 0; i < std::min<std::size_t>(pairs.size(), 8); ++i) {
    values += (i ? " " : "") + csv::format_double(pairs[i].eigenvalue);
  }
  return {kExitOk, std::to_string(pairs.size()) + " eigenpairs of " + operator_name(req.op) + ": " + values +
                       (pairs.size() > 8 ? " ..." : "")};
}

}  // namespace affreal
