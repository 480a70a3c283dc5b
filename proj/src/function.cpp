#include "affreal/function.hpp"

#include <algorithm>
#include <cmath>

#include "affreal/csv.hpp"
#include "affreal/error.hpp"

namespace affreal {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

void require_same_kind(std::span<const Function> funcs) {
  for (const auto& f : funcs) {
    if (kind_of(f) != kind_of(funcs.front())) {
      throw Error(ErrorKind::InvalidArgument, "functions of different kinds cannot be combined");
    }
  }
}

std::string label_text(const ModeLabel& l) {
  std::string s;
  for (std::size_t i = 0; i < l.size(); ++i) {
    if (i) s += '-';
    s += std::to_string(l[i]);
  }
  return s;
}

}  // namespace

FunctionKind kind_of(const Function& f) { return static_cast<FunctionKind>(f.index()); }

std::string_view to_string(FunctionKind kind) {
  switch (kind) {
    case FunctionKind::QExp: return "qexp";
    case FunctionKind::Spectral: return "spectral";
    case FunctionKind::Separable: return "separable";
    case FunctionKind::Grid: return "grid";
  }
  return "?";
}

bool is_zero(const Function& f) {
  return std::visit(overloaded{
                        [](const QExpFunction& q) { return q.is_zero(); },
                        [](const SpectralFn& s) {
                          return std::all_of(s.coefs.begin(), s.coefs.end(),
                                             [](const auto& kv) { return kv.second == 0.0; });
                        },
                        [](const SeparableFn& s) {
                          return std::all_of(s.terms.begin(), s.terms.end(), [](const auto& t) {
                            return t.first.is_zero() || t.second.is_zero();
                          });
                        },
                        [](const GridFn& g) {
                          return std::all_of(g.values.begin(), g.values.end(),
                                             [](double v) { return v == 0.0; });
                        },
                    },
                    f);
}

Function scale(double s, const Function& f) {
  return std::visit(overloaded{
                        [&](const QExpFunction& q) -> Function { return s * q; },
                        [&](const SpectralFn& sp) -> Function {
                          SpectralFn out = sp;
                          for (auto& [k, c] : out.coefs) c *= s;
                          return out;
                        },
                        [&](const SeparableFn& sep) -> Function {
                          SeparableFn out = sep;
                          for (auto& t : out.terms) t.second = s * t.second;
                          return out;
                        },
                        [&](const GridFn& g) -> Function {
                          GridFn out = g;
                          for (auto& v : out.values) v *= s;
                          return out;
                        },
                    },
                    f);
}

Function add(const Function& a, const Function& b) {
  if (kind_of(a) != kind_of(b)) {
    throw Error(ErrorKind::InvalidArgument, "cannot add functions of different kinds");
  }
  switch (kind_of(a)) {
    case FunctionKind::QExp:
      return std::get<QExpFunction>(a) + std::get<QExpFunction>(b);
    case FunctionKind::Spectral: {
      SpectralFn out = std::get<SpectralFn>(a);
      for (const auto& [k, c] : std::get<SpectralFn>(b).coefs) out.coefs[k] += c;
      std::erase_if(out.coefs, [](const auto& kv) { return kv.second == 0.0; });
      return out;
    }
    case FunctionKind::Separable: {
      SeparableFn out = std::get<SeparableFn>(a);
      const auto& bt = std::get<SeparableFn>(b).terms;
      out.terms.insert(out.terms.end(), bt.begin(), bt.end());
      return out;
    }
    case FunctionKind::Grid: {
      GridFn out = std::get<GridFn>(a);
      const auto& bv = std::get<GridFn>(b).values;
      if (bv.size() != out.values.size()) {
        throw Error(ErrorKind::GridMismatch, "grid functions of different length");
      }
      for (std::size_t i = 0; i < bv.size(); ++i) out.values[i] += bv[i];
      return out;
    }
  }
  return a;
}

Function linear_combination(std::span<const double> coefs, std::span<const Function> funcs) {
  if (coefs.size() != funcs.size() || funcs.empty()) {
    throw Error(ErrorKind::InvalidArgument, "linear combination size mismatch");
  }
  require_same_kind(funcs);
  Function out = scale(coefs[0], funcs[0]);
  for (std::size_t i = 1; i < funcs.size(); ++i) out = add(out, scale(coefs[i], funcs[i]));
  return out;
}

CoefficientRow coefficient_row(const Function& f) {
  return std::visit(
      overloaded{
          [](const QExpFunction& q) { return q.coefficient_row(); },
          [](const SpectralFn& s) {
            CoefficientRow row;
            for (const auto& [label, c] : s.coefs) {
              row.emplace_back(TermKey(label.begin(), label.end()), c);
            }
            return row;
          },
          [](const SeparableFn& sep) {
            CoefficientRow row;
            for (const auto& [xi, h] : sep.terms) {
              for (const auto& [kx, cx] : xi.coefficient_row()) {
                for (const auto& [kh, ch] : h.coefficient_row()) {
                  TermKey k = kx;
                  k.insert(k.end(), kh.begin(), kh.end());
                  row.emplace_back(std::move(k), cx * ch);
                }
              }
            }
            return row;
          },
          [](const GridFn& g) {
            CoefficientRow row;
            for (std::size_t i = 0; i < g.values.size(); ++i) {
              if (g.values[i] != 0.0) row.emplace_back(TermKey{static_cast<double>(i)}, g.values[i]);
            }
            return row;
          },
      },
      f);
}

Function function_from_row(FunctionKind kind, const CoefficientRow& row) {
  switch (kind) {
    case FunctionKind::QExp:
      return QExpFunction::from_row(row);
    case FunctionKind::Spectral: {
      SpectralFn s;
      for (const auto& [k, c] : row) {
        if (c == 0.0) continue;
        ModeLabel l;
        for (double v : k) l.push_back(static_cast<int>(std::lround(v)));
        s.coefs[l] += c;
      }
      return s;
    }
    case FunctionKind::Separable: {
      SeparableFn s;
      for (const auto& [k, c] : row) {
        if (c == 0.0) continue;
        const CoefficientRow kx{{TermKey(k.begin(), k.begin() + 4), c}};
        const CoefficientRow kh{{TermKey(k.begin() + 4, k.end()), 1.0}};
        s.terms.emplace_back(QExpFunction::from_row(kx), QExpFunction::from_row(kh));
      }
      return s;
    }
    case FunctionKind::Grid: {
      GridFn g;
      for (const auto& [k, c] : row) {
        const auto i = static_cast<std::size_t>(std::lround(k.at(0)));
        if (g.values.size() <= i) g.values.resize(i + 1, 0.0);
        g.values[i] += c;
      }
      return g;
    }
  }
  throw Error(ErrorKind::InvalidArgument, "unknown function kind");
}

std::string describe(const Function& f) {
  return std::visit(overloaded{
                        [](const QExpFunction& q) { return to_string(q); },
                        [](const SpectralFn& s) {
                          if (s.coefs.empty()) return std::string("0");
                          std::string out;
                          for (const auto& [l, c] : s.coefs) {
                            if (!out.empty()) out += " + ";
                            out += csv::format_double(c) + " * mode[" + label_text(l) + "]";
                          }
                          return out;
                        },
                        [](const SeparableFn& sep) {
                          if (sep.terms.empty()) return std::string("0");
                          std::string out;
                          for (const auto& [xi, h] : sep.terms) {
                            if (!out.empty()) out += " + ";
                            out += "(" + to_string(xi) + ")(b) * (" + to_string(h) + ")(s)";
                          }
                          return out;
                        },
                        [](const GridFn& g) {
                          return "grid samples (" + std::to_string(g.values.size()) + " nodes)";
                        },
                    },
                    f);
}

FunctionBasis span_dimension(std::span<const Function> funcs, double tol_rank) {
  FunctionBasis out;
  if (funcs.empty()) return out;
  require_same_kind(funcs);
  std::vector<CoefficientRow> rows;
  rows.reserve(funcs.size());
  for (const auto& f : funcs) rows.push_back(coefficient_row(f));
  auto cm = coefficient_matrix(rows);
  const auto red = reduce_rows(cm.rows, tol_rank);
  out.dim = red.rank;
  for (int i : red.pivot_rows) out.functions.push_back(funcs[static_cast<std::size_t>(i)]);
  out.keys = std::move(cm.keys);
  out.coefficient_matrix.resize(red.rank, cm.rows.cols());
  for (int r = 0; r < red.rank; ++r) out.coefficient_matrix.row(r) = cm.rows.row(red.pivot_rows[static_cast<std::size_t>(r)]);
  return out;
}

FunctionBasis echelon_basis(std::span<const Function> funcs, double tol_rank) {
  FunctionBasis out;
  if (funcs.empty()) return out;
  require_same_kind(funcs);
  const auto kind = kind_of(funcs.front());
  std::vector<CoefficientRow> rows;
  rows.reserve(funcs.size());
  for (const auto& f : funcs) rows.push_back(coefficient_row(f));
  auto cm = coefficient_matrix(rows);
  const auto red = reduce_rows(cm.rows, tol_rank);
  out.dim = red.rank;
  for (int r = 0; r < red.rank; ++r) {
    CoefficientRow row;
    for (Eigen::Index j = 0; j < red.echelon.cols(); ++j) {
      const double c = red.echelon(r, j);
      if (std::abs(c) > 1e-15) row.emplace_back(cm.keys[static_cast<std::size_t>(j)], c);
    }
    out.functions.push_back(function_from_row(kind, row));
  }
  out.keys = std::move(cm.keys);
  out.coefficient_matrix = red.echelon;
  return out;
}

}  // namespace affreal
