#include "affreal/span.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "affreal/qexp.hpp"

namespace affreal {
namespace {

// Chains sorted values closer than the key tolerance into clusters and maps
// every value to the smallest member of its cluster.
class Snapper {
 public:
  explicit Snapper(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    for (double v : values) {
      if (reps_.empty() || v - last_ > kKeyTolerance) reps_.push_back(v);
      last_ = v;
      tops_.resize(reps_.size());
      tops_.back() = v;
    }
  }
  double operator()(double v) const {
    // first cluster whose top is >= v - tol
    auto it = std::lower_bound(tops_.begin(), tops_.end(), v - kKeyTolerance);
    if (it == tops_.end()) return v;
    return reps_[static_cast<std::size_t>(it - tops_.begin())];
  }

 private:
  std::vector<double> reps_;
  std::vector<double> tops_;
  double last_ = 0.0;
};

}  // namespace

CoefficientMatrix coefficient_matrix(std::span<const CoefficientRow> rows) {
  std::size_t width = 0;
  for (const auto& r : rows) {
    for (const auto& [k, c] : r) width = std::max(width, k.size());
  }
  std::vector<Snapper> snaps;
  for (std::size_t p = 0; p < width; ++p) {
    std::vector<double> vals;
    for (const auto& r : rows) {
      for (const auto& [k, c] : r) {
        if (p < k.size()) vals.push_back(k[p]);
      }
    }
    snaps.emplace_back(std::move(vals));
  }
  auto snap = [&](const TermKey& k) {
    TermKey s(k.size());
    for (std::size_t p = 0; p < k.size(); ++p) s[p] = snaps[p](k[p]);
    return s;
  };
  std::map<TermKey, Eigen::Index> index;
  for (const auto& r : rows) {
    for (const auto& [k, c] : r) index.emplace(snap(k), 0);
  }
  CoefficientMatrix out;
  out.keys.reserve(index.size());
  Eigen::Index col = 0;
  for (auto& [k, i] : index) {
    i = col++;
    out.keys.push_back(k);
  }
  out.rows = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), col);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (const auto& [k, c] : rows[i]) {
      out.rows(static_cast<Eigen::Index>(i), index.at(snap(k))) += c;
    }
  }
  return out;
}

RowReduction reduce_rows(const Eigen::MatrixXd& rows, double tol_rank) {
  RowReduction out;
  if (rows.rows() == 0 || rows.cols() == 0) return out;
  Eigen::MatrixXd unit = rows;
  for (Eigen::Index i = 0; i < unit.rows(); ++i) {
    const double n = unit.row(i).norm();
    if (n > 0.0) unit.row(i) /= n;
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(unit);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return out;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > tol_rank * s(0)) ++out.rank;
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(unit.transpose());
  const auto& perm = qr.colsPermutation().indices();
  for (int i = 0; i < out.rank; ++i) out.pivot_rows.push_back(perm(i));
  std::sort(out.pivot_rows.begin(), out.pivot_rows.end());

  // Gauss-Jordan with complete pivoting (largest remaining absolute entry).
  Eigen::MatrixXd work = unit;
  const Eigen::Index m = work.rows();
  const Eigen::Index n = work.cols();
  for (int step = 0; step < out.rank; ++step) {
    Eigen::Index pr = step;
    Eigen::Index pc = 0;
    double best = -1.0;
    for (Eigen::Index i = step; i < m; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (std::find(out.pivot_keys.begin(), out.pivot_keys.end(), j) != out.pivot_keys.end()) {
          continue;
        }
        if (std::abs(work(i, j)) > best) {
          best = std::abs(work(i, j));
          pr = i;
          pc = j;
        }
      }
    }
    work.row(step).swap(work.row(pr));
    work.row(step) /= work(step, pc);
    for (Eigen::Index i = 0; i < m; ++i) {
      if (i != step && work(i, pc) != 0.0) work.row(i) -= work(i, pc) * work.row(step);
    }
    work(step, pc) = 1.0;
    out.pivot_keys.push_back(static_cast<int>(pc));
  }
  out.echelon = work.topRows(out.rank);
  for (int r = 0; r < out.rank; ++r) {
    for (int q = 0; q < out.rank; ++q) {
      if (q != r) out.echelon(r, out.pivot_keys[static_cast<std::size_t>(q)]) = 0.0;
    }
  }
  return out;
}

}  // namespace affreal
