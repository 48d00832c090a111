#include "hybridkkt/cholesky.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCore>

namespace hkkt {

namespace {
std::atomic<std::int64_t> g_symbolic_count{0};
}  // namespace

std::vector<int> amd_order(const CscMatrix& pattern) {
  if (pattern.rows != pattern.cols) throw std::invalid_argument("ordering needs a square pattern");
  const int n = pattern.rows;
  if (n == 0) return {};
  // AMDOrdering symmetrizes the pattern (A + A^T) itself.
  std::vector<Eigen::Triplet<double, int>> t;
  t.reserve(pattern.row_idx.size());
  for (int j = 0; j < n; ++j) {
    for (int p = pattern.col_ptr[static_cast<std::size_t>(j)]; p < pattern.col_ptr[static_cast<std::size_t>(j) + 1]; ++p) {
      t.emplace_back(pattern.row_idx[static_cast<std::size_t>(p)], j, 1.0);
    }
  }
  Eigen::SparseMatrix<double, Eigen::ColMajor, int> a(n, n);
  a.setFromTriplets(t.begin(), t.end());
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> p;
  Eigen::AMDOrdering<int> amd;
  amd(a, p);
  return {p.indices().data(), p.indices().data() + n};
}

SymbolicFactorization::SymbolicFactorization(const CscMatrix& pattern, std::vector<int> perm)
    : n_(pattern.rows), perm_(std::move(perm)) {
  if (pattern.rows != pattern.cols) throw std::invalid_argument("symbolic analysis needs a square matrix");
  if (!pattern.symmetric) throw std::invalid_argument("symbolic analysis expects lower-triangle storage");
  if (perm_.empty() && n_ > 0) {
    perm_.resize(static_cast<std::size_t>(n_));
    std::iota(perm_.begin(), perm_.end(), 0);
  }
  if (perm_.size() != static_cast<std::size_t>(n_)) throw std::invalid_argument("permutation has wrong length");
  const auto n = static_cast<std::size_t>(n_);
  pinv_.assign(n, -1);
  for (std::size_t k = 0; k < n; ++k) {
    const int old = perm_[k];
    if (old < 0 || old >= n_ || pinv_[static_cast<std::size_t>(old)] != -1) {
      throw std::invalid_argument("not a permutation");
    }
    pinv_[static_cast<std::size_t>(old)] = static_cast<int>(k);
  }
  a_ptr_ = pattern.col_ptr;
  a_rows_ = pattern.row_idx;

  // Upper triangle of C = P A P^T, column by column.
  const std::size_t nnz = pattern.row_idx.size();
  c_ptr_.assign(n + 1, 0);
  std::vector<int> new_col(nnz), new_row(nnz);
  for (std::size_t j = 0; j < n; ++j) {
    for (int p = pattern.col_ptr[j]; p < pattern.col_ptr[j + 1]; ++p) {
      const int i = pinv_[static_cast<std::size_t>(pattern.row_idx[static_cast<std::size_t>(p)])];
      const int jj = pinv_[j];
      new_col[static_cast<std::size_t>(p)] = std::max(i, jj);
      new_row[static_cast<std::size_t>(p)] = std::min(i, jj);
      ++c_ptr_[static_cast<std::size_t>(std::max(i, jj)) + 1];
    }
  }
  std::partial_sum(c_ptr_.begin(), c_ptr_.end(), c_ptr_.begin());
  c_rows_.resize(nnz);
  value_map_.resize(nnz);
  {
    std::vector<int> next(c_ptr_.begin(), c_ptr_.end() - 1);
    for (std::size_t p = 0; p < nnz; ++p) {
      const int dst = next[static_cast<std::size_t>(new_col[p])]++;
      c_rows_[static_cast<std::size_t>(dst)] = new_row[p];
      value_map_[p] = dst;
    }
  }

  // Elimination tree and column counts.
  parent_.assign(n, -1);
  col_count_.assign(n, 0);
  std::vector<int> flag(n, -1);
  for (std::size_t k = 0; k < n; ++k) {
    flag[k] = static_cast<int>(k);
    for (int p = c_ptr_[k]; p < c_ptr_[k + 1]; ++p) {
      int i = c_rows_[static_cast<std::size_t>(p)];
      if (i >= static_cast<int>(k)) continue;
      for (; flag[static_cast<std::size_t>(i)] != static_cast<int>(k); i = parent_[static_cast<std::size_t>(i)]) {
        if (parent_[static_cast<std::size_t>(i)] == -1) parent_[static_cast<std::size_t>(i)] = static_cast<int>(k);
        ++col_count_[static_cast<std::size_t>(i)];
        flag[static_cast<std::size_t>(i)] = static_cast<int>(k);
      }
    }
  }
  l_ptr_.assign(n + 1, 0);
  for (std::size_t k = 0; k < n; ++k) l_ptr_[k + 1] = l_ptr_[k] + col_count_[k];
  l_rows_.resize(static_cast<std::size_t>(l_ptr_[n]));

  // Row patterns (reach of each row in the etree) in topological order.
  r_ptr_.assign(n + 1, 0);
  r_cols_.resize(static_cast<std::size_t>(l_ptr_[n]));
  std::fill(flag.begin(), flag.end(), -1);
  std::vector<int> stack(n), fill_pos(n, 0), path;
  path.reserve(n);
  int written = 0;
  for (std::size_t k = 0; k < n; ++k) {
    flag[k] = static_cast<int>(k);
    std::size_t top = n;
    for (int p = c_ptr_[k]; p < c_ptr_[k + 1]; ++p) {
      int i = c_rows_[static_cast<std::size_t>(p)];
      if (i >= static_cast<int>(k)) continue;
      for (; flag[static_cast<std::size_t>(i)] != static_cast<int>(k); i = parent_[static_cast<std::size_t>(i)]) {
        path.push_back(i);
        flag[static_cast<std::size_t>(i)] = static_cast<int>(k);
      }
      while (!path.empty()) {
        stack[--top] = path.back();
        path.pop_back();
      }
    }
    for (std::size_t t = top; t < n; ++t) {
      const int j = stack[t];
      r_cols_[static_cast<std::size_t>(written++)] = j;
      l_rows_[static_cast<std::size_t>(l_ptr_[static_cast<std::size_t>(j)] + fill_pos[static_cast<std::size_t>(j)]++)] =
          static_cast<int>(k);
    }
    r_ptr_[k + 1] = written;
  }
  ++g_symbolic_count;
}

bool SymbolicFactorization::matches(const CscMatrix& a) const noexcept {
  return a.symmetric && a.rows == n_ && a.cols == n_ && a.col_ptr == a_ptr_ && a.row_idx == a_rows_;
}

std::int64_t SymbolicFactorization::construction_count() noexcept { return g_symbolic_count.load(); }

FactorOutcome numeric_factor(std::shared_ptr<const SymbolicFactorization> symbolic,
                             const CscMatrix& a) {
  const auto& s = *symbolic;
  if (!s.matches(a)) throw PatternError("matrix pattern differs from the analysed pattern");
  const auto n = static_cast<std::size_t>(s.n_);

  std::vector<double> cval(a.values.size());
  for (std::size_t p = 0; p < a.values.size(); ++p) cval[static_cast<std::size_t>(s.value_map_[p])] = a.values[p];

  CholeskyFactor f;
  f.l_values_.assign(s.l_rows_.size(), 0.0);
  f.d_.assign(n, 0.0);
  std::vector<double> y(n, 0.0);
  std::vector<int> filled(n, 0);
  for (std::size_t k = 0; k < n; ++k) {
    for (int p = s.c_ptr_[k]; p < s.c_ptr_[k + 1]; ++p) {
      y[static_cast<std::size_t>(s.c_rows_[static_cast<std::size_t>(p)])] += cval[static_cast<std::size_t>(p)];
    }
    double d = y[k];
    y[k] = 0.0;
    for (int t = s.r_ptr_[k]; t < s.r_ptr_[k + 1]; ++t) {
      const auto j = static_cast<std::size_t>(s.r_cols_[static_cast<std::size_t>(t)]);
      const double yj = y[j];
      y[j] = 0.0;
      const int begin = s.l_ptr_[j];
      const int end = begin + filled[j];
      for (int p = begin; p < end; ++p) {
        y[static_cast<std::size_t>(s.l_rows_[static_cast<std::size_t>(p)])] -= f.l_values_[static_cast<std::size_t>(p)] * yj;
      }
      const double lkj = yj / f.d_[j];
      d -= lkj * yj;
      f.l_values_[static_cast<std::size_t>(end)] = lkj;
      ++filled[j];
    }
    if (!(d > 0.0) || !std::isfinite(d)) {
      return NotPositiveDefinite{s.perm_[k], d};
    }
    f.d_[k] = d;
  }
  f.symbolic_ = std::move(symbolic);
  return f;
}

FactorOutcome factor_from_scratch(const CscMatrix& a) {
  auto sym = std::make_shared<const SymbolicFactorization>(a, amd_order(a));
  return numeric_factor(std::move(sym), a);
}

void CholeskyFactor::solve_in_place(Vec& x) const {
  const auto& s = *symbolic_;
  const auto n = static_cast<std::size_t>(s.n_);
  if (static_cast<std::size_t>(x.size()) != n) throw std::invalid_argument("right-hand side has wrong length");
  Vec c(static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) c[static_cast<Eigen::Index>(k)] = x[s.perm_[k]];
  for (std::size_t j = 0; j < n; ++j) {
    const double cj = c[static_cast<Eigen::Index>(j)];
    if (cj == 0.0) continue;
    for (int p = s.l_ptr_[j]; p < s.l_ptr_[j + 1]; ++p) {
      c[s.l_rows_[static_cast<std::size_t>(p)]] -= l_values_[static_cast<std::size_t>(p)] * cj;
    }
  }
  for (std::size_t j = 0; j < n; ++j) c[static_cast<Eigen::Index>(j)] /= d_[j];
  for (std::size_t j = n; j-- > 0;) {
    double acc = c[static_cast<Eigen::Index>(j)];
    for (int p = s.l_ptr_[j]; p < s.l_ptr_[j + 1]; ++p) {
      acc -= l_values_[static_cast<std::size_t>(p)] * c[s.l_rows_[static_cast<std::size_t>(p)]];
    }
    c[static_cast<Eigen::Index>(j)] = acc;
  }
  for (std::size_t k = 0; k < n; ++k) x[s.perm_[k]] = c[static_cast<Eigen::Index>(k)];
}

Vec CholeskyFactor::solve(const Vec& b) const {
  Vec x = b;
  solve_in_place(x);
  return x;
}

}  // namespace hkkt
