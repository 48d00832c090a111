#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <variant>
#include <vector>

#include "hybridkkt/sparse.hpp"

namespace hkkt {

/// Raised when a matrix does not match the pattern a symbolic analysis was
/// built from.
class PatternError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CholeskyFactor;
struct NotPositiveDefinite;

/// Fill-reducing ordering (approximate minimum degree) of a symmetric
/// pattern. Returns `perm` with perm[k] = original index of the k-th pivot.
std::vector<int> amd_order(const CscMatrix& pattern);

/// Reusable elimination structure of P A P^T = L D L^T. Depends only on the
/// input pattern and the permutation.
class SymbolicFactorization {
 public:
  SymbolicFactorization(const CscMatrix& pattern, std::vector<int> perm);

  int n() const noexcept { return n_; }
  const std::vector<int>& perm() const noexcept { return perm_; }
  const std::vector<int>& inverse_perm() const noexcept { return pinv_; }
  const std::vector<int>& parent() const noexcept { return parent_; }
  /// Strictly-lower nonzeros per column of L.
  const std::vector<int>& column_counts() const noexcept { return col_count_; }
  const std::vector<int>& l_col_ptr() const noexcept { return l_ptr_; }
  const std::vector<int>& l_row_idx() const noexcept { return l_rows_; }
  /// nnz(L) including the unit diagonal.
  std::int64_t factor_nnz() const noexcept {
    return static_cast<std::int64_t>(l_rows_.size()) + n_;
  }
  bool matches(const CscMatrix& a) const noexcept;

  /// Total number of symbolic analyses constructed by this process.
  static std::int64_t construction_count() noexcept;

 private:
  friend class CholeskyFactor;
  friend std::variant<CholeskyFactor, NotPositiveDefinite> numeric_factor(
      std::shared_ptr<const SymbolicFactorization>, const CscMatrix&);

  int n_ = 0;
  std::vector<int> perm_, pinv_, parent_, col_count_;
  std::vector<int> l_ptr_, l_rows_;
  // Row patterns of L in topological order, consumed by numeric_factor.
  std::vector<int> r_ptr_, r_cols_;
  // Upper triangle of P A P^T in CSC, fed from A's values through `value_map_`.
  std::vector<int> c_ptr_, c_rows_, value_map_;
  // Copy of the analysed input pattern.
  std::vector<int> a_ptr_, a_rows_;
};

/// Numeric LDL^T factor with strictly positive D.
class CholeskyFactor {
 public:
  const SymbolicFactorization& symbolic() const noexcept { return *symbolic_; }
  std::shared_ptr<const SymbolicFactorization> symbolic_ptr() const noexcept { return symbolic_; }
  const std::vector<double>& l_values() const noexcept { return l_values_; }
  const std::vector<double>& d() const noexcept { return d_; }
  int n() const noexcept { return symbolic_->n(); }

  /// Solves A x = b.
  Vec solve(const Vec& b) const;
  void solve_in_place(Vec& x) const;

 private:
  friend std::variant<CholeskyFactor, NotPositiveDefinite> numeric_factor(
      std::shared_ptr<const SymbolicFactorization>, const CscMatrix&);
  CholeskyFactor() = default;

  std::shared_ptr<const SymbolicFactorization> symbolic_;
  std::vector<double> l_values_;
  std::vector<double> d_;
};

/// Failure of numeric_factor: a pivot with D <= 0 was met. `pivot` is the
/// original (unpermuted) index of that pivot.
struct NotPositiveDefinite {
  int pivot;
  double value;
};

using FactorOutcome = std::variant<CholeskyFactor, NotPositiveDefinite>;

/// Throws PatternError when `a` differs from the analysed pattern.
FactorOutcome numeric_factor(std::shared_ptr<const SymbolicFactorization> symbolic,
                             const CscMatrix& a);

/// Symbolic analysis with AMD ordering followed by a numeric factorization.
FactorOutcome factor_from_scratch(const CscMatrix& a);

}  // namespace hkkt
