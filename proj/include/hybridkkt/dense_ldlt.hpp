#pragma once

#include <vector>

#include <Eigen/Core>

#include "hybridkkt/sparse.hpp"

namespace hkkt {

/// Signature of a symmetric matrix: counts of positive, zero and negative
/// eigenvalues.
struct Inertia {
  int positive = 0;
  int zero = 0;
  int negative = 0;
  bool operator==(const Inertia&) const = default;
};

inline constexpr int kDefaultDenseCap = 5000;

/// Dense symmetric-indefinite factorization P A P^T = L D L^T with 1x1/2x2
/// pivots (Bunch-Kaufman), revealing the inertia of A.
class DenseInertiaFactor {
 public:
  /// Pivots with |d| <= zero_tol * max|A| count as zero eigenvalues.
  explicit DenseInertiaFactor(const Eigen::MatrixXd& a, double zero_tol = 1e-10,
                              int dense_cap = kDefaultDenseCap);

  const Inertia& inertia() const noexcept { return inertia_; }
  int n() const noexcept { return n_; }
  /// False when a 1x1 pivot is exactly zero; solve() is then unavailable.
  bool invertible() const noexcept { return invertible_; }
  Vec solve(const Vec& b) const;

 private:
  int n_ = 0;
  Eigen::MatrixXd factor_;
  std::vector<int> ipiv_;
  Inertia inertia_;
  bool invertible_ = true;
};

inline DenseInertiaFactor dense_ldlt(const Eigen::MatrixXd& a, double zero_tol = 1e-10) {
  return DenseInertiaFactor(a, zero_tol);
}

}  // namespace hkkt
