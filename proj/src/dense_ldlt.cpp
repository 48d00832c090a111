#include "hybridkkt/dense_ldlt.hpp"

#include <cctype>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

extern "C" {
void dsytrf_(const char* uplo, const int* n, double* a, const int* lda, int* ipiv,
             double* work, const int* lwork, int* info, std::size_t uplo_len);
void dsytrs_(const char* uplo, const int* n, const int* nrhs, const double* a,
             const int* lda, const int* ipiv, double* b, const int* ldb, int* info,
             std::size_t uplo_len);

// Matrix-matrix kernel used by the blocked dsytrf, evaluated with Eigen. The
// library links the reference LAPACK, whose own dgemm is far too slow; some
// optimized BLAS builds return wrong products on AVX-512 hosts.
void dgemm_(const char* transa, const char* transb, const int* m, const int* n, const int* k,
            const double* alpha, const double* a, const int* lda, const double* b,
            const int* ldb, const double* beta, double* c, const int* ldc, std::size_t,
            std::size_t) {
  using Map = Eigen::Map<Eigen::MatrixXd, 0, Eigen::OuterStride<>>;
  using CMap = Eigen::Map<const Eigen::MatrixXd, 0, Eigen::OuterStride<>>;
  const bool ta = std::toupper(static_cast<unsigned char>(*transa)) != 'N';
  const bool tb = std::toupper(static_cast<unsigned char>(*transb)) != 'N';
  Map cm(c, *m, *n, Eigen::OuterStride<>(*ldc));
  if (*beta == 0.0) {
    cm.setZero();
  } else if (*beta != 1.0) {
    cm *= *beta;
  }
  if (*k == 0 || *alpha == 0.0 || *m == 0 || *n == 0) return;
  const CMap am(a, ta ? *k : *m, ta ? *m : *k, Eigen::OuterStride<>(*lda));
  const CMap bm(b, tb ? *n : *k, tb ? *k : *n, Eigen::OuterStride<>(*ldb));
  if (!ta && !tb) {
    cm.noalias() += *alpha * am * bm;
  } else if (!ta) {
    cm.noalias() += *alpha * am * bm.transpose();
  } else if (!tb) {
    cm.noalias() += *alpha * am.transpose() * bm;
  } else {
    cm.noalias() += *alpha * am.transpose() * bm.transpose();
  }
}
}

namespace hkkt {

DenseInertiaFactor::DenseInertiaFactor(const Eigen::MatrixXd& a, double zero_tol, int dense_cap)
    : n_(static_cast<int>(a.rows())), factor_(a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("dense_ldlt needs a square matrix");
  if (n_ > dense_cap) {
    throw std::length_error("dense factorization of size " + std::to_string(n_) +
                            " exceeds the cap of " + std::to_string(dense_cap));
  }
  if (n_ == 0) return;
  const double scale = a.cwiseAbs().maxCoeff();
  const double tol = zero_tol * scale;

  ipiv_.resize(static_cast<std::size_t>(n_));
  const char uplo = 'L';
  int info = 0;
  int lwork = -1;
  double query = 0.0;
  dsytrf_(&uplo, &n_, factor_.data(), &n_, ipiv_.data(), &query, &lwork, &info, 1);
  lwork = std::max(1, static_cast<int>(query));
  std::vector<double> work(static_cast<std::size_t>(lwork));
  dsytrf_(&uplo, &n_, factor_.data(), &n_, ipiv_.data(), work.data(), &lwork, &info, 1);
  if (info < 0) throw std::runtime_error("dsytrf rejected argument " + std::to_string(-info));
  invertible_ = info == 0;

  for (int k = 0; k < n_;) {
    if (ipiv_[static_cast<std::size_t>(k)] > 0) {
      const double d = factor_(k, k);
      if (std::abs(d) <= tol) {
        ++inertia_.zero;
      } else if (d > 0) {
        ++inertia_.positive;
      } else {
        ++inertia_.negative;
      }
      ++k;
    } else {
      // 2x2 block [a b; b c] stored in the lower triangle.
      const double p = factor_(k, k);
      const double q = factor_(k + 1, k);
      const double r = factor_(k + 1, k + 1);
      const double mean = 0.5 * (p + r);
      const double rad = std::hypot(0.5 * (p - r), q);
      for (double ev : {mean + rad, mean - rad}) {
        if (std::abs(ev) <= tol) {
          ++inertia_.zero;
        } else if (ev > 0) {
          ++inertia_.positive;
        } else {
          ++inertia_.negative;
        }
      }
      k += 2;
    }
  }
}

Vec DenseInertiaFactor::solve(const Vec& b) const {
  if (b.size() != n_) throw std::invalid_argument("right-hand side has wrong length");
  if (!invertible_) throw std::runtime_error("matrix is singular");
  Vec x = b;
  if (n_ == 0) return x;
  const char uplo = 'L';
  const int nrhs = 1;
  int info = 0;
  dsytrs_(&uplo, &n_, &nrhs, factor_.data(), &n_, ipiv_.data(), x.data(), &n_, &info, 1);
  if (info != 0) throw std::runtime_error("dsytrs failed");
  return x;
}

}  // namespace hkkt
