#include "hybridkkt/krylov.hpp"

#include <cmath>

namespace hkkt {

CgResult cg_solve(const LinearOperator& apply_a, const Vec& b, double tol, int max_iter) {
  CgResult out;
  out.x = Vec::Zero(b.size());
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    out.converged = true;
    return out;
  }
  Vec x = Vec::Zero(b.size());
  Vec r = b;
  Vec p = r;
  Vec ap(b.size());
  double rr = r.squaredNorm();
  double best = 1.0;
  for (int k = 1; k <= max_iter; ++k) {
    apply_a(p, ap);
    const double pap = p.dot(ap);
    if (!(pap > 0.0)) break;  // operator not positive definite along p
    const double alpha = rr / pap;
    x.noalias() += alpha * p;
    r.noalias() -= alpha * ap;
    const double rr_next = r.squaredNorm();
    const double rel = std::sqrt(rr_next) / bnorm;
    out.iterations = k;
    if (rel < best) {
      best = rel;
      out.x = x;
    }
    if (rel <= tol) {
      out.converged = true;
      break;
    }
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  out.relative_residual = best;
  return out;
}

RefineResult richardson_refine(const DirectSolve& direct_solve, const LinearOperator& apply_a,
                               const Vec& b, double tol, int max_iter) {
  RefineResult out;
  const double bnorm = b.lpNorm<Eigen::Infinity>();
  if (bnorm == 0.0) {
    out.x = Vec::Zero(b.size());
    return out;
  }
  Vec x = direct_solve(b);
  Vec ax(b.size());
  apply_a(x, ax);
  Vec r = b - ax;
  double res = r.lpNorm<Eigen::Infinity>() / bnorm;
  out.iterations = 1;
  out.x = x;
  out.relative_residual = res;
  int increases = 0;
  double prev = res;
  while (out.relative_residual > tol) {
    if (out.iterations >= max_iter) {
      out.status = RefineStatus::MaxIterations;
      return out;
    }
    x += direct_solve(r);
    ++out.iterations;
    apply_a(x, ax);
    r = b - ax;
    res = r.lpNorm<Eigen::Infinity>() / bnorm;
    if (!std::isfinite(res)) {
      out.status = RefineStatus::Diverged;
      return out;
    }
    increases = res > prev ? increases + 1 : 0;
    prev = res;
    if (res < out.relative_residual) {
      out.relative_residual = res;
      out.x = x;
    }
    if (increases >= 2) {
      out.status = RefineStatus::Diverged;
      return out;
    }
  }
  out.status = RefineStatus::Converged;
  return out;
}

}  // namespace hkkt
