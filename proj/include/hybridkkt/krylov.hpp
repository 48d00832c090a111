#pragma once

#include <functional>

#include "hybridkkt/sparse.hpp"

namespace hkkt {

/// y = A x for a matrix-free operator.
using LinearOperator = std::function<void(const Vec& x, Vec& y)>;
/// x ≈ A^{-1} b.
using DirectSolve = std::function<Vec(const Vec& b)>;

struct CgResult {
  Vec x;  // best iterate (smallest residual) when not converged
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/// Unpreconditioned conjugate gradient for symmetric positive definite A,
/// started from x = 0. Stops when ||b - A x|| <= tol * ||b||.
CgResult cg_solve(const LinearOperator& apply_a, const Vec& b, double tol, int max_iter);

enum class RefineStatus { Converged, MaxIterations, Diverged };

struct RefineResult {
  Vec x;
  int iterations = 0;  // number of direct solves
  double relative_residual = 0.0;
  RefineStatus status = RefineStatus::Converged;
  bool degraded() const noexcept { return status != RefineStatus::Converged; }
};

/// Richardson iterative refinement x <- x + solve(b - A x). Residuals are
/// measured as ||b - A x||_inf / ||b||_inf. Two consecutive residual increases
/// abort with Diverged; the best iterate is returned in every case.
RefineResult richardson_refine(const DirectSolve& direct_solve, const LinearOperator& apply_a,
                               const Vec& b, double tol, int max_iter);

}  // namespace hkkt
