#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <filesystem>
#include <memory>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "hybridkkt/cholesky.hpp"
#include "hybridkkt/dense_ldlt.hpp"
#include "hybridkkt/expr_model.hpp"
#include "hybridkkt/krylov.hpp"
#include "hybridkkt/sparse.hpp"

namespace hkkt {

/// Newton system data for one interior-point iteration:
///
///   [ W + δx I      0        G^T     H^T   ] [dx]     [r1]
///   [    0      D_s + δx I    0       I    ] [ds]  = -[r2]
///   [    G          0       -δc I     0    ] [dy]     [r3]
///   [    H          I         0     -δc I  ] [dz]     [r4]
///
/// The condensed strategies only regularize the W block.
struct KktInputs {
  int n = 0;
  int m_eq = 0;
  int m_ineq = 0;
  CscMatrix w;  // lower triangle, n x n
  CsrMatrix g;  // m_eq x n
  CsrMatrix h;  // m_ineq x n
  Vec d_s;      // m_ineq, strictly positive
  Vec r1, r2, r3, r4;
  double delta_x = 0.0;
  double delta_c = 0.0;

  /// Throws std::invalid_argument on inconsistent dimensions or D_s <= 0.
  void validate() const;
};

enum class StepStatus {
  Success,
  WrongInertia,  // inertia mismatch, or Cholesky met a non-positive pivot
  Singular,      // zero eigenvalues detected (augmented baseline)
  Failure,       // iterative part failed (CG did not converge)
};

struct StepResult {
  Vec dx, ds, dy, dz;
  StepStatus status = StepStatus::Success;
  Inertia inertia;  // augmented baseline only
  int cg_iterations = 0;
  int refinement_iterations = 0;
  bool degraded = false;  // refinement stopped above tolerance
  double residual = 0.0;  // relative residual of the solved augmented system
};

// ---------------------------------------------------------------------------
// Building blocks

/// Dense K_aug including the regularization in `inputs`.
Eigen::MatrixXd augmented_matrix(const KktInputs& inputs);
/// Dense K = W + δx I + H^T D_s H.
Eigen::MatrixXd condensed_block_dense(const KktInputs& inputs);
/// Dense K_cond = [K G^T; G 0].
Eigen::MatrixXd condensed_matrix(const KktInputs& inputs);
/// Right-hand side of K_cond: [-(r1 + H^T (D_s r4 - r2)); -r3].
Vec condensed_rhs(const KktInputs& inputs);
/// r_γ = r1 + H^T (D_s r4 - r2) + γ G^T r3.
Vec hykkt_rhs(const KktInputs& inputs, double gamma);
/// ds = -r4 - H dx, dz = -r2 - D_s ds.
void recover_slack_dual(const Vec& dx, const KktInputs& inputs, Vec& ds, Vec& dz);

/// ||K_aug d + r||_inf / (1 + ||r||_inf). `regularize_slack_block` selects
/// whether δx (and δc) enter the slack and dual blocks.
double augmented_residual(const KktInputs& inputs, const StepResult& step,
                          bool regularize_slack_block);

/// Target inertia (n + m_i, 0, m_i + m_e) of K_aug.
inline Inertia augmented_target(const KktInputs& in) {
  return {in.n + in.m_ineq, 0, in.m_ineq + in.m_eq};
}

// ---------------------------------------------------------------------------
// Strategies as free functions

/// Relative pivot threshold used to detect zero eigenvalues of KKT matrices.
/// Bunch-Kaufman pivots of interior-point systems are routinely far below
/// 1e-10 max|A| without the matrix being near singular, so the threshold is
/// tied to rounding error instead.
inline double augmented_zero_tol(int dim) {
  return std::numeric_limits<double>::epsilon() * std::max(dim, 1);
}

/// Dense symmetric-indefinite solve of K_aug with inertia reporting.
StepResult solve_augmented(const KktInputs& inputs, int dense_cap = kDefaultDenseCap);
/// Dense solve of the condensed system K_cond followed by slack/dual recovery.
StepResult solve_condensed(const KktInputs& inputs, int dense_cap = kDefaultDenseCap);

/// Sparse K = W + δx I + H^T D_s H (+ γ G^T G) on a pattern fixed at
/// construction, with its symbolic factorization.
class CondensedSystem {
 public:
  CondensedSystem(const KktInputs& structure, bool include_gtg);

  /// Writes values for the given inputs; γ is ignored without G^T G.
  void assemble(const KktInputs& inputs, double gamma = 0.0);
  const CscMatrix& matrix() const noexcept { return k_; }
  const std::shared_ptr<const SymbolicFactorization>& symbolic() const noexcept { return symbolic_; }
  bool includes_gtg() const noexcept { return include_gtg_; }

 private:
  bool include_gtg_;
  CscMatrix k_;
  std::vector<int> w_ptr_, w_rows_;  // analysed W pattern
  std::vector<int> w_map_, diag_map_, h_pairs_, g_pairs_;
  std::shared_ptr<const SymbolicFactorization> symbolic_;
};

/// K_γ = K + γ G^T G together with the Schur-complement CG settings.
struct HyKktSystem {
  HyKktSystem(const KktInputs& structure, double gamma);

  CondensedSystem k_gamma;
  double gamma;
  double cg_tol = 1e-10;
  int cg_max_iter = 200;
  std::int64_t total_cg_iterations = 0;
  int solves = 0;
};

/// Writes K + δx I into `system` (alias for system.assemble(inputs)).
const CscMatrix& assemble_condensed(const KktInputs& inputs, CondensedSystem& system);
const CscMatrix& assemble_hykkt(const KktInputs& inputs, HyKktSystem& system);

struct RefineOptions {
  double tol = 1e-12;
  int max_iter = 10;
};

/// Lifted-KKT: requires m_eq == 0. Cholesky of K, Richardson refinement,
/// slack/dual recovery.
StepResult solve_lifted(CondensedSystem& system, const KktInputs& inputs,
                        const RefineOptions& refine = {});
/// HyKKT: Cholesky of K_γ, CG on G K_γ^{-1} G^T for dy, one backsolve for dx.
StepResult solve_hykkt(HyKktSystem& system, const KktInputs& inputs);

/// Replaces every equality g(x) = 0 by the range -τ <= g(x) <= τ.
CompiledModel relax_equalities(const CompiledModel& model, double tau);

// ---------------------------------------------------------------------------
// Strategy objects used by the interior-point loop

enum class KktMethod { Augmented, Lifted, HyKkt };

std::string_view to_string(KktMethod method);
/// Throws std::invalid_argument for unknown names.
KktMethod parse_kkt_method(std::string_view name);

struct StrategyOptions {
  double gamma = 1e7;
  double cg_tol = 1e-10;
  int cg_max_iter = 200;
  RefineOptions refine;
  int dense_cap = kDefaultDenseCap;
};

class KktStrategy {
 public:
  virtual ~KktStrategy() = default;
  virtual KktMethod method() const noexcept = 0;
  /// Fixes sparsity patterns and runs the symbolic analysis. Called once.
  virtual void analyze(const KktInputs& structure) = 0;
  /// Assembles, factorizes and solves with the regularization in `inputs`.
  virtual StepResult compute_step(const KktInputs& inputs) = 0;
  /// Writes the last assembled matrix to `path` (MatrixMarket).
  virtual void dump(const std::filesystem::path& path) const = 0;
  /// Nonzeros of the assembled matrix (lower triangle).
  virtual std::int64_t matrix_nnz() const noexcept = 0;
};

std::unique_ptr<KktStrategy> make_strategy(KktMethod method, const StrategyOptions& options = {});

}  // namespace hkkt
