#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "hybridkkt/expr_model.hpp"
#include "hybridkkt/kkt.hpp"
#include "hybridkkt/sparse.hpp"

namespace hkkt {

/// Primal-dual iterate. Slack s carries the bounds -h_hi <= s <= -h_lo so that
/// h(x) + s = 0; nu_lower/nu_upper are the multipliers of the slack bounds and
/// z_lower/z_upper those of the variable box. Multipliers of infinite bounds
/// stay at zero.
struct PrimalDualPoint {
  Vec x, s, y, z;
  Vec nu_lower, nu_upper;
  Vec z_lower, z_upper;
};

struct SolverOptions {
  double tol = 1e-6;
  int max_iter = 3000;
  KktMethod strategy = KktMethod::HyKkt;
  double tau_relax = 1e-6;
  double gamma = 1e7;
  double mu_init = 1e-1;
  double kappa_mu = 0.2;
  double theta_mu = 1.5;
  double kappa_eps = 10.0;
  double tau_min = 0.99;  // fraction-to-boundary is max(tau_min, 1 - mu)
  double bound_push = 1e-2;
  double bound_frac = 1e-2;
  double kappa_sigma = 1e10;
  // Inertia correction.
  double delta_x_first = 1e-4;
  double delta_x_min = 1e-20;
  double delta_x_max = 1e40;
  double delta_x_grow = 8.0;
  double delta_x_shrink = 1.0 / 3.0;
  double delta_c_scale = 1e-8;
  double delta_c_exponent = 0.25;
  // Filter line search.
  double gamma_theta = 1e-5;
  double gamma_phi = 1e-8;
  double switch_delta = 1.0;
  double s_theta = 1.1;
  double s_phi = 2.3;
  double eta_phi = 1e-8;
  double gamma_alpha = 0.05;
  // Linear algebra.
  double cg_tol = 1e-10;
  int cg_max_iter = 200;
  RefineOptions refine;
  int dense_cap = kDefaultDenseCap;
  // Diagnostics.
  bool record_iterates = false;
  std::filesystem::path dump_dir;  // empty disables MatrixMarket dumps
};

/// Constraint violation / barrier objective pairs stored with their margins
/// already applied.
class Filter {
 public:
  bool acceptable(double theta, double phi) const noexcept;
  /// Adds (theta, phi) unless the filter already dominates it, then removes
  /// every entry it dominates.
  void add(double theta, double phi);
  void clear() noexcept { entries_.clear(); }
  const std::vector<std::pair<double, double>>& entries() const noexcept { return entries_; }

 private:
  std::vector<std::pair<double, double>> entries_;
};

enum class SolveStatus { Optimal, MaxIter, RestorationFailure, StrategyFailure };
std::string_view to_string(SolveStatus status);

struct ResidualBlocks {
  Vec stationarity;  // ∇f + G^T y + H^T z - z_lower + z_upper
  Vec slack_dual;    // z - nu_lower + nu_upper
  Vec equality;      // g(x)
  Vec inequality;    // h(x) + s
  Vec compl_s_lower, compl_s_upper;  // (s - s_lo) nu_lower - mu, (s_hi - s) nu_upper - mu
  Vec compl_x_lower, compl_x_upper;
  double dual_inf = 0.0;
  double primal_inf = 0.0;
  double compl_inf = 0.0;
  double norm = 0.0;         // unscaled max over all blocks
  double scaled_norm = 0.0;  // dual and complementarity blocks scaled by multiplier size
};

/// Residual of the barrier KKT conditions at `w`. mu = 0 gives the
/// optimality conditions themselves.
ResidualBlocks kkt_residual(const CompiledModel& model, const PrimalDualPoint& w, double mu);

/// Largest alpha in (0, 1] with v + alpha dv >= (1 - tau) v.
double max_step_to_boundary(const Vec& v, const Vec& dv, double tau);
std::pair<double, double> fraction_to_boundary(const Vec& s, const Vec& ds, const Vec& nu,
                                               const Vec& dnu, double tau);

double update_mu(double mu, double kkt_norm_mu, const SolverOptions& options);

struct CorrectedStep {
  double delta_x = 0.0;
  double delta_c = 0.0;
  int attempts = 0;
  bool success = false;
  StepResult step;
};

/// Regularizes `inputs` until the strategy reports a usable step.
/// `last_delta_x` carries the memory between iterations.
CorrectedStep inertia_correction(KktStrategy& strategy, KktInputs& inputs, double mu,
                                 double& last_delta_x, const SolverOptions& options);

struct IterationRecord {
  int iter = 0;
  double mu = 0.0;
  double objective = 0.0;
  double primal_inf = 0.0;
  double dual_inf = 0.0;
  double kkt_norm = 0.0;
  double alpha_primal = 0.0;
  double alpha_dual = 0.0;
  double delta_x = 0.0;
  double delta_c = 0.0;
  int cg_iterations = 0;
  int refinement_iterations = 0;
  int line_search_trials = 0;
  double step_residual = 0.0;  // relative residual of the step in the augmented system
  double min_slack_gap = 0.0;  // smallest primal distance to any finite bound
  double min_bound_dual = 0.0;  // smallest bound multiplier
  Vec x;  // filled when record_iterates is set
};

struct PhaseTimers {
  double init = 0.0;
  double ad = 0.0;
  double linsolve = 0.0;
  double total = 0.0;
};

struct SolveReport {
  SolveStatus status = SolveStatus::StrategyFailure;
  std::string message;
  int iterations = 0;
  double objective = 0.0;
  double kkt_norm = 0.0;  // unscaled, mu = 0
  double scaled_kkt_norm = 0.0;
  double primal_inf = 0.0;
  double dual_inf = 0.0;
  double compl_inf = 0.0;
  double final_mu = 0.0;
  PhaseTimers timers;
  std::int64_t cg_iterations_total = 0;
  int refinement_iterations_total = 0;
  int degraded_solves = 0;
  int linear_solves = 0;
  std::int64_t kkt_nnz = 0;
  bool relaxed = false;
  PrimalDualPoint solution;
  std::vector<IterationRecord> history;

  double cg_iterations_mean() const noexcept {
    return iterations > 0 ? static_cast<double>(cg_iterations_total) / iterations : 0.0;
  }
};

/// Filter line-search interior-point method. Lifted-KKT runs on the
/// equality-relaxed model, built here when the model has equalities.
SolveReport solve(const CompiledModel& model, const SolverOptions& options = {});

}  // namespace hkkt
