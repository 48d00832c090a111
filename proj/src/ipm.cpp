#include "hybridkkt/ipm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <stdexcept>

namespace hkkt {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

class ScopedTimer {
 public:
  explicit ScopedTimer(double& acc) : acc_(acc), t0_(Clock::now()) {}
  ~ScopedTimer() { acc_ += since(t0_); }
  ScopedTimer(const ScopedTimer&) = delete;
  ScopedTimer& operator=(const ScopedTimer&) = delete;

 private:
  double& acc_;
  Clock::time_point t0_;
};

constexpr double kEps = std::numeric_limits<double>::epsilon();

inline bool fin(double v) { return std::isfinite(v); }

std::span<const double> cspan(const Vec& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
std::span<double> mspan(Vec& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

double inf_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }
double one_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.lpNorm<1>(); }

// Box bounds on x and on the slacks (s_lo = -h_hi, s_hi = -h_lo).
struct Bounds {
  Vec xl, xu, sl, su;
};

Bounds model_bounds(const CompiledModel& m) {
  Bounds b;
  const auto cp = [](std::span<const double> s) {
    Vec v(static_cast<Eigen::Index>(s.size()));
    for (std::size_t i = 0; i < s.size(); ++i) v[static_cast<Eigen::Index>(i)] = s[i];
    return v;
  };
  b.xl = cp(m.lower());
  b.xu = cp(m.upper());
  b.sl = -cp(m.ineq_upper());
  b.su = -cp(m.ineq_lower());
  return b;
}

// Equal bounds leave no interior; open them by a relative 1e-8.
void open_fixed_bounds(Vec& lo, Vec& hi) {
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    if (fin(lo[i]) && fin(hi[i]) && hi[i] - lo[i] <= 0.0) {
      if (hi[i] < lo[i]) throw std::invalid_argument("inconsistent bounds (lower > upper)");
      lo[i] -= 1e-8 * std::max(1.0, std::abs(lo[i]));
      hi[i] += 1e-8 * std::max(1.0, std::abs(hi[i]));
    }
  }
}

// Moves v strictly inside [lo, hi].
void push_inside(Vec& v, const Vec& lo, const Vec& hi, double k1, double k2) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const bool l = fin(lo[i]), u = fin(hi[i]);
    if (l && u) {
      const double pl = std::min(k1 * std::max(1.0, std::abs(lo[i])), k2 * (hi[i] - lo[i]));
      const double pu = std::min(k1 * std::max(1.0, std::abs(hi[i])), k2 * (hi[i] - lo[i]));
      v[i] = std::clamp(v[i], lo[i] + pl, hi[i] - pu);
    } else if (l) {
      v[i] = std::max(v[i], lo[i] + k1 * std::max(1.0, std::abs(lo[i])));
    } else if (u) {
      v[i] = std::min(v[i], hi[i] - k1 * std::max(1.0, std::abs(hi[i])));
    }
  }
}

// Model functions and derivatives in the layout the KKT strategies consume.
class Problem {
 public:
  explicit Problem(const CompiledModel& m) : model(m) {
    n = m.n();
    me = m.m_eq();
    mi = m.m_ineq();
    g.rows = me;
    g.cols = n;
    g.row_ptr = m.eq_jac_row_ptr();
    g.col_idx = m.eq_jac_cols();
    g.values.assign(g.col_idx.size(), 0.0);
    h.rows = mi;
    h.cols = n;
    h.row_ptr = m.ineq_jac_row_ptr();
    h.col_idx = m.ineq_jac_cols();
    h.values.assign(h.col_idx.size(), 0.0);

    const auto coords = m.hessian_coords();
    std::vector<Triplet> t;
    t.reserve(coords.size() + static_cast<std::size_t>(n));
    for (const auto& c : coords) t.push_back({c.row, c.col, 0.0});
    for (int j = 0; j < n; ++j) t.push_back({j, j, 0.0});
    w = CscMatrix::from_triplets(n, n, t, true);
    hess_pos.reserve(coords.size());
    for (const auto& c : coords) hess_pos.push_back(w.find(c.row, c.col));
    diag_pos.reserve(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) diag_pos.push_back(w.find(j, j));
    hess_vals.assign(coords.size(), 0.0);
  }

  void functions(const Vec& x, double& f, Vec& gv, Vec& hv) const {
    gv.resize(me);
    hv.resize(mi);
    f = model.objective(cspan(x));
    model.constraints(cspan(x), mspan(gv), mspan(hv));
  }

  // Gradient, Jacobian values and Lagrangian Hessian (into w, without Σ_x).
  void derivatives(const Vec& x, const Vec& y, const Vec& z, Vec& grad) {
    grad.resize(n);
    model.gradient(cspan(x), mspan(grad));
    model.jacobians(cspan(x), g.values, h.values);
    model.hessian(cspan(x), cspan(y), cspan(z), 1.0, hess_vals);
    std::fill(w.values.begin(), w.values.end(), 0.0);
    for (std::size_t k = 0; k < hess_vals.size(); ++k) {
      w.values[static_cast<std::size_t>(hess_pos[k])] += hess_vals[k];
    }
  }

  const CompiledModel& model;
  int n = 0, me = 0, mi = 0;
  CsrMatrix g, h;
  CscMatrix w;
  std::vector<int> hess_pos, diag_pos;
  std::vector<double> hess_vals;
};

// Residual blocks given evaluated functions and Jacobians.
ResidualBlocks residual_from(const Problem& p, const Bounds& b, const PrimalDualPoint& w,
                             const Vec& grad, const Vec& gv, const Vec& hv, double mu) {
  ResidualBlocks r;
  r.stationarity = grad - w.z_lower + w.z_upper;
  if (p.me > 0) multiply_transpose_add(p.g, w.y, 1.0, r.stationarity);
  if (p.mi > 0) multiply_transpose_add(p.h, w.z, 1.0, r.stationarity);
  r.slack_dual = w.z - w.nu_lower + w.nu_upper;
  r.equality = gv;
  r.inequality = hv + w.s;

  const auto compl_block = [mu](const Vec& gap_lo_or_hi, const Vec& mult, const Vec& bound) {
    Vec c = Vec::Zero(mult.size());
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      if (fin(bound[i])) c[i] = gap_lo_or_hi[i] * mult[i] - mu;
    }
    return c;
  };
  r.compl_s_lower = compl_block(w.s - b.sl, w.nu_lower, b.sl);
  r.compl_s_upper = compl_block(b.su - w.s, w.nu_upper, b.su);
  r.compl_x_lower = compl_block(w.x - b.xl, w.z_lower, b.xl);
  r.compl_x_upper = compl_block(b.xu - w.x, w.z_upper, b.xu);

  r.dual_inf = std::max(inf_norm(r.stationarity), inf_norm(r.slack_dual));
  r.primal_inf = std::max(inf_norm(r.equality), inf_norm(r.inequality));
  r.compl_inf = std::max({inf_norm(r.compl_s_lower), inf_norm(r.compl_s_upper),
                          inf_norm(r.compl_x_lower), inf_norm(r.compl_x_upper)});
  r.norm = std::max({r.dual_inf, r.primal_inf, r.compl_inf});

  // Multiplier-magnitude scaling with s_max = 100.
  constexpr double s_max = 100.0;
  std::int64_t n_bound = 0;
  for (Eigen::Index i = 0; i < b.sl.size(); ++i) n_bound += fin(b.sl[i]) + fin(b.su[i]);
  for (Eigen::Index i = 0; i < b.xl.size(); ++i) n_bound += fin(b.xl[i]) + fin(b.xu[i]);
  const double bound_sum = one_norm(w.nu_lower) + one_norm(w.nu_upper) + one_norm(w.z_lower) +
                           one_norm(w.z_upper);
  const std::int64_t n_mult = p.me + p.mi + n_bound;
  const double s_d =
      n_mult > 0 ? std::max(s_max, (one_norm(w.y) + one_norm(w.z) + bound_sum) / n_mult) / s_max : 1.0;
  const double s_c = n_bound > 0 ? std::max(s_max, bound_sum / n_bound) / s_max : 1.0;
  r.scaled_norm = std::max({r.dual_inf / s_d, r.primal_inf, r.compl_inf / s_c});
  return r;
}

double barrier_objective(double f, const Vec& x, const Vec& s, const Bounds& b, double mu) {
  double phi = f;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (fin(b.xl[i])) phi -= mu * std::log(x[i] - b.xl[i]);
    if (fin(b.xu[i])) phi -= mu * std::log(b.xu[i] - x[i]);
  }
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (fin(b.sl[i])) phi -= mu * std::log(s[i] - b.sl[i]);
    if (fin(b.su[i])) phi -= mu * std::log(b.su[i] - s[i]);
  }
  return phi;
}

double violation(const Vec& gv, const Vec& hv, const Vec& s) {
  return one_norm(gv) + one_norm(hv + s);
}

// Distances to finite bounds paired with their directions, so the primal
// fraction-to-boundary rule is a single max_step call.
void primal_gaps(const PrimalDualPoint& w, const StepResult& d, const Bounds& b, Vec& gap, Vec& dgap) {
  std::vector<double> g, dg;
  const auto add = [&](const Vec& v, const Vec& dv, const Vec& lo, const Vec& hi) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (fin(lo[i])) {
        g.push_back(v[i] - lo[i]);
        dg.push_back(dv[i]);
      }
      if (fin(hi[i])) {
        g.push_back(hi[i] - v[i]);
        dg.push_back(-dv[i]);
      }
    }
  };
  add(w.x, d.dx, b.xl, b.xu);
  add(w.s, d.ds, b.sl, b.su);
  gap = Eigen::Map<Vec>(g.data(), static_cast<Eigen::Index>(g.size()));
  dgap = Eigen::Map<Vec>(dg.data(), static_cast<Eigen::Index>(dg.size()));
}

double min_gap(const PrimalDualPoint& w, const Bounds& b) {
  double m = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < w.x.size(); ++i) {
    if (fin(b.xl[i])) m = std::min(m, w.x[i] - b.xl[i]);
    if (fin(b.xu[i])) m = std::min(m, b.xu[i] - w.x[i]);
  }
  for (Eigen::Index i = 0; i < w.s.size(); ++i) {
    if (fin(b.sl[i])) m = std::min(m, w.s[i] - b.sl[i]);
    if (fin(b.su[i])) m = std::min(m, b.su[i] - w.s[i]);
  }
  return m;
}

double min_bound_dual(const PrimalDualPoint& w, const Bounds& b) {
  double m = std::numeric_limits<double>::infinity();
  const auto scan = [&](const Vec& mult, const Vec& bound) {
    for (Eigen::Index i = 0; i < mult.size(); ++i) {
      if (fin(bound[i])) m = std::min(m, mult[i]);
    }
  };
  scan(w.z_lower, b.xl);
  scan(w.z_upper, b.xu);
  scan(w.nu_lower, b.sl);
  scan(w.nu_upper, b.su);
  return m;
}

// Keeps each bound multiplier within [mu / (kappa gap), kappa mu / gap].
void reset_bound_duals(Vec& mult, const Vec& gap, const Vec& bound, double mu, double kappa) {
  for (Eigen::Index i = 0; i < mult.size(); ++i) {
    if (!fin(bound[i])) continue;
    mult[i] = std::clamp(mult[i], mu / (kappa * gap[i]), kappa * mu / gap[i]);
  }
}

// Step of a bound multiplier from the eliminated complementarity row:
// d = mu / gap - mult - (mult / gap) * dgap.
Vec bound_dual_step(const Vec& mult, const Vec& gap, const Vec& dgap, const Vec& bound, double mu) {
  Vec d = Vec::Zero(mult.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (fin(bound[i])) d[i] = mu / gap[i] - mult[i] - mult[i] / gap[i] * dgap[i];
  }
  return d;
}

double max_step_masked(const Vec& v, const Vec& dv, const Vec& bound, double tau) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (fin(bound[i]) && dv[i] < 0.0) alpha = std::min(alpha, -tau * v[i] / dv[i]);
  }
  return alpha;
}

}  // namespace

// ---------------------------------------------------------------------------

bool Filter::acceptable(double theta, double phi) const noexcept {
  for (const auto& [t, p] : entries_) {
    if (theta >= t && phi >= p) return false;
  }
  return true;
}

void Filter::add(double theta, double phi) {
  // A pair already dominated by the filter adds nothing.
  if (!acceptable(theta, phi)) return;
  std::erase_if(entries_, [&](const auto& e) { return e.first >= theta && e.second >= phi; });
  entries_.emplace_back(theta, phi);
}

std::string_view to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::MaxIter: return "MaxIter";
    case SolveStatus::RestorationFailure: return "RestorationFailure";
    case SolveStatus::StrategyFailure: return "StrategyFailure";
  }
  return "Unknown";
}

ResidualBlocks kkt_residual(const CompiledModel& model, const PrimalDualPoint& w, double mu) {
  Problem p(model);
  Bounds b = model_bounds(model);
  double f = 0.0;
  Vec gv, hv, grad;
  p.functions(w.x, f, gv, hv);
  grad.resize(p.n);
  model.gradient(cspan(w.x), mspan(grad));
  model.jacobians(cspan(w.x), p.g.values, p.h.values);
  return residual_from(p, b, w, grad, gv, hv, mu);
}

double max_step_to_boundary(const Vec& v, const Vec& dv, double tau) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) alpha = std::min(alpha, -tau * v[i] / dv[i]);
  }
  return alpha;
}

std::pair<double, double> fraction_to_boundary(const Vec& s, const Vec& ds, const Vec& nu,
                                               const Vec& dnu, double tau) {
  return {max_step_to_boundary(s, ds, tau), max_step_to_boundary(nu, dnu, tau)};
}

double update_mu(double mu, double kkt_norm_mu, const SolverOptions& o) {
  if (kkt_norm_mu > o.kappa_eps * mu) return mu;
  return std::max(o.tol / 10.0, std::min(o.kappa_mu * mu, std::pow(mu, o.theta_mu)));
}

CorrectedStep inertia_correction(KktStrategy& strategy, KktInputs& in, double mu,
                                 double& last_delta_x, const SolverOptions& o) {
  CorrectedStep out;
  double w_norm = 0.0;
  for (double v : in.w.values) w_norm = std::max(w_norm, std::abs(v));
  double dx = 0.0, dc = 0.0;
  while (true) {
    in.delta_x = dx;
    in.delta_c = dc;
    out.step = strategy.compute_step(in);
    ++out.attempts;
    if (out.step.status == StepStatus::Success) {
      out.success = true;
      out.delta_x = dx;
      out.delta_c = dc;
      if (dx > 0.0) last_delta_x = dx;
      return out;
    }
    if (out.step.status == StepStatus::Singular && dc == 0.0) {
      dc = o.delta_c_scale * std::pow(mu, o.delta_c_exponent);
      continue;
    }
    if (dx == 0.0) {
      dx = last_delta_x == 0.0 ? o.delta_x_first * std::max(1.0, w_norm)
                               : std::max(o.delta_x_min, o.delta_x_shrink * last_delta_x);
    } else {
      dx *= o.delta_x_grow;
    }
    if (dx > o.delta_x_max) {
      out.delta_x = dx;
      out.delta_c = dc;
      return out;
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

class Solver {
 public:
  Solver(const CompiledModel& model, const SolverOptions& o, SolveReport& rep)
      : o_(o), rep_(rep) {
    ScopedTimer t(rep_.timers.init);
    if (o.strategy == KktMethod::Lifted && model.m_eq() > 0) {
      relaxed_.emplace(relax_equalities(model, o.tau_relax));
      rep_.relaxed = true;
    }
    const CompiledModel& m = relaxed_ ? *relaxed_ : model;
    p_.emplace(m);
    b_ = model_bounds(m);
    open_fixed_bounds(b_.xl, b_.xu);
    open_fixed_bounds(b_.sl, b_.su);
    for (Eigen::Index i = 0; i < b_.sl.size(); ++i) {
      if (!fin(b_.sl[i]) && !fin(b_.su[i])) {
        throw std::invalid_argument("inequality row " + std::to_string(i) + " has no finite bound");
      }
    }
    in_.n = p_->n;
    in_.m_eq = p_->me;
    in_.m_ineq = p_->mi;
    in_.w = p_->w;
    in_.g = p_->g;
    in_.h = p_->h;
    in_.d_s = Vec::Ones(p_->mi);
    in_.r1 = Vec::Zero(p_->n);
    in_.r2 = Vec::Zero(p_->mi);
    in_.r3 = Vec::Zero(p_->me);
    in_.r4 = Vec::Zero(p_->mi);
    StrategyOptions so;
    so.gamma = o.gamma;
    so.cg_tol = o.cg_tol;
    so.cg_max_iter = o.cg_max_iter;
    so.refine = o.refine;
    so.dense_cap = o.dense_cap;
    strategy_ = make_strategy(o.strategy, so);
    strategy_->analyze(in_);
    if (!o.dump_dir.empty()) std::filesystem::create_directories(o.dump_dir);
  }

  void run() {
    const Problem& p = *p_;
    mu_ = o_.mu_init;
    initialize();
    double f = 0.0;
    Vec gv, hv, grad;
    {
      ScopedTimer t(rep_.timers.ad);
      p_->functions(w_.x, f, gv, hv);
    }
    const double theta0 = violation(gv, hv, w_.s);
    theta_max_ = 1e4 * std::max(1.0, theta0);
    theta_min_ = 1e-4 * std::max(1.0, theta0);

    for (int k = 0;; ++k) {
      {
        ScopedTimer t(rep_.timers.ad);
        p_->derivatives(w_.x, w_.y, w_.z, grad);
      }
      const ResidualBlocks e0 = residual_from(p, b_, w_, grad, gv, hv, 0.0);
      ResidualBlocks emu = residual_from(p, b_, w_, grad, gv, hv, mu_);

      IterationRecord rec;
      rec.iter = k;
      rec.objective = f;
      rec.primal_inf = e0.primal_inf;
      rec.dual_inf = e0.dual_inf;
      rec.kkt_norm = e0.norm;
      rec.min_slack_gap = min_gap(w_, b_);
      rec.min_bound_dual = min_bound_dual(w_, b_);
      if (o_.record_iterates) rec.x = w_.x;

      rep_.iterations = k;
      rep_.objective = f;
      rep_.kkt_norm = e0.norm;
      rep_.scaled_kkt_norm = e0.scaled_norm;
      rep_.primal_inf = e0.primal_inf;
      rep_.dual_inf = e0.dual_inf;
      rep_.compl_inf = e0.compl_inf;

      if (!std::isfinite(e0.norm)) {
        finish(rec, SolveStatus::StrategyFailure, "non-finite KKT residual");
        return;
      }
      if (e0.norm <= o_.tol) {
        finish(rec, SolveStatus::Optimal, "");
        return;
      }
      if (k >= o_.max_iter) {
        finish(rec, SolveStatus::MaxIter, "iteration limit reached");
        return;
      }

      // Monotone barrier update, repeated while the subproblem is solved.
      while (true) {
        const double next = update_mu(mu_, emu.scaled_norm, o_);
        if (next >= mu_) break;
        mu_ = next;
        filter_.clear();
        emu = residual_from(p, b_, w_, grad, gv, hv, mu_);
      }
      rec.mu = mu_;
      const double tau = std::max(o_.tau_min, 1.0 - mu_);

      // Newton system.
      Vec gap_xl = w_.x - b_.xl, gap_xu = b_.xu - w_.x;
      Vec gap_sl = w_.s - b_.sl, gap_su = b_.su - w_.s;
      for (std::size_t q = 0; q < p.w.values.size(); ++q) in_.w.values[q] = p.w.values[q];
      in_.g.values = p.g.values;
      in_.h.values = p.h.values;
      in_.r1 = grad;
      if (p.me > 0) multiply_transpose_add(p.g, w_.y, 1.0, in_.r1);
      if (p.mi > 0) multiply_transpose_add(p.h, w_.z, 1.0, in_.r1);
      for (int j = 0; j < p.n; ++j) {
        double sigma = 0.0;
        if (fin(b_.xl[j])) {
          sigma += w_.z_lower[j] / gap_xl[j];
          in_.r1[j] -= mu_ / gap_xl[j];
        }
        if (fin(b_.xu[j])) {
          sigma += w_.z_upper[j] / gap_xu[j];
          in_.r1[j] += mu_ / gap_xu[j];
        }
        in_.w.values[static_cast<std::size_t>(p.diag_pos[static_cast<std::size_t>(j)])] += sigma;
      }
      for (int i = 0; i < p.mi; ++i) {
        double ds = 0.0;
        double r2 = w_.z[i];
        if (fin(b_.sl[i])) {
          ds += w_.nu_lower[i] / gap_sl[i];
          r2 -= mu_ / gap_sl[i];
        }
        if (fin(b_.su[i])) {
          ds += w_.nu_upper[i] / gap_su[i];
          r2 += mu_ / gap_su[i];
        }
        in_.d_s[i] = ds;
        in_.r2[i] = r2;
      }
      in_.r3 = gv;
      in_.r4 = hv + w_.s;

      CorrectedStep cs;
      {
        ScopedTimer t(rep_.timers.linsolve);
        cs = inertia_correction(*strategy_, in_, mu_, last_delta_x_, o_);
      }
      rec.delta_x = cs.delta_x;
      rec.delta_c = cs.delta_c;
      rec.cg_iterations = cs.step.cg_iterations;
      rec.refinement_iterations = cs.step.refinement_iterations;
      rec.step_residual = cs.step.residual;
      rep_.linear_solves += cs.attempts;
      rep_.cg_iterations_total += cs.step.cg_iterations;
      rep_.refinement_iterations_total += cs.step.refinement_iterations;
      if (cs.step.degraded) ++rep_.degraded_solves;
      if (!o_.dump_dir.empty()) {
        char name[32];
        std::snprintf(name, sizeof(name), "kkt_%04d.mtx", k);
        strategy_->dump(o_.dump_dir / name);
      }
      if (!cs.success) {
        finish(rec, SolveStatus::StrategyFailure, "inertia correction exceeded its limit");
        return;
      }
      const StepResult& d = cs.step;

      // Bound multiplier steps and step lengths.
      const Vec dzl = bound_dual_step(w_.z_lower, gap_xl, d.dx, b_.xl, mu_);
      const Vec dzu = bound_dual_step(w_.z_upper, gap_xu, -d.dx, b_.xu, mu_);
      const Vec dnl = bound_dual_step(w_.nu_lower, gap_sl, d.ds, b_.sl, mu_);
      const Vec dnu = bound_dual_step(w_.nu_upper, gap_su, -d.ds, b_.su, mu_);
      Vec gap, dgap;
      primal_gaps(w_, d, b_, gap, dgap);
      const double alpha_max = max_step_to_boundary(gap, dgap, tau);
      const double alpha_dual =
          std::min({max_step_masked(w_.z_lower, dzl, b_.xl, tau), max_step_masked(w_.z_upper, dzu, b_.xu, tau),
                    max_step_masked(w_.nu_lower, dnl, b_.sl, tau), max_step_masked(w_.nu_upper, dnu, b_.su, tau)});

      // Filter line search.
      const double theta = violation(gv, hv, w_.s);
      const double phi = barrier_objective(f, w_.x, w_.s, b_, mu_);
      double grad_phi = grad.dot(d.dx);
      for (int j = 0; j < p.n; ++j) {
        if (fin(b_.xl[j])) grad_phi -= mu_ * d.dx[j] / gap_xl[j];
        if (fin(b_.xu[j])) grad_phi += mu_ * d.dx[j] / gap_xu[j];
      }
      for (int i = 0; i < p.mi; ++i) {
        if (fin(b_.sl[i])) grad_phi -= mu_ * d.ds[i] / gap_sl[i];
        if (fin(b_.su[i])) grad_phi += mu_ * d.ds[i] / gap_su[i];
      }
      double alpha_min = o_.gamma_theta;
      if (grad_phi < 0.0) {
        alpha_min = std::min(o_.gamma_theta, o_.gamma_phi * theta / -grad_phi);
        if (theta <= theta_min_) {
          alpha_min = std::min(alpha_min, o_.switch_delta * std::pow(theta, o_.s_theta) /
                                              std::pow(-grad_phi, o_.s_phi));
        }
      }
      alpha_min *= o_.gamma_alpha;

      bool tiny = true;
      for (int j = 0; j < p.n && tiny; ++j) tiny = std::abs(d.dx[j]) < 10.0 * kEps * (1.0 + std::abs(w_.x[j]));
      for (int i = 0; i < p.mi && tiny; ++i) tiny = std::abs(d.ds[i]) < 10.0 * kEps * (1.0 + std::abs(w_.s[i]));

      double alpha = alpha_max;
      bool accepted = false;
      bool f_type = false;
      double f_t = f;
      Vec x_t, s_t, g_t, h_t;
      int trials = 0;
      while (true) {
        if (!tiny && alpha < alpha_min) break;
        x_t = w_.x + alpha * d.dx;
        s_t = w_.s + alpha * d.ds;
        ++trials;
        bool ok = true;
        {
          ScopedTimer t(rep_.timers.ad);
          try {
            p_->functions(x_t, f_t, g_t, h_t);
          } catch (const EvalError&) {
            ok = false;
          }
        }
        if (ok && tiny) {
          accepted = true;
          f_type = true;
          break;
        }
        if (ok) {
          const double theta_t = violation(g_t, h_t, s_t);
          const double phi_t = barrier_objective(f_t, x_t, s_t, b_, mu_);
          const double relax = 10.0 * kEps * std::abs(phi);
          if (std::isfinite(phi_t) && std::isfinite(theta_t) && theta_t <= theta_max_ &&
              filter_.acceptable(theta_t, phi_t)) {
            const bool switching = grad_phi < 0.0 && alpha * std::pow(-grad_phi, o_.s_phi) >
                                                         o_.switch_delta * std::pow(theta, o_.s_theta);
            if (switching && theta <= theta_min_) {
              if (phi_t - phi - o_.eta_phi * alpha * grad_phi <= relax) {
                accepted = true;
                f_type = true;
              }
            } else if (theta_t <= (1.0 - o_.gamma_theta) * theta ||
                       phi_t - (phi - o_.gamma_phi * theta) <= relax) {
              accepted = true;
            }
          }
        }
        if (accepted) break;
        alpha *= 0.5;
      }
      rec.line_search_trials = trials;
      if (!accepted) {
        finish(rec, SolveStatus::RestorationFailure, "step size fell below its minimum");
        return;
      }
      if (!f_type) filter_.add((1.0 - o_.gamma_theta) * theta, phi - o_.gamma_phi * theta);

      rec.alpha_primal = alpha;
      rec.alpha_dual = alpha_dual;
      rep_.history.push_back(std::move(rec));

      w_.x = x_t;
      w_.s = s_t;
      w_.y += alpha * d.dy;
      w_.z += alpha * d.dz;
      w_.z_lower += alpha_dual * dzl;
      w_.z_upper += alpha_dual * dzu;
      w_.nu_lower += alpha_dual * dnl;
      w_.nu_upper += alpha_dual * dnu;
      reset_bound_duals(w_.z_lower, w_.x - b_.xl, b_.xl, mu_, o_.kappa_sigma);
      reset_bound_duals(w_.z_upper, b_.xu - w_.x, b_.xu, mu_, o_.kappa_sigma);
      reset_bound_duals(w_.nu_lower, w_.s - b_.sl, b_.sl, mu_, o_.kappa_sigma);
      reset_bound_duals(w_.nu_upper, b_.su - w_.s, b_.su, mu_, o_.kappa_sigma);
      f = f_t;
      gv = g_t;
      hv = h_t;
    }
  }

  void finish(IterationRecord& rec, SolveStatus status, std::string message) {
    rec.mu = mu_;
    rep_.history.push_back(std::move(rec));
    rep_.status = status;
    rep_.message = std::move(message);
    rep_.final_mu = mu_;
    rep_.solution = w_;
    rep_.kkt_nnz = strategy_->matrix_nnz();
  }

 private:
  void initialize() {
    const Problem& p = *p_;
    w_.x.resize(p.n);
    const auto start = p.model.start();
    for (int j = 0; j < p.n; ++j) w_.x[j] = start[static_cast<std::size_t>(j)];
    push_inside(w_.x, b_.xl, b_.xu, o_.bound_push, o_.bound_frac);
    double f = 0.0;
    Vec gv, hv;
    {
      ScopedTimer t(rep_.timers.ad);
      p_->functions(w_.x, f, gv, hv);
    }
    w_.s = -hv;
    push_inside(w_.s, b_.sl, b_.su, o_.bound_push, o_.bound_frac);
    w_.y = Vec::Zero(p.me);
    w_.z = Vec::Zero(p.mi);
    const auto init_dual = [&](Vec& mult, const Vec& gap, const Vec& bound) {
      mult = Vec::Zero(gap.size());
      for (Eigen::Index i = 0; i < gap.size(); ++i) {
        if (fin(bound[i])) mult[i] = mu_ / gap[i];
      }
    };
    init_dual(w_.z_lower, w_.x - b_.xl, b_.xl);
    init_dual(w_.z_upper, b_.xu - w_.x, b_.xu);
    init_dual(w_.nu_lower, w_.s - b_.sl, b_.sl);
    init_dual(w_.nu_upper, b_.su - w_.s, b_.su);
  }

  const SolverOptions& o_;
  SolveReport& rep_;
  std::optional<CompiledModel> relaxed_;
  std::optional<Problem> p_;
  Bounds b_;
  KktInputs in_;
  std::unique_ptr<KktStrategy> strategy_;
  PrimalDualPoint w_;
  Filter filter_;
  double mu_ = 0.1;
  double last_delta_x_ = 0.0;
  double theta_max_ = 0.0, theta_min_ = 0.0;
};

}  // namespace

SolveReport solve(const CompiledModel& model, const SolverOptions& options) {
  SolveReport rep;
  const auto t0 = Clock::now();
  try {
    if (!(options.tol > 0.0)) throw std::invalid_argument("tol must be positive");
    Solver solver(model, options, rep);
    solver.run();
  } catch (const std::exception& e) {
    rep.status = SolveStatus::StrategyFailure;
    rep.message = e.what();
  }
  rep.timers.total = since(t0);
  return rep;
}

}  // namespace hkkt
