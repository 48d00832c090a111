#include "hybridkkt/kkt.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace hkkt {

namespace {

double inf_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

// Symmetric pairs (k1 >= k2) of one CSR row, in enumeration order.
template <typename Fn>
void for_each_row_pair(const CsrMatrix& a, int row, Fn&& fn) {
  const int begin = a.row_ptr[static_cast<std::size_t>(row)];
  const int end = a.row_ptr[static_cast<std::size_t>(row) + 1];
  for (int k1 = begin; k1 < end; ++k1) {
    for (int k2 = begin; k2 <= k1; ++k2) fn(k1, k2);
  }
}

}  // namespace

void KktInputs::validate() const {
  auto fail = [](const char* what) { throw std::invalid_argument(std::string("KktInputs: ") + what); };
  if (w.rows != n || w.cols != n || !w.symmetric) fail("W must be a lower-stored n x n matrix");
  if (g.rows != m_eq || (m_eq > 0 && g.cols != n)) fail("G has wrong shape");
  if (h.rows != m_ineq || (m_ineq > 0 && h.cols != n)) fail("H has wrong shape");
  if (d_s.size() != m_ineq) fail("D_s has wrong length");
  if (r1.size() != n || r2.size() != m_ineq || r3.size() != m_eq || r4.size() != m_ineq) {
    fail("right-hand side blocks have wrong lengths");
  }
  if (m_ineq > 0 && !(d_s.minCoeff() > 0.0)) fail("D_s must be strictly positive");
  if (delta_x < 0.0 || delta_c < 0.0) fail("regularization must be nonnegative");
}

Eigen::MatrixXd augmented_matrix(const KktInputs& in) {
  const int n = in.n, mi = in.m_ineq, me = in.m_eq;
  const int dim = n + 2 * mi + me;
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(dim, dim);
  const int os = n, oy = n + mi, oz = n + mi + me;
  k.topLeftCorner(n, n) = in.w.to_dense();
  k.topLeftCorner(n, n).diagonal().array() += in.delta_x;
  for (int i = 0; i < mi; ++i) {
    k(os + i, os + i) = in.d_s[i] + in.delta_x;
    k(oz + i, os + i) = 1.0;
    k(os + i, oz + i) = 1.0;
    k(oz + i, oz + i) = -in.delta_c;
  }
  for (int i = 0; i < me; ++i) k(oy + i, oy + i) = -in.delta_c;
  if (me > 0) {
    const Eigen::MatrixXd g = in.g.to_dense();
    k.block(oy, 0, me, n) = g;
    k.block(0, oy, n, me) = g.transpose();
  }
  if (mi > 0) {
    const Eigen::MatrixXd h = in.h.to_dense();
    k.block(oz, 0, mi, n) = h;
    k.block(0, oz, n, mi) = h.transpose();
  }
  return k;
}

Eigen::MatrixXd condensed_block_dense(const KktInputs& in) {
  Eigen::MatrixXd k = in.w.to_dense();
  k.diagonal().array() += in.delta_x;
  if (in.m_ineq > 0) {
    const Eigen::MatrixXd h = in.h.to_dense();
    k += h.transpose() * in.d_s.asDiagonal() * h;
  }
  return k;
}

Eigen::MatrixXd condensed_matrix(const KktInputs& in) {
  const int n = in.n, me = in.m_eq;
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n + me, n + me);
  k.topLeftCorner(n, n) = condensed_block_dense(in);
  if (me > 0) {
    const Eigen::MatrixXd g = in.g.to_dense();
    k.bottomLeftCorner(me, n) = g;
    k.topRightCorner(n, me) = g.transpose();
  }
  return k;
}

namespace {

// r1 + H^T (D_s r4 - r2)
Vec condensed_primal_rhs(const KktInputs& in) {
  Vec out = in.r1;
  if (in.m_ineq > 0) {
    const Vec t = in.d_s.cwiseProduct(in.r4) - in.r2;
    multiply_transpose_add(in.h, t, 1.0, out);
  }
  return out;
}

}  // namespace

Vec condensed_rhs(const KktInputs& in) {
  Vec out(in.n + in.m_eq);
  out.head(in.n) = -condensed_primal_rhs(in);
  out.tail(in.m_eq) = -in.r3;
  return out;
}

Vec hykkt_rhs(const KktInputs& in, double gamma) {
  Vec out = condensed_primal_rhs(in);
  if (in.m_eq > 0) multiply_transpose_add(in.g, in.r3, gamma, out);
  return out;
}

void recover_slack_dual(const Vec& dx, const KktInputs& in, Vec& ds, Vec& dz) {
  if (in.m_ineq == 0) {
    ds.resize(0);
    dz.resize(0);
    return;
  }
  multiply(in.h, dx, ds);
  ds = -in.r4 - ds;
  dz = -in.r2 - in.d_s.cwiseProduct(ds);
}

double augmented_residual(const KktInputs& in, const StepResult& step, bool regularize_slack_block) {
  const double ds_reg = regularize_slack_block ? in.delta_x : 0.0;
  const double dc = regularize_slack_block ? in.delta_c : 0.0;
  Vec res1;
  multiply(in.w, step.dx, res1);
  res1 += in.delta_x * step.dx + in.r1;
  if (in.m_eq > 0) multiply_transpose_add(in.g, step.dy, 1.0, res1);
  if (in.m_ineq > 0) multiply_transpose_add(in.h, step.dz, 1.0, res1);
  double res = inf_norm(res1);
  double rhs = inf_norm(in.r1);
  if (in.m_ineq > 0) {
    const Vec res2 = (in.d_s.array() + ds_reg).matrix().cwiseProduct(step.ds) + step.dz + in.r2;
    Vec hdx;
    multiply(in.h, step.dx, hdx);
    const Vec res4 = hdx + step.ds - dc * step.dz + in.r4;
    res = std::max({res, inf_norm(res2), inf_norm(res4)});
    rhs = std::max({rhs, inf_norm(in.r2), inf_norm(in.r4)});
  }
  if (in.m_eq > 0) {
    Vec gdx;
    multiply(in.g, step.dx, gdx);
    const Vec res3 = gdx - dc * step.dy + in.r3;
    res = std::max(res, inf_norm(res3));
    rhs = std::max(rhs, inf_norm(in.r3));
  }
  return res / (1.0 + rhs);
}

// ---------------------------------------------------------------------------
// Dense strategies

StepResult solve_augmented(const KktInputs& in, int dense_cap) {
  const int n = in.n, mi = in.m_ineq, me = in.m_eq;
  const Eigen::MatrixXd k = augmented_matrix(in);
  const DenseInertiaFactor f(k, augmented_zero_tol(static_cast<int>(k.rows())), dense_cap);
  StepResult out;
  out.inertia = f.inertia();
  if (out.inertia.zero > 0 || !f.invertible()) {
    out.status = StepStatus::Singular;
    return out;
  }
  if (!(out.inertia == augmented_target(in))) {
    out.status = StepStatus::WrongInertia;
    return out;
  }
  Vec rhs(k.rows());
  rhs << -in.r1, -in.r2, -in.r3, -in.r4;
  const Vec sol = f.solve(rhs);
  out.dx = sol.segment(0, n);
  out.ds = sol.segment(n, mi);
  out.dy = sol.segment(n + mi, me);
  out.dz = sol.segment(n + mi + me, mi);
  out.residual = augmented_residual(in, out, true);
  return out;
}

StepResult solve_condensed(const KktInputs& in, int dense_cap) {
  const Eigen::MatrixXd k = condensed_matrix(in);
  const DenseInertiaFactor f(k, augmented_zero_tol(static_cast<int>(k.rows())), dense_cap);
  StepResult out;
  out.inertia = f.inertia();
  if (out.inertia.zero > 0 || !f.invertible()) {
    out.status = StepStatus::Singular;
    return out;
  }
  if (!(out.inertia == Inertia{in.n, 0, in.m_eq})) {
    out.status = StepStatus::WrongInertia;
    return out;
  }
  const Vec sol = f.solve(condensed_rhs(in));
  out.dx = sol.head(in.n);
  out.dy = sol.tail(in.m_eq);
  recover_slack_dual(out.dx, in, out.ds, out.dz);
  out.residual = augmented_residual(in, out, false);
  return out;
}

// ---------------------------------------------------------------------------
// Sparse condensed systems

CondensedSystem::CondensedSystem(const KktInputs& s, bool include_gtg)
    : include_gtg_(include_gtg), w_ptr_(s.w.col_ptr), w_rows_(s.w.row_idx) {
  const std::int64_t n = s.n;
  std::vector<std::int64_t> keys;
  auto key = [n](std::int64_t r, std::int64_t c) { return std::min(r, c) * n + std::max(r, c); };
  for (int j = 0; j < s.n; ++j) {
    keys.push_back(key(j, j));
    for (int p = s.w.col_ptr[static_cast<std::size_t>(j)]; p < s.w.col_ptr[static_cast<std::size_t>(j) + 1]; ++p) {
      keys.push_back(key(s.w.row_idx[static_cast<std::size_t>(p)], j));
    }
  }
  auto add_pairs = [&](const CsrMatrix& a) {
    for (int r = 0; r < a.rows; ++r) {
      for_each_row_pair(a, r, [&](int k1, int k2) {
        keys.push_back(key(a.col_idx[static_cast<std::size_t>(k1)], a.col_idx[static_cast<std::size_t>(k2)]));
      });
    }
  };
  if (s.m_ineq > 0) add_pairs(s.h);
  if (include_gtg && s.m_eq > 0) add_pairs(s.g);
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

  k_.rows = k_.cols = s.n;
  k_.symmetric = true;
  k_.col_ptr.assign(static_cast<std::size_t>(s.n) + 1, 0);
  k_.row_idx.reserve(keys.size());
  for (std::int64_t kk : keys) {
    k_.row_idx.push_back(static_cast<int>(kk % n));
    ++k_.col_ptr[static_cast<std::size_t>(kk / n) + 1];
  }
  for (std::size_t j = 0; j < static_cast<std::size_t>(s.n); ++j) k_.col_ptr[j + 1] += k_.col_ptr[j];
  k_.values.assign(keys.size(), 0.0);

  auto pos = [&](std::int64_t r, std::int64_t c) {
    return static_cast<int>(std::lower_bound(keys.begin(), keys.end(), key(r, c)) - keys.begin());
  };
  for (int j = 0; j < s.n; ++j) {
    diag_map_.push_back(pos(j, j));
    for (int p = s.w.col_ptr[static_cast<std::size_t>(j)]; p < s.w.col_ptr[static_cast<std::size_t>(j) + 1]; ++p) {
      w_map_.push_back(pos(s.w.row_idx[static_cast<std::size_t>(p)], j));
    }
  }
  auto pair_map = [&](const CsrMatrix& a, std::vector<int>& out) {
    for (int r = 0; r < a.rows; ++r) {
      for_each_row_pair(a, r, [&](int k1, int k2) {
        out.push_back(pos(a.col_idx[static_cast<std::size_t>(k1)], a.col_idx[static_cast<std::size_t>(k2)]));
      });
    }
  };
  if (s.m_ineq > 0) pair_map(s.h, h_pairs_);
  if (include_gtg && s.m_eq > 0) pair_map(s.g, g_pairs_);

  symbolic_ = std::make_shared<const SymbolicFactorization>(k_, amd_order(k_));
}

void CondensedSystem::assemble(const KktInputs& in, double gamma) {
  if (in.w.col_ptr != w_ptr_ || in.w.row_idx != w_rows_) {
    throw std::logic_error("W pattern differs from the analysed condensed pattern");
  }
  std::fill(k_.values.begin(), k_.values.end(), 0.0);
  for (std::size_t p = 0; p < w_map_.size(); ++p) {
    k_.values[static_cast<std::size_t>(w_map_[p])] += in.w.values[p];
  }
  for (int j = 0; j < in.n; ++j) k_.values[static_cast<std::size_t>(diag_map_[static_cast<std::size_t>(j)])] += in.delta_x;
  auto scatter = [&](const CsrMatrix& a, const std::vector<int>& map, auto weight) {
    std::size_t t = 0;
    for (int r = 0; r < a.rows; ++r) {
      const double wr = weight(r);
      for_each_row_pair(a, r, [&](int k1, int k2) {
        if (t >= map.size()) throw std::logic_error("condensed pattern overflow");
        k_.values[static_cast<std::size_t>(map[t++])] +=
            wr * a.values[static_cast<std::size_t>(k1)] * a.values[static_cast<std::size_t>(k2)];
      });
    }
    if (t != map.size()) throw std::logic_error("Jacobian pattern differs from the analysed pattern");
  };
  if (in.m_ineq > 0) scatter(in.h, h_pairs_, [&](int r) { return in.d_s[r]; });
  if (include_gtg_ && in.m_eq > 0) scatter(in.g, g_pairs_, [&](int) { return gamma; });
}

HyKktSystem::HyKktSystem(const KktInputs& structure, double gamma_)
    : k_gamma(structure, true), gamma(gamma_) {
  if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
}

const CscMatrix& assemble_condensed(const KktInputs& inputs, CondensedSystem& system) {
  system.assemble(inputs);
  return system.matrix();
}

const CscMatrix& assemble_hykkt(const KktInputs& inputs, HyKktSystem& system) {
  system.k_gamma.assemble(inputs, system.gamma);
  return system.k_gamma.matrix();
}

StepResult solve_lifted(CondensedSystem& system, const KktInputs& in, const RefineOptions& refine) {
  if (in.m_eq != 0) throw std::invalid_argument("Lifted-KKT needs a model without equalities");
  system.assemble(in);
  StepResult out;
  auto outcome = numeric_factor(system.symbolic(), system.matrix());
  if (const auto* bad = std::get_if<NotPositiveDefinite>(&outcome)) {
    (void)bad;
    out.status = StepStatus::WrongInertia;
    return out;
  }
  const auto& factor = std::get<CholeskyFactor>(outcome);
  const Vec rhs = condensed_rhs(in);
  const auto& k = system.matrix();
  const RefineResult r = richardson_refine(
      [&](const Vec& b) { return factor.solve(b); },
      [&](const Vec& x, Vec& y) { multiply(k, x, y); }, rhs, refine.tol, refine.max_iter);
  out.dx = r.x;
  out.refinement_iterations = r.iterations;
  out.dy.resize(0);
  recover_slack_dual(out.dx, in, out.ds, out.dz);
  out.residual = augmented_residual(in, out, false);

  // Richardson on the unreduced system with the condensed factor as the
  // approximate inverse: each correction is the same elimination applied to
  // the current residual of the augmented equations.
  for (int extra = 0; extra < refine.max_iter && out.residual > refine.tol; ++extra) {
    Vec rho1, rho4;
    multiply(in.w, out.dx, rho1);
    rho1 += in.delta_x * out.dx + in.r1;
    Vec rho2 = in.r2;
    if (in.m_ineq > 0) {
      multiply_transpose_add(in.h, out.dz, 1.0, rho1);
      rho2 += in.d_s.cwiseProduct(out.ds) + out.dz;
      multiply(in.h, out.dx, rho4);
      rho4 += out.ds + in.r4;
    }
    Vec c1 = rho1;
    if (in.m_ineq > 0) multiply_transpose_add(in.h, Vec(in.d_s.cwiseProduct(rho4) - rho2), 1.0, c1);
    StepResult trial = out;
    const Vec cx = factor.solve(-c1);
    trial.dx += cx;
    if (in.m_ineq > 0) {
      Vec cs;
      multiply(in.h, cx, cs);
      cs = -rho4 - cs;
      trial.ds += cs;
      trial.dz += -rho2 - in.d_s.cwiseProduct(cs);
    }
    trial.residual = augmented_residual(in, trial, false);
    ++out.refinement_iterations;
    if (!(trial.residual < out.residual)) break;
    trial.refinement_iterations = out.refinement_iterations;
    out = std::move(trial);
  }
  out.degraded = r.degraded() && out.residual > refine.tol;
  return out;
}

StepResult solve_hykkt(HyKktSystem& system, const KktInputs& in) {
  assemble_hykkt(in, system);
  StepResult out;
  auto outcome = numeric_factor(system.k_gamma.symbolic(), system.k_gamma.matrix());
  if (std::holds_alternative<NotPositiveDefinite>(outcome)) {
    out.status = StepStatus::WrongInertia;
    return out;
  }
  const auto& factor = std::get<CholeskyFactor>(outcome);
  const Vec r_gamma = hykkt_rhs(in, system.gamma);
  ++system.solves;
  if (in.m_eq == 0) {
    out.dx = factor.solve(-r_gamma);
    out.dy.resize(0);
  } else {
    // (G K_γ^{-1} G^T) dy = r3 - G K_γ^{-1} r_γ
    const Vec kr = factor.solve(r_gamma);
    Vec gkr;
    multiply(in.g, kr, gkr);
    const Vec b = in.r3 - gkr;
    Vec tmp(in.n);
    const auto schur = [&](const Vec& v, Vec& y) {
      tmp.setZero();
      multiply_transpose_add(in.g, v, 1.0, tmp);
      factor.solve_in_place(tmp);
      multiply(in.g, tmp, y);
    };
    const CgResult cg = cg_solve(schur, b, system.cg_tol, system.cg_max_iter);
    out.cg_iterations = cg.iterations;
    system.total_cg_iterations += cg.iterations;
    if (!cg.converged) {
      out.status = StepStatus::Failure;
      return out;
    }
    out.dy = cg.x;
    // K_γ dx = -(r_γ + G^T dy)
    Vec rhs = r_gamma;
    multiply_transpose_add(in.g, out.dy, 1.0, rhs);
    out.dx = factor.solve(-rhs);
  }
  recover_slack_dual(out.dx, in, out.ds, out.dz);
  out.residual = augmented_residual(in, out, false);
  return out;
}

CompiledModel relax_equalities(const CompiledModel& model, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("relaxation parameter must be positive");
  ModelBuilder b = model.source();
  for (auto& p : b.patterns()) {
    if (!p.objective && p.kind == ConstraintKind::Equality) {
      p.kind = ConstraintKind::Inequality;
      p.lower = -tau;
      p.upper = tau;
    }
  }
  return compile(b);
}

// ---------------------------------------------------------------------------
// Strategy objects

std::string_view to_string(KktMethod method) {
  switch (method) {
    case KktMethod::Augmented: return "augmented";
    case KktMethod::Lifted: return "lifted";
    case KktMethod::HyKkt: return "hykkt";
  }
  return "unknown";
}

KktMethod parse_kkt_method(std::string_view name) {
  if (name == "augmented") return KktMethod::Augmented;
  if (name == "lifted") return KktMethod::Lifted;
  if (name == "hykkt") return KktMethod::HyKkt;
  throw std::invalid_argument("unknown KKT strategy '" + std::string(name) + "'");
}

namespace {

class AugmentedStrategy final : public KktStrategy {
 public:
  explicit AugmentedStrategy(const StrategyOptions& o) : options_(o) {}
  KktMethod method() const noexcept override { return KktMethod::Augmented; }
  void analyze(const KktInputs& s) override {
    const int dim = s.n + 2 * s.m_ineq + s.m_eq;
    if (dim > options_.dense_cap) {
      throw std::length_error("augmented system of size " + std::to_string(dim) +
                              " exceeds the dense cap " + std::to_string(options_.dense_cap));
    }
  }
  StepResult compute_step(const KktInputs& in) override {
    last_ = in;
    StepResult r = solve_augmented(in, options_.dense_cap);
    nnz_ = in.w.nnz() + in.n + 2 * in.m_ineq + in.g.nnz() + in.h.nnz() +
           (in.delta_c > 0.0 ? in.m_eq + in.m_ineq : 0);
    return r;
  }
  void dump(const std::filesystem::path& path) const override {
    write_matrix_market(path, CscMatrix::lower_from_dense(augmented_matrix(last_)));
  }
  std::int64_t matrix_nnz() const noexcept override { return nnz_; }

 private:
  StrategyOptions options_;
  KktInputs last_;
  std::int64_t nnz_ = 0;
};

class LiftedStrategy final : public KktStrategy {
 public:
  explicit LiftedStrategy(const StrategyOptions& o) : options_(o) {}
  KktMethod method() const noexcept override { return KktMethod::Lifted; }
  void analyze(const KktInputs& s) override {
    if (s.m_eq != 0) throw std::invalid_argument("Lifted-KKT needs a relaxed model (m_eq = 0)");
    system_ = std::make_unique<CondensedSystem>(s, false);
  }
  StepResult compute_step(const KktInputs& in) override {
    return solve_lifted(*system_, in, options_.refine);
  }
  void dump(const std::filesystem::path& path) const override {
    write_matrix_market(path, system_->matrix());
  }
  std::int64_t matrix_nnz() const noexcept override { return system_ ? system_->matrix().nnz() : 0; }

 private:
  StrategyOptions options_;
  std::unique_ptr<CondensedSystem> system_;
};

class HyKktStrategy final : public KktStrategy {
 public:
  explicit HyKktStrategy(const StrategyOptions& o) : options_(o) {}
  KktMethod method() const noexcept override { return KktMethod::HyKkt; }
  void analyze(const KktInputs& s) override {
    system_ = std::make_unique<HyKktSystem>(s, options_.gamma);
    system_->cg_tol = options_.cg_tol;
    system_->cg_max_iter = options_.cg_max_iter;
  }
  StepResult compute_step(const KktInputs& in) override { return solve_hykkt(*system_, in); }
  void dump(const std::filesystem::path& path) const override {
    write_matrix_market(path, system_->k_gamma.matrix());
  }
  std::int64_t matrix_nnz() const noexcept override {
    return system_ ? system_->k_gamma.matrix().nnz() : 0;
  }

 private:
  StrategyOptions options_;
  std::unique_ptr<HyKktSystem> system_;
};

}  // namespace

std::unique_ptr<KktStrategy> make_strategy(KktMethod method, const StrategyOptions& options) {
  switch (method) {
    case KktMethod::Augmented: return std::make_unique<AugmentedStrategy>(options);
    case KktMethod::Lifted: return std::make_unique<LiftedStrategy>(options);
    case KktMethod::HyKkt: return std::make_unique<HyKktStrategy>(options);
  }
  throw std::invalid_argument("unknown KKT strategy");
}

}  // namespace hkkt
