#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "hybridkkt/distillation.hpp"
#include "hybridkkt/ipm.hpp"
#include "oracles/oracles.hpp"
#include "support.hpp"

using namespace hkkt;
using oracle::VectorXd;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec r(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) r[i++] = x;
  return r;
}

CompiledModel shifted_square() {
  ModelBuilder b;
  const VarBlock x = b.add_variables("x", {1}, -kInf, kInf, 5.0);
  b.add_objective(square(x({at(0)}) - 1.0), IndexSet::range(0, 0));
  return compile(b);
}

CompiledModel linear_with_bound() {
  ModelBuilder b;
  const VarBlock x = b.add_variables("x", {1}, 0.0, kInf, 1.0);
  b.add_objective(x({at(0)}), IndexSet::range(0, 0));
  return compile(b);
}

CompiledModel linear_with_inequality() {
  ModelBuilder b;
  const VarBlock x = b.add_variables("x", {1}, -kInf, kInf, 1.0);
  b.add_objective(x({at(0)}), IndexSet::range(0, 0));
  b.add_constraint(-x({at(0)}), IndexSet::range(0, 0), ConstraintKind::Inequality);
  return compile(b);
}

// min x0^2 + x1^2 s.t. x0 + x1 = 2, x0 - x1 <= 0.5: solution (1, 1), y = -2.
CompiledModel small_qp() {
  ModelBuilder b;
  const VarBlock x = b.add_variables("x", {2});
  b.add_objective(square(x({idx(0)})), IndexSet::range(0, 1));
  b.add_constraint(x({at(0)}) + x({at(1)}) - 2.0, IndexSet::range(0, 0), ConstraintKind::Equality);
  b.add_constraint(x({at(0)}) - x({at(1)}) - 0.5, IndexSet::range(0, 0), ConstraintKind::Inequality);
  return compile(b);
}

PrimalDualPoint zero_point(const CompiledModel& m) {
  PrimalDualPoint w;
  w.x = Vec::Zero(m.n());
  w.s = Vec::Zero(m.m_ineq());
  w.y = Vec::Zero(m.m_eq());
  w.z = Vec::Zero(m.m_ineq());
  w.nu_lower = Vec::Zero(m.m_ineq());
  w.nu_upper = Vec::Zero(m.m_ineq());
  w.z_lower = Vec::Zero(m.n());
  w.z_upper = Vec::Zero(m.n());
  return w;
}

KktInputs diagonal_inputs(const std::vector<double>& diag) {
  const int n = static_cast<int>(diag.size());
  KktInputs in;
  in.n = n;
  std::vector<Triplet> t;
  for (int i = 0; i < n; ++i) t.push_back({i, i, diag[static_cast<std::size_t>(i)]});
  in.w = CscMatrix::from_triplets(n, n, t, true);
  in.g.rows = 0;
  in.g.cols = n;
  in.g.row_ptr = {0};
  in.h.rows = 0;
  in.h.cols = n;
  in.h.row_ptr = {0};
  in.d_s = Vec::Zero(0);
  in.r1 = Vec::Ones(n);
  in.r2 = Vec::Zero(0);
  in.r3 = Vec::Zero(0);
  in.r4 = Vec::Zero(0);
  return in;
}

}  // namespace

TEST(FractionToBoundary, Examples) {
  EXPECT_EQ(fraction_to_boundary(vec({1, 2}), vec({0, 3}), vec({1}), vec({1}), 0.99).first, 1.0);
  EXPECT_NEAR(max_step_to_boundary(vec({1}), vec({-1}), 0.995), 0.995, 1e-15);
  EXPECT_NEAR(max_step_to_boundary(vec({1, 2}), vec({-2, 1}), 0.99), 0.495, 1e-15);
  const auto [ap, ad] = fraction_to_boundary(vec({1, 2}), vec({-2, 1}), vec({1}), vec({-1}), 0.99);
  EXPECT_NEAR(ap, 0.495, 1e-15);
  EXPECT_NEAR(ad, 0.99, 1e-15);
}

TEST(FractionToBoundary, KeepsFractionOfDistance) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> pos(0.01, 10.0), dir(-10.0, 10.0);
  for (int trial = 0; trial < 200; ++trial) {
    Vec s(5), ds(5);
    for (int i = 0; i < 5; ++i) {
      s[i] = pos(rng);
      ds[i] = dir(rng);
    }
    const double tau = 0.99;
    const double a = max_step_to_boundary(s, ds, tau);
    ASSERT_GT(a, 0.0);
    ASSERT_LE(a, 1.0);
    for (int i = 0; i < 5; ++i) EXPECT_GE(s[i] + a * ds[i], (1.0 - tau) * s[i] - 1e-14);
  }
}

TEST(UpdateMu, Examples) {
  const SolverOptions o;
  EXPECT_NEAR(update_mu(0.1, 0.0, o), 0.02, 1e-15);
  EXPECT_NEAR(update_mu(0.01, 0.0, o), 0.001, 1e-15);
  EXPECT_EQ(update_mu(0.1, 10.0, o), 0.1);
  // The floor is tol / 10.
  EXPECT_NEAR(update_mu(1e-6, 0.0, o), 1e-7, 1e-20);
}

TEST(Filter, NeverHoldsDominatedPairs) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Filter f;
  for (int k = 0; k < 500; ++k) {
    const double theta = u(rng), phi = u(rng);
    f.add(theta, phi);
    EXPECT_FALSE(f.acceptable(theta, phi));
    const auto& e = f.entries();
    for (std::size_t i = 0; i < e.size(); ++i) {
      for (std::size_t j = 0; j < e.size(); ++j) {
        if (i == j) continue;
        ASSERT_FALSE(e[i].first >= e[j].first && e[i].second >= e[j].second);
      }
    }
  }
  f.clear();
  EXPECT_TRUE(f.acceptable(1.0, 1.0));
}

TEST(KktResidual, ConvexQpSolutionIsZero) {
  const CompiledModel m = small_qp();
  PrimalDualPoint w = zero_point(m);
  w.x = vec({1, 1});
  w.y = vec({-2});
  w.s = vec({0.5});  // h + s = 0
  // Inactive inequality: z = 0, the slack sits at its upper bound distance.
  const ResidualBlocks r = kkt_residual(m, w, 0.0);
  EXPECT_LE(r.norm, 1e-14);
}

TEST(KktResidual, ComplementarityBlock) {
  ModelBuilder b;
  const VarBlock x = b.add_variables("x", {2});
  b.add_objective(square(x({idx(0)})), IndexSet::range(0, 1));
  b.add_constraint(x({idx(0)}), IndexSet::range(0, 1), ConstraintKind::Inequality);
  const CompiledModel m = compile(b);
  PrimalDualPoint w = zero_point(m);
  const double mu = 0.3;
  w.s = vec({1, 2});
  w.nu_lower = vec({mu, mu / 2});
  const ResidualBlocks r = kkt_residual(m, w, mu);
  EXPECT_LE(r.compl_s_lower.lpNorm<Eigen::Infinity>(), 1e-16);
  EXPECT_EQ(r.compl_s_upper.lpNorm<Eigen::Infinity>(), 0.0);
}

TEST(KktResidual, DistillationMatchesScalarTranscription) {
  const int N = 2;
  const DistillationModel dm = build_distillation(N);
  const CompiledModel& m = dm.model;
  const oracle::DistillationLoops loops(N, dm.params);
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u01(0.05, 0.95), mult(-2.0, 2.0);
  PrimalDualPoint w = zero_point(m);
  for (int i = 0; i < m.n(); ++i) w.x[i] = u01(rng);
  for (int t = 0; t <= N; ++t) {
    w.x[dm.u_index(t)] = 1.0 + 4.0 * u01(rng);
    w.z_lower[dm.u_index(t)] = u01(rng);
    w.z_upper[dm.u_index(t)] = u01(rng);
  }
  for (int i = 0; i < m.m_eq(); ++i) w.y[i] = mult(rng);
  const double mu = 0.01;
  const ResidualBlocks r = kkt_residual(m, w, mu);

  const VectorXd xv = w.x;
  const VectorXd yv = w.y;
  const VectorXd grad = oracle::complex_step_gradient(
      [&](const std::vector<std::complex<double>>& z) {
        std::complex<double> l = loops.objective_t(z);
        const auto g = loops.equalities_t(z);
        for (std::size_t j = 0; j < g.size(); ++j) l += yv[static_cast<Eigen::Index>(j)] * g[j];
        return l;
      },
      xv);
  const VectorXd stat = grad - w.z_lower + w.z_upper;
  const double scale = std::max(1.0, stat.lpNorm<Eigen::Infinity>());
  EXPECT_LE((r.stationarity - stat).lpNorm<Eigen::Infinity>(), 1e-12 * scale);
  EXPECT_LE((r.equality - loops.equalities(xv)).lpNorm<Eigen::Infinity>(), 1e-12);
  for (int t = 0; t <= N; ++t) {
    const int j = dm.u_index(t);
    EXPECT_NEAR(r.compl_x_lower[j], (w.x[j] - 1.0) * w.z_lower[j] - mu, 1e-15);
    EXPECT_NEAR(r.compl_x_upper[j], (5.0 - w.x[j]) * w.z_upper[j] - mu, 1e-14);
  }
  // Unbounded variables contribute no complementarity.
  EXPECT_EQ(r.compl_x_lower[dm.x_index(1, 0)], 0.0);
}

TEST(InertiaCorrection, ConvexNeedsNoRegularization) {
  KktInputs in = diagonal_inputs({2.0, 3.0});
  auto strategy = make_strategy(KktMethod::Augmented);
  strategy->analyze(in);
  double last = 0.0;
  const CorrectedStep c = inertia_correction(*strategy, in, 0.1, last, SolverOptions{});
  ASSERT_TRUE(c.success);
  EXPECT_EQ(c.delta_x, 0.0);
  EXPECT_EQ(c.delta_c, 0.0);
  EXPECT_EQ(c.attempts, 1);
}

TEST(InertiaCorrection, IndefiniteDiagonalNeedsShiftAboveOne) {
  for (const KktMethod method : {KktMethod::Augmented, KktMethod::Lifted, KktMethod::HyKkt}) {
    KktInputs in = diagonal_inputs({-1.0, 1.0});
    auto strategy = make_strategy(method);
    strategy->analyze(in);
    double last = 0.0;
    const CorrectedStep c = inertia_correction(*strategy, in, 0.1, last, SolverOptions{});
    ASSERT_TRUE(c.success) << to_string(method);
    // The shifted -1 + δx must be positive.
    EXPECT_GT(c.delta_x, 1.0);
    EXPECT_EQ(last, c.delta_x);
    // Newton step of the regularized model: (W + δx I) dx = -r1, a descent direction.
    EXPECT_NEAR(c.step.dx[0], -1.0 / (c.delta_x - 1.0), 1e-10);
    EXPECT_NEAR(c.step.dx[1], -1.0 / (c.delta_x + 1.0), 1e-10);
    EXPECT_LT(c.step.dx.dot(in.r1), 0.0);
  }
}

TEST(InertiaCorrection, DuplicatedEqualityEngagesDeltaC) {
  KktInputs in = diagonal_inputs({1.0, 1.0});
  in.m_eq = 2;
  in.g.rows = 2;
  in.g.row_ptr = {0, 1, 2};
  in.g.col_idx = {0, 0};
  in.g.values = {1.0, 1.0};
  in.r3 = vec({-1.0, -1.0});
  auto strategy = make_strategy(KktMethod::Augmented);
  strategy->analyze(in);
  double last = 0.0;
  const double mu = 0.1;
  const CorrectedStep c = inertia_correction(*strategy, in, mu, last, SolverOptions{});
  ASSERT_TRUE(c.success);
  EXPECT_NEAR(c.delta_c, 1e-8 * std::pow(mu, 0.25), 1e-20);
  EXPECT_EQ(c.delta_x, 0.0);
  // The dense regularized system is solvable; its solution is the step.
  oracle::DenseKkt k;
  k.W = oracle::MatrixXd::Identity(2, 2);
  k.G = oracle::MatrixXd::Zero(2, 2);
  k.G(0, 0) = k.G(1, 0) = 1.0;
  k.H = oracle::MatrixXd::Zero(0, 2);
  k.ds = VectorXd::Zero(0);
  k.r1 = VectorXd::Ones(2);
  k.r2 = VectorXd::Zero(0);
  k.r3 = in.r3;
  k.r4 = VectorXd::Zero(0);
  k.delta_c = c.delta_c;
  const oracle::DenseStep ref = oracle::solve_augmented(k);
  EXPECT_LE((c.step.dx - ref.dx).lpNorm<Eigen::Infinity>(), 1e-8);
}

TEST(InertiaCorrection, GivesUpAboveCeiling) {
  KktInputs in = diagonal_inputs({-1.0, 1.0});
  auto strategy = make_strategy(KktMethod::HyKkt);
  strategy->analyze(in);
  SolverOptions o;
  o.delta_x_max = 0.5;
  double last = 0.0;
  const CorrectedStep c = inertia_correction(*strategy, in, 0.1, last, o);
  EXPECT_FALSE(c.success);
  EXPECT_GT(c.delta_x, 0.5);
}

TEST(Solve, ScalarNewton) {
  const SolveReport r = solve(shifted_square());
  ASSERT_EQ(r.status, SolveStatus::Optimal) << r.message;
  EXPECT_NEAR(r.solution.x[0], 1.0, 1e-8);
  EXPECT_LE(r.iterations, 15);
}

TEST(Solve, LinearObjectiveOnVariableBound) {
  SolverOptions o;
  o.tol = 1e-8;
  const SolveReport r = solve(linear_with_bound(), o);
  ASSERT_EQ(r.status, SolveStatus::Optimal) << r.message;
  EXPECT_LE(r.solution.x[0], o.tol);
  EXPECT_GE(r.solution.x[0], 0.0);
  EXPECT_NEAR(r.solution.z_lower[0], 1.0, 1e-6);
}

TEST(Solve, LinearObjectiveOnInequality) {
  for (const KktMethod method : {KktMethod::Augmented, KktMethod::Lifted, KktMethod::HyKkt}) {
    SolverOptions o;
    o.tol = 1e-8;
    o.strategy = method;
    const SolveReport r = solve(linear_with_inequality(), o);
    ASSERT_EQ(r.status, SolveStatus::Optimal) << to_string(method) << " " << r.message;
    EXPECT_LE(std::abs(r.solution.x[0]), 1e-7);
    EXPECT_NEAR(r.solution.z[0], 1.0, 1e-6);
  }
}

TEST(Solve, SmallQpAllStrategies) {
  for (const KktMethod method : {KktMethod::Augmented, KktMethod::Lifted, KktMethod::HyKkt}) {
    SolverOptions o;
    o.strategy = method;
    const SolveReport r = solve(small_qp(), o);
    ASSERT_EQ(r.status, SolveStatus::Optimal) << to_string(method) << " " << r.message;
    // Lifted solves the relaxed problem, so only tau-accuracy is expected.
    EXPECT_NEAR(r.solution.x[0], 1.0, 1e-5);
    EXPECT_NEAR(r.solution.x[1], 1.0, 1e-5);
    EXPECT_LE(r.kkt_norm, o.tol);
    EXPECT_EQ(r.relaxed, method == KktMethod::Lifted);
  }
}

TEST(Solve, InteriorityAndMonotoneMu) {
  for (const KktMethod method : {KktMethod::Augmented, KktMethod::Lifted, KktMethod::HyKkt}) {
    SolverOptions o;
    o.strategy = method;
    const SolveReport r = solve(build_distillation(3).model, o);
    ASSERT_EQ(r.status, SolveStatus::Optimal) << to_string(method) << " " << r.message;
    ASSERT_FALSE(r.history.empty());
    for (std::size_t k = 0; k < r.history.size(); ++k) {
      EXPECT_GT(r.history[k].min_slack_gap, 0.0);
      EXPECT_GT(r.history[k].min_bound_dual, 0.0);
      if (k > 0) EXPECT_LE(r.history[k].mu, r.history[k - 1].mu);
    }
  }
}

TEST(Solve, AugmentedAndHykktIteratesAgree) {
  SolverOptions o;
  o.record_iterates = true;
  o.strategy = KktMethod::Augmented;
  const CompiledModel m = build_distillation(3).model;
  const SolveReport a = solve(m, o);
  o.strategy = KktMethod::HyKkt;
  const SolveReport h = solve(m, o);
  ASSERT_EQ(a.status, SolveStatus::Optimal);
  ASSERT_EQ(h.status, SolveStatus::Optimal);
  EXPECT_LE(std::abs(a.iterations - h.iterations), 2);
  const std::size_t k_max = std::min<std::size_t>({10, a.history.size(), h.history.size()});
  for (std::size_t k = 0; k < k_max; ++k) {
    EXPECT_LE((a.history[k].x - h.history[k].x).lpNorm<Eigen::Infinity>(), 1e-6) << "iteration " << k;
  }
}

TEST(Solve, LiftedIterationInflationIsBounded) {
  SolverOptions o;
  const CompiledModel m = build_distillation(10).model;
  o.strategy = KktMethod::HyKkt;
  const SolveReport h = solve(m, o);
  o.strategy = KktMethod::Lifted;
  const SolveReport l = solve(m, o);
  ASSERT_EQ(h.status, SolveStatus::Optimal);
  ASSERT_EQ(l.status, SolveStatus::Optimal);
  const double ratio = static_cast<double>(l.iterations) / h.iterations;
  EXPECT_GE(ratio, 1.0);
  EXPECT_LE(ratio, 4.0);
  EXPECT_TRUE(l.relaxed);
}

TEST(Solve, ReportsIterationLimit) {
  SolverOptions o;
  o.max_iter = 2;
  const SolveReport r = solve(build_distillation(5).model, o);
  EXPECT_EQ(r.status, SolveStatus::MaxIter);
  EXPECT_EQ(r.iterations, 2);
}

TEST(Solve, StrategyFailureIsReportedNotThrown) {
  SolverOptions o;
  o.strategy = KktMethod::Augmented;
  o.dense_cap = 50;
  SolveReport r;
  EXPECT_NO_THROW(r = solve(build_distillation(2).model, o));
  EXPECT_EQ(r.status, SolveStatus::StrategyFailure);
  EXPECT_FALSE(r.message.empty());
}

TEST(Solve, TimersArePopulated) {
  const SolveReport r = solve(build_distillation(2).model);
  EXPECT_GT(r.timers.total, 0.0);
  EXPECT_GE(r.timers.total + 1e-9, r.timers.init + r.timers.ad + r.timers.linsolve);
  EXPECT_GT(r.kkt_nnz, 0);
}
