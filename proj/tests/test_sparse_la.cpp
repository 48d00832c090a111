#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>
#include <random>
#include <variant>

#include <Eigen/Dense>

#include "hybridkkt/cholesky.hpp"
#include "hybridkkt/dense_ldlt.hpp"
#include "hybridkkt/distillation.hpp"
#include "hybridkkt/kkt.hpp"
#include "hybridkkt/krylov.hpp"
#include "hybridkkt/sparse.hpp"
#include "oracles/oracles.hpp"
#include "support.hpp"

using namespace hkkt;
using Eigen::MatrixXd;

namespace {

std::vector<std::vector<bool>> bool_pattern(const MatrixXd& a) {
  std::vector<std::vector<bool>> p(static_cast<std::size_t>(a.rows()), std::vector<bool>(static_cast<std::size_t>(a.cols())));
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < a.cols(); ++j) p[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = a(i, j) != 0.0;
  }
  return p;
}

std::vector<int> natural(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), 0);
  return v;
}

MatrixXd arrow(int n) {
  MatrixXd a = MatrixXd::Identity(n, n) * n;
  a.row(0).setOnes();
  a.col(0).setOnes();
  a(0, 0) = n;
  return a;
}

MatrixXd tridiagonal(int n) {
  MatrixXd a = MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    a(i, i) = 4.0;
    if (i + 1 < n) a(i, i + 1) = a(i + 1, i) = -1.0;
  }
  return a;
}

MatrixXd random_spd(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> d;
  MatrixXd b(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) b(i, j) = d(rng);
  }
  return b * b.transpose() + MatrixXd::Identity(n, n);
}

CholeskyFactor ok(const FactorOutcome& f) {
  EXPECT_TRUE(std::holds_alternative<CholeskyFactor>(f));
  return std::get<CholeskyFactor>(f);
}

double rel_residual(const MatrixXd& a, const Vec& x, const Vec& b) {
  return (a * x - b).norm() / b.norm();
}

}  // namespace

TEST(Ordering, IdentityHasNoFill) {
  const CscMatrix a = CscMatrix::lower_from_dense(MatrixXd::Identity(8, 8));
  const SymbolicFactorization s(a, amd_order(a));
  EXPECT_EQ(s.factor_nnz(), 8);
}

TEST(Ordering, ArrowMatrix) {
  const MatrixXd dense = arrow(10);
  const CscMatrix a = CscMatrix::lower_from_dense(dense);
  EXPECT_EQ(oracle::elimination_fill(bool_pattern(dense), natural(10)), 55);
  EXPECT_EQ(SymbolicFactorization(a, natural(10)).factor_nnz(), 55);
  const auto perm = amd_order(a);
  EXPECT_EQ(oracle::elimination_fill(bool_pattern(dense), perm), 19);
  EXPECT_EQ(SymbolicFactorization(a, perm).factor_nnz(), 19);
  // The hub is eliminated last.
  EXPECT_EQ(perm.back(), 0);
}

TEST(Ordering, TridiagonalNaturalOrderHasNoFill) {
  const MatrixXd dense = tridiagonal(10);
  EXPECT_EQ(oracle::elimination_fill(bool_pattern(dense), natural(10)), 19);
  const SymbolicFactorization s(CscMatrix::lower_from_dense(dense), natural(10));
  EXPECT_EQ(s.factor_nnz(), 19);
  // Lower bidiagonal factor.
  for (int j = 0; j + 1 < 10; ++j) {
    ASSERT_EQ(s.column_counts()[static_cast<std::size_t>(j)], 1);
    EXPECT_EQ(s.l_row_idx()[static_cast<std::size_t>(s.l_col_ptr()[static_cast<std::size_t>(j)])], j + 1);
  }
}

TEST(Ordering, FillMatchesGraphEliminationOracle) {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution coin(0.15);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 30;
    MatrixXd a = MatrixXd::Identity(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < i; ++j) {
        if (coin(rng)) a(i, j) = a(j, i) = 1.0;
      }
    }
    const CscMatrix c = CscMatrix::lower_from_dense(a);
    const auto perm = amd_order(c);
    EXPECT_EQ(SymbolicFactorization(c, perm).factor_nnz(), oracle::elimination_fill(bool_pattern(a), perm));
    EXPECT_EQ(SymbolicFactorization(c, natural(n)).factor_nnz(),
              oracle::elimination_fill(bool_pattern(a), natural(n)));
  }
}

TEST(Ordering, DistillationPatternNoWorseThanNatural) {
  const DistillationModel dm = build_distillation(20);
  const HyKktSystem sys(testing_support::structure_of(dm.model), 1e7);
  const CscMatrix& k = sys.k_gamma.matrix();
  EXPECT_LE(SymbolicFactorization(k, amd_order(k)).factor_nnz(), SymbolicFactorization(k, natural(k.rows)).factor_nnz());
}

TEST(Symbolic, DiagonalPattern) {
  const SymbolicFactorization s(CscMatrix::lower_from_dense(MatrixXd::Identity(5, 5)), natural(5));
  EXPECT_EQ(s.factor_nnz(), 5);
  EXPECT_TRUE(s.l_row_idx().empty());
  for (int p : s.parent()) EXPECT_EQ(p, -1);
}

TEST(Symbolic, DistillationAnalysisIsDeterministic) {
  const DistillationModel dm = build_distillation(100);
  const HyKktSystem sys(testing_support::structure_of(dm.model), 1e7);
  const CscMatrix& k = sys.k_gamma.matrix();
  const SymbolicFactorization a(k, amd_order(k)), b(k, amd_order(k));
  EXPECT_EQ(a.perm(), b.perm());
  EXPECT_EQ(a.factor_nnz(), b.factor_nnz());
  EXPECT_EQ(a.l_row_idx(), b.l_row_idx());
  EXPECT_EQ(a.factor_nnz(), sys.k_gamma.symbolic()->factor_nnz());
}

TEST(Numeric, IdentityFactor) {
  const CholeskyFactor& f = ok(factor_from_scratch(CscMatrix::lower_from_dense(MatrixXd::Identity(3, 3))));
  EXPECT_EQ(f.d(), (std::vector<double>{1, 1, 1}));
  EXPECT_TRUE(f.l_values().empty());
}

TEST(Numeric, IndefiniteReportsPivot) {
  MatrixXd a(2, 2);
  a << 1, 0, 0, -1;
  const auto f = factor_from_scratch(CscMatrix::lower_from_dense(a));
  ASSERT_TRUE(std::holds_alternative<NotPositiveDefinite>(f));
  EXPECT_EQ(std::get<NotPositiveDefinite>(f).pivot, 1);
}

TEST(Numeric, PatternMismatchIsDistinctError) {
  const CscMatrix a = CscMatrix::lower_from_dense(tridiagonal(4));
  auto sym = std::make_shared<const SymbolicFactorization>(a, natural(4));
  EXPECT_THROW(numeric_factor(sym, CscMatrix::lower_from_dense(MatrixXd::Identity(4, 4))), PatternError);
}

TEST(Numeric, RandomSpdAgainstDenseLu) {
  std::mt19937_64 rng(20);
  const MatrixXd a = random_spd(rng, 20);
  const Vec b = Vec::LinSpaced(20, -1.0, 2.0);
  const CholeskyFactor& f = ok(factor_from_scratch(CscMatrix::lower_from_dense(a)));
  const Vec oracle_x = a.fullPivLu().solve(b);
  EXPECT_LT((f.solve(b) - oracle_x).norm() / oracle_x.norm(), 1e-10);
}

TEST(Numeric, ReconstructionAndPositivity) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    MatrixXd a = random_spd(rng, 25);
    // Sparsify while keeping positive definiteness.
    for (int i = 0; i < 25; ++i) {
      for (int j = 0; j < i; ++j) {
        if ((i * 7 + j * 3 + trial) % 4 != 0) a(i, j) = a(j, i) = 0.0;
      }
    }
    a.diagonal().array() += 25.0;
    const CholeskyFactor& f = ok(factor_from_scratch(CscMatrix::lower_from_dense(a)));
    const auto& s = f.symbolic();
    const int n = 25;
    MatrixXd L = MatrixXd::Identity(n, n), P = MatrixXd::Zero(n, n);
    for (int j = 0; j < n; ++j) {
      for (int p = s.l_col_ptr()[static_cast<std::size_t>(j)]; p < s.l_col_ptr()[static_cast<std::size_t>(j) + 1]; ++p) {
        L(s.l_row_idx()[static_cast<std::size_t>(p)], j) = f.l_values()[static_cast<std::size_t>(p)];
      }
      P(j, s.perm()[static_cast<std::size_t>(j)]) = 1.0;
      EXPECT_GT(f.d()[static_cast<std::size_t>(j)], 0.0);
    }
    const Vec d = Eigen::Map<const Vec>(f.d().data(), n);
    const MatrixXd recon = L * d.asDiagonal() * L.transpose();
    EXPECT_LT((P * a * P.transpose() - recon).norm(), 1e-10 * a.norm());
  }
}

TEST(Solve, SmallCases) {
  const Vec b = (Vec(3) << 1.5, -2, 7).finished();
  EXPECT_EQ(ok(factor_from_scratch(CscMatrix::lower_from_dense(MatrixXd::Identity(3, 3)))).solve(b), b);
  MatrixXd a(2, 2);
  a << 2, 0, 0, 4;
  const Vec x = ok(factor_from_scratch(CscMatrix::lower_from_dense(a))).solve((Vec(2) << 2, 8).finished());
  EXPECT_DOUBLE_EQ(x[0], 1.0);
  EXPECT_DOUBLE_EQ(x[1], 2.0);
}

TEST(Solve, RandomSpdResidual) {
  std::mt19937_64 rng(50);
  const MatrixXd a = random_spd(rng, 50);
  const Vec b = Vec::Random(50);
  const Vec x = ok(factor_from_scratch(CscMatrix::lower_from_dense(a))).solve(b);
  EXPECT_LT(rel_residual(a, x, b), 1e-10);
}

TEST(Reuse, HundredRefactorizationsMatchFreshPipeline) {
  const DistillationModel dm = build_distillation(5);
  HyKktSystem sys(testing_support::structure_of(dm.model), 1e3);
  KktInputs in = testing_support::structure_of(dm.model);
  std::mt19937_64 rng(100);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto count_before = SymbolicFactorization::construction_count();
  double worst = 0.0;
  for (int fill = 0; fill < 100; ++fill) {
    for (double& v : in.w.values) v = u(rng);
    for (double& v : in.g.values) v = u(rng);
    // Diagonal shift keeps K_γ positive definite.
    in.delta_x = 10.0;
    const CscMatrix& k = assemble_hykkt(in, sys);
    const Vec b = Vec::Random(k.rows);
    const Vec reused = ok(numeric_factor(sys.k_gamma.symbolic(), k)).solve(b);
    const CscMatrix copy = k;
    const Vec fresh = ok(factor_from_scratch(copy)).solve(b);
    worst = std::max(worst, (reused - fresh).lpNorm<Eigen::Infinity>() / fresh.lpNorm<Eigen::Infinity>());
  }
  EXPECT_LT(worst, 1e-12);
  // One analysis per fresh factorization, none for the reused path.
  EXPECT_EQ(SymbolicFactorization::construction_count() - count_before, 100);
}

TEST(DenseLdlt, SmallInertias) {
  MatrixXd a(2, 2);
  a << 1, 0, 0, -1;
  EXPECT_EQ(dense_ldlt(a).inertia(), (Inertia{1, 0, 1}));
  EXPECT_EQ(dense_ldlt(MatrixXd::Identity(3, 3)).inertia(), (Inertia{3, 0, 0}));
  a << 0, 1, 1, 0;
  EXPECT_EQ(dense_ldlt(a).inertia(), (Inertia{1, 0, 1}));
}

TEST(DenseLdlt, InertiaMatchesEigenOracle) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> size(1, 50);
  std::normal_distribution<double> d;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = size(rng);
    MatrixXd b(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) b(i, j) = d(rng);
    }
    MatrixXd a = 0.5 * (b + b.transpose());
    if (trial % 4 == 0 && n > 2) {
      // Exactly rank deficient: B_r D B_r^T with signed D.
      const int r = n / 2;
      const MatrixXd br = b.leftCols(r);
      Vec sgn(r);
      for (int i = 0; i < r; ++i) sgn[i] = i % 2 == 0 ? 1.0 : -1.0;
      a = br * sgn.asDiagonal() * br.transpose();
    }
    EXPECT_EQ(dense_ldlt(a).inertia(), oracle::eigen_inertia(a, 1e-10)) << "trial " << trial << " n " << n;
  }
}

TEST(DenseLdlt, SolveAndCap) {
  std::mt19937_64 rng(8);
  MatrixXd a = random_spd(rng, 12);
  a.diagonal().array() -= 6.0;
  const Vec b = Vec::Random(12);
  EXPECT_LT(rel_residual(a, dense_ldlt(a).solve(b), b), 1e-12);
  EXPECT_THROW(DenseInertiaFactor(MatrixXd::Identity(12, 12), 1e-10, 10), std::length_error);
}

TEST(Cg, IdentityOneIteration) {
  const Vec b = Vec::LinSpaced(5, 1, 5);
  const auto r = cg_solve([](const Vec& x, Vec& y) { y = x; }, b, 1e-12, 10);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_LT((r.x - b).norm(), 1e-14);
}

TEST(Cg, DiagonalThreeEigenvalues) {
  const Vec dg = (Vec(3) << 1, 2, 3).finished();
  const auto r = cg_solve([&](const Vec& x, Vec& y) { y = dg.cwiseProduct(x); }, dg, 1e-12, 10);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.iterations, 3);
  EXPECT_LT((r.x - Vec::Ones(3)).norm(), 1e-10);
}

TEST(Cg, KrylovBoundOnDistinctEigenvalues) {
  for (int k = 1; k <= 6; ++k) {
    const int n = 40;
    const MatrixXd q = MatrixXd::Random(n, n).householderQr().householderQ();
    Vec ev(n);
    for (int i = 0; i < n; ++i) ev[i] = 1.0 + (i % k) * 1.7;
    const MatrixXd a = q * ev.asDiagonal() * q.transpose();
    const auto r = cg_solve([&](const Vec& x, Vec& y) { y = a * x; }, Vec::Random(n), 1e-12, 100);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.iterations, 2 * k) << k << " distinct eigenvalues";
  }
}

TEST(Cg, NoConvergenceReturnsBestIterate) {
  const Vec dg = Vec::LinSpaced(50, 1, 1e4);
  const Vec b = Vec::Ones(50);
  const auto r = cg_solve([&](const Vec& x, Vec& y) { y = dg.cwiseProduct(x); }, b, 1e-14, 3);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 3);
  EXPECT_NEAR(r.relative_residual, (b - dg.cwiseProduct(r.x)).norm() / b.norm(), 1e-12);
  EXPECT_LT(r.relative_residual, 1.0);
}

TEST(Richardson, ExactSolveConvergesInOne) {
  std::mt19937_64 rng(9);
  const MatrixXd a = random_spd(rng, 10);
  const auto lu = a.fullPivLu();
  const auto r = richardson_refine([&](const Vec& b) -> Vec { return lu.solve(b); },
                                   [&](const Vec& x, Vec& y) { y = a * x; }, Vec::Ones(10), 1e-12, 10);
  EXPECT_EQ(r.status, RefineStatus::Converged);
  EXPECT_EQ(r.iterations, 1);
}

TEST(Richardson, PerturbedSolveContractsGeometrically) {
  const auto apply = [](const Vec& x, Vec& y) { y = x; };
  const auto approx = [](const Vec& b) -> Vec { return b / (1.0 + 1e-6); };
  const Vec b = Vec::LinSpaced(6, -3, 3);
  double prev = 1.0;
  for (int k = 1; k <= 3; ++k) {
    const auto r = richardson_refine(approx, apply, b, 0.0, k);
    EXPECT_LT(r.relative_residual, prev);
    prev = r.relative_residual;
  }
  const auto r = richardson_refine(approx, apply, b, 1e-12, 10);
  EXPECT_EQ(r.status, RefineStatus::Converged);
  EXPECT_LT(r.relative_residual, 1e-12);
}

TEST(Richardson, ZeroRightHandSide) {
  const auto r = richardson_refine([](const Vec& b) -> Vec { return b; }, [](const Vec& x, Vec& y) { y = x; },
                                   Vec::Zero(4), 1e-12, 10);
  EXPECT_EQ(r.iterations, 0);
  EXPECT_EQ(r.x, Vec::Zero(4));
}

TEST(Richardson, DivergenceDetected) {
  const auto r = richardson_refine([](const Vec& b) -> Vec { return -2.0 * b; },
                                   [](const Vec& x, Vec& y) { y = x; }, Vec::Ones(3), 1e-12, 20);
  EXPECT_EQ(r.status, RefineStatus::Diverged);
  EXPECT_TRUE(r.degraded());
  EXPECT_LT(r.iterations, 20);
}

TEST(Storage, TripletsValidationAndMatrixMarket) {
  const std::vector<Triplet> t{{0, 0, 1.0}, {1, 0, 2.0}, {0, 1, 3.0}, {2, 2, 4.0}, {1, 0, 0.5}};
  const CscMatrix a = CscMatrix::from_triplets(3, 3, t, true);
  a.validate();
  EXPECT_EQ(a.nnz(), 3);
  EXPECT_DOUBLE_EQ(a.values[static_cast<std::size_t>(a.find(1, 0))], 5.5);

  const auto dir = std::filesystem::temp_directory_path() / "hybridkkt_mm_test";
  std::filesystem::create_directories(dir);
  write_matrix_market(dir / "a.mtx", a);
  const CscMatrix back = read_matrix_market(dir / "a.mtx");
  EXPECT_TRUE(back.symmetric);
  EXPECT_TRUE(back.same_pattern(a));
  EXPECT_EQ(back.values, a.values);
  EXPECT_THROW(write_matrix_market(dir / "a.txt", a), std::invalid_argument);
  std::filesystem::remove_all(dir);

  CscMatrix bad = a;
  std::swap(bad.row_idx[0], bad.row_idx[1]);
  EXPECT_THROW(bad.validate(), std::logic_error);
}
