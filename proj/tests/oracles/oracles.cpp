#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace oracle {

namespace {

MatrixXd random_matrix(std::mt19937_64& rng, int rows, int cols, double density) {
  std::uniform_real_distribution<double> val(-1.0, 1.0), coin(0.0, 1.0);
  MatrixXd a = MatrixXd::Zero(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      if (coin(rng) < density) a(i, j) = val(rng);
    }
  }
  return a;
}

VectorXd random_vector(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = val(rng);
  return v;
}

}  // namespace

DenseKkt random_kkt(std::mt19937_64& rng, int n, int m_eq, int m_ineq, Curvature curvature,
                    double density) {
  DenseKkt k;
  const MatrixXd b = random_matrix(rng, n, n, density);
  if (curvature == Curvature::Convex) {
    k.W = b * b.transpose() + MatrixXd::Identity(n, n);
  } else {
    k.W = 0.5 * (b + b.transpose());
    std::uniform_real_distribution<double> shift(-1.0, 1.0);
    k.W.diagonal().array() += shift(rng);
  }
  // Dense rows keep G full rank; a unit diagonal block guards against rank loss.
  k.G = random_matrix(rng, m_eq, n, 1.0);
  for (int i = 0; i < m_eq; ++i) k.G(i, i) += 2.0;
  k.H = random_matrix(rng, m_ineq, n, density);
  std::uniform_real_distribution<double> pos(0.1, 10.0);
  k.ds.resize(m_ineq);
  for (int i = 0; i < m_ineq; ++i) k.ds[i] = pos(rng);
  k.r1 = random_vector(rng, n);
  k.r2 = random_vector(rng, m_ineq);
  k.r3 = random_vector(rng, m_eq);
  k.r4 = random_vector(rng, m_ineq);
  return k;
}

hkkt::KktInputs to_inputs(const DenseKkt& k) {
  hkkt::KktInputs in;
  in.n = k.n();
  in.m_eq = k.m_eq();
  in.m_ineq = k.m_ineq();
  // Keep the full diagonal so the pattern does not depend on values.
  in.w = hkkt::CscMatrix::lower_from_dense(k.W, 0.0);
  in.g = hkkt::CsrMatrix::from_dense(k.G, 0.0);
  in.h = hkkt::CsrMatrix::from_dense(k.H, 0.0);
  in.d_s = k.ds;
  in.r1 = k.r1;
  in.r2 = k.r2;
  in.r3 = k.r3;
  in.r4 = k.r4;
  in.delta_x = k.delta_x;
  in.delta_c = k.delta_c;
  return in;
}

MatrixXd augmented(const DenseKkt& k, bool regularize_slack) {
  const int n = k.n(), mi = k.m_ineq(), me = k.m_eq();
  const int N = n + mi + me + mi;
  MatrixXd a = MatrixXd::Zero(N, N);
  const int os = n, oy = n + mi, oz = n + mi + me;
  a.block(0, 0, n, n) = k.W + k.delta_x * MatrixXd::Identity(n, n);
  for (int i = 0; i < mi; ++i) a(os + i, os + i) = k.ds[i] + (regularize_slack ? k.delta_x : 0.0);
  a.block(oy, 0, me, n) = k.G;
  a.block(0, oy, n, me) = k.G.transpose();
  a.block(oz, 0, mi, n) = k.H;
  a.block(0, oz, n, mi) = k.H.transpose();
  for (int i = 0; i < mi; ++i) {
    a(oz + i, os + i) = 1.0;
    a(os + i, oz + i) = 1.0;
    a(oz + i, oz + i) = -k.delta_c;
  }
  for (int i = 0; i < me; ++i) a(oy + i, oy + i) = -k.delta_c;
  return a;
}

MatrixXd condensed(const DenseKkt& k) {
  const int n = k.n(), me = k.m_eq();
  MatrixXd a = MatrixXd::Zero(n + me, n + me);
  a.block(0, 0, n, n) = k.W + k.delta_x * MatrixXd::Identity(n, n) +
                        k.H.transpose() * k.ds.asDiagonal() * k.H;
  a.block(n, 0, me, n) = k.G;
  a.block(0, n, n, me) = k.G.transpose();
  return a;
}

DenseStep solve_augmented(const DenseKkt& k, bool regularize_slack) {
  const int n = k.n(), mi = k.m_ineq(), me = k.m_eq();
  VectorXd rhs(n + 2 * mi + me);
  rhs << -k.r1, -k.r2, -k.r3, -k.r4;
  const VectorXd d = augmented(k, regularize_slack).fullPivLu().solve(rhs);
  DenseStep s;
  s.dx = d.segment(0, n);
  s.ds = d.segment(n, mi);
  s.dy = d.segment(n + mi, me);
  s.dz = d.segment(n + mi + me, mi);
  return s;
}

hkkt::Inertia eigen_inertia(const MatrixXd& a, double tol) {
  hkkt::Inertia in;
  if (a.rows() == 0) return in;
  const VectorXd ev = Eigen::SelfAdjointEigenSolver<MatrixXd>(a, Eigen::EigenvaluesOnly).eigenvalues();
  for (int i = 0; i < ev.size(); ++i) {
    if (std::abs(ev[i]) <= tol) {
      ++in.zero;
    } else if (ev[i] > 0.0) {
      ++in.positive;
    } else {
      ++in.negative;
    }
  }
  return in;
}

long long elimination_fill(const std::vector<std::vector<bool>>& pattern, const std::vector<int>& order) {
  const int n = static_cast<int>(pattern.size());
  std::vector<std::set<int>> adj(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j && (pattern[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] ||
                     pattern[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)])) {
        adj[static_cast<std::size_t>(i)].insert(j);
      }
    }
  }
  std::vector<bool> gone(static_cast<std::size_t>(n), false);
  long long nnz = n;
  for (const int v : order) {
    std::vector<int> nb;
    for (const int w : adj[static_cast<std::size_t>(v)]) {
      if (!gone[static_cast<std::size_t>(w)]) nb.push_back(w);
    }
    nnz += static_cast<long long>(nb.size());
    for (const int a : nb) {
      for (const int b : nb) {
        if (a != b) adj[static_cast<std::size_t>(a)].insert(b);
      }
    }
    gone[static_cast<std::size_t>(v)] = true;
  }
  return nnz;
}

VectorXd fd_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& x) {
  VectorXd g(x.size());
  for (int i = 0; i < x.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(x[i]));
    VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

MatrixXd fd_jacobian(const std::function<VectorXd(const VectorXd&)>& f, const VectorXd& x) {
  const VectorXd f0 = f(x);
  MatrixXd j(f0.size(), x.size());
  for (int i = 0; i < x.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(x[i]));
    VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    j.col(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return j;
}

DistillationLoops::DistillationLoops(int N, const hkkt::DistillationParams& p)
    : N_(N), nt_(p.trays), p_(p) {}

double DistillationLoops::objective(const VectorXd& w) const {
  return objective_t(std::vector<double>(w.data(), w.data() + w.size()));
}

VectorXd DistillationLoops::equalities(const VectorXd& w) const {
  std::vector<double> g = equalities_t(std::vector<double>(w.data(), w.data() + w.size()));
  return Eigen::Map<VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
}

namespace {

// Tray ODE right-hand sides, indexed 0..nt-1.
VectorXd column_rhs(const hkkt::DistillationParams& p, const VectorXd& x, double u) {
  const int nt = p.trays, nf = p.feed_tray - 1;
  const double D = p.distillate, F = p.feed, L = u * D, V = L + D, S = F + L;
  VectorXd y(nt), r(nt);
  for (int i = 0; i < nt; ++i) y[i] = p.alpha * x[i] / (1.0 + (p.alpha - 1.0) * x[i]);
  r[0] = V * (y[1] - x[0]);
  for (int i = 1; i < nt - 1; ++i) {
    if (i < nf) {
      r[i] = L * (x[i - 1] - x[i]) - V * (y[i] - y[i + 1]);
    } else if (i == nf) {
      r[i] = F * p.feed_composition + L * x[i - 1] - S * x[i] - V * (y[i] - y[i + 1]);
    } else {
      r[i] = S * (x[i - 1] - x[i]) - V * (y[i] - y[i + 1]);
    }
  }
  r[nt - 1] = S * x[nt - 2] - (F - D) * x[nt - 1] - V * y[nt - 1];
  for (int i = 0; i < nt; ++i) r[i] /= p.holdup(i + 1);
  return r;
}

}  // namespace

std::vector<double> steady_state(const hkkt::DistillationParams& p, double u) {
  const int nt = p.trays;
  VectorXd x = VectorXd::Constant(nt, p.feed_composition);
  const double h = 0.5;
  for (int step = 0; step < 200000; ++step) {
    const VectorXd k1 = column_rhs(p, x, u);
    if (k1.lpNorm<Eigen::Infinity>() < 1e-10) break;
    const VectorXd k2 = column_rhs(p, x + 0.5 * h * k1, u);
    const VectorXd k3 = column_rhs(p, x + 0.5 * h * k2, u);
    const VectorXd k4 = column_rhs(p, x + h * k3, u);
    x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  for (int it = 0; it < 5; ++it) {
    const auto f = [&](const VectorXd& v) { return column_rhs(p, v, u); };
    const MatrixXd J = fd_jacobian(f, x);
    x -= J.fullPivLu().solve(f(x));
  }
  if (column_rhs(p, x, u).lpNorm<Eigen::Infinity>() > 1e-12) {
    throw std::runtime_error("oracle steady state did not converge");
  }
  return {x.data(), x.data() + nt};
}

}  // namespace oracle
