#include "hybridkkt/distillation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/Dense>

namespace hkkt {

void DistillationParams::validate() const {
  const auto require = [](bool ok, const char* what) {
    if (!ok) throw BuildError(std::string("distillation parameters: ") + what);
  };
  require(trays >= 3, "at least three trays are needed");
  require(feed_tray > 1 && feed_tray < trays, "feed tray must be an interior tray");
  require(alpha > 0.0 && distillate > 0.0 && feed > distillate, "flows must satisfy F > D > 0");
  require(holdup_condenser > 0.0 && holdup_reboiler > 0.0 && holdup_tray > 0.0,
          "holdups must be positive");
  require(horizon > 0.0, "horizon must be positive");
  require(u_lower <= u_upper, "u bounds are inverted");
  require(feed_composition >= 0.0 && feed_composition <= 1.0, "feed composition outside [0, 1]");
  require(initial_profile.empty() || initial_profile.size() == static_cast<std::size_t>(trays),
          "initial profile length must equal the number of trays");
}

DistillationParams default_params() { return {}; }

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw std::invalid_argument("bad value for '" + key + "': " + v);
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d != std::floor(d)) throw std::invalid_argument("'" + key + "' must be an integer");
  return static_cast<int>(d);
}

}  // namespace

DistillationParams parse_params(const std::string& text, DistillationParams p) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "trays") p.trays = to_int(key, val);
    else if (key == "feed_tray") p.feed_tray = to_int(key, val);
    else if (key == "alpha") p.alpha = to_double(key, val);
    else if (key == "distillate") p.distillate = to_double(key, val);
    else if (key == "feed") p.feed = to_double(key, val);
    else if (key == "gamma") p.gamma = to_double(key, val);
    else if (key == "rho") p.rho = to_double(key, val);
    else if (key == "horizon") p.horizon = to_double(key, val);
    else if (key == "holdup_condenser") p.holdup_condenser = to_double(key, val);
    else if (key == "holdup_reboiler") p.holdup_reboiler = to_double(key, val);
    else if (key == "holdup_tray") p.holdup_tray = to_double(key, val);
    else if (key == "feed_composition") p.feed_composition = to_double(key, val);
    else if (key == "x1_setpoint") p.x1_setpoint = to_double(key, val);
    else if (key == "u_setpoint") p.u_setpoint = to_double(key, val);
    else if (key == "u_lower") p.u_lower = to_double(key, val);
    else if (key == "u_upper") p.u_upper = to_double(key, val);
    else throw std::invalid_argument("unknown parameter '" + key + "'");
  }
  p.validate();
  return p;
}

DistillationParams load_params(const std::filesystem::path& path, DistillationParams base) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read parameter file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_params(buf.str(), std::move(base));
}

std::vector<std::pair<std::string, double>> param_entries(const DistillationParams& p) {
  return {
      {"trays", p.trays},
      {"feed_tray", p.feed_tray},
      {"alpha", p.alpha},
      {"distillate", p.distillate},
      {"feed", p.feed},
      {"gamma", p.gamma},
      {"rho", p.rho},
      {"horizon", p.horizon},
      {"holdup_condenser", p.holdup_condenser},
      {"holdup_reboiler", p.holdup_reboiler},
      {"holdup_tray", p.holdup_tray},
      {"feed_composition", p.feed_composition},
      {"x1_setpoint", p.x1_setpoint},
      {"u_setpoint", p.u_setpoint},
      {"u_lower", p.u_lower},
      {"u_upper", p.u_upper},
  };
}

std::vector<double> tray_dynamics(const DistillationParams& p, const std::vector<double>& x, double u) {
  const int nt = p.trays;
  const double L = u * p.distillate;
  const double V = L + p.distillate;
  const double S = p.feed + L;
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = p.alpha * x[i] / (1.0 + (p.alpha - 1.0) * x[i]);
  std::vector<double> dx(x.size());
  const auto X = [&](int tray) { return x[static_cast<std::size_t>(tray - 1)]; };
  const auto Y = [&](int tray) { return y[static_cast<std::size_t>(tray - 1)]; };
  for (int k = 1; k <= nt; ++k) {
    double flow = 0.0;
    if (k == 1) {
      flow = V * (Y(2) - X(1));
    } else if (k < p.feed_tray) {
      flow = L * (X(k - 1) - X(k)) - V * (Y(k) - Y(k + 1));
    } else if (k == p.feed_tray) {
      flow = p.feed * p.feed_composition + L * X(k - 1) - S * X(k) - V * (Y(k) - Y(k + 1));
    } else if (k < nt) {
      flow = S * (X(k - 1) - X(k)) - V * (Y(k) - Y(k + 1));
    } else {
      flow = S * X(k - 1) - (p.feed - p.distillate) * X(k) - V * Y(k);
    }
    dx[static_cast<std::size_t>(k - 1)] = flow / p.holdup(k);
  }
  return dx;
}

std::vector<double> steady_state_profile(const DistillationParams& p, double u) {
  const int nt = p.trays;
  std::vector<double> x(static_cast<std::size_t>(nt), p.feed_composition);
  const auto norm = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double a : v) m = std::max(m, std::abs(a));
    return m;
  };
  std::vector<double> f = tray_dynamics(p, x, u);
  for (int it = 0; it < 100 && norm(f) > 1e-14; ++it) {
    Eigen::MatrixXd J(nt, nt);
    for (int j = 0; j < nt; ++j) {
      const double h = 1e-7 * std::max(1.0, std::abs(x[static_cast<std::size_t>(j)]));
      auto xp = x, xm = x;
      xp[static_cast<std::size_t>(j)] += h;
      xm[static_cast<std::size_t>(j)] -= h;
      const auto fp = tray_dynamics(p, xp, u), fm = tray_dynamics(p, xm, u);
      for (int i = 0; i < nt; ++i) {
        J(i, j) = (fp[static_cast<std::size_t>(i)] - fm[static_cast<std::size_t>(i)]) / (2.0 * h);
      }
    }
    const Eigen::VectorXd rhs = -Eigen::Map<const Eigen::VectorXd>(f.data(), nt);
    const Eigen::VectorXd step = J.partialPivLu().solve(rhs);
    // Damped update keeping compositions inside (0, 1).
    double t = 1.0;
    const double f0 = norm(f);
    for (int ls = 0; ls < 30; ++ls, t *= 0.5) {
      std::vector<double> trial = x;
      bool inside = true;
      for (int i = 0; i < nt; ++i) {
        trial[static_cast<std::size_t>(i)] += t * step[i];
        inside = inside && trial[static_cast<std::size_t>(i)] > 0.0 && trial[static_cast<std::size_t>(i)] < 1.0;
      }
      if (!inside) continue;
      auto ft = tray_dynamics(p, trial, u);
      if (norm(ft) < f0 || t < 1e-6) {
        x = std::move(trial);
        f = std::move(ft);
        break;
      }
    }
  }
  if (!(norm(f) <= 1e-12)) throw std::runtime_error("steady-state profile did not converge");
  return x;
}

int DistillationModel::x_index(int tray, int stage) const {
  return model.block_offset(x.id) + stage * params.trays + (tray - 1);
}
int DistillationModel::y_index(int tray, int stage) const {
  return model.block_offset(y.id) + stage * params.trays + (tray - 1);
}
int DistillationModel::u_index(int stage) const { return model.block_offset(u.id) + stage; }
int DistillationModel::l_index(int stage) const { return model.block_offset(L.id) + stage; }
int DistillationModel::v_index(int stage) const { return model.block_offset(V.id) + stage; }

int DistillationModel::stage_of(int var) const {
  const int nt = params.trays;
  const int stages = horizon_steps + 1;
  const int xo = model.block_offset(x.id), yo = model.block_offset(y.id);
  if (var >= xo && var < xo + stages * nt) return (var - xo) / nt;
  if (var >= yo && var < yo + stages * nt) return (var - yo) / nt;
  for (const VarBlock b : {u, L, V}) {
    const int o = model.block_offset(b.id);
    if (var >= o && var < o + stages) return var - o;
  }
  throw std::out_of_range("variable index outside the distillation model");
}

DistillationModel build_distillation(int N, const DistillationParams& params) {
  if (N < 1) throw BuildError("horizon N must be at least 1");
  DistillationParams p = params;
  p.validate();
  if (p.initial_profile.empty()) p.initial_profile = steady_state_profile(p, p.u_setpoint);

  const int nt = p.trays;
  const int nf = p.feed_tray - 1;  // 0-based feed tray
  const double dt = p.horizon / N;
  const double u0 = std::clamp(p.u_setpoint, p.u_lower, p.u_upper);

  ModelBuilder b;
  DistillationModel out;
  out.horizon_steps = N;
  out.x = b.add_variables("x", {N + 1, nt});
  out.y = b.add_variables("y", {N + 1, nt});
  out.u = b.add_variables("u", {N + 1}, p.u_lower, p.u_upper, u0);
  out.L = b.add_variables("L", {N + 1}, -kInf, kInf, u0 * p.distillate);
  out.V = b.add_variables("V", {N + 1}, -kInf, kInf, u0 * p.distillate + p.distillate);
  for (int t = 0; t <= N; ++t) {
    for (int k = 0; k < nt; ++k) {
      const double xs = p.initial_profile[static_cast<std::size_t>(k)];
      b.set_start(out.x, {t, k}, xs);
      b.set_start(out.y, {t, k}, p.alpha * xs / (1.0 + (p.alpha - 1.0) * xs));
    }
  }
  std::vector<double> holdup(static_cast<std::size_t>(nt));
  for (int k = 0; k < nt; ++k) holdup[static_cast<std::size_t>(k)] = p.holdup(k + 1);
  const ParamArray M = b.add_parameter("M", {nt}, holdup);
  const ParamArray xbar0 = b.add_parameter("xbar0", {nt}, p.initial_profile);
  const Expr alpha = p.alpha, D = p.distillate, F = p.feed;

  const auto X = [&](IndexSpec t, IndexSpec k) { return out.x({t, k}); };
  const auto Y = [&](IndexSpec t, IndexSpec k) { return out.y({t, k}); };
  const Expr u = out.u({idx(0)}), L = out.L({idx(0)}), V = out.V({idx(0)});
  const Expr S = F + L;
  const IndexSet stages = IndexSet::range(0, N);
  const IndexSet steps = IndexSet::range(1, N);

  // Objective over t = 1..N.
  b.add_objective(p.gamma * square(X(idx(0), at(0)) - p.x1_setpoint) + p.rho * square(u - p.u_setpoint),
                  steps);

  // Stage algebra, all stages.
  b.add_constraint(L - u * D, stages, ConstraintKind::Equality);
  b.add_constraint(V - L - D, stages, ConstraintKind::Equality);
  {
    const Expr xk = X(idx(0), idx(1));
    b.add_constraint(Y(idx(0), idx(1)) - alpha * xk / (1.0 + (alpha - 1.0) * xk),
                     IndexSet::product(stages, IndexSet::range(0, nt - 1)), ConstraintKind::Equality);
  }
  // Initial condition.
  b.add_constraint(X(at(0), idx(0)) - xbar0({idx(0)}), IndexSet::range(0, nt - 1),
                   ConstraintKind::Equality);

  // Implicit-Euler material balances: (x_t - x_{t-1}) / dt - rhs_t / M = 0.
  const auto euler = [&](IndexSpec k) { return (X(idx(0), k) - X(idx(0, -1), k)) / dt; };
  const IndexSpec t = idx(0), k = idx(1);
  b.add_constraint(euler(at(0)) - V * (Y(t, at(1)) - X(t, at(0))) / M({at(0)}), steps,
                   ConstraintKind::Equality);
  if (nf > 1) {
    b.add_constraint(
        euler(k) - (L * (X(t, idx(1, -1)) - X(t, k)) - V * (Y(t, k) - Y(t, idx(1, 1)))) / M({k}),
        IndexSet::product(steps, IndexSet::range(1, nf - 1)), ConstraintKind::Equality);
  }
  b.add_constraint(euler(at(nf)) - (F * p.feed_composition + L * X(t, at(nf - 1)) - S * X(t, at(nf)) -
                                    V * (Y(t, at(nf)) - Y(t, at(nf + 1)))) /
                                       M({at(nf)}),
                   steps, ConstraintKind::Equality);
  if (nf + 1 < nt - 1) {
    b.add_constraint(
        euler(k) - (S * (X(t, idx(1, -1)) - X(t, k)) - V * (Y(t, k) - Y(t, idx(1, 1)))) / M({k}),
        IndexSet::product(steps, IndexSet::range(nf + 1, nt - 2)), ConstraintKind::Equality);
  }
  b.add_constraint(euler(at(nt - 1)) - (S * X(t, at(nt - 2)) - (F - D) * X(t, at(nt - 1)) -
                                        V * Y(t, at(nt - 1))) /
                                           M({at(nt - 1)}),
                   steps, ConstraintKind::Equality);

  out.model = compile(b);
  out.params = std::move(p);
  return out;
}

ReferenceDimensions reference_dimensions(std::int64_t N) {
  if (N < 1) throw std::invalid_argument("N must be at least 1");
  return {67 * (N + 1), 837 * N + 135};
}

}  // namespace hkkt
