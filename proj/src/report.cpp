#include "hybridkkt/report.hpp"

#include <cmath>
#include <cstdio>

namespace hkkt {

const std::vector<std::string>& report_fields() {
  static const std::vector<std::string> fields = {
      "model",          "N",
      "strategy",       "status",
      "message",        "iterations",
      "objective",      "kkt_norm",
      "scaled_kkt_norm", "primal_inf",
      "dual_inf",       "compl_inf",
      "final_mu",       "n",
      "m_eq",           "m_ineq",
      "relaxed",        "kkt_nnz",
      "linear_solves",  "cg_iterations_total",
      "cg_iterations_mean", "refinement_iterations_total",
      "degraded_solves", "options",
      "params",         "timers",
  };
  return fields;
}

const std::vector<std::string>& timer_fields() {
  static const std::vector<std::string> fields = {"init", "ad", "linsolve", "total"};
  return fields;
}

double round_seconds(double s) { return std::round(s * 1000.0) / 1000.0; }

PhaseTimers reported_timers(const RunInfo& info, const SolveReport& report) {
  PhaseTimers t = report.timers;
  t.init += info.build_seconds;
  t.total += info.build_seconds;
  return t;
}

namespace {

// JSON has no representation for non-finite numbers.
nlohmann::ordered_json num(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

}  // namespace

nlohmann::ordered_json make_report(const RunInfo& info, const SolveReport& r) {
  nlohmann::ordered_json j;
  j["model"] = info.model;
  j["N"] = info.N;
  j["strategy"] = std::string(to_string(info.options.strategy));
  j["status"] = std::string(to_string(r.status));
  j["message"] = r.message;
  j["iterations"] = r.iterations;
  j["objective"] = num(r.objective);
  j["kkt_norm"] = num(r.kkt_norm);
  j["scaled_kkt_norm"] = num(r.scaled_kkt_norm);
  j["primal_inf"] = num(r.primal_inf);
  j["dual_inf"] = num(r.dual_inf);
  j["compl_inf"] = num(r.compl_inf);
  j["final_mu"] = num(r.final_mu);
  j["n"] = info.n;
  j["m_eq"] = info.m_eq;
  j["m_ineq"] = info.m_ineq;
  j["relaxed"] = r.relaxed;
  j["kkt_nnz"] = r.kkt_nnz;
  j["linear_solves"] = r.linear_solves;
  j["cg_iterations_total"] = r.cg_iterations_total;
  j["cg_iterations_mean"] = r.cg_iterations_mean();
  j["refinement_iterations_total"] = r.refinement_iterations_total;
  j["degraded_solves"] = r.degraded_solves;
  const SolverOptions& o = info.options;
  j["options"] = {
      {"tol", o.tol},         {"max_iter", o.max_iter}, {"gamma", o.gamma},
      {"tau_relax", o.tau_relax}, {"mu_init", o.mu_init}, {"cg_tol", o.cg_tol},
      {"cg_max_iter", o.cg_max_iter}, {"seed", info.seed},
  };
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  for (const auto& [k, v] : info.params) params[k] = v;
  j["params"] = params;
  const PhaseTimers t = reported_timers(info, r);
  j["timers"] = {{"init", round_seconds(t.init)},
                 {"ad", round_seconds(t.ad)},
                 {"linsolve", round_seconds(t.linsolve)},
                 {"total", round_seconds(t.total)}};
  return j;
}

std::string csv_header() {
  return "N,strategy,iterations,init_s,ad_s,linsolve_s,total_s,time_per_iter_s,cg_iters_mean,status";
}

std::string csv_row(const RunInfo& info, const SolveReport& r) {
  const PhaseTimers t = reported_timers(info, r);
  const double per_iter = r.iterations > 0 ? t.total / r.iterations : 0.0;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%s,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.3f,%s", info.N,
                std::string(to_string(info.options.strategy)).c_str(), r.iterations, t.init, t.ad,
                t.linsolve, t.total, per_iter, r.cg_iterations_mean(),
                std::string(to_string(r.status)).c_str());
  return buf;
}

std::string table_header() {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%8s %-10s %6s %9s %9s %9s %9s  %s", "N", "strategy", "iter", "init(s)",
                "AD(s)", "lin(s)", "total(s)", "status");
  return buf;
}

std::string table_row(const RunInfo& info, const SolveReport& r) {
  const PhaseTimers t = reported_timers(info, r);
  char buf[200];
  std::snprintf(buf, sizeof(buf), "%8d %-10s %6d %9.3f %9.3f %9.3f %9.3f  %s", info.N,
                std::string(to_string(info.options.strategy)).c_str(), r.iterations, t.init, t.ad,
                t.linsolve, t.total, std::string(to_string(r.status)).c_str());
  return buf;
}

}  // namespace hkkt
