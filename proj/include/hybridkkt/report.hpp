#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hybridkkt/ipm.hpp"

namespace hkkt {

/// Everything about a run that is not produced by the solver itself.
struct RunInfo {
  std::string model = "distillation";
  int N = 0;
  std::uint64_t seed = 0;
  int n = 0;
  int m_eq = 0;
  int m_ineq = 0;
  double build_seconds = 0.0;  // model generation and compilation
  SolverOptions options;
  std::vector<std::pair<std::string, double>> params;
};

/// Top-level keys of the JSON report, in emission order.
const std::vector<std::string>& report_fields();
/// Keys of the "timers" object.
const std::vector<std::string>& timer_fields();

/// Seconds rounded to 3 decimals.
double round_seconds(double s);

/// Build time is folded into the init timer.
PhaseTimers reported_timers(const RunInfo& info, const SolveReport& report);

nlohmann::ordered_json make_report(const RunInfo& info, const SolveReport& report);

std::string csv_header();
std::string csv_row(const RunInfo& info, const SolveReport& report);

/// Human-readable row: N, strategy, iterations, init, AD, linsolve, total, status.
std::string table_header();
std::string table_row(const RunInfo& info, const SolveReport& report);

}  // namespace hkkt
