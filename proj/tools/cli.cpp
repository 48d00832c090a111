#include "cli.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hybridkkt/distillation.hpp"
#include "hybridkkt/ipm.hpp"
#include "hybridkkt/report.hpp"

namespace hkkt {

namespace {

constexpr int kExitOptimal = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNotOptimal = 3;

struct RunConfig {
  std::string model = "distillation";
  std::vector<int> horizons{10};
  std::vector<std::string> strategies{"hykkt"};
  SolverOptions options;
  std::uint64_t seed = 0;
  std::string report_path;
  std::string csv_path;
  std::string params_path;
  int repeat = 1;
};

void add_common(CLI::App& cmd, RunConfig& c) {
  cmd.add_option("--model", c.model, "Benchmark family")
      ->check(CLI::IsMember({"distillation"}))
      ->capture_default_str();
  cmd.add_option("--tol", c.options.tol, "KKT tolerance")->check(CLI::PositiveNumber)->capture_default_str();
  cmd.add_option("--gamma", c.options.gamma, "HyKKT augmentation parameter")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd.add_option("--tau", c.options.tau_relax, "Equality relaxation for Lifted-KKT")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd.add_option("--max-iter", c.options.max_iter, "Iteration limit")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd.add_option("--seed", c.seed, "Recorded in the report; the solver is deterministic")
      ->capture_default_str();
  cmd.add_option("--params", c.params_path, "key = value file overriding model parameters")
      ->check(CLI::ExistingFile);
  cmd.add_option("--repeat", c.repeat, "Solve each configuration this many times")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

struct Outcome {
  RunInfo info;
  SolveReport report;
};

Outcome run_once(const RunConfig& c, int N, KktMethod method) {
  Outcome o;
  o.info.model = c.model;
  o.info.N = N;
  o.info.seed = c.seed;
  o.info.options = c.options;
  o.info.options.strategy = method;
  if (const char* dir = std::getenv("SOLVER_DEBUG_DUMP"); dir != nullptr && *dir != '\0') {
    o.info.options.dump_dir = dir;
  }
  const auto t0 = std::chrono::steady_clock::now();
  DistillationParams params = c.params_path.empty() ? default_params() : load_params(c.params_path);
  DistillationModel dm = build_distillation(N, params);
  o.info.build_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.info.n = dm.model.n();
  o.info.m_eq = dm.model.m_eq();
  o.info.m_ineq = dm.model.m_ineq();
  o.info.params = param_entries(dm.params);
  o.report = solve(dm.model, o.info.options);
  return o;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

int do_solve(const RunConfig& c, std::ostream& out) {
  const KktMethod method = parse_kkt_method(c.strategies.front());
  const int N = c.horizons.front();
  out << table_header() << "\n";
  Outcome last;
  for (int r = 0; r < c.repeat; ++r) {
    last = run_once(c, N, method);
    out << table_row(last.info, last.report) << "\n";
  }
  if (!last.report.message.empty() && last.report.status != SolveStatus::Optimal) {
    out << "note: " << last.report.message << "\n";
  }
  const auto json = make_report(last.info, last.report);
  if (!c.report_path.empty()) write_file(c.report_path, json.dump(2) + "\n");
  return last.report.status == SolveStatus::Optimal ? kExitOptimal : kExitNotOptimal;
}

int do_sweep(const RunConfig& c, std::ostream& out) {
  std::string csv = csv_header() + "\n";
  bool all_optimal = true;
  out << table_header() << "\n";
  for (const int N : c.horizons) {
    for (const auto& name : c.strategies) {
      const KktMethod method = parse_kkt_method(name);
      Outcome last;
      for (int r = 0; r < c.repeat; ++r) {
        try {
          last = run_once(c, N, method);
        } catch (const BuildError&) {
          throw;
        } catch (const std::exception& e) {
          last.info.N = N;
          last.info.options.strategy = method;
          last.report.status = SolveStatus::StrategyFailure;
          last.report.message = e.what();
        }
      }
      out << table_row(last.info, last.report) << "\n";
      csv += csv_row(last.info, last.report) + "\n";
      all_optimal = all_optimal && last.report.status == SolveStatus::Optimal;
    }
  }
  if (c.csv_path.empty() || c.csv_path == "-") {
    out << csv;
  } else {
    write_file(c.csv_path, csv);
  }
  return all_optimal ? kExitOptimal : kExitNotOptimal;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Interior-point solver with hybrid KKT strategies"};
  app.require_subcommand(1);
  RunConfig solve_cfg, sweep_cfg;

  auto* solve_cmd = app.add_subcommand("solve", "Solve one benchmark instance");
  add_common(*solve_cmd, solve_cfg);
  solve_cmd->add_option("--N", solve_cfg.horizons.front(), "Number of time steps")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  solve_cmd->add_option("--kkt", solve_cfg.strategies.front(), "KKT strategy")
      ->check(CLI::IsMember({"augmented", "lifted", "hykkt"}))
      ->capture_default_str();
  solve_cmd->add_option("--report", solve_cfg.report_path, "Write the JSON report here");

  auto* sweep_cmd = app.add_subcommand("sweep", "Solve a grid of (N, strategy) and emit CSV");
  add_common(*sweep_cmd, sweep_cfg);
  sweep_cmd->add_option("--N", sweep_cfg.horizons, "Numbers of time steps")
      ->check(CLI::PositiveNumber)
      ->expected(1, -1);
  sweep_cmd->add_option("--kkt", sweep_cfg.strategies, "KKT strategies")
      ->check(CLI::IsMember({"augmented", "lifted", "hykkt"}))
      ->expected(1, -1);
  sweep_cmd->add_option("--csv", sweep_cfg.csv_path, "CSV output path ('-' for stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*solve_cmd) return do_solve(solve_cfg, out);
    return do_sweep(sweep_cfg, out);
  } catch (const BuildError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNotOptimal;
  }
}

}  // namespace hkkt
