#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hybridkkt/expr_model.hpp"

namespace hkkt {

class BuildError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Binary distillation column with constant relative volatility. Trays are
/// numbered 1 (condenser) to `trays` (reboiler).
struct DistillationParams {
  int trays = 32;
  int feed_tray = 17;
  double alpha = 1.6;
  double distillate = 0.2;  // D
  double feed = 0.4;        // F
  double gamma = 1000.0;
  double rho = 1.0;
  double horizon = 10.0;
  double holdup_condenser = 5.0;
  double holdup_reboiler = 5.0;
  double holdup_tray = 1.0;
  double feed_composition = 0.5;
  double x1_setpoint = 0.98;
  double u_setpoint = 2.0;
  double u_lower = 1.0;
  double u_upper = 5.0;
  /// Initial liquid profile; empty means the steady state at u_setpoint.
  std::vector<double> initial_profile;

  double holdup(int tray) const {
    return tray == 1 ? holdup_condenser : tray == trays ? holdup_reboiler : holdup_tray;
  }
  /// Throws BuildError on non-physical values.
  void validate() const;
};

DistillationParams default_params();

/// Applies `key = value` lines ('#' starts a comment) on top of `base`.
/// Throws std::invalid_argument on unknown keys or malformed values.
DistillationParams load_params(const std::filesystem::path& path,
                               DistillationParams base = default_params());
DistillationParams parse_params(const std::string& text, DistillationParams base = default_params());

/// Resolved scalar parameters in a stable order, for reports.
std::vector<std::pair<std::string, double>> param_entries(const DistillationParams& p);

/// Right-hand sides of the tray material balances (dx/dt) at constant
/// reflux ratio u.
std::vector<double> tray_dynamics(const DistillationParams& p, const std::vector<double>& x,
                                  double u);

/// Liquid profile with zero dynamics at constant reflux ratio u (Newton's
/// method). Throws std::runtime_error when it fails to converge.
std::vector<double> steady_state_profile(const DistillationParams& p, double u);

struct DistillationModel {
  CompiledModel model;
  DistillationParams params;  // resolved, including the initial profile
  int horizon_steps = 0;
  VarBlock x, y, u, L, V;

  // Flat variable indices; tray is 1-based, stage in 0..N.
  int x_index(int tray, int stage) const;
  int y_index(int tray, int stage) const;
  int u_index(int stage) const;
  int l_index(int stage) const;
  int v_index(int stage) const;
  /// Stage of a flat variable index.
  int stage_of(int var) const;
};

/// Implicit-Euler transcription over N steps of length horizon / N.
/// Throws BuildError for N < 1.
DistillationModel build_distillation(int N, const DistillationParams& params = default_params());

struct ReferenceDimensions {
  std::int64_t n;
  std::int64_t nnz;
};

/// n = 67 (N + 1) and the condensed-matrix nonzero count 837 N + 135.
ReferenceDimensions reference_dimensions(std::int64_t N);

}  // namespace hkkt
