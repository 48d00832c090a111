#pragma once

#include <algorithm>
#include <vector>

#include "hybridkkt/expr_model.hpp"
#include "oracles/oracles.hpp"

namespace oracle {

/// Dense views of compiled derivative coordinates (duplicates summed).
MatrixXd dense_jacobian(int rows, int n, const std::vector<hkkt::Coord>& coords, const std::vector<double>& v);
/// Symmetric dense matrix from lower-triangle coordinates.
MatrixXd dense_hessian(int n, const std::vector<hkkt::Coord>& coords, const std::vector<double>& v);

/// Relative errors of compiled derivatives against central differences.
struct FdErrors {
  double gradient = 0.0;
  double eq_jacobian = 0.0;
  double ineq_jacobian = 0.0;
  double hessian = 0.0;  // Lagrangian with objective weight 1
  bool lower_triangle = true;

  double worst() const { return std::max({gradient, eq_jacobian, ineq_jacobian, hessian}); }
};

FdErrors fd_errors(const hkkt::CompiledModel& m, const VectorXd& x, const VectorXd& y, const VectorXd& z);

/// Five small models covering every operator, shared subexpressions,
/// parameters, ranges and duplicate coordinates.
std::vector<hkkt::CompiledModel> synthetic_models();

}  // namespace oracle
