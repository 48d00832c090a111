#pragma once

#include <vector>

#include "hybridkkt/expr_model.hpp"
#include "hybridkkt/kkt.hpp"

namespace testing_support {

/// Newton-system structure of a compiled model: W is the Hessian pattern plus
/// the diagonal, all values zero, D_s = 1.
inline hkkt::KktInputs structure_of(const hkkt::CompiledModel& m) {
  hkkt::KktInputs in;
  in.n = m.n();
  in.m_eq = m.m_eq();
  in.m_ineq = m.m_ineq();
  std::vector<hkkt::Triplet> t;
  for (const auto& c : m.hessian_coords()) t.push_back({c.row, c.col, 0.0});
  for (int j = 0; j < m.n(); ++j) t.push_back({j, j, 0.0});
  in.w = hkkt::CscMatrix::from_triplets(m.n(), m.n(), t, true);
  in.g.rows = m.m_eq();
  in.g.cols = m.n();
  in.g.row_ptr = m.eq_jac_row_ptr();
  in.g.col_idx = m.eq_jac_cols();
  in.g.values.assign(in.g.col_idx.size(), 1.0);
  in.h.rows = m.m_ineq();
  in.h.cols = m.n();
  in.h.row_ptr = m.ineq_jac_row_ptr();
  in.h.col_idx = m.ineq_jac_cols();
  in.h.values.assign(in.h.col_idx.size(), 1.0);
  in.d_s = hkkt::Vec::Ones(m.m_ineq());
  in.r1 = hkkt::Vec::Zero(m.n());
  in.r2 = hkkt::Vec::Zero(m.m_ineq());
  in.r3 = hkkt::Vec::Zero(m.m_eq());
  in.r4 = hkkt::Vec::Zero(m.m_ineq());
  return in;
}

}  // namespace testing_support
