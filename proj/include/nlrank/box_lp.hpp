#pragma once

#include <span>
#include <vector>

#include "nlrank/model.hpp"

namespace nlrank {

struct BoxLpResult {
  Vector a;
  // Multipliers pi of the equality rows: E_B' pi = c_B for the optimal basis.
  Vector duals;
  // Basic column indices, one per independent equality row.
  std::vector<Eigen::Index> basis;
  int iterations = 0;
};

// Maximizes c'a subject to E a = d and 0 <= a <= 1.
//
// Bounded-variable dual simplex. With unit boxes every basis is dual
// feasible once the nonbasic columns sit at the bound matching the sign of
// their reduced cost, so no phase I is needed: the method starts from any
// nonsingular basis (`warm_basis` when usable) and pivots toward primal
// feasibility. Returns a vertex maximizer. Redundant equality rows are
// dropped after a consistency check.
//
// Throws InfeasibleError, with the violated row combination in the message,
// when the polytope is empty.
BoxLpResult solve_box_lp(const VectorRef& c, const Matrix& e, const VectorRef& d,
                         std::span<const Eigen::Index> warm_basis = {});

}  // namespace nlrank
