#include "nlrank/box_lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/QR>

#include "nlrank/errors.hpp"

namespace nlrank {

namespace {

using Index = Eigen::Index;

enum class State : unsigned char { kLower, kUpper, kBasic };

constexpr double kPrimalTol = 1e-9;

// Selects a maximal set of linearly independent rows of E and verifies that
// the dropped rows are implied by the kept ones, right-hand side included.
std::vector<Index> independent_rows(const Matrix& e, const VectorRef& d) {
  const Index k = e.rows();
  std::vector<Index> rows;
  if (k == 0) return rows;
  Eigen::ColPivHouseholderQR<Matrix> qr(e.transpose());
  qr.setThreshold(1e-11);
  const Index rank = qr.rank();
  const auto& perm = qr.colsPermutation().indices();
  for (Index i = 0; i < rank; ++i) rows.push_back(perm[i]);
  if (rank == k) {
    std::sort(rows.begin(), rows.end());
    return rows;
  }
  std::sort(rows.begin(), rows.end());
  const Matrix kept = e(rows, Eigen::all);
  const Vector kept_d = d(rows);
  Eigen::ColPivHouseholderQR<Matrix> kept_qr(kept.transpose());
  for (Index i = 0; i < k; ++i) {
    if (std::find(rows.begin(), rows.end(), i) != rows.end()) continue;
    const Vector lambda = kept_qr.solve(e.row(i).transpose());
    const double implied = lambda.dot(kept_d);
    const double scale = 1.0 + std::abs(d[i]) + lambda.cwiseAbs().dot(kept_d.cwiseAbs());
    if (std::abs(implied - d[i]) > 1e-9 * scale) {
      std::ostringstream msg;
      msg << "box LP infeasible: equality row " << i << " is a combination of other rows but its "
          << "right-hand side " << d[i] << " differs from the implied value " << implied;
      throw InfeasibleError(msg.str());
    }
  }
  return rows;
}

std::vector<Index> cold_basis(const Matrix& e) {
  Eigen::ColPivHouseholderQR<Matrix> qr(e);
  const auto& perm = qr.colsPermutation().indices();
  std::vector<Index> basis(perm.data(), perm.data() + e.rows());
  return basis;
}

bool usable_basis(const Matrix& e, std::span<const Index> warm) {
  const Index m = e.rows();
  if (static_cast<Index>(warm.size()) != m) return false;
  std::vector<Index> sorted(warm.begin(), warm.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) return false;
  if (sorted.front() < 0 || sorted.back() >= e.cols()) return false;
  const Matrix b = e(Eigen::all, std::vector<Index>(warm.begin(), warm.end()));
  Eigen::PartialPivLU<Matrix> lu(b);
  return lu.rcond() > 1e-12;
}

}  // namespace

BoxLpResult solve_box_lp(const VectorRef& c, const Matrix& e, const VectorRef& d,
                         std::span<const Index> warm_basis) {
  const Index n = c.size();
  const Index k = e.rows();
  if (e.cols() != n) throw DomainError("box LP: constraint matrix has wrong column count");
  if (d.size() != k) throw DomainError("box LP: right-hand side has wrong length");
  if (!c.allFinite() || !e.allFinite() || !d.allFinite()) {
    throw DomainError("box LP: non-finite input");
  }

  const std::vector<Index> rows = independent_rows(e, d);
  const Matrix eq = e(rows, Eigen::all);
  const Vector rhs = d(rows);
  const Index m = eq.rows();

  BoxLpResult out;
  out.duals = Vector::Zero(k);
  if (m == 0) {
    out.a = (c.array() > 0.0).cast<double>();
    return out;
  }

  std::vector<Index> basis =
      usable_basis(eq, warm_basis) ? std::vector<Index>(warm_basis.begin(), warm_basis.end())
                                   : cold_basis(eq);

  std::vector<State> state(n, State::kLower);
  for (Index j : basis) state[j] = State::kBasic;

  const double dual_tol = 1e-11 * std::max(1.0, c.cwiseAbs().maxCoeff());
  const int bland_after = static_cast<int>(20 * (n + m) + 100);
  const int give_up = 4 * bland_after;

  Vector a = Vector::Zero(n);
  Vector pi(m);
  Vector reduced(n);
  Vector a_basic(m);
  Vector row_alpha(n);

  for (int iter = 0;; ++iter) {
    if (iter > give_up) throw std::runtime_error("box LP: iteration limit exceeded");
    const bool bland = iter > bland_after;

    const Matrix b = eq(Eigen::all, basis);
    Eigen::PartialPivLU<Matrix> lu(b);
    const Matrix b_inv = lu.inverse();

    Vector c_basic(m);
    for (Index i = 0; i < m; ++i) c_basic[i] = c[basis[i]];
    pi = b_inv.transpose() * c_basic;
    reduced = c - eq.transpose() * pi;

    // Nonbasic columns sit at the bound their reduced cost prefers; ties keep
    // their current bound.
    Vector shifted = rhs;
    for (Index j = 0; j < n; ++j) {
      if (state[j] == State::kBasic) continue;
      if (state[j] == State::kLower && reduced[j] > dual_tol) state[j] = State::kUpper;
      if (state[j] == State::kUpper && reduced[j] < -dual_tol) state[j] = State::kLower;
      if (state[j] == State::kUpper) {
        a[j] = 1.0;
        shifted -= eq.col(j);
      } else {
        a[j] = 0.0;
      }
    }
    a_basic = b_inv * shifted;

    // Leaving row: largest bound violation (smallest index under Bland).
    Index leave = -1;
    double worst = kPrimalTol;
    for (Index i = 0; i < m; ++i) {
      const double viol = std::max(-a_basic[i], a_basic[i] - 1.0);
      if (viol > worst) {
        if (bland) {
          if (leave < 0 || basis[i] < basis[leave]) leave = i;
        } else {
          worst = viol;
          leave = i;
        }
      }
    }
    if (leave < 0) {
      for (Index i = 0; i < m; ++i) a[basis[i]] = std::clamp(a_basic[i], 0.0, 1.0);
      out.a = a;
      for (Index i = 0; i < m; ++i) out.duals[rows[i]] = pi[i];
      out.basis = basis;
      out.iterations = iter;
      return out;
    }

    const bool to_lower = a_basic[leave] < 0.0;
    row_alpha = eq.transpose() * b_inv.row(leave).transpose();
    double row_scale = 0.0;
    for (Index j = 0; j < n; ++j) {
      if (state[j] != State::kBasic) row_scale = std::max(row_scale, std::abs(row_alpha[j]));
    }
    const double piv_tol = std::max(1e-12, 1e-9 * row_scale);

    Index enter = -1;
    double best_ratio = std::numeric_limits<double>::infinity();
    double best_pivot = 0.0;
    for (Index j = 0; j < n; ++j) {
      if (state[j] == State::kBasic) continue;
      const double alpha = row_alpha[j];
      bool eligible = false;
      if (to_lower) {
        eligible = (state[j] == State::kLower && alpha < -piv_tol) ||
                   (state[j] == State::kUpper && alpha > piv_tol);
      } else {
        eligible = (state[j] == State::kLower && alpha > piv_tol) ||
                   (state[j] == State::kUpper && alpha < -piv_tol);
      }
      if (!eligible) continue;
      const double ratio = std::abs(reduced[j]) / std::abs(alpha);
      const double tie = 1e-12 * std::max(1.0, best_ratio);
      if (ratio < best_ratio - tie) {
        enter = j;
        best_ratio = ratio;
        best_pivot = std::abs(alpha);
      } else if (ratio <= best_ratio + tie) {
        const bool take = bland ? j < enter : std::abs(alpha) > best_pivot;
        if (take) {
          enter = j;
          best_ratio = std::min(best_ratio, ratio);
          best_pivot = std::abs(alpha);
        }
      }
    }

    if (enter < 0) {
      std::ostringstream msg;
      msg << "box LP infeasible: combining the equality rows with weights ("
          << b_inv.row(leave) << ") forces column " << basis[leave] << " to " << a_basic[leave]
          << ", outside [0, 1], and no column can move it back";
      throw InfeasibleError(msg.str());
    }

    state[basis[leave]] = to_lower ? State::kLower : State::kUpper;
    state[enter] = State::kBasic;
    basis[leave] = enter;
  }
}

}  // namespace nlrank
