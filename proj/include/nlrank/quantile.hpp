#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "nlrank/model.hpp"

namespace nlrank {

// Asymmetric absolute loss: alpha*z for z > 0, (1-alpha)*(-z) for z < 0.
double check_loss(double z, double alpha);

// Sum of check losses of y_i - g(x_i, t).
double objective(const Dataset& data, const Model& model, const VectorRef& t, double alpha);

struct SolverOptions {
  double tol_obj = 1e-12;   // relative predicted-decrease threshold
  double tol_step = 1e-10;  // parameter step threshold
  int max_iter = 200;
  int multistart = 8;
  // Initial trust radius as a fraction of the parameter box diameter.
  double trust_radius_init = 0.25;
  // Residuals with |r| <= tol_active * (1 + median|r|) count as interpolated.
  double tol_active = 1e-8;
  std::uint64_t seed = 20240607;

  void validate() const;
};

struct QuantileFit {
  double alpha = 0.5;
  Vector theta_hat;
  Vector residuals;
  std::vector<Eigen::Index> active_set;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  int restarts_used = 0;
  // Basis of the last linearized subproblem; indices >= n refer to its
  // bound rows. Reused to warm-start neighbouring fits.
  std::vector<Eigen::Index> basis;
  // Parameters held at a box bound because the objective decreases outward.
  // The gradient orthogonality rows of these parameters do not hold.
  std::vector<Eigen::Index> at_bound;
  // Final objective of every restart, in start order.
  std::vector<double> restart_objectives;
  // Some restart ended more than 1e-4 (relative) above the best objective.
  bool restarts_disagree = false;
};

struct LinearQuantileFit {
  Vector coef;
  Vector residuals;
  std::vector<Eigen::Index> active_set;
  // Interpolated observations (simplex basis).
  std::vector<Eigen::Index> basis;
  // Dual solution: the regression rank scores of the linear problem.
  Vector rank_scores;
  double objective = 0.0;
  int iterations = 0;
};

// Exact minimizer of sum rho_alpha(y_i - v_i't) over t via the dual box LP
// max y'a s.t. V'a = (1-alpha) V'1, 0 <= a <= 1. The coefficients solve the
// interpolation system on the optimal basis.
LinearQuantileFit solve_linear_quantile(const Matrix& v, const VectorRef& y, double alpha,
                                        std::span<const Eigen::Index> warm_basis = {},
                                        double tol_active = 1e-8);

struct WarmStart {
  Vector theta;
  std::vector<Eigen::Index> basis;
  // Run only from this start instead of adding it to the multistart set.
  bool exclusive = false;
};

// Regression alpha-quantile of a nonlinear model by sequential linear
// programming with a trust-region line search, best of several starts.
QuantileFit fit_quantile(const Dataset& data, const Model& model, double alpha,
                         const SolverOptions& opts, const WarmStart* warm = nullptr);

// Residual activity threshold used throughout: tol_active * (1 + median|r|).
double activity_threshold(const VectorRef& residuals, double tol_active);

}  // namespace nlrank
