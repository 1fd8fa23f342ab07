#include "nlrank/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/LU>
#include <Eigen/QR>

#include "nlrank/box_lp.hpp"
#include "nlrank/errors.hpp"
#include "nlrank/random.hpp"

namespace nlrank {

using Index = Eigen::Index;

namespace {

void require_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw DomainError("quantile level alpha must lie in (0, 1), got " + std::to_string(alpha));
  }
}

// NaN residuals propagate instead of scoring zero loss.
double loss_sum(const VectorRef& residuals, double alpha) {
  double total = 0.0;
  for (Index i = 0; i < residuals.size(); ++i) {
    const double r = residuals[i];
    total += std::isnan(r) ? r : check_loss(r, alpha);
  }
  return total;
}

void fill_values(const Model& model, const Matrix& x, const VectorRef& theta, Vector& g) {
  g.resize(x.rows());
  for (Index i = 0; i < x.rows(); ++i) g[i] = model.value(x.row(i).transpose(), theta);
}

double fast_objective(const Model& model, const Dataset& data, const VectorRef& theta,
                      double alpha) {
  double total = 0.0;
  for (Index i = 0; i < data.n(); ++i) {
    const double r = data.y()[i] - model.value(data.x().row(i).transpose(), theta);
    total += std::isnan(r) ? r : check_loss(r, alpha);
  }
  return total;
}

std::vector<Index> active_indices(const VectorRef& residuals, double tol_active) {
  const double thr = activity_threshold(residuals, tol_active);
  std::vector<Index> active;
  for (Index i = 0; i < residuals.size(); ++i) {
    if (std::abs(residuals[i]) <= thr) active.push_back(i);
  }
  return active;
}

struct Run {
  Vector theta;
  double objective = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  std::vector<Index> basis;
  std::vector<Index> fixed;
};

std::vector<Index> complement(Index k, const std::vector<Index>& fixed) {
  std::vector<Index> out;
  for (Index j = 0; j < k; ++j) {
    if (std::find(fixed.begin(), fixed.end(), j) == fixed.end()) out.push_back(j);
  }
  return out;
}

// Hessian of g over all parameters; the intercept row and column vanish.
void full_hessian(const Model& model, const VectorRef& x, const VectorRef& theta, Matrix& h) {
  const int p = model.p();
  h.setZero(p + 1, p + 1);
  if (p > 0) h.bottomRightCorner(p, p) = model.hessian(x, theta);
}

// Newton iterations on g(x_i, theta) = y_i over the interpolation set in the
// free parameters, so that the interpolated residuals vanish to rounding.
// Keeps the iterate with the smallest interpolation error.
bool polish(const Model& model, const Dataset& data, const std::vector<Index>& basis,
            const std::vector<Index>& free, Vector& theta) {
  const Index k = static_cast<Index>(free.size());
  if (k == 0 || static_cast<Index>(basis.size()) != k) return false;
  Matrix vb(k, k);
  Vector res(k);
  Vector row(model.num_params());
  Vector t = theta;
  Vector best = theta;
  double best_err = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 30; ++it) {
    for (Index r = 0; r < k; ++r) {
      const auto xi = data.x().row(basis[r]).transpose();
      res[r] = data.y()[basis[r]] - model.value(xi, t);
      model.gradient(xi, t, row);
      vb.row(r) = row(free).transpose();
    }
    if (!res.allFinite() || !vb.allFinite()) break;
    const double err = res.cwiseAbs().maxCoeff();
    if (err < best_err) {
      best_err = err;
      best = t;
    } else if (it > 2) {
      break;
    }
    if (err == 0.0) break;
    Eigen::PartialPivLU<Matrix> lu(vb);
    if (!(lu.rcond() > 1e-13)) break;
    const Vector step = lu.solve(res);
    for (Index j = 0; j < k; ++j) t[free[j]] += step[j];
    if (!model.box().contains(t)) break;
  }
  if (!std::isfinite(best_err)) return false;
  theta = best;
  return true;
}

// Stationarity system for a candidate active set A: residuals on A vanish
// and sum_i v_ij(theta) (a_i - (1 - alpha)) = 0 for every free parameter j,
// with a_i = sign_a[i] off A and free on A. Solved by Newton's method in
// (theta_free, a_A). Returns false when Newton fails; box and sign checks
// are left to the caller.
// Linear models end at a vertex of the LP, nonlinear ones may stop with
// fewer interpolated points than free parameters, where sequential
// linearization only converges linearly.
bool solve_stationarity(const Model& model, const Dataset& data, double alpha,
                        const std::vector<Index>& active, const std::vector<Index>& free,
                        const Vector& sign_a, Vector& theta, Vector& a) {
  const Index n = data.n();
  const Index kf = static_cast<Index>(free.size());
  const Index m = static_cast<Index>(active.size());
  if (kf == 0 || m > kf) return false;
  std::vector<char> in_active(static_cast<std::size_t>(n), 0);
  for (Index i : active) in_active[static_cast<std::size_t>(i)] = 1;

  Vector t = theta;
  Matrix v_all(n, model.num_params());
  fill_design(model, data.x(), t, v_all);
  Matrix v = v_all(Eigen::all, free);
  const Matrix va = v(active, Eigen::all);
  Vector c = Vector::Zero(kf);
  for (Index i = 0; i < n; ++i) {
    if (!in_active[static_cast<std::size_t>(i)]) c += v.row(i).transpose() * (sign_a[i] - (1.0 - alpha));
  }
  a = Vector::Constant(m, 1.0 - alpha);
  if (m > 0) a += va.transpose().colPivHouseholderQr().solve(-c);

  const Index dim = kf + m;
  Matrix jac(dim, dim);
  Vector f(dim);
  Matrix h;
  const double scale = 1.0 + data.y().cwiseAbs().maxCoeff() + static_cast<double>(n);
  for (int it = 0; it < 40; ++it) {
    fill_design(model, data.x(), t, v_all);
    v = v_all(Eigen::all, free);
    jac.setZero();
    f.setZero();
    Matrix curv = Matrix::Zero(model.num_params(), model.num_params());
    for (Index i = 0; i < n; ++i) {
      if (in_active[static_cast<std::size_t>(i)]) continue;
      const double w = sign_a[i] - (1.0 - alpha);
      f.tail(kf) += v.row(i).transpose() * w;
      full_hessian(model, data.x().row(i).transpose(), t, h);
      curv += w * h;
    }
    for (Index j = 0; j < m; ++j) {
      const Index i = active[static_cast<std::size_t>(j)];
      const auto xi = data.x().row(i).transpose();
      f[j] = data.y()[i] - model.value(xi, t);
      f.tail(kf) += v.row(i).transpose() * (a[j] - (1.0 - alpha));
      full_hessian(model, xi, t, h);
      curv += (a[j] - (1.0 - alpha)) * h;
      jac.block(j, 0, 1, kf) = -v.row(i);
      jac.block(m, kf + j, kf, 1) = v.row(i).transpose();
    }
    jac.block(m, 0, kf, kf) = curv(free, free);
    if (!f.allFinite() || !jac.allFinite()) return false;
    if (f.cwiseAbs().maxCoeff() <= 1e-13 * scale) {
      theta = t;
      return true;
    }
    Eigen::FullPivLU<Matrix> lu(jac);
    if (!lu.isInvertible()) return false;
    const Vector delta = lu.solve(-f);
    if (!delta.allFinite()) return false;
    for (Index j = 0; j < kf; ++j) t[free[j]] += delta[j];
    a += delta.tail(m);
    if (!model.box().contains(t)) return false;
  }
  return false;
}

// Searches for a stationary point near theta. Starts from the m smallest
// residuals as active set, m = 0..k, and the current sign pattern. After
// each Newton solve, points whose sign changed take their new sign and
// active points whose multiplier left [0, 1] leave the active set on the
// matching side. Keeps the best consistent point that does not increase
// the objective.
bool stationary_finish(const Model& model, const Dataset& data, double alpha,
                       const std::vector<Index>& free, Vector& theta, double& objective_value) {
  const Index n = data.n();
  const Index k = static_cast<Index>(free.size());
  Vector g(n);
  fill_values(model, data.x(), theta, g);
  const Vector r = data.y() - g;
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(),
            [&](Index a, Index b) { return std::abs(r[a]) < std::abs(r[b]); });
  Vector base_sign(n);
  for (Index i = 0; i < n; ++i) base_sign[i] = r[i] > 0.0 ? 1.0 : 0.0;

  bool found = false;
  Vector best = theta;
  double best_f = objective_value + 1e-12 * (1.0 + std::abs(objective_value));
  constexpr double kMultTol = 1e-9;
  for (Index m = 0; m <= std::min(k, n); ++m) {
    std::vector<Index> active(order.begin(), order.begin() + m);
    std::sort(active.begin(), active.end());
    Vector sign_a = base_sign;
    Vector t = theta;
    for (int round = 0; round < 6; ++round) {
      Vector a;
      Vector t_new = t;
      if (!solve_stationarity(model, data, alpha, active, free, sign_a, t_new, a)) break;
      bool changed = false;
      std::vector<Index> kept;
      for (std::size_t j = 0; j < active.size(); ++j) {
        const Index i = active[j];
        if (a[static_cast<Index>(j)] > 1.0 + kMultTol) {
          sign_a[i] = 1.0;
          changed = true;
        } else if (a[static_cast<Index>(j)] < -kMultTol) {
          sign_a[i] = 0.0;
          changed = true;
        } else {
          kept.push_back(i);
        }
      }
      Vector g_new(n);
      fill_values(model, data.x(), t_new, g_new);
      const Vector r_new = data.y() - g_new;
      for (Index i = 0; i < n; ++i) {
        if (std::binary_search(active.begin(), active.end(), i)) continue;
        if ((r_new[i] > 0.0) != (sign_a[i] > 0.0)) {
          sign_a[i] = r_new[i] > 0.0 ? 1.0 : 0.0;
          changed = true;
        }
      }
      if (!changed) {
        const double f = fast_objective(model, data, t_new, alpha);
        if (std::isfinite(f) && f <= best_f) {
          best_f = f;
          best = t_new;
          found = true;
        }
        break;
      }
      active = std::move(kept);
      t = t_new;
    }
  }
  if (found) {
    theta = best;
    objective_value = best_f;
  }
  return found;
}

bool at_lower(const ParamBox& box, const VectorRef& t, Index j) {
  return t[j] <= box.lower()[j] + 1e-12 * (1.0 + std::abs(box.lower()[j]));
}

bool at_upper(const ParamBox& box, const VectorRef& t, Index j) {
  return t[j] >= box.upper()[j] - 1e-12 * (1.0 + std::abs(box.upper()[j]));
}

// Linearized problem restricted to the trust region intersected with the
// parameter box. Each bound enters as a pair of weighted pseudo-observations
// whose check losses sum to a constant inside the bounds and grow with slope
// W_j outside. W_j exceeds any attainable multiplier, so the penalty is
// exact and the LP solution respects the bounds.
struct Subproblem {
  Vector target;
  double model_objective = 0.0;  // linearized loss over the real observations
  std::vector<Index> real_basis;
  std::vector<Index> pinned;     // parameters on a bound in the LP solution
  std::vector<Index> at_bound;   // parameters pushed against the parameter box
};

bool solve_subproblem(const Model& model, const Matrix& v, const Vector& y_minus_g,
                      const Vector& theta, double alpha, double radius, const SolverOptions& opts,
                      std::vector<Index>& basis, Subproblem& out) {
  const ParamBox& box = model.box();
  const Index n = v.rows();
  const Index k = v.cols();
  Matrix aug(n + 2 * k, k);
  Vector resp(n + 2 * k);
  aug.topRows(n) = v;
  resp.head(n) = y_minus_g + v * theta;
  aug.bottomRows(2 * k).setZero();
  Vector lo(k), hi(k);
  for (Index j = 0; j < k; ++j) {
    const double w = 2.0 * v.col(j).cwiseAbs().sum() + 1.0;
    lo[j] = std::max(box.lower()[j], theta[j] - radius);
    hi[j] = std::min(box.upper()[j], theta[j] + radius);
    aug(n + j, j) = w;
    resp[n + j] = w * hi[j];
    aug(n + k + j, j) = -w;
    resp[n + k + j] = -w * lo[j];
  }
  LinearQuantileFit lin;
  try {
    lin = solve_linear_quantile(aug, resp, alpha, basis, opts.tol_active);
  } catch (const RankDeficientError&) {
    return false;
  } catch (const InfeasibleError&) {
    return false;
  }
  if (!lin.coef.allFinite()) return false;
  basis = lin.basis;
  out.target = lin.coef.cwiseMax(lo).cwiseMin(hi);
  const Vector model_res = resp.head(n) - v * out.target;
  out.model_objective = loss_sum(model_res, alpha);

  out.real_basis.clear();
  out.pinned.clear();
  for (Index i : basis) {
    if (i < n) {
      out.real_basis.push_back(i);
    } else {
      out.pinned.push_back((i - n) % k);
    }
  }
  std::sort(out.pinned.begin(), out.pinned.end());
  out.pinned.erase(std::unique(out.pinned.begin(), out.pinned.end()), out.pinned.end());

  // A parameter is held by the box when the real observations alone would
  // move it outward from the bound it sits on.
  out.at_bound.clear();
  const Vector centered = lin.rank_scores.head(n).array() - (1.0 - alpha);
  for (Index j = 0; j < k; ++j) {
    const double s = v.col(j).dot(centered);
    const double tol = 1e-9 * (1.0 + v.col(j).cwiseAbs().sum());
    if ((at_lower(box, theta, j) && s < -tol) || (at_upper(box, theta, j) && s > tol)) {
      out.at_bound.push_back(j);
    }
  }
  return true;
}

Run run_slp(const Dataset& data, const Model& model, double alpha, const SolverOptions& opts,
            const Vector& start, std::vector<Index> basis) {
  const ParamBox& box = model.box();
  const Vector& y = data.y();
  const Index k = model.num_params();
  Run run;
  run.theta = box.project(start);
  run.objective = fast_objective(model, data, run.theta, alpha);
  if (!std::isfinite(run.objective)) return run;

  const double diam = box.diameter();
  const double max_radius = diam > 0.0 ? diam : 1.0;
  double radius = opts.trust_radius_init * max_radius;

  Matrix v;
  Vector g;
  Subproblem sub;
  for (run.iterations = 0; run.iterations < opts.max_iter; ++run.iterations) {
    fill_design(model, data.x(), run.theta, v);
    fill_values(model, data.x(), run.theta, g);
    if (!v.allFinite() || !g.allFinite()) break;
    if (!solve_subproblem(model, v, y - g, run.theta, alpha, radius, opts, basis, sub)) break;
    run.fixed = sub.at_bound;

    const double predicted = run.objective - sub.model_objective;
    if (predicted <= opts.tol_obj * (1.0 + std::abs(run.objective))) {
      run.converged = true;
      break;
    }

    Vector candidate = sub.target;
    double cand_obj = fast_objective(model, data, candidate, alpha);
    // Second-order correction: return to the curved manifold on which the
    // interpolated observations have zero residual.
    if (!sub.real_basis.empty()) {
      Vector corrected = candidate;
      if (polish(model, data, sub.real_basis, complement(k, sub.pinned), corrected)) {
        const double f_corr = fast_objective(model, data, corrected, alpha);
        if (std::isfinite(f_corr) && !(f_corr >= cand_obj)) {
          candidate = corrected;
          cand_obj = f_corr;
        }
      }
    }

    const double step = (candidate - run.theta).cwiseAbs().maxCoeff();
    const double actual = std::isfinite(cand_obj) ? run.objective - cand_obj : -1.0;
    const double ratio = actual / predicted;
    if (actual >= 1e-4 * predicted) {
      run.theta = candidate;
      run.objective = cand_obj;
      if (ratio > 0.5) {
        radius = std::min(std::max(radius, 2.0 * step), max_radius);
      } else if (ratio < 0.25) {
        radius *= 0.5;
      }
      if (step < opts.tol_step) {
        run.converged = true;
        break;
      }
    } else {
      radius = 0.5 * std::min(radius, step);
    }
    // Steps held by the trust region near a solution indicate a minimum with
    // fewer interpolated points than free parameters.
    const bool held = !sub.pinned.empty() && predicted <= 1e-4 * (1.0 + std::abs(run.objective));
    if ((ratio < 0.25 || held) && run.iterations >= 2 &&
        stationary_finish(model, data, alpha, complement(k, sub.at_bound), run.theta,
                          run.objective)) {
      run.converged = true;
      break;
    }
    if (radius < opts.tol_step) {
      // No decrease within the smallest trust region.
      run.converged = true;
      break;
    }
  }
  run.basis = basis;

  std::vector<Index> real_basis;
  for (Index i : run.basis) {
    if (i < data.n()) real_basis.push_back(i);
  }
  Vector polished = run.theta;
  if (static_cast<Index>(real_basis.size()) == k && polish(model, data, real_basis, complement(k, {}), polished)) {
    const double f = fast_objective(model, data, polished, alpha);
    if (std::isfinite(f) && f <= run.objective + 1e-10 * (1.0 + std::abs(run.objective))) {
      run.theta = polished;
      run.objective = f;
    }
  }
  return run;
}

}  // namespace

double check_loss(double z, double alpha) {
  require_alpha(alpha);
  if (z > 0.0) return alpha * z;
  if (z < 0.0) return (alpha - 1.0) * z;
  return 0.0;
}

double objective(const Dataset& data, const Model& model, const VectorRef& t, double alpha) {
  require_alpha(alpha);
  model.require_in_box(t);
  if (data.q() < model.x_dim()) throw SchemaError("objective: too few design columns");
  const double value = fast_objective(model, data, t, alpha);
  if (!std::isfinite(value)) throw DomainError("objective: non-finite regression value");
  return value;
}

void SolverOptions::validate() const {
  if (!(tol_obj > 0.0) || !(tol_step > 0.0) || !(tol_active > 0.0)) {
    throw DomainError("solver tolerances must be positive");
  }
  if (!(trust_radius_init > 0.0)) throw DomainError("trust_radius_init must be positive");
  if (max_iter < 1) throw DomainError("max_iter must be at least 1");
  if (multistart < 1) throw DomainError("multistart must be at least 1");
}

double activity_threshold(const VectorRef& residuals, double tol_active) {
  if (residuals.size() == 0) return tol_active;
  std::vector<double> mags(residuals.size());
  for (Index i = 0; i < residuals.size(); ++i) mags[i] = std::abs(residuals[i]);
  const auto mid = mags.begin() + static_cast<std::ptrdiff_t>(mags.size() / 2);
  std::nth_element(mags.begin(), mid, mags.end());
  double median = *mid;
  if (mags.size() % 2 == 0) {
    median = 0.5 * (median + *std::max_element(mags.begin(), mid));
  }
  return tol_active * (1.0 + median);
}

LinearQuantileFit solve_linear_quantile(const Matrix& v, const VectorRef& y, double alpha,
                                        std::span<const Index> warm_basis, double tol_active) {
  require_alpha(alpha);
  const Index n = v.rows();
  const Index k = v.cols();
  if (y.size() != n) throw DomainError("linear quantile: response length mismatch");
  if (k == 0 || n < k) throw RankDeficientError("linear quantile: need n >= k >= 1");
  Eigen::ColPivHouseholderQR<Matrix> qr(v);
  qr.setThreshold(1e-11);
  if (qr.rank() < k) {
    throw RankDeficientError("linear quantile: design has rank " + std::to_string(qr.rank()) +
                             " < " + std::to_string(k) + " columns");
  }

  const Vector d = (1.0 - alpha) * v.colwise().sum().transpose();
  const BoxLpResult lp = solve_box_lp(y, v.transpose(), d, warm_basis);

  LinearQuantileFit fit;
  fit.basis = lp.basis;
  fit.iterations = lp.iterations;
  fit.rank_scores = lp.a;
  const Matrix vb = v(lp.basis, Eigen::all);
  const Vector yb = y(lp.basis);
  fit.coef = Eigen::PartialPivLU<Matrix>(vb).solve(yb);
  fit.residuals = y - v * fit.coef;
  for (Index i : lp.basis) fit.residuals[i] = 0.0;
  fit.objective = loss_sum(fit.residuals, alpha);
  fit.active_set = active_indices(fit.residuals, tol_active);
  return fit;
}

QuantileFit fit_quantile(const Dataset& data, const Model& model, double alpha,
                         const SolverOptions& opts, const WarmStart* warm) {
  require_alpha(alpha);
  opts.validate();
  data.require_fits(model);

  const ParamBox& box = model.box();
  const int k = model.num_params();

  std::vector<Vector> starts;
  std::vector<Index> warm_basis;
  if (warm != nullptr) {
    if (warm->theta.size() != k) throw DomainError("warm start has wrong parameter count");
    starts.push_back(warm->theta);
    warm_basis = warm->basis;
  }
  if (warm == nullptr || !warm->exclusive) {
    starts.push_back(box.center());
    Rng rng(opts.seed);
    for (int s = 1; s < opts.multistart; ++s) {
      Vector t(k);
      for (int j = 0; j < k; ++j) t[j] = rng.uniform(box.lower()[j], box.upper()[j]);
      starts.push_back(std::move(t));
    }
  }

  QuantileFit fit;
  fit.alpha = alpha;
  Run best;
  bool have_best = false;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    // Only the warm start inherits the supplied basis.
    const bool inherits = warm != nullptr && s == 0;
    Run run = run_slp(data, model, alpha, opts, starts[s],
                      inherits ? warm_basis : std::vector<Index>{});
    fit.restart_objectives.push_back(run.objective);
    if (std::isfinite(run.objective) && (!have_best || run.objective < best.objective)) {
      best = std::move(run);
      have_best = true;
    }
  }
  if (!have_best) {
    throw DivergenceError("fit_quantile: every restart produced non-finite values (alpha = " +
                          std::to_string(alpha) + ")");
  }

  fit.restarts_used = static_cast<int>(starts.size());
  fit.theta_hat = best.theta;
  Vector g;
  fill_values(model, data.x(), best.theta, g);
  fit.residuals = data.y() - g;
  fit.objective = loss_sum(fit.residuals, alpha);
  fit.active_set = active_indices(fit.residuals, opts.tol_active);
  fit.iterations = best.iterations;
  fit.converged = best.converged;
  fit.basis = best.basis;
  fit.at_bound = best.fixed;
  for (double f : fit.restart_objectives) {
    if (std::isfinite(f) && f - fit.objective > 1e-4 * (1.0 + std::abs(fit.objective))) {
      fit.restarts_disagree = true;
    }
  }
  return fit;
}

}  // namespace nlrank
