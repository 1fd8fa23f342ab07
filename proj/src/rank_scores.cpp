#include "nlrank/rank_scores.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include <Eigen/LU>

#include "nlrank/box_lp.hpp"
#include "nlrank/errors.hpp"

namespace nlrank {

using Index = Eigen::Index;

double hajek_score(int rank, int n, double alpha) {
  if (n < 1 || rank < 1 || rank > n) {
    throw DomainError("hajek_score: rank " + std::to_string(rank) + " outside 1.." +
                      std::to_string(n));
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("hajek_score: alpha outside [0, 1]");
  const double na = static_cast<double>(n) * alpha;
  if (na >= rank) return 0.0;
  if (na <= rank - 1) return 1.0;
  return static_cast<double>(rank) - na;
}

std::vector<int> ranks_of(const VectorRef& values) {
  std::vector<Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return values[a] < values[b]; });
  std::vector<int> ranks(order.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    ranks[static_cast<std::size_t>(order[pos])] = static_cast<int>(pos) + 1;
  }
  return ranks;
}

RankScores rank_scores_from_fit(const Dataset& data, const Model& model, QuantileFit fit,
                                double tol_active) {
  const double alpha = fit.alpha;
  const Index n = data.n();
  // Orthogonality rows of parameters held at a box bound are dropped.
  std::vector<Index> rows;
  for (Index j = 0; j < model.num_params(); ++j) {
    if (std::find(fit.at_bound.begin(), fit.at_bound.end(), j) == fit.at_bound.end()) {
      rows.push_back(j);
    }
  }
  const Index k = static_cast<Index>(rows.size());
  Matrix v_all;
  fill_design(model, data.x(), fit.theta_hat, v_all);
  const Matrix v = v_all(Eigen::all, rows);

  const double thr = activity_threshold(fit.residuals, tol_active);
  Vector a = Vector::Zero(n);
  std::vector<Index> free;
  Vector rhs = (1.0 - alpha) * v.colwise().sum().transpose();
  for (Index i = 0; i < n; ++i) {
    if (fit.residuals[i] > thr) {
      a[i] = 1.0;
      rhs -= v.row(i).transpose();
    } else if (fit.residuals[i] >= -thr) {
      free.push_back(i);
    }
  }

  RankScores out;
  bool solved = false;
  constexpr double kBoxTol = 1e-8;
  if (k > 0 && static_cast<Index>(free.size()) == k) {
    const Matrix vf = v(free, Eigen::all).transpose();
    Eigen::PartialPivLU<Matrix> lu(vf);
    if (lu.rcond() > 1e-12) {
      const Vector af = lu.solve(rhs);
      if (af.minCoeff() >= -kBoxTol && af.maxCoeff() <= 1.0 + kBoxTol) {
        for (Index j = 0; j < k; ++j) a[free[j]] = af[j];
        solved = true;
        out.direct_solve = true;
      }
    }
  }
  if (!solved && k > 0) {
    out.direct_solve = false;
    std::ostringstream where;
    where << "rank scores at alpha = " << alpha << " (" << free.size()
          << " interpolated observations, " << k << " free parameters)";
    if (free.empty()) {
      if (rhs.cwiseAbs().maxCoeff() > 1e-8 * (1.0 + v.cwiseAbs().sum())) {
        throw DegenerateSystemError(where.str() + ": no free coordinates and the gradient "
                                                  "orthogonality equations are violated");
      }
    } else {
      try {
        const Vector c = data.y()(free);
        const Matrix e = v(free, Eigen::all).transpose();
        const BoxLpResult lp = solve_box_lp(c, e, rhs);
        for (std::size_t j = 0; j < free.size(); ++j) a[free[j]] = lp.a[static_cast<Index>(j)];
      } catch (const InfeasibleError& err) {
        throw DegenerateSystemError(where.str() + ": " + err.what());
      }
    }
  }
  out.a_hat = a.cwiseMax(0.0).cwiseMin(1.0);
  out.fit = std::move(fit);
  return out;
}

RankScores rank_scores_at(const Dataset& data, const Model& model, double alpha,
                          const SolverOptions& opts, const WarmStart* warm) {
  QuantileFit fit = fit_quantile(data, model, alpha, opts, warm);
  return rank_scores_from_fit(data, model, std::move(fit), opts.tol_active);
}

Index RankScoreGrid::find_alpha(double alpha, double tol) const {
  for (Index k = 0; k < alphas.size(); ++k) {
    if (std::abs(alphas[k] - alpha) <= tol) return k;
  }
  return -1;
}

int default_grid_size(Index n) { return static_cast<int>(std::max<Index>(51, n)); }

Vector make_alpha_grid(double epsilon, int m, const std::vector<double>& extra_points) {
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw DomainError("grid: epsilon must lie in (0, 1/2)");
  if (m < 2) throw DomainError("grid: need at least 2 levels");
  std::vector<double> levels;
  levels.reserve(static_cast<std::size_t>(m) + extra_points.size());
  const double width = 1.0 - 2.0 * epsilon;
  for (int k = 0; k < m; ++k) levels.push_back(epsilon + width * k / (m - 1));
  levels.back() = 1.0 - epsilon;
  for (double x : extra_points) {
    if (!(x >= epsilon - 1e-12 && x <= 1.0 - epsilon + 1e-12)) {
      throw DomainError("grid: extra point " + std::to_string(x) + " outside [epsilon, 1 - epsilon]");
    }
    const bool present = std::any_of(levels.begin(), levels.end(),
                                     [x](double l) { return std::abs(l - x) <= 1e-12; });
    if (!present) levels.push_back(std::clamp(x, epsilon, 1.0 - epsilon));
  }
  std::sort(levels.begin(), levels.end());
  return Eigen::Map<const Vector>(levels.data(), static_cast<Index>(levels.size()));
}

namespace {

// Re-throws the in-flight exception with the failing level prepended,
// preserving its type.
[[noreturn]] void rethrow_at(double alpha) {
  const std::string prefix = "rank_score_grid failed at alpha = " + std::to_string(alpha) + ": ";
  try {
    throw;
  } catch (const DegenerateSystemError& e) {
    throw DegenerateSystemError(prefix + e.what());
  } catch (const DivergenceError& e) {
    throw DivergenceError(prefix + e.what());
  } catch (const RankDeficientError& e) {
    throw RankDeficientError(prefix + e.what());
  } catch (const InfeasibleError& e) {
    throw InfeasibleError(prefix + e.what());
  }
}

}  // namespace

RankScoreGrid rank_score_grid(const Dataset& data, const Model& model, double epsilon, int m,
                              const std::vector<double>& extra_points, const SolverOptions& opts,
                              const QuantileFit* anchor) {
  opts.validate();
  RankScoreGrid grid;
  grid.epsilon = epsilon;
  grid.alphas = make_alpha_grid(epsilon, m, extra_points);
  const Index cols = grid.alphas.size();
  grid.a.resize(data.n(), cols);
  grid.fits.resize(static_cast<std::size_t>(cols));

  Index center = 0;
  for (Index k = 1; k < cols; ++k) {
    if (std::abs(grid.alphas[k] - 0.5) < std::abs(grid.alphas[center] - 0.5)) center = k;
  }

  auto store = [&](Index k, RankScores rs) {
    grid.a.col(k) = rs.a_hat;
    grid.fits[static_cast<std::size_t>(k)] = std::move(rs.fit);
  };

  try {
    if (anchor != nullptr && std::abs(anchor->alpha - grid.alphas[center]) <= 1e-12) {
      store(center, rank_scores_from_fit(data, model, *anchor, opts.tol_active));
    } else {
      store(center, rank_scores_at(data, model, grid.alphas[center], opts));
    }
  } catch (...) {
    rethrow_at(grid.alphas[center]);
  }

  auto sweep = [&](Index from, Index to) {
    const QuantileFit& prev = grid.fits[static_cast<std::size_t>(from)];
    WarmStart warm{prev.theta_hat, prev.basis, true};
    const double alpha = grid.alphas[to];
    try {
      RankScores rs = rank_scores_at(data, model, alpha, opts, &warm);
      if (rs.fit.converged) {
        store(to, std::move(rs));
        return;
      }
    } catch (const DegenerateSystemError&) {
    } catch (const DivergenceError&) {
    }
    warm.exclusive = false;
    try {
      store(to, rank_scores_at(data, model, alpha, opts, &warm));
    } catch (...) {
      rethrow_at(alpha);
    }
  };
  for (Index k = center + 1; k < cols; ++k) sweep(k - 1, k);
  for (Index k = center - 1; k >= 0; --k) sweep(k + 1, k);

  // A sweep can follow a branch of local minima past the level where another
  // branch becomes lower. Re-fitting each column from both neighbours lets
  // better branches propagate in either direction.
  auto improve = [&](Index from, Index to) {
    const QuantileFit& src = grid.fits[static_cast<std::size_t>(from)];
    const QuantileFit& cur = grid.fits[static_cast<std::size_t>(to)];
    if (src.theta_hat == cur.theta_hat) return false;
    WarmStart warm{src.theta_hat, src.basis, true};
    try {
      RankScores rs = rank_scores_at(data, model, grid.alphas[to], opts, &warm);
      if (!rs.fit.converged ||
          !(rs.fit.objective < cur.objective - 1e-10 * (1.0 + std::abs(cur.objective)))) {
        return false;
      }
      store(to, std::move(rs));
      return true;
    } catch (const std::runtime_error&) {
      return false;
    }
  };
  for (int pass = 0; pass < 3; ++pass) {
    int changed = 0;
    for (Index k = 1; k < cols; ++k) changed += improve(k - 1, k) ? 1 : 0;
    for (Index k = cols - 2; k >= 0; --k) changed += improve(k + 1, k) ? 1 : 0;
    if (changed == 0) break;
  }
  return grid;
}

double RankScorePath::operator()(Index i, double alpha) const {
  const RankScoreGrid& g = *grid_;
  if (alpha <= 0.0) return 1.0;
  if (alpha >= 1.0) return 0.0;
  const Index m = g.alphas.size();
  if (alpha <= g.alphas[0]) return g.a(i, 0);
  if (alpha >= g.alphas[m - 1]) return g.a(i, m - 1);
  const auto* begin = g.alphas.data();
  const auto* it = std::upper_bound(begin, begin + m, alpha);
  const Index hi = static_cast<Index>(it - begin);
  const Index lo = hi - 1;
  const double w = (alpha - g.alphas[lo]) / (g.alphas[hi] - g.alphas[lo]);
  return (1.0 - w) * g.a(i, lo) + w * g.a(i, hi);
}

Vector RankScorePath::column(double alpha) const {
  Vector out(grid_->n());
  for (Index i = 0; i < out.size(); ++i) out[i] = (*this)(i, alpha);
  return out;
}

RankScorePath boundary_extension(const RankScoreGrid& grid) {
  if (grid.alphas.size() < 1 || grid.a.cols() != grid.alphas.size()) {
    throw DomainError("boundary_extension: malformed grid");
  }
  return RankScorePath(grid);
}

double verify_duality(const QuantileFit& fit, const VectorRef& a_hat, double alpha) {
  const Index n = fit.residuals.size();
  if (a_hat.size() != n) throw DomainError("verify_duality: length mismatch");
  double lhs = 0.0;
  double rhs = 0.0;
  for (Index i = 0; i < n; ++i) {
    lhs += fit.residuals[i] * (a_hat[i] - (1.0 - alpha));
    rhs += check_loss(fit.residuals[i], alpha);
  }
  return std::abs(lhs - rhs) / static_cast<double>(n);
}

}  // namespace nlrank
