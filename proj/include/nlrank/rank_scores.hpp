#pragma once

#include <vector>

#include "nlrank/model.hpp"
#include "nlrank/quantile.hpp"

namespace nlrank {

// Hajek rank score of an observation with rank R among n at level alpha:
// 1 for alpha <= (R-1)/n, 0 for alpha >= R/n, linear R - n*alpha between.
double hajek_score(int rank, int n, double alpha);

// Ranks 1..n, ties broken by index order.
std::vector<int> ranks_of(const VectorRef& values);

struct RankScores {
  Vector a_hat;
  QuantileFit fit;
  // True when the active-set system was square and solved directly; false
  // when the tie-break LP (maximize sum y_i a_i) was needed.
  bool direct_solve = true;
};

// Regression rank scores at one level: sign pattern of the fitted residuals
// outside the active set, orthogonality to the gradient design on it.
RankScores rank_scores_at(const Dataset& data, const Model& model, double alpha,
                          const SolverOptions& opts, const WarmStart* warm = nullptr);

// Same computation for an already fitted quantile.
RankScores rank_scores_from_fit(const Dataset& data, const Model& model, QuantileFit fit,
                                double tol_active);

struct RankScoreGrid {
  Vector alphas;  // strictly increasing, within [epsilon, 1 - epsilon]
  Matrix a;       // n x m, a(i, k) = a_hat_i(alphas[k])
  std::vector<QuantileFit> fits;
  double epsilon = 0.05;

  Eigen::Index n() const { return a.rows(); }
  Eigen::Index m() const { return a.cols(); }
  // Column index of an exact grid node, or -1.
  Eigen::Index find_alpha(double alpha, double tol = 1e-12) const;
};

// Grid of m uniform levels on [epsilon, 1 - epsilon] plus extra points.
Vector make_alpha_grid(double epsilon, int m, const std::vector<double>& extra_points);

int default_grid_size(Eigen::Index n);

// The column nearest 1/2 is fitted with the full multistart (or taken from
// `anchor` when it matches that level); the remaining columns are swept
// outward, each warm-started from its neighbour's estimate and interpolation
// set. A column whose warm-started fit fails is refitted with the full
// multistart before giving up.
RankScoreGrid rank_score_grid(const Dataset& data, const Model& model, double epsilon, int m,
                              const std::vector<double>& extra_points, const SolverOptions& opts,
                              const QuantileFit* anchor = nullptr);

// Evaluation of a_hat_i(alpha) on [0, 1]: exact at the grid nodes, linear
// between them, constant continuation of the end columns on [0, eps) and
// (1 - eps, 1], and the limits a(0) = 1, a(1) = 0.
class RankScorePath {
 public:
  explicit RankScorePath(const RankScoreGrid& grid) : grid_(&grid) {}
  double operator()(Eigen::Index i, double alpha) const;
  Vector column(double alpha) const;

 private:
  const RankScoreGrid* grid_;
};

RankScorePath boundary_extension(const RankScoreGrid& grid);

// |(1/n) sum r_i (a_i - (1 - alpha)) - (1/n) sum rho_alpha(r_i)|.
double verify_duality(const QuantileFit& fit, const VectorRef& a_hat, double alpha);

}  // namespace nlrank
