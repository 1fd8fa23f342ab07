#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nlrank/error_law.hpp"
#include "nlrank/model.hpp"
#include "nlrank/quantile.hpp"
#include "nlrank/rank_tests.hpp"

namespace nlrank {

struct XDesign {
  // "grid": `repeats` copies of an equispaced grid on [x_min, x_max], one
  // copy per block of consecutive observations. "uniform": i.i.d. uniform
  // on [x_min, x_max], drawn once per scenario. "explicit": `values`.
  std::string kind = "uniform";
  double x_min = 0.0;
  double x_max = 4.0;
  int repeats = 2;
  Matrix values;
};

struct ZDesign {
  // Built-in columns: "two_sample" (+1/2 on the first half, -1/2 on the
  // second) and "trend" (centered index trend with values in [-1/2, 1/2]).
  // Ignored when `values` is non-empty.
  std::vector<std::string> columns = {"two_sample"};
  Matrix values;
};

struct TestSettings {
  std::string score = "wilcoxon";
  double epsilon = 0.05;
  // "tn" (quadratic form, chi-square) or "tn_star" (one-sided, r = 1).
  std::string statistic = "tn";
  bool residualized_sn = false;
  int grid_m = 0;
};

struct ScenarioConfig {
  std::string family = "exponential";
  Vector box_lower;
  Vector box_upper;
  Vector theta_true;
  Vector beta_true;
  XDesign x_design;
  ZDesign z_design;
  int n = 200;
  std::string error = "normal";
  double error_scale = 1.0;
  int replications = 1000;
  std::uint64_t seed = 1;
  TestSettings test;
  double tau = 0.05;
  SolverOptions solver;
  // Worker threads for replications; results do not depend on it.
  int threads = 1;

  // Checks domains and sizes; throws DomainError.
  void validate() const;
  Model model() const;
  ErrorLaw error_law() const { return ErrorLaw::from_name(error, error_scale); }
  ScoreFunction score_function() const;
  int r() const;
};

// Exponential-decay scenario used by the examples and acceptance runs:
// theta = (1, 2, 1), box [-5, 5] x [0.5, 5] x [0.2, 3], x on [0, 4].
ScenarioConfig default_scenario();

Matrix design_x(const ScenarioConfig& config);
Matrix design_z(const ScenarioConfig& config);

struct GeneratedData {
  Dataset data;
  Vector errors;
  std::vector<int> ranks;  // ranks of the errors, ties by index
};

// y_i = g(x_i, theta_true) + z_i' beta_true + e_i; a pure function of
// (config, replication).
GeneratedData generate_dataset(const ScenarioConfig& config, std::uint64_t replication);

// I[u >= 0] - (1 - alpha).
double psi_alpha(double u, double alpha);

struct BahadurLevel {
  double alpha = 0.5;
  double median_norm = 0.0;
};

struct BahadurEntry {
  int n = 0;
  std::vector<BahadurLevel> levels;
  double summary = 0.0;  // mean over levels of the median norms
  int failures = 0;
};

// Median over replications of |Delta| with
//   Delta = sqrt(n) (theta_hat_alpha - theta_alpha)
//           - Q_n^{-1} n^{-1/2} / f(F^{-1}(alpha)) sum_i v_i(theta) psi_alpha(e_i - F^{-1}(alpha)),
// theta_alpha = theta + F^{-1}(alpha) e_1, for each n in `ns`.
std::vector<BahadurEntry> check_bahadur(const ScenarioConfig& config,
                                        const std::vector<double>& alphas,
                                        const std::vector<int>& ns);

struct HajekEntry {
  int n = 0;
  double median = 0.0;
  std::vector<double> per_replication;
  int failures = 0;
};

// Median over replications of
//   sup_alpha n^{-1/2} | sum_i z_i a_hat_i(alpha) - (z_i - zhat_i) a*(R_i, alpha) |
// with R_i the ranks of the latent errors and zhat the projection at the
// half-level fit.
std::vector<HajekEntry> check_hajek_equivalence(const ScenarioConfig& config,
                                                const std::vector<int>& ns);

struct McReport {
  int replications = 0;
  int failures = 0;
  bool flagged = false;  // failures above 2% of replications
  double rejection_rate = 0.0;
  double ks_distance = 0.0;
  double mean = 0.0;
  double variance = 0.0;
  // Per replication, NaN for failed replications.
  std::vector<double> statistics;
  std::vector<std::string> failure_messages;
  double wall_time = 0.0;  // seconds
};

// Runs the configured statistic on `replications` null data sets.
McReport monte_carlo_size(const ScenarioConfig& config);

struct PowerPoint {
  Vector beta0;
  McReport report;
  PowerPrediction prediction;
};

// For each beta0 sets beta_true = beta0 / sqrt(n) and runs the replications
// with the same seed; predictions use D_n at theta_true.
std::vector<PowerPoint> monte_carlo_power(const ScenarioConfig& config,
                                          const std::vector<Vector>& beta0_grid);

// Finite-n D_n = (1/n) Zres'Zres at theta_true.
Matrix scenario_d_matrix(const ScenarioConfig& config);

}  // namespace nlrank
