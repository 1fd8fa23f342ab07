#include "nlrank/rank_tests.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "nlrank/distributions.hpp"
#include "nlrank/errors.hpp"

namespace nlrank {

using Index = Eigen::Index;

Vector score_integrals(const RankScoreGrid& grid, const ScoreFunction& phi) {
  if (std::abs(phi.epsilon() - grid.epsilon) > 1e-12) {
    throw DomainError("score_integrals: score function and grid use different epsilon");
  }
  const Index m = grid.alphas.size();
  if (m < 1 || grid.a.cols() != m) throw DomainError("score_integrals: malformed grid");

  std::vector<Index> jump_cols;
  for (double s : phi.jump_points()) {
    const Index k = grid.find_alpha(s);
    if (k < 0) {
      std::ostringstream msg;
      msg << "score_integrals: jump of the score function at " << s << " is not a grid node";
      throw DomainError(msg.str());
    }
    jump_cols.push_back(k);
  }

  const double eps = grid.epsilon;
  Vector b = Vector::Zero(grid.n());
  // Constant continuation of the end columns if the grid stops short of
  // [eps, 1 - eps].
  if (grid.alphas[0] > eps) {
    b += grid.a.col(0) * (phi.left_limit(grid.alphas[0]) - phi.right_limit(eps));
  }
  for (Index k = 0; k + 1 < m; ++k) {
    const double inc = phi.left_limit(grid.alphas[k + 1]) - phi.right_limit(grid.alphas[k]);
    if (inc != 0.0) b += 0.5 * (grid.a.col(k) + grid.a.col(k + 1)) * inc;
  }
  if (grid.alphas[m - 1] < 1.0 - eps) {
    b += grid.a.col(m - 1) * (phi.left_limit(1.0 - eps) - phi.right_limit(grid.alphas[m - 1]));
  }
  for (std::size_t j = 0; j < jump_cols.size(); ++j) {
    const double s = phi.jump_points()[j];
    b += grid.a.col(jump_cols[j]) * (phi.right_limit(s) - phi.left_limit(s));
  }
  return b;
}

Projection projection_residual(const Matrix& z, const Matrix& v, bool want_hat) {
  if (z.rows() != v.rows()) throw DomainError("projection_residual: row count mismatch");
  const Index n = v.rows();
  const Index k = v.cols();
  Eigen::ColPivHouseholderQR<Matrix> qr(v);
  qr.setThreshold(1e-11);
  if (qr.rank() < k) {
    throw RankDeficientError("projection_residual: gradient design has rank " +
                             std::to_string(qr.rank()) + " < " + std::to_string(k));
  }
  const Matrix q = qr.householderQ() * Matrix::Identity(n, k);
  Projection out;
  out.residual = z - q * (q.transpose() * z);
  if (want_hat) out.hat = q * q.transpose();
  return out;
}

ZReport validate_z(const Matrix& z) {
  ZReport rep;
  const Index n = z.rows();
  rep.column_sums = z.colwise().sum().transpose();
  rep.gram = n > 0 ? Matrix(z.transpose() * z / static_cast<double>(n)) : Matrix(z.cols(), z.cols());
  rep.max_row_norm_ratio =
      n > 0 ? z.rowwise().norm().maxCoeff() / std::sqrt(static_cast<double>(n)) : 0.0;
  for (Index j = 0; j < z.cols(); ++j) {
    if (std::abs(rep.column_sums[j]) > 1e-8) {
      rep.centered = false;
      std::ostringstream msg;
      msg << "z column " << j << " is not centered (sum " << rep.column_sums[j] << ")";
      rep.warnings.push_back(msg.str());
    }
  }
  if (rep.max_row_norm_ratio > 0.5) {
    rep.negligible_rows = false;
    std::ostringstream msg;
    msg << "max row norm of z relative to sqrt(n) is " << rep.max_row_norm_ratio << " (> 0.5)";
    rep.warnings.push_back(msg.str());
  }
  return rep;
}

bool TestResult::reject(double tau) const {
  if (!(tau > 0.0 && tau <= 1.0)) throw DomainError("test level tau must lie in (0, 1]");
  if (tau == 1.0) return true;
  if (kind == TestKind::kTwoSidedChi2) return p_value <= tau;
  return statistic >= normal_quantile(1.0 - tau);
}

RankTestInputs prepare_rank_test(const Dataset& data, const Model& model,
                                 const ScoreFunction& phi, const TestOptions& opts) {
  const Matrix& z = data.z();
  {
    Eigen::ColPivHouseholderQR<Matrix> qr(z);
    qr.setThreshold(1e-11);
    if (qr.rank() < z.cols()) {
      throw RankDeficientError("tested regressors have rank " + std::to_string(qr.rank()) +
                               " < r = " + std::to_string(z.cols()));
    }
  }
  phi.validate_for_test();
  const Dataset null_data = data.without_z();
  null_data.require_fits(model);

  RankTestInputs in;
  in.z = z;
  in.z_report = validate_z(z);
  in.half_fit = fit_quantile(null_data, model, 0.5, opts.solver);
  const int m = opts.grid_m > 0 ? opts.grid_m : default_grid_size(data.n());
  std::vector<double> extra = phi.jump_points();
  extra.push_back(0.5);
  in.grid = rank_score_grid(null_data, model, phi.epsilon(), m, extra, opts.solver, &in.half_fit);
  in.b_hat = score_integrals(in.grid, phi);
  Matrix v;
  fill_design(model, data.x(), in.half_fit.theta_hat, v);
  in.z_res = projection_residual(z, v).residual;
  in.a2 = a_phi_squared(phi);
  return in;
}

namespace {

void check_shapes(const Matrix& z, const VectorRef& b_hat, const Matrix& z_res, double a2) {
  if (b_hat.size() != z.rows() || z_res.rows() != z.rows() || z_res.cols() != z.cols()) {
    throw DomainError("test criterion: inconsistent input sizes");
  }
  if (z.cols() < 1) throw DomainError("test criterion: need at least one tested regressor");
  if (!(a2 > 0.0)) throw DomainError("test criterion: (A(phi_eps))^2 must be positive");
}

Matrix d_matrix(const Matrix& z_res) {
  return z_res.transpose() * z_res / static_cast<double>(z_res.rows());
}

void require_well_conditioned(const Matrix& d) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(d, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e12) {
    std::ostringstream msg;
    msg << "D_n is singular or ill-conditioned (eigenvalues in [" << lo << ", " << hi << "])";
    throw SingularMatrixError(msg.str());
  }
}

void annotate(TestResult& res, const RankTestInputs& in, const ScoreFunction& phi) {
  res.theta_half = in.half_fit.theta_hat;
  res.epsilon = phi.epsilon();
  res.score = phi.name();
  res.grid_size = in.grid.alphas.size();
  res.solver_iterations = in.half_fit.iterations;
  res.nonconverged_fits = in.half_fit.converged ? 0 : 1;
  res.restart_disagreements = in.half_fit.restarts_disagree ? 1 : 0;
  for (const QuantileFit& f : in.grid.fits) {
    res.solver_iterations += f.iterations;
    if (!f.converged) ++res.nonconverged_fits;
    if (f.restarts_disagree) ++res.restart_disagreements;
  }
  res.warnings = in.z_report.warnings;
  if (in.half_fit.restarts_disagree) {
    res.warnings.push_back("restarts of the half-level fit reached different objectives");
  }
}

}  // namespace

TestResult tn_from_scores(const Matrix& z, const VectorRef& b_hat, const Matrix& z_res, double a2,
                          bool residualized_sn) {
  check_shapes(z, b_hat, z_res, a2);
  const double n = static_cast<double>(z.rows());
  TestResult res;
  res.kind = TestKind::kTwoSidedChi2;
  res.df = static_cast<int>(z.cols());
  res.a2 = a2;
  res.residualized_sn = residualized_sn;
  const Matrix& weights = residualized_sn ? z_res : z;
  res.s_n = weights.transpose() * b_hat / std::sqrt(n);
  res.d_n = d_matrix(z_res);
  require_well_conditioned(res.d_n);
  const Vector solved = res.d_n.llt().solve(res.s_n);
  res.statistic = std::max(0.0, res.s_n.dot(solved) / a2);
  res.p_value = chi_square_sf(res.statistic, res.df);
  return res;
}

TestResult tn_star_from_scores(const Matrix& z, const VectorRef& b_hat, const Matrix& z_res,
                               double a2, bool residualized_sn) {
  check_shapes(z, b_hat, z_res, a2);
  if (z.cols() != 1) throw DomainError("one-sided criterion needs exactly one tested regressor");
  const double n = static_cast<double>(z.rows());
  TestResult res;
  res.kind = TestKind::kOneSidedNormal;
  res.df = 1;
  res.a2 = a2;
  res.residualized_sn = residualized_sn;
  const Matrix& weights = residualized_sn ? z_res : z;
  const double sum = weights.col(0).dot(b_hat);
  res.s_n = Vector::Constant(1, sum / std::sqrt(n));
  res.d_n = d_matrix(z_res);
  const double ss = z_res.col(0).squaredNorm();
  if (!(ss > 0.0)) throw SingularMatrixError("one-sided criterion: z is in the span of V");
  res.statistic = sum / (std::sqrt(a2) * std::sqrt(ss));
  res.p_value = normal_sf(res.statistic);
  return res;
}

TestResult statistic_Tn(const RankTestInputs& inputs, const ScoreFunction& phi,
                        const TestOptions& opts) {
  TestResult res =
      tn_from_scores(inputs.z, inputs.b_hat, inputs.z_res, inputs.a2, opts.residualized_sn);
  annotate(res, inputs, phi);
  return res;
}

TestResult statistic_Tn_star(const RankTestInputs& inputs, const ScoreFunction& phi,
                             const TestOptions& opts) {
  TestResult res =
      tn_star_from_scores(inputs.z, inputs.b_hat, inputs.z_res, inputs.a2, opts.residualized_sn);
  annotate(res, inputs, phi);
  return res;
}

TestResult statistic_Tn(const Dataset& data, const Model& model, const ScoreFunction& phi,
                        const TestOptions& opts) {
  return statistic_Tn(prepare_rank_test(data, model, phi, opts), phi, opts);
}

TestResult statistic_Tn_star(const Dataset& data, const Model& model, const ScoreFunction& phi,
                             const TestOptions& opts) {
  if (data.r() != 1) throw DomainError("one-sided criterion needs exactly one tested regressor");
  return statistic_Tn_star(prepare_rank_test(data, model, phi, opts), phi, opts);
}

double density_functional(const ScoreFunction& phi, const ErrorLaw& law, int panels) {
  if (panels < 2) throw DomainError("density_functional: need at least 2 panels");
  const double h = 1.0 / panels;
  double total = 0.0;
  double prev = law.density_at_quantile(0.0);
  for (int k = 0; k < panels; ++k) {
    const double next = law.density_at_quantile(k + 1 == panels ? 1.0 : (k + 1) * h);
    total += phi.value((k + 0.5) * h) * (next - prev);
    prev = next;
  }
  return total;
}

PowerPrediction asymptotic_power(const VectorRef& beta0, const Matrix& d, const ScoreFunction& phi,
                                 const ErrorLaw& law, double tau, int panels) {
  const Index r = beta0.size();
  if (r < 1 || d.rows() != r || d.cols() != r) {
    throw DomainError("asymptotic_power: beta0 and D sizes disagree");
  }
  if (!(tau > 0.0 && tau < 1.0)) throw DomainError("asymptotic_power: tau must lie in (0, 1)");
  PowerPrediction out;
  out.density_functional = density_functional(phi, law, panels);
  const double a2 = a_phi_squared(phi);
  out.noncentrality =
      beta0.dot(d * beta0) * out.density_functional * out.density_functional / a2;
  const double crit = chi_square_quantile(1.0 - tau, static_cast<int>(r));
  out.power = 1.0 - noncentral_chi_square_cdf(crit, static_cast<int>(r), out.noncentrality);
  return out;
}

PowerPrediction asymptotic_power_one_sided(double beta0, double d, const ScoreFunction& phi,
                                           const ErrorLaw& law, double tau, int panels) {
  if (!(tau > 0.0 && tau < 1.0)) throw DomainError("asymptotic_power: tau must lie in (0, 1)");
  if (!(d > 0.0)) throw DomainError("asymptotic_power: D must be positive");
  PowerPrediction out;
  out.density_functional = density_functional(phi, law, panels);
  // Larger y in the z > 0 group raises the scores, while the functional is
  // negative for increasing phi, hence the sign.
  const double shift = -out.density_functional * beta0 * std::sqrt(d / a_phi_squared(phi));
  out.noncentrality = shift * shift;
  out.power = normal_sf(normal_quantile(1.0 - tau) - shift);
  return out;
}

}  // namespace nlrank
