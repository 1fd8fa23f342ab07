#include "nlrank/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "nlrank/distributions.hpp"
#include "nlrank/errors.hpp"
#include "nlrank/random.hpp"
#include "nlrank/rank_scores.hpp"

namespace nlrank {

using Index = Eigen::Index;

namespace {

// Stream offsets keep the design draws apart from the error draws.
constexpr std::uint64_t kDesignStream = 0xd1b54a32d192ed03ULL;

double median_of(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return std::isnan(x); }), v.end());
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

// Runs body(k) for k = 0..count-1 on `threads` workers. Each index is
// handled exactly once and results are stored by index by the caller.
void parallel_for(int count, int threads, const std::function<void(int)>& body) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int k = 0; k < count; ++k) body(k);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int k = next++; k < count; k = next++) {
        try {
          body(k);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

ScenarioConfig with_n(const ScenarioConfig& config, int n) {
  ScenarioConfig c = config;
  c.n = n;
  if (c.x_design.kind == "explicit" && c.x_design.values.rows() != n) {
    throw DomainError("explicit x design has a fixed number of rows; cannot change n");
  }
  if (c.z_design.values.size() > 0 && c.z_design.values.rows() != n) {
    throw DomainError("explicit z design has a fixed number of rows; cannot change n");
  }
  return c;
}

TestOptions test_options(const ScenarioConfig& config) {
  TestOptions opts;
  opts.solver = config.solver;
  opts.grid_m = config.test.grid_m;
  opts.residualized_sn = config.test.residualized_sn;
  return opts;
}

double reference_cdf(const ScenarioConfig& config, double x) {
  if (config.test.statistic == "tn_star") return normal_cdf(x);
  if (x <= 0.0) return 0.0;
  return 1.0 - chi_square_sf(x, config.r());
}

double ks_distance(std::vector<double> values, const std::function<double(double)>& cdf) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double d = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double f = cdf(values[i]);
    d = std::max(d, std::max(static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n));
  }
  return d;
}

}  // namespace

void ScenarioConfig::validate() const {
  const Model m = model();
  if (theta_true.size() != m.num_params()) {
    throw DomainError("scenario: theta_true has " + std::to_string(theta_true.size()) +
                      " entries, family '" + family + "' needs " +
                      std::to_string(m.num_params()));
  }
  m.require_in_box(theta_true);
  if (n < m.num_params() + 1) throw DomainError("scenario: n too small for the model");
  if (replications < 1) throw DomainError("scenario: replications must be >= 1");
  if (!(tau > 0.0 && tau <= 1.0)) throw DomainError("scenario: tau must lie in (0, 1]");
  if (threads < 1) throw DomainError("scenario: threads must be >= 1");
  if (beta_true.size() != r()) {
    throw DomainError("scenario: beta_true has " + std::to_string(beta_true.size()) +
                      " entries but the z design has " + std::to_string(r()) + " columns");
  }
  if (test.statistic != "tn" && test.statistic != "tn_star") {
    throw DomainError("scenario: statistic must be 'tn' or 'tn_star'");
  }
  if (test.statistic == "tn_star" && r() != 1) {
    throw DomainError("scenario: tn_star needs exactly one tested regressor");
  }
  if (test.grid_m < 0 || test.grid_m == 1) throw DomainError("scenario: grid_m must be 0 or >= 2");
  (void)error_law();
  (void)score_function();
  solver.validate();
  const std::string& k = x_design.kind;
  if (k != "grid" && k != "uniform" && k != "explicit") {
    throw DomainError("scenario: unknown x design '" + k + "'");
  }
  if (k == "explicit" && x_design.values.rows() != n) {
    throw DomainError("scenario: explicit x design must have n rows");
  }
  if (k != "explicit" && !(x_design.x_min >= 0.0 && x_design.x_max > x_design.x_min)) {
    throw DomainError("scenario: x range must satisfy 0 <= x_min < x_max");
  }
  if (k == "grid" && (x_design.repeats < 1 || x_design.repeats > n)) {
    throw DomainError("scenario: grid repeats must lie in 1..n");
  }
  if (z_design.values.size() > 0 && z_design.values.rows() != n) {
    throw DomainError("scenario: explicit z design must have n rows");
  }
  for (const auto& c : z_design.columns) {
    if (z_design.values.size() == 0 && c != "two_sample" && c != "trend") {
      throw DomainError("scenario: unknown z column '" + c + "'");
    }
  }
}

Model ScenarioConfig::model() const {
  const int q = x_design.kind == "explicit" ? static_cast<int>(x_design.values.cols()) : 1;
  return make_family(family, ParamBox(box_lower, box_upper), q);
}

ScoreFunction ScenarioConfig::score_function() const {
  return ScoreFunction::from_name(test.score, test.epsilon);
}

int ScenarioConfig::r() const {
  if (z_design.values.size() > 0) return static_cast<int>(z_design.values.cols());
  return static_cast<int>(z_design.columns.size());
}

ScenarioConfig default_scenario() {
  ScenarioConfig c;
  c.family = "exponential";
  c.box_lower = (Vector(3) << -5.0, 0.5, 0.2).finished();
  c.box_upper = (Vector(3) << 5.0, 5.0, 3.0).finished();
  c.theta_true = (Vector(3) << 1.0, 2.0, 1.0).finished();
  c.beta_true = Vector::Zero(1);
  return c;
}

Matrix design_x(const ScenarioConfig& config) {
  const XDesign& d = config.x_design;
  const int n = config.n;
  if (d.kind == "explicit") return d.values;
  Matrix x(n, 1);
  if (d.kind == "grid") {
    const int block = (n + d.repeats - 1) / d.repeats;
    for (int i = 0; i < n; ++i) {
      const int pos = i % block;
      x(i, 0) = block == 1 ? d.x_min : d.x_min + (d.x_max - d.x_min) * pos / (block - 1);
    }
    return x;
  }
  Rng rng(config.seed, kDesignStream);
  for (int i = 0; i < n; ++i) x(i, 0) = rng.uniform(d.x_min, d.x_max);
  return x;
}

Matrix design_z(const ScenarioConfig& config) {
  if (config.z_design.values.size() > 0) return config.z_design.values;
  const int n = config.n;
  Matrix z(n, static_cast<Index>(config.z_design.columns.size()));
  for (std::size_t j = 0; j < config.z_design.columns.size(); ++j) {
    const auto col = static_cast<Index>(j);
    if (config.z_design.columns[j] == "two_sample") {
      const int half = n / 2;
      for (int i = 0; i < n; ++i) z(i, col) = i < half ? 0.5 : -0.5;
      // odd n: the middle observation is dropped from both groups
      if (n % 2 == 1) z(n - 1, col) = 0.0;
    } else {
      for (int i = 0; i < n; ++i) z(i, col) = (i - 0.5 * (n - 1)) / std::max(1, n - 1);
    }
  }
  return z;
}

GeneratedData generate_dataset(const ScenarioConfig& config, std::uint64_t replication) {
  const Model model = config.model();
  const Matrix x = design_x(config);
  const Matrix z = design_z(config);
  const ErrorLaw law = config.error_law();
  Rng rng(config.seed, replication);
  Vector e(config.n);
  for (int i = 0; i < config.n; ++i) e[i] = law.sample(rng);
  Vector y(config.n);
  for (int i = 0; i < config.n; ++i) {
    y[i] = model.value(x.row(i).transpose(), config.theta_true) + e[i];
  }
  if (z.cols() > 0) y += z * config.beta_true;
  GeneratedData out{Dataset(y, x, z.cols() > 0 ? std::optional<Matrix>(z) : std::nullopt), e,
                    ranks_of(e)};
  return out;
}

double psi_alpha(double u, double alpha) { return (u >= 0.0 ? 1.0 : 0.0) - (1.0 - alpha); }

std::vector<BahadurEntry> check_bahadur(const ScenarioConfig& config,
                                        const std::vector<double>& alphas,
                                        const std::vector<int>& ns) {
  if (alphas.empty() || ns.empty()) throw DomainError("check_bahadur: empty level or size list");
  if (config.beta_true.size() > 0 && config.beta_true.cwiseAbs().maxCoeff() != 0.0) {
    throw DomainError("check_bahadur: requires beta_true = 0");
  }
  for (double a : alphas) {
    if (!(a > 0.0 && a < 1.0)) throw DomainError("check_bahadur: alpha outside (0, 1)");
  }
  std::vector<BahadurEntry> out;
  for (int n : ns) {
    const ScenarioConfig c = with_n(config, n);
    c.validate();
    const Model model = c.model();
    const ErrorLaw law = c.error_law();
    const Matrix x = design_x(c);
    Matrix v;
    fill_design(model, x, c.theta_true, v);
    const Eigen::LDLT<Matrix> q_inv((v.transpose() * v / static_cast<double>(n)).eval());

    const std::size_t levels = alphas.size();
    std::vector<double> norms(levels * static_cast<std::size_t>(c.replications),
                              std::numeric_limits<double>::quiet_NaN());
    std::vector<char> failed(static_cast<std::size_t>(c.replications), 0);
    parallel_for(c.replications, c.threads, [&](int rep) {
      const GeneratedData gen = generate_dataset(c, static_cast<std::uint64_t>(rep));
      const Dataset data = gen.data.without_z();
      const WarmStart* warm = nullptr;
      WarmStart prev;
      for (std::size_t l = 0; l < levels; ++l) {
        const double alpha = alphas[l];
        const double qa = law.quantile(alpha);
        try {
          const QuantileFit fit = fit_quantile(data, model, alpha, c.solver, warm);
          prev.theta = fit.theta_hat;
          prev.basis = fit.basis;
          warm = &prev;
          Vector theta_alpha = c.theta_true;
          theta_alpha[0] += qa;
          Vector sum = Vector::Zero(model.num_params());
          for (int i = 0; i < n; ++i) sum += v.row(i).transpose() * psi_alpha(gen.errors[i] - qa, alpha);
          const Vector lin = q_inv.solve(sum) / (std::sqrt(static_cast<double>(n)) * law.density(qa));
          const Vector delta = std::sqrt(static_cast<double>(n)) * (fit.theta_hat - theta_alpha) - lin;
          norms[static_cast<std::size_t>(rep) * levels + l] = delta.norm();
        } catch (const std::runtime_error&) {
          failed[static_cast<std::size_t>(rep)] = 1;
        }
      }
    });

    BahadurEntry entry;
    entry.n = n;
    entry.failures = static_cast<int>(std::count(failed.begin(), failed.end(), 1));
    double total = 0.0;
    for (std::size_t l = 0; l < levels; ++l) {
      std::vector<double> col;
      for (int rep = 0; rep < c.replications; ++rep) {
        col.push_back(norms[static_cast<std::size_t>(rep) * levels + l]);
      }
      const double med = median_of(col);
      entry.levels.push_back({alphas[l], med});
      total += med;
    }
    entry.summary = total / static_cast<double>(levels);
    out.push_back(std::move(entry));
  }
  return out;
}

std::vector<HajekEntry> check_hajek_equivalence(const ScenarioConfig& config,
                                                const std::vector<int>& ns) {
  if (ns.empty()) throw DomainError("check_hajek_equivalence: empty size list");
  if (config.beta_true.size() > 0 && config.beta_true.cwiseAbs().maxCoeff() != 0.0) {
    throw DomainError("check_hajek_equivalence: requires beta_true = 0");
  }
  std::vector<HajekEntry> out;
  for (int n : ns) {
    const ScenarioConfig c = with_n(config, n);
    c.validate();
    const Model model = c.model();
    const ScoreFunction phi = c.score_function();
    const TestOptions opts = test_options(c);
    std::vector<double> sup(static_cast<std::size_t>(c.replications),
                            std::numeric_limits<double>::quiet_NaN());
    parallel_for(c.replications, c.threads, [&](int rep) {
      const GeneratedData gen = generate_dataset(c, static_cast<std::uint64_t>(rep));
      try {
        const RankTestInputs in = prepare_rank_test(gen.data, model, phi, opts);
        double worst = 0.0;
        for (Index k = 0; k < in.grid.m(); ++k) {
          const double alpha = in.grid.alphas[k];
          Vector hajek(n);
          for (int i = 0; i < n; ++i) {
            hajek[i] = hajek_score(gen.ranks[static_cast<std::size_t>(i)], n, alpha);
          }
          const Vector diff = in.z.transpose() * in.grid.a.col(k) - in.z_res.transpose() * hajek;
          worst = std::max(worst, diff.norm() / std::sqrt(static_cast<double>(n)));
        }
        sup[static_cast<std::size_t>(rep)] = worst;
      } catch (const std::runtime_error&) {
      }
    });
    HajekEntry entry;
    entry.n = n;
    entry.failures = static_cast<int>(
        std::count_if(sup.begin(), sup.end(), [](double s) { return std::isnan(s); }));
    entry.median = median_of(sup);
    entry.per_replication = std::move(sup);
    out.push_back(std::move(entry));
  }
  return out;
}

McReport monte_carlo_size(const ScenarioConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const Model model = config.model();
  const ScoreFunction phi = config.score_function();
  const TestOptions opts = test_options(config);
  const bool star = config.test.statistic == "tn_star";

  McReport rep;
  rep.replications = config.replications;
  rep.statistics.assign(static_cast<std::size_t>(config.replications),
                        std::numeric_limits<double>::quiet_NaN());
  std::vector<char> rejected(static_cast<std::size_t>(config.replications), 0);
  std::vector<std::string> messages(static_cast<std::size_t>(config.replications));
  parallel_for(config.replications, config.threads, [&](int k) {
    const auto idx = static_cast<std::size_t>(k);
    try {
      const GeneratedData gen = generate_dataset(config, static_cast<std::uint64_t>(k));
      const TestResult res = star ? statistic_Tn_star(gen.data, model, phi, opts)
                                  : statistic_Tn(gen.data, model, phi, opts);
      if (res.nonconverged_fits > 0) {
        messages[idx] = "replication " + std::to_string(k) + ": " +
                        std::to_string(res.nonconverged_fits) + " fits hit the iteration limit";
        return;
      }
      rep.statistics[idx] = res.statistic;
      rejected[idx] = res.reject(config.tau) ? 1 : 0;
    } catch (const std::runtime_error& e) {
      messages[idx] = "replication " + std::to_string(k) + ": " + e.what();
    }
  });

  std::vector<double> ok;
  int rejections = 0;
  for (std::size_t k = 0; k < rep.statistics.size(); ++k) {
    if (std::isnan(rep.statistics[k])) {
      ++rep.failures;
      rep.failure_messages.push_back(messages[k]);
      continue;
    }
    ok.push_back(rep.statistics[k]);
    rejections += rejected[k];
  }
  rep.flagged = rep.failures > 0.02 * config.replications;
  if (!ok.empty()) {
    const double m = static_cast<double>(ok.size());
    rep.rejection_rate = rejections / m;
    rep.mean = std::accumulate(ok.begin(), ok.end(), 0.0) / m;
    double ss = 0.0;
    for (double s : ok) ss += (s - rep.mean) * (s - rep.mean);
    rep.variance = ok.size() > 1 ? ss / (m - 1.0) : 0.0;
    rep.ks_distance = ks_distance(ok, [&](double x) { return reference_cdf(config, x); });
  }
  rep.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

Matrix scenario_d_matrix(const ScenarioConfig& config) {
  const Model model = config.model();
  Matrix v;
  fill_design(model, design_x(config), config.theta_true, v);
  const Matrix zres = projection_residual(design_z(config), v).residual;
  return zres.transpose() * zres / static_cast<double>(config.n);
}

std::vector<PowerPoint> monte_carlo_power(const ScenarioConfig& config,
                                          const std::vector<Vector>& beta0_grid) {
  config.validate();
  if (beta0_grid.empty()) throw DomainError("monte_carlo_power: empty beta0 grid");
  const Matrix d = scenario_d_matrix(config);
  const ScoreFunction phi = config.score_function();
  const ErrorLaw law = config.error_law();
  const double tau = std::min(config.tau, 1.0 - 1e-12);
  std::vector<PowerPoint> out;
  for (const Vector& beta0 : beta0_grid) {
    if (beta0.size() != config.r()) throw DomainError("monte_carlo_power: beta0 has wrong length");
    ScenarioConfig c = config;
    c.beta_true = beta0 / std::sqrt(static_cast<double>(config.n));
    PowerPoint pt;
    pt.beta0 = beta0;
    pt.report = monte_carlo_size(c);
    pt.prediction = config.test.statistic == "tn_star"
                        ? asymptotic_power_one_sided(beta0[0], d(0, 0), phi, law, tau)
                        : asymptotic_power(beta0, d, phi, law, tau);
    out.push_back(std::move(pt));
  }
  return out;
}

}  // namespace nlrank
