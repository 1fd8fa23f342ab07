#include "nlrank/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "nlrank/errors.hpp"
#include "nlrank/io.hpp"
#include "nlrank/rank_scores.hpp"
#include "nlrank/rank_tests.hpp"

namespace nlrank {

using json = nlohmann::ordered_json;

namespace {

const std::vector<std::string> kCommands = {"fit", "rrs", "test", "hajek", "simulate", "check"};

// Input problems the user can fix: bad flags, files or config values.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json num(double v) {
  if (!std::isfinite(v)) return nullptr;
  return round_output(v);
}

json vec(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v[i]));
  return a;
}

json mat(const Matrix& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vec(m.row(i).transpose()));
  return a;
}

template <class T>
json indices(const std::vector<T>& v) {
  json a = json::array();
  for (auto i : v) a.push_back(static_cast<long long>(i));
  return a;
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Vector read_vector(const json& j, const std::string& key) {
  if (!j.is_array()) throw UsageError("config: '" + key + "' must be an array of numbers");
  return to_vector(j.get<std::vector<double>>());
}

Matrix read_matrix(const json& j, const std::string& key) {
  if (!j.is_array()) throw UsageError("config: '" + key + "' must be an array of rows");
  if (j.empty()) return Matrix();
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw UsageError("config: '" + key + "' rows must have equal length");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

template <class T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void check_keys(const json& j, const std::string& where, const std::vector<std::string>& allowed) {
  if (!j.is_object()) throw UsageError("config: '" + where + "' must be an object");
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      throw UsageError("config: unknown key '" + item.key() + "' in " + where);
    }
  }
}

void read_solver(const json& j, SolverOptions& s) {
  check_keys(j, "solver",
             {"tol_obj", "tol_step", "max_iter", "multistart", "trust_radius_init", "tol_active", "seed"});
  take(j, "tol_obj", s.tol_obj);
  take(j, "tol_step", s.tol_step);
  take(j, "max_iter", s.max_iter);
  take(j, "multistart", s.multistart);
  take(j, "trust_radius_init", s.trust_radius_init);
  take(j, "tol_active", s.tol_active);
  take(j, "seed", s.seed);
}

json write_solver(const SolverOptions& s) {
  return {{"tol_obj", s.tol_obj},         {"tol_step", s.tol_step},
          {"max_iter", s.max_iter},       {"multistart", s.multistart},
          {"trust_radius_init", s.trust_radius_init}, {"tol_active", s.tol_active},
          {"seed", s.seed}};
}

// Scenario keys that are not shared with the top level. Family, box, test
// settings, tau and solver options of a simulation come from the top level.
void read_scenario(const json& j, ScenarioConfig& s) {
  check_keys(j, "scenario",
             {"theta_true", "beta_true", "x_design", "z_design", "n", "error", "error_scale",
              "replications", "seed", "threads"});
  if (j.contains("theta_true")) s.theta_true = read_vector(j["theta_true"], "theta_true");
  if (j.contains("beta_true")) s.beta_true = read_vector(j["beta_true"], "beta_true");
  if (j.contains("x_design")) {
    const json& x = j["x_design"];
    check_keys(x, "x_design", {"kind", "x_min", "x_max", "repeats", "values"});
    take(x, "kind", s.x_design.kind);
    take(x, "x_min", s.x_design.x_min);
    take(x, "x_max", s.x_design.x_max);
    take(x, "repeats", s.x_design.repeats);
    if (x.contains("values")) s.x_design.values = read_matrix(x["values"], "x_design.values");
  }
  if (j.contains("z_design")) {
    const json& z = j["z_design"];
    check_keys(z, "z_design", {"columns", "values"});
    take(z, "columns", s.z_design.columns);
    if (z.contains("values")) s.z_design.values = read_matrix(z["values"], "z_design.values");
  }
  take(j, "n", s.n);
  take(j, "error", s.error);
  take(j, "error_scale", s.error_scale);
  take(j, "replications", s.replications);
  take(j, "seed", s.seed);
  take(j, "threads", s.threads);
}

json write_scenario(const ScenarioConfig& s) {
  json x = {{"kind", s.x_design.kind},
            {"x_min", s.x_design.x_min},
            {"x_max", s.x_design.x_max},
            {"repeats", s.x_design.repeats}};
  if (s.x_design.values.size() > 0) x["values"] = mat(s.x_design.values);
  json z = {{"columns", s.z_design.columns}};
  if (s.z_design.values.size() > 0) z["values"] = mat(s.z_design.values);
  return {{"theta_true", vec(s.theta_true)},
          {"beta_true", vec(s.beta_true)},
          {"x_design", x},
          {"z_design", z},
          {"n", s.n},
          {"error", s.error},
          {"error_scale", s.error_scale},
          {"replications", s.replications},
          {"seed", s.seed},
          {"threads", s.threads}};
}

void read_config(const json& j, RunConfig& c) {
  check_keys(j, "config",
             {"command", "data", "family", "box", "alpha", "epsilon", "grid_m", "score", "tau",
              "residualized_sn", "statistic", "solver", "hajek_n", "mode", "scenario", "beta0_grid",
              "ladder_alphas", "ladder_ns", "dump_statistics", "output", "format"});
  take(j, "command", c.command);
  take(j, "data", c.data_path);
  take(j, "family", c.family);
  if (j.contains("box")) {
    const json& b = j["box"];
    check_keys(b, "box", {"lower", "upper"});
    if (b.contains("lower")) c.box_lower = read_vector(b["lower"], "box.lower");
    if (b.contains("upper")) c.box_upper = read_vector(b["upper"], "box.upper");
  }
  take(j, "alpha", c.alpha);
  take(j, "epsilon", c.epsilon);
  take(j, "grid_m", c.grid_m);
  take(j, "score", c.score);
  take(j, "tau", c.tau);
  take(j, "residualized_sn", c.residualized_sn);
  take(j, "statistic", c.statistic);
  if (j.contains("solver")) read_solver(j["solver"], c.solver);
  take(j, "hajek_n", c.hajek_n);
  take(j, "mode", c.mode);
  if (j.contains("scenario")) read_scenario(j["scenario"], c.scenario);
  if (j.contains("beta0_grid")) {
    c.beta0_grid.clear();
    for (const auto& b : j["beta0_grid"]) {
      c.beta0_grid.push_back(b.is_number() ? Vector::Constant(1, b.get<double>())
                                           : read_vector(b, "beta0_grid"));
    }
  }
  take(j, "ladder_alphas", c.ladder_alphas);
  take(j, "ladder_ns", c.ladder_ns);
  take(j, "dump_statistics", c.dump_statistics);
  take(j, "output", c.output_path);
  take(j, "format", c.format);
}

json write_config(const RunConfig& c) {
  json beta0 = json::array();
  for (const auto& b : c.beta0_grid) beta0.push_back(vec(b));
  json j = {{"command", c.command},
            {"data", c.data_path},
            {"family", c.family},
            {"box", {{"lower", vec(c.box_lower)}, {"upper", vec(c.box_upper)}}},
            {"alpha", c.alpha},
            {"epsilon", c.epsilon},
            {"grid_m", c.grid_m},
            {"score", c.score},
            {"tau", c.tau},
            {"residualized_sn", c.residualized_sn},
            {"statistic", c.statistic},
            {"solver", write_solver(c.solver)},
            {"hajek_n", c.hajek_n},
            {"mode", c.mode}};
  if (c.command == "simulate") {
    j["scenario"] = write_scenario(c.scenario);
    j["beta0_grid"] = beta0;
    j["ladder_alphas"] = c.ladder_alphas;
    j["ladder_ns"] = c.ladder_ns;
    j["dump_statistics"] = c.dump_statistics;
  }
  j["output"] = c.output_path;
  j["format"] = c.format;
  return j;
}

// Fills defaults that depend on other fields, then checks domains.
void finalize(RunConfig& c) {
  if (std::find(kCommands.begin(), kCommands.end(), c.command) == kCommands.end()) {
    throw UsageError("unknown command '" + c.command + "' (expected fit, rrs, test, hajek, simulate or check)");
  }
  const auto names = family_names();
  if (std::find(names.begin(), names.end(), c.family) == names.end()) {
    throw UsageError("unknown family '" + c.family + "'");
  }
  if (c.box_lower.size() == 0 || c.box_upper.size() == 0) {
    Vector lo, hi;
    int q = 1;
    if (c.family == "linear" && c.command != "simulate" && !c.data_path.empty()) {
      q = -1;  // resolved from the data in make_model
    }
    if (q > 0) {
      default_box(c.family, q, lo, hi);
      if (c.box_lower.size() == 0) c.box_lower = lo;
      if (c.box_upper.size() == 0) c.box_upper = hi;
    }
  }
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw UsageError("alpha must lie in (0, 1)");
  if (!(c.epsilon > 0.0 && c.epsilon < 0.5)) throw UsageError("epsilon must lie in (0, 1/2)");
  if (c.grid_m < 0 || c.grid_m == 1) throw UsageError("grid_m must be 0 (automatic) or at least 2");
  if (!(c.tau > 0.0 && c.tau <= 1.0)) throw UsageError("tau must lie in (0, 1]");
  if (c.statistic != "tn" && c.statistic != "tn_star") {
    throw UsageError("statistic must be 'tn' or 'tn_star'");
  }
  if (c.format != "json" && c.format != "csv") throw UsageError("format must be 'json' or 'csv'");
  if (c.hajek_n < 1) throw UsageError("hajek_n must be positive");
  try {
    c.solver.validate();
    (void)ScoreFunction::from_name(c.score, c.epsilon);
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  const bool needs_data = c.command == "fit" || c.command == "rrs" || c.command == "test" ||
                          c.command == "check";
  if (needs_data && c.data_path.empty()) throw UsageError(c.command + " requires --data");
  if (c.command == "simulate") {
    const std::vector<std::string> modes = {"size", "power", "bahadur", "equivalence"};
    if (std::find(modes.begin(), modes.end(), c.mode) == modes.end()) {
      throw UsageError("mode must be size, power, bahadur or equivalence");
    }
    ScenarioConfig& s = c.scenario;
    s.family = c.family;
    s.box_lower = c.box_lower;
    s.box_upper = c.box_upper;
    s.tau = c.tau;
    s.solver = c.solver;
    s.test = TestSettings{c.score, c.epsilon, c.statistic, c.residualized_sn, c.grid_m};
    if (s.theta_true.size() == 0) s.theta_true = ParamBox(s.box_lower, s.box_upper).center();
    if (s.beta_true.size() == 0) s.beta_true = Vector::Zero(s.r());
    try {
      s.validate();
    } catch (const DomainError& e) {
      throw UsageError(std::string("scenario: ") + e.what());
    }
    if (c.mode == "power" && c.beta0_grid.empty()) throw UsageError("power mode requires beta0_grid");
    for (const auto& b : c.beta0_grid) {
      if (b.size() != s.r()) throw UsageError("beta0_grid entries must have one value per z column");
    }
    if (c.ladder_ns.empty()) throw UsageError("ladder_ns must not be empty");
  }
}

Model make_model(RunConfig& c, const Dataset& data) {
  if (c.box_lower.size() == 0 || c.box_upper.size() == 0) {
    Vector lo, hi;
    default_box(c.family, static_cast<int>(data.q()), lo, hi);
    if (c.box_lower.size() == 0) c.box_lower = lo;
    if (c.box_upper.size() == 0) c.box_upper = hi;
  }
  try {
    Model m = make_family(c.family, ParamBox(c.box_lower, c.box_upper), static_cast<int>(data.q()));
    data.require_fits(m);
    return m;
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
}

json fit_json(const QuantileFit& f) {
  return {{"alpha", f.alpha},
          {"theta_hat", vec(f.theta_hat)},
          {"objective", num(f.objective)},
          {"iterations", f.iterations},
          {"converged", f.converged},
          {"restarts_used", f.restarts_used},
          {"restarts_disagree", f.restarts_disagree},
          {"restart_objectives", vec(to_vector(f.restart_objectives))},
          {"active_set", indices(f.active_set)},
          {"at_bound", indices(f.at_bound)},
          {"residuals", vec(f.residuals)}};
}

json test_json(const TestResult& t, double tau) {
  return {{"statistic", num(t.statistic)},
          {"kind", t.kind == TestKind::kTwoSidedChi2 ? "chi2_two_sided" : "normal_one_sided"},
          {"df", t.df},
          {"p_value", num(t.p_value)},
          {"tau", tau},
          {"reject", t.reject(tau)},
          {"A2", num(t.a2)},
          {"S_n", vec(t.s_n)},
          {"D_n", mat(t.d_n)},
          {"epsilon", t.epsilon},
          {"score", t.score},
          {"grid_size", static_cast<long long>(t.grid_size)},
          {"residualized_sn", t.residualized_sn},
          {"theta_half", vec(t.theta_half)},
          {"solver_iterations", t.solver_iterations},
          {"nonconverged_fits", t.nonconverged_fits},
          {"restart_disagreements", t.restart_disagreements},
          {"warnings", t.warnings}};
}

json mc_json(const McReport& r, bool dump) {
  json j = {{"replications", r.replications},
            {"failures", r.failures},
            {"flagged", r.flagged},
            {"rejection_rate", num(r.rejection_rate)},
            {"ks_distance", num(r.ks_distance)},
            {"mean", num(r.mean)},
            {"variance", num(r.variance)},
            {"failure_messages", r.failure_messages}};
  if (dump) j["statistics"] = vec(to_vector(r.statistics));
  return j;
}

json z_report_json(const ZReport& z) {
  return {{"column_sums", vec(z.column_sums)},
          {"gram", mat(z.gram)},
          {"max_row_norm_ratio", num(z.max_row_norm_ratio)},
          {"centered", z.centered},
          {"negligible_rows", z.negligible_rows},
          {"warnings", z.warnings}};
}

void write_stats_csv(const McReport& r, std::ostream& out) {
  out << "replication,statistic\n";
  char buf[32];
  for (std::size_t k = 0; k < r.statistics.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.12g", r.statistics[k]);
    out << k << ',' << (std::isfinite(r.statistics[k]) ? buf : "nan") << '\n';
  }
}

struct Output {
  json result;
  std::string csv;  // set when the command produced a csv body
};

Output run_fit(RunConfig& c) {
  const Dataset data = load_csv(c.data_path);
  const Model model = make_model(c, data);
  const QuantileFit fit = fit_quantile(data.without_z(), model, c.alpha, c.solver);
  return {fit_json(fit), {}};
}

Output run_rrs(RunConfig& c) {
  const Dataset data = load_csv(c.data_path).without_z();
  const Model model = make_model(c, data);
  const ScoreFunction phi = ScoreFunction::from_name(c.score, c.epsilon);
  const int m = c.grid_m > 0 ? c.grid_m : default_grid_size(data.n());
  const RankScoreGrid grid = rank_score_grid(data, model, c.epsilon, m, phi.jump_points(), c.solver);
  Output out;
  if (c.format == "csv") {
    std::ostringstream ss;
    write_grid_csv(grid, ss);
    out.csv = ss.str();
  }
  Matrix rows(grid.n() + 1, grid.m());
  rows.row(0) = grid.alphas.transpose();
  rows.bottomRows(grid.n()) = grid.a;
  int nonconverged = 0;
  for (const auto& f : grid.fits) nonconverged += f.converged ? 0 : 1;
  out.result = {{"n", static_cast<long long>(grid.n())},
                {"m", static_cast<long long>(grid.m())},
                {"matrix", mat(rows)},
                {"nonconverged_fits", nonconverged}};
  return out;
}

Output run_test(RunConfig& c) {
  const Dataset data = load_csv(c.data_path);
  if (!data.has_z()) throw UsageError(c.data_path + ": test requires z1..zr columns");
  const Model model = make_model(c, data);
  const ScoreFunction phi = ScoreFunction::from_name(c.score, c.epsilon);
  try {
    phi.validate_for_test();
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  if (c.statistic == "tn_star" && data.r() != 1) throw UsageError("tn_star requires exactly one z column");
  TestOptions opts{c.solver, c.grid_m, c.residualized_sn};
  const RankTestInputs inputs = prepare_rank_test(data, model, phi, opts);
  const TestResult t = c.statistic == "tn" ? statistic_Tn(inputs, phi, opts)
                                           : statistic_Tn_star(inputs, phi, opts);
  json j = test_json(t, c.tau);
  j["z_report"] = z_report_json(inputs.z_report);
  return {j, {}};
}

Output run_hajek(RunConfig& c) {
  const int n = c.hajek_n;
  const int m = c.grid_m > 0 ? c.grid_m : default_grid_size(n);
  const Vector alphas = make_alpha_grid(c.epsilon, m, {});
  Matrix rows(n + 1, alphas.size());
  rows.row(0) = alphas.transpose();
  for (int r = 1; r <= n; ++r) {
    for (Eigen::Index k = 0; k < alphas.size(); ++k) rows(r, k) = hajek_score(r, n, alphas[k]);
  }
  Output out;
  if (c.format == "csv") {
    RankScoreGrid g;
    g.alphas = alphas;
    g.a = rows.bottomRows(n);
    std::ostringstream ss;
    write_grid_csv(g, ss);
    out.csv = ss.str();
  }
  out.result = {{"n", n}, {"m", static_cast<long long>(alphas.size())}, {"matrix", mat(rows)}};
  return out;
}

Output run_simulate(RunConfig& c) {
  const ScenarioConfig& s = c.scenario;
  Output out;
  if (c.mode == "size") {
    const McReport r = monte_carlo_size(s);
    out.result = mc_json(r, c.dump_statistics);
    if (c.format == "csv") {
      std::ostringstream ss;
      write_stats_csv(r, ss);
      out.csv = ss.str();
    }
  } else if (c.mode == "power") {
    json points = json::array();
    for (const PowerPoint& p : monte_carlo_power(s, c.beta0_grid)) {
      points.push_back({{"beta0", vec(p.beta0)},
                        {"empirical_power", num(p.report.rejection_rate)},
                        {"predicted_power", num(p.prediction.power)},
                        {"noncentrality", num(p.prediction.noncentrality)},
                        {"density_functional", num(p.prediction.density_functional)},
                        {"report", mc_json(p.report, c.dump_statistics)}});
    }
    out.result = {{"points", points}};
  } else if (c.mode == "bahadur") {
    json entries = json::array();
    for (const BahadurEntry& e : check_bahadur(s, c.ladder_alphas, c.ladder_ns)) {
      json levels = json::array();
      for (const auto& l : e.levels) levels.push_back({{"alpha", l.alpha}, {"median_norm", num(l.median_norm)}});
      entries.push_back({{"n", e.n}, {"summary", num(e.summary)}, {"failures", e.failures}, {"levels", levels}});
    }
    out.result = {{"entries", entries}};
  } else {
    json entries = json::array();
    for (const HajekEntry& e : check_hajek_equivalence(s, c.ladder_ns)) {
      json entry = {{"n", e.n}, {"median", num(e.median)}, {"failures", e.failures}};
      if (c.dump_statistics) entry["per_replication"] = vec(to_vector(e.per_replication));
      entries.push_back(entry);
    }
    out.result = {{"entries", entries}};
  }
  return out;
}

Output run_check(RunConfig& c) {
  const Dataset data = load_csv(c.data_path);
  const Model model = make_model(c, data);
  const ParamBox& box = model.box();
  const double h = 1e-6;
  const Vector theta = box.project(box.center());
  json result;
  try {
    result["gradient_max_discrepancy"] = num(check_gradient(model, data, theta, h));
  } catch (const DomainError& e) {
    result["gradient_max_discrepancy"] = nullptr;
    result["gradient_error"] = e.what();
  }
  result["gradient_theta"] = vec(theta);
  const RegularityReport reg = check_regularity(model, data, 200, c.solver.seed);
  std::vector<bool> mono(reg.monotone_columns.begin(), reg.monotone_columns.end());
  result["regularity"] = {{"samples", reg.samples},
                          {"lipschitz_ratio_min", num(reg.lipschitz_ratio_min)},
                          {"lipschitz_ratio_max", num(reg.lipschitz_ratio_max)},
                          {"q_min_eigenvalue", num(reg.q_min_eigenvalue)},
                          {"q_max_eigenvalue", num(reg.q_max_eigenvalue)},
                          {"fourth_moment_max", num(reg.fourth_moment_max)},
                          {"hessian_norm_max", num(reg.hessian_norm_max)},
                          {"monotone_columns", mono},
                          {"q_positive_definite", reg.q_positive_definite},
                          {"lipschitz_lower_positive", reg.lipschitz_lower_positive},
                          {"monotone", reg.monotone},
                          {"warnings", reg.warnings}};
  if (data.has_z()) result["z_report"] = z_report_json(validate_z(data.z()));
  return {result, {}};
}

// Finds --config before the full parse so that flags can override it.
std::string find_config_path(int argc, const char* const* argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) return argv[i + 1];
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
  }
  return {};
}

void load_config_file(const std::string& path, RunConfig& c) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("config file '" + path + "': " + e.what());
  }
  try {
    read_config(j, c);
  } catch (const json::exception& e) {
    throw UsageError("config file '" + path + "': " + e.what());
  }
}

void add_options(CLI::App& app, RunConfig& c) {
  app.add_option("command", c.command, "fit | rrs | test | hajek | simulate | check");
  app.add_option("--config", "JSON configuration file; flags override its values");
  app.add_option("--data", c.data_path, "CSV with columns y, x1..xq and optionally z1..zr");
  app.add_option("--family", c.family, "constant | linear | exponential | biexponential | logistic");
  app.add_option_function<std::vector<double>>(
      "--lower", [&c](const std::vector<double>& v) { c.box_lower = to_vector(v); },
      "Lower corner of the parameter box");
  app.add_option_function<std::vector<double>>(
      "--upper", [&c](const std::vector<double>& v) { c.box_upper = to_vector(v); },
      "Upper corner of the parameter box");
  app.add_option("--alpha", c.alpha, "Quantile level for fit");
  app.add_option("--epsilon", c.epsilon, "Score truncation and grid margin");
  app.add_option("--grid-m", c.grid_m, "Alpha grid size, 0 for max(51, n)");
  app.add_option("--score", c.score, "wilcoxon | median");
  app.add_option("--tau", c.tau, "Nominal test level");
  app.add_flag("--residualized-sn", c.residualized_sn, "Use projected z in S_n");
  app.add_option("--statistic", c.statistic, "tn | tn_star");
  app.add_option("--tol-obj", c.solver.tol_obj);
  app.add_option("--tol-step", c.solver.tol_step);
  app.add_option("--max-iter", c.solver.max_iter);
  app.add_option("--multistart", c.solver.multistart);
  app.add_option("--trust-radius", c.solver.trust_radius_init);
  app.add_option("--tol-active", c.solver.tol_active);
  app.add_option("--solver-seed", c.solver.seed);
  app.add_option("--hajek-n", c.hajek_n, "Number of ranks for hajek");
  app.add_option("--mode", c.mode, "simulate: size | power | bahadur | equivalence");
  app.add_option("--sample-size", c.scenario.n, "simulate: sample size");
  app.add_option("--replications", c.scenario.replications);
  app.add_option("--seed", c.scenario.seed, "simulate: data seed");
  app.add_option("--threads", c.scenario.threads);
  app.add_option("--error", c.scenario.error, "normal | logistic | laplace | cauchy");
  app.add_option("--error-scale", c.scenario.error_scale);
  app.add_option("--x-design", c.scenario.x_design.kind, "uniform | grid");
  app.add_option("--z-columns", c.scenario.z_design.columns, "two_sample | trend, one per z column");
  app.add_option_function<std::vector<double>>(
      "--theta-true", [&c](const std::vector<double>& v) { c.scenario.theta_true = to_vector(v); });
  app.add_option_function<std::vector<double>>(
      "--beta-true", [&c](const std::vector<double>& v) { c.scenario.beta_true = to_vector(v); });
  app.add_option_function<std::vector<double>>(
      "--beta0",
      [&c](const std::vector<double>& v) {
        c.beta0_grid.clear();
        for (double b : v) c.beta0_grid.push_back(Vector::Constant(1, b));
      },
      "power: scalar beta0 values (r = 1); use the config for r > 1");
  app.add_option("--ladder-alphas", c.ladder_alphas);
  app.add_option("--ladder-ns", c.ladder_ns);
  app.add_flag("--dump-statistics", c.dump_statistics, "Include per-replication statistics");
  app.add_option("--output", c.output_path, "Write the result here instead of stdout");
  app.add_option("--format", c.format, "json | csv");
}

}  // namespace

void default_box(const std::string& family, int q, Vector& lower, Vector& upper) {
  const int k = family_num_params(family, q);
  lower = Vector::Constant(k, -100.0);
  upper = Vector::Constant(k, 100.0);
  if (family == "exponential") {
    lower.tail(2) << 0.1, 0.05;
    upper.tail(2) << 100.0, 10.0;
  } else if (family == "biexponential") {
    lower.tail(3) << 0.1, 0.01, 1.01;
    upper.tail(3) << 100.0, 1.0, 10.0;
  } else if (family == "logistic") {
    lower.tail(3) << 0.1, -20.0, 0.05;
    upper.tail(3) << 100.0, 20.0, 10.0;
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  CLI::App app{"Regression quantiles, rank scores and rank tests for nonlinear models", "nlrank"};
  add_options(app, cfg);
  try {
    const std::string config_path = find_config_path(argc, argv);
    if (!config_path.empty()) load_config_file(config_path, cfg);
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return 0;
    } catch (const CLI::ParseError& e) {
      throw UsageError(e.what());
    }
    finalize(cfg);
  } catch (const std::exception& e) {
    err << "nlrank: " << e.what() << '\n';
    if (cfg.command.empty()) err << "run 'nlrank --help' for usage\n";
    return 2;
  }

  Output result;
  try {
    if (cfg.command == "fit") result = run_fit(cfg);
    else if (cfg.command == "rrs") result = run_rrs(cfg);
    else if (cfg.command == "test") result = run_test(cfg);
    else if (cfg.command == "hajek") result = run_hajek(cfg);
    else if (cfg.command == "simulate") result = run_simulate(cfg);
    else result = run_check(cfg);
  } catch (const UsageError& e) {
    err << "nlrank: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    err << "nlrank: " << e.what() << '\n';
    return 2;
  } catch (const SchemaError& e) {
    err << "nlrank: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "nlrank: " << cfg.command << " failed: " << e.what() << '\n';
    return 1;
  }

  std::string body;
  if (!result.csv.empty()) {
    body = result.csv;
  } else {
    json doc = {{"command", cfg.command}, {"config", write_config(cfg)}, {"result", result.result}};
    body = doc.dump(2) + "\n";
  }
  if (cfg.output_path.empty()) {
    out << body;
  } else {
    std::ofstream f(cfg.output_path);
    if (!f || !(f << body)) {
      err << "nlrank: cannot write '" << cfg.output_path << "'\n";
      return 2;
    }
  }
  return 0;
}

}  // namespace nlrank
