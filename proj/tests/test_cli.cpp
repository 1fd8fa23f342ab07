#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "nlrank/cli.hpp"
#include "nlrank/io.hpp"
#include "nlrank/rank_scores.hpp"

using namespace nlrank;
using json = nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "nlrank");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("nlrank_cli_" + name)).string();
}

// Null data from the default scenario with one two-sample column.
std::string null_data_file(int n) {
  ScenarioConfig c = default_scenario();
  c.n = n;
  c.error_scale = 0.5;
  const std::string path = temp_path("null_" + std::to_string(n) + ".csv");
  write_csv(generate_dataset(c, 0).data, path);
  return path;
}

const std::vector<std::string> kBox = {"--lower", "-5", "0.5", "0.2", "--upper", "5", "5", "3"};

std::vector<std::string> with_box(std::vector<std::string> args) {
  args.insert(args.end(), kBox.begin(), kBox.end());
  return args;
}

}  // namespace

TEST_CASE("test emits the result schema and the effective config") {
  const Run r = run(with_box({"test", "--data", null_data_file(40), "--grid-m", "21"}));
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  const json& res = j["result"];
  CHECK(res.contains("statistic"));
  CHECK(res["df"] == 1);
  CHECK(res["p_value"].get<double>() >= 0.0);
  CHECK(res["p_value"].get<double>() <= 1.0);
  CHECK(res["grid_size"] == 21);
  CHECK(j["config"]["grid_m"] == 21);
  CHECK(j["config"]["solver"]["max_iter"] == 200);
  CHECK(j["config"]["box"]["lower"][1] == 0.5);
}

TEST_CASE("rrs first row is the alpha grid") {
  const std::string data = null_data_file(30);
  const Run r = run(with_box({"rrs", "--data", data, "--grid-m", "7", "--epsilon", "0.1"}));
  REQUIRE(r.code == 0);
  const json m = json::parse(r.out)["result"]["matrix"];
  REQUIRE(m.size() == 31);
  const Vector grid = make_alpha_grid(0.1, 7, {});
  for (int k = 0; k < 7; ++k) CHECK(m[0][k].get<double>() == doctest::Approx(grid[k]).epsilon(1e-12));

  const Run csv = run(with_box({"rrs", "--data", data, "--grid-m", "7", "--epsilon", "0.1", "--format", "csv"}));
  REQUIRE(csv.code == 0);
  CHECK(csv.out.substr(0, csv.out.find('\n')) == "0.1,0.233333333333,0.366666666667,0.5,0.633333333333,0.766666666667,0.9");
}

TEST_CASE("fit, hajek and check") {
  const std::string data = null_data_file(30);
  const Run f = run(with_box({"fit", "--data", data, "--alpha", "0.25"}));
  REQUIRE(f.code == 0);
  const json fit = json::parse(f.out)["result"];
  CHECK(fit["alpha"] == 0.25);
  CHECK(fit["theta_hat"].size() == 3);
  CHECK(fit["converged"] == true);

  const Run h = run({"hajek", "--hajek-n", "4", "--grid-m", "3", "--epsilon", "0.25"});
  REQUIRE(h.code == 0);
  const json m = json::parse(h.out)["result"]["matrix"];
  // n alpha = 2 at alpha = 1/2: ranks 1 and 2 score 0, ranks 3 and 4 score 1.
  CHECK(m[0][1] == 0.5);
  CHECK(m[1][1] == 0.0);
  CHECK(m[2][1] == 0.0);
  CHECK(m[3][1] == 1.0);
  CHECK(m[4][1] == 1.0);
  CHECK(m[1][0] == 0.0);   // rank 1, alpha 0.25: n*alpha = 1
  CHECK(m[2][0] == 1.0);

  const Run c = run(with_box({"check", "--data", data}));
  REQUIRE(c.code == 0);
  const json chk = json::parse(c.out)["result"];
  CHECK(chk["gradient_max_discrepancy"].get<double>() < 1e-6);
  CHECK(chk["regularity"]["q_positive_definite"] == true);
  CHECK(chk["z_report"]["centered"] == true);
}

TEST_CASE("simulate is reproducible and flags override the config file") {
  const std::string cfg_path = temp_path("sim.json");
  {
    std::ofstream cfg(cfg_path);
    cfg << R"({"family": "exponential",
               "box": {"lower": [-5, 0.5, 0.2], "upper": [5, 5, 3]},
               "grid_m": 21,
               "scenario": {"n": 30, "replications": 3, "seed": 11, "threads": 2}})";
  }
  const Run a = run({"simulate", "--config", cfg_path, "--dump-statistics"});
  const Run b = run({"simulate", "--config", cfg_path, "--dump-statistics", "--threads", "1"});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  const json ja = json::parse(a.out);
  const json jb = json::parse(b.out);
  CHECK(ja["result"] == jb["result"]);
  CHECK(ja["config"]["scenario"]["threads"] == 2);
  CHECK(jb["config"]["scenario"]["threads"] == 1);
  CHECK(ja["result"]["statistics"].size() == 3);

  const Run c = run({"simulate", "--config", cfg_path, "--replications", "2"});
  REQUIRE(c.code == 0);
  CHECK(json::parse(c.out)["result"]["replications"] == 2);
}

TEST_CASE("exit codes") {
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"fit"}).code == 2);
  CHECK(run({"fit", "--data", "/nonexistent.csv"}).code == 2);
  CHECK(run({"hajek", "--epsilon", "0.7"}).code == 2);
  CHECK(run({"hajek", "--no-such-flag"}).code == 2);
  CHECK(run({"simulate", "--config", "/nonexistent.json"}).code == 2);
  CHECK(run({"simulate", "--mode", "power"}).code == 2);
  const Run help = run({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("--data") != std::string::npos);

  const std::string bad = temp_path("bad.csv");
  {
    std::ofstream f(bad);
    f << "y,x1\n1,0\n2,oops\n";
  }
  const Run r = run({"fit", "--data", bad});
  CHECK(r.code == 2);
  CHECK(r.err.find("line 3") != std::string::npos);

  // A computation error: constant responses with a two-column test design
  // whose columns coincide give a singular D_n.
  const std::string sing = temp_path("singular.csv");
  {
    std::ofstream f(sing);
    f << "y,x1,z1,z2\n";
    for (int i = 0; i < 20; ++i) {
      const double z = i < 10 ? 0.5 : -0.5;
      f << 0.1 * i << ',' << i * 0.2 << ',' << z << ',' << z << '\n';
    }
  }
  const Run s = run({"test", "--data", sing, "--family", "linear", "--grid-m", "11"});
  CHECK(s.code == 1);
  CHECK(s.err.find("test failed") != std::string::npos);
}
