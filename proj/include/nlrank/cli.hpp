#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "nlrank/quantile.hpp"
#include "nlrank/simulation.hpp"

namespace nlrank {

struct RunConfig {
  // fit | rrs | test | hajek | simulate | check
  std::string command;
  std::string data_path;
  std::string family = "exponential";
  // Empty selects the family's default box.
  Vector box_lower;
  Vector box_upper;
  double alpha = 0.5;
  double epsilon = 0.05;
  int grid_m = 0;
  std::string score = "wilcoxon";
  double tau = 0.05;
  bool residualized_sn = false;
  // tn | tn_star
  std::string statistic = "tn";
  SolverOptions solver;
  // hajek: scores for ranks 1..hajek_n
  int hajek_n = 10;
  // simulate: size | power | bahadur | equivalence
  std::string mode = "size";
  ScenarioConfig scenario = default_scenario();
  std::vector<Vector> beta0_grid;
  std::vector<double> ladder_alphas = {0.25, 0.5, 0.75};
  std::vector<int> ladder_ns = {50, 100, 200, 400};
  bool dump_statistics = false;
  std::string output_path;
  // json, or csv for the rrs matrix and per-replication statistics
  std::string format = "json";
};

// Family default boxes used when a config gives none.
void default_box(const std::string& family, int q, Vector& lower, Vector& upper);

// Parses arguments (argv[0] is the program name), runs one command and
// writes the result. Returns 0 on success, 1 on a computation error and 2
// on a usage or input error; diagnostics go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nlrank
