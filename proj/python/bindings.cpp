#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "nlrank/cli.hpp"
#include "nlrank/errors.hpp"
#include "nlrank/io.hpp"
#include "nlrank/rank_scores.hpp"
#include "nlrank/rank_tests.hpp"
#include "nlrank/simulation.hpp"

namespace py = pybind11;
using namespace nlrank;

namespace {

Model family(const std::string& name, const Vector& lower, const Vector& upper, int q) {
  return make_family(name, ParamBox(lower, upper), q);
}

Dataset dataset(const Vector& y, const Matrix& x, const std::optional<Matrix>& z) {
  return Dataset(y, x, z);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Regression quantiles, rank scores and rank tests for nonlinear models";

  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<RankDeficientError>(m, "RankDeficientError", PyExc_RuntimeError);
  py::register_exception<InfeasibleError>(m, "InfeasibleError", PyExc_RuntimeError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);
  py::register_exception<DegenerateSystemError>(m, "DegenerateSystemError", PyExc_RuntimeError);
  py::register_exception<SingularMatrixError>(m, "SingularMatrixError", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<SchemaError>(m, "SchemaError", PyExc_ValueError);

  py::class_<Model>(m, "Model")
      .def(py::init(&family), py::arg("family"), py::arg("lower"), py::arg("upper"), py::arg("q") = 1)
      .def_property_readonly("family", &Model::family)
      .def_property_readonly("num_params", &Model::num_params)
      .def("value", &Model::value, py::arg("x"), py::arg("theta"));

  m.def("family_names", &family_names);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init(&dataset), py::arg("y"), py::arg("x"), py::arg("z") = std::nullopt)
      .def_property_readonly("n", &Dataset::n)
      .def_property_readonly("y", &Dataset::y)
      .def_property_readonly("x", &Dataset::x)
      .def_property_readonly("z", [](const Dataset& d) -> std::optional<Matrix> {
        if (!d.has_z()) return std::nullopt;
        return d.z();
      });

  m.def("load_csv", &load_csv, py::arg("path"));
  m.def("write_csv", py::overload_cast<const Dataset&, const std::string&>(&write_csv),
        py::arg("data"), py::arg("path"));

  py::class_<SolverOptions>(m, "SolverOptions")
      .def(py::init<>())
      .def_readwrite("tol_obj", &SolverOptions::tol_obj)
      .def_readwrite("tol_step", &SolverOptions::tol_step)
      .def_readwrite("max_iter", &SolverOptions::max_iter)
      .def_readwrite("multistart", &SolverOptions::multistart)
      .def_readwrite("trust_radius_init", &SolverOptions::trust_radius_init)
      .def_readwrite("tol_active", &SolverOptions::tol_active)
      .def_readwrite("seed", &SolverOptions::seed);

  py::class_<QuantileFit>(m, "QuantileFit")
      .def_readonly("alpha", &QuantileFit::alpha)
      .def_readonly("theta_hat", &QuantileFit::theta_hat)
      .def_readonly("residuals", &QuantileFit::residuals)
      .def_readonly("active_set", &QuantileFit::active_set)
      .def_readonly("objective", &QuantileFit::objective)
      .def_readonly("iterations", &QuantileFit::iterations)
      .def_readonly("converged", &QuantileFit::converged)
      .def_readonly("at_bound", &QuantileFit::at_bound);

  m.def("check_loss", &check_loss, py::arg("z"), py::arg("alpha"));
  m.def(
      "fit_quantile",
      [](const Dataset& d, const Model& model, double alpha, const SolverOptions& opts) {
        return fit_quantile(d, model, alpha, opts);
      },
      py::arg("data"), py::arg("model"), py::arg("alpha"), py::arg("opts") = SolverOptions{});

  py::class_<RankScoreGrid>(m, "RankScoreGrid")
      .def_readonly("alphas", &RankScoreGrid::alphas)
      .def_readonly("a", &RankScoreGrid::a)
      .def_readonly("fits", &RankScoreGrid::fits)
      .def_readonly("epsilon", &RankScoreGrid::epsilon);

  m.def("hajek_score", &hajek_score, py::arg("rank"), py::arg("n"), py::arg("alpha"));
  m.def("make_alpha_grid", &make_alpha_grid, py::arg("epsilon"), py::arg("m"),
        py::arg("extra_points") = std::vector<double>{});
  m.def(
      "rank_score_grid",
      [](const Dataset& d, const Model& model, double epsilon, int m, const SolverOptions& opts) {
        return rank_score_grid(d, model, epsilon, m, {}, opts);
      },
      py::arg("data"), py::arg("model"), py::arg("epsilon"), py::arg("m"),
      py::arg("opts") = SolverOptions{});

  py::class_<ScoreFunction>(m, "ScoreFunction")
      .def_static("wilcoxon", &ScoreFunction::wilcoxon, py::arg("epsilon"))
      .def_static("median", &ScoreFunction::median, py::arg("epsilon"))
      .def("value", &ScoreFunction::value);
  m.def("a_phi_squared", &a_phi_squared, py::arg("phi"), py::arg("panels") = 10000);

  py::class_<TestOptions>(m, "TestOptions")
      .def(py::init<>())
      .def_readwrite("solver", &TestOptions::solver)
      .def_readwrite("grid_m", &TestOptions::grid_m)
      .def_readwrite("residualized_sn", &TestOptions::residualized_sn);

  py::class_<TestResult>(m, "TestResult")
      .def_readonly("statistic", &TestResult::statistic)
      .def_readonly("df", &TestResult::df)
      .def_readonly("p_value", &TestResult::p_value)
      .def_readonly("s_n", &TestResult::s_n)
      .def_readonly("d_n", &TestResult::d_n)
      .def_readonly("a2", &TestResult::a2)
      .def_readonly("warnings", &TestResult::warnings)
      .def("reject", &TestResult::reject, py::arg("tau"));

  m.def("statistic_Tn",
        py::overload_cast<const Dataset&, const Model&, const ScoreFunction&, const TestOptions&>(
            &statistic_Tn),
        py::arg("data"), py::arg("model"), py::arg("phi"), py::arg("opts") = TestOptions{});
  m.def("statistic_Tn_star",
        py::overload_cast<const Dataset&, const Model&, const ScoreFunction&, const TestOptions&>(
            &statistic_Tn_star),
        py::arg("data"), py::arg("model"), py::arg("phi"), py::arg("opts") = TestOptions{});

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<const char*> argv = {"nlrank"};
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one nlrank command; returns (exit_code, stdout, stderr).");
}
