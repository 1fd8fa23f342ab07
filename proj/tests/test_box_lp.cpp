#include <doctest.h>

#include <string>

#include "nlrank/box_lp.hpp"
#include "nlrank/errors.hpp"
#include "nlrank/random.hpp"
#include "oracles.hpp"

using namespace nlrank;

TEST_CASE("box LP small cases") {
  Vector c(2);
  c << 1, 0;
  Matrix e(1, 2);
  e << 1, 1;
  Vector d(1);
  d << 1;
  BoxLpResult res = solve_box_lp(c, e, d);
  CHECK(res.a[0] == doctest::Approx(1.0));
  CHECK(res.a[1] == doctest::Approx(0.0));

  Vector c3(3);
  c3 << 3, 2, 1;
  Matrix e3 = Matrix::Ones(1, 3);
  Vector d3(1);
  d3 << 1.5;
  res = solve_box_lp(c3, e3, d3);
  CHECK(res.a[0] == doctest::Approx(1.0));
  CHECK(res.a[1] == doctest::Approx(0.5));
  CHECK(res.a[2] == doctest::Approx(0.0));
  const auto brute = oracle::box_lp_vertices(c3, e3, d3);
  CHECK((brute.a - res.a).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("square nonsingular constraints determine the point") {
  Matrix e(3, 3);
  e << 2, 1, 0, 0, 1, 1, 1, 0, 3;
  const Vector target = (Vector(3) << 0.2, 0.7, 0.4).finished();
  const Vector d = e * target;
  const BoxLpResult res = solve_box_lp(Vector::Random(3), e, d);
  CHECK((res.a - target).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("infeasible polytopes are reported") {
  Matrix e = Matrix::Ones(1, 3);
  Vector d(1);
  d << 3.5;
  try {
    solve_box_lp(Vector::Ones(3), e, d);
    FAIL("expected InfeasibleError");
  } catch (const InfeasibleError& err) {
    CHECK(std::string(err.what()).find("row") != std::string::npos);
  }
  Matrix e2(2, 2);
  e2 << 1, 1, 2, 2;
  Vector d2(2);
  d2 << 1, 3;
  CHECK_THROWS_AS(solve_box_lp(Vector::Ones(2), e2, d2), InfeasibleError);
}

TEST_CASE("redundant rows are dropped") {
  Matrix e(2, 4);
  e << 1, 1, 1, 1, 2, 2, 2, 2;
  Vector d(2);
  d << 2, 4;
  Vector c(4);
  c << 4, 1, 3, 2;
  const BoxLpResult res = solve_box_lp(c, e, d);
  CHECK(res.a[0] == doctest::Approx(1.0));
  CHECK(res.a[2] == doctest::Approx(1.0));
  CHECK(res.basis.size() == 1);
}

TEST_CASE("random instances match vertex enumeration") {
  Rng rng(99);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 5 + trial % 5;
    const int k = 1 + trial % 3;
    Matrix e(k, n);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < n; ++j) e(i, j) = rng.uniform(-1, 2);
    Vector a0(n);
    for (int j = 0; j < n; ++j) a0[j] = rng.uniform();
    const Vector d = e * a0;
    Vector c(n);
    for (int j = 0; j < n; ++j) c[j] = rng.uniform(-3, 3);
    const BoxLpResult res = solve_box_lp(c, e, d);
    const auto brute = oracle::box_lp_vertices(c, e, d);
    CHECK(c.dot(res.a) == doctest::Approx(brute.value).epsilon(1e-10));
    CHECK((e * res.a - d).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(res.a.minCoeff() >= -1e-12);
    CHECK(res.a.maxCoeff() <= 1 + 1e-12);

    // warm start from the optimal basis finishes without pivots
    const BoxLpResult warm = solve_box_lp(c, e, d, res.basis);
    CHECK(warm.iterations <= 1);
    CHECK(c.dot(warm.a) == doctest::Approx(brute.value).epsilon(1e-10));
  }
}
