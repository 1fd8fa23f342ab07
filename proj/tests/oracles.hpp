#pragma once

// Brute-force reference computations. None of these share code paths with
// the library solvers they are used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline double rho(double z, double alpha) { return z > 0 ? alpha * z : (z < 0 ? (alpha - 1) * z : 0.0); }

// Calls f for every k-subset of {0..n-1}.
inline void for_each_subset(Index n, Index k, const std::function<void(const std::vector<Index>&)>& f) {
  std::vector<Index> idx(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = i;
  if (k > n) return;
  for (;;) {
    f(idx);
    Index pos = k - 1;
    while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == n - k + pos) --pos;
    if (pos < 0) return;
    ++idx[static_cast<std::size_t>(pos)];
    for (Index j = pos + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
  }
}

struct BoxLpOptimum {
  double value = -std::numeric_limits<double>::infinity();
  VectorXd a;
};

// max c'a s.t. E a = d, 0 <= a <= 1 by enumerating every vertex: choose
// rank(E) free columns, put the others at 0 or 1, solve for the free ones.
// Assumes E has full row rank.
inline BoxLpOptimum box_lp_vertices(const VectorXd& c, const MatrixXd& e, const VectorXd& d) {
  const Index n = c.size();
  const Index k = e.rows();
  BoxLpOptimum best;
  for_each_subset(n, k, [&](const std::vector<Index>& free) {
    MatrixXd ef(k, k);
    for (Index j = 0; j < k; ++j) ef.col(j) = e.col(free[static_cast<std::size_t>(j)]);
    Eigen::FullPivLU<MatrixXd> lu(ef);
    if (!lu.isInvertible()) return;
    std::vector<Index> fixed;
    for (Index j = 0; j < n; ++j) {
      if (std::find(free.begin(), free.end(), j) == free.end()) fixed.push_back(j);
    }
    const Index nf = static_cast<Index>(fixed.size());
    for (long mask = 0; mask < (1L << nf); ++mask) {
      VectorXd a = VectorXd::Zero(n);
      VectorXd rhs = d;
      for (Index t = 0; t < nf; ++t) {
        if (mask & (1L << t)) {
          a[fixed[static_cast<std::size_t>(t)]] = 1.0;
          rhs -= e.col(fixed[static_cast<std::size_t>(t)]);
        }
      }
      const VectorXd af = lu.solve(rhs);
      if (af.minCoeff() < -1e-12 || af.maxCoeff() > 1 + 1e-12) continue;
      for (Index j = 0; j < k; ++j) a[free[static_cast<std::size_t>(j)]] = af[j];
      const double val = c.dot(a);
      if (val > best.value + 1e-12) {
        best.value = val;
        best.a = a;
      }
    }
  });
  return best;
}

struct LinearQuantileOptimum {
  double objective = std::numeric_limits<double>::infinity();
  VectorXd coef;
};

// Minimum of sum rho(y - V t) over t, taken over every interpolating
// k-subset (a minimizer always interpolates k observations).
inline LinearQuantileOptimum linear_quantile_subsets(const MatrixXd& v, const VectorXd& y, double alpha) {
  LinearQuantileOptimum best;
  const Index k = v.cols();
  for_each_subset(v.rows(), k, [&](const std::vector<Index>& rows) {
    MatrixXd vb(k, k);
    VectorXd yb(k);
    for (Index j = 0; j < k; ++j) {
      vb.row(j) = v.row(rows[static_cast<std::size_t>(j)]);
      yb[j] = y[rows[static_cast<std::size_t>(j)]];
    }
    Eigen::FullPivLU<MatrixXd> lu(vb);
    if (!lu.isInvertible()) return;
    const VectorXd t = lu.solve(yb);
    const VectorXd r = y - v * t;
    double obj = 0;
    for (Index i = 0; i < r.size(); ++i) obj += rho(r[i], alpha);
    if (obj < best.objective) {
      best.objective = obj;
      best.coef = t;
    }
  });
  return best;
}

// Closed interval of sample alpha-quantiles: minimizers of sum rho(y_i - t).
inline std::pair<double, double> sample_quantile_interval(std::vector<double> y, double alpha) {
  std::sort(y.begin(), y.end());
  const double n = static_cast<double>(y.size());
  const double na = n * alpha;
  const double rounded = std::round(na);
  if (std::abs(na - rounded) < 1e-9 && rounded >= 1 && rounded < n) {
    const auto k = static_cast<std::size_t>(rounded);
    return {y[k - 1], y[k]};
  }
  const auto k = static_cast<std::size_t>(std::ceil(na));
  return {y[k - 1], y[k - 1]};
}

// Ranks 1..n by value then index.
inline std::vector<int> ranks(const VectorXd& v) {
  std::vector<int> r(static_cast<std::size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) {
    int rank = 1;
    for (Index j = 0; j < v.size(); ++j) {
      if (v[j] < v[i] || (v[j] == v[i] && j < i)) ++rank;
    }
    r[static_cast<std::size_t>(i)] = rank;
  }
  return r;
}

// Composite Simpson rule.
inline double simpson(const std::function<double(double)>& f, double a, double b, int panels) {
  if (panels % 2) ++panels;
  const double h = (b - a) / panels;
  double s = f(a) + f(b);
  for (int i = 1; i < panels; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}


// Dense lattice search for g = t0 + t1 exp(-t2 x) over the points
// center + pitch * (i, j, k), |i|, |j|, |k| <= half. For fixed (t1, t2) the
// objective is convex in t0 with a minimizer at a sample quantile q of
// y - t1 exp(-t2 x), so the lattice minimum along t0 is at one of the two
// lattice points bracketing q; only those are evaluated.
struct LatticeOptimum {
  double objective = std::numeric_limits<double>::infinity();
  VectorXd theta;
  bool on_edge = false;
};

inline LatticeOptimum exponential_lattice(const VectorXd& x, const VectorXd& y, double alpha,
                                          const VectorXd& center, double pitch, int half) {
  LatticeOptimum best;
  const Index n = x.size();
  VectorXd decay(n);
  std::vector<double> u(static_cast<std::size_t>(n));
  std::vector<double> sorted(static_cast<std::size_t>(n));
  const auto kth = static_cast<std::ptrdiff_t>(std::ceil(static_cast<double>(n) * alpha)) - 1;
  for (int k = -half; k <= half; ++k) {
    const double t2 = center[2] + pitch * k;
    for (Index i = 0; i < n; ++i) decay[i] = std::exp(-t2 * x[i]);
    for (int j = -half; j <= half; ++j) {
      const double t1 = center[1] + pitch * j;
      for (Index i = 0; i < n; ++i) u[static_cast<std::size_t>(i)] = y[i] - t1 * decay[i];
      sorted = u;
      std::nth_element(sorted.begin(), sorted.begin() + kth, sorted.end());
      const double q = sorted[static_cast<std::size_t>(kth)];
      const auto below = static_cast<long>(std::floor((q - center[0]) / pitch));
      for (long l : {below, below + 1}) {
        l = std::clamp<long>(l, -half, half);
        const double t0 = center[0] + pitch * static_cast<double>(l);
        double obj = 0.0;
        for (Index i = 0; i < n; ++i) obj += rho(u[static_cast<std::size_t>(i)] - t0, alpha);
        if (obj < best.objective) {
          best.objective = obj;
          best.theta = (VectorXd(3) << t0, t1, t2).finished();
          best.on_edge = std::abs(k) == half || std::abs(j) == half || std::abs(l) == half;
        }
      }
    }
  }
  return best;
}

// Successive lattice refinement: after the first lattice, each level
// re-centers on the best point and divides the pitch by `shrink`.
inline LatticeOptimum exponential_zoom(const VectorXd& x, const VectorXd& y, double alpha,
                                       const LatticeOptimum& start, double pitch, int half,
                                       int levels, double shrink) {
  LatticeOptimum best = start;
  for (int level = 0; level < levels; ++level) {
    pitch /= shrink;
    const LatticeOptimum next = exponential_lattice(x, y, alpha, best.theta, pitch, half);
    if (next.objective <= best.objective) best = next;
  }
  return best;
}

}  // namespace oracle
