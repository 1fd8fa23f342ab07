#include "nlrank/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "nlrank/errors.hpp"
#include "nlrank/random.hpp"

namespace nlrank {

ParamBox::ParamBox(Vector lower, Vector upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.size() != upper_.size()) {
    throw DomainError("parameter box: lower and upper bounds differ in length");
  }
  for (Eigen::Index j = 0; j < lower_.size(); ++j) {
    if (!std::isfinite(lower_[j]) || !std::isfinite(upper_[j])) {
      throw DomainError("parameter box: bounds must be finite (coordinate " + std::to_string(j) + ")");
    }
    if (lower_[j] > upper_[j]) {
      throw DomainError("parameter box: lower > upper at coordinate " + std::to_string(j));
    }
  }
}

bool ParamBox::contains(const VectorRef& theta, double slack) const {
  if (theta.size() != lower_.size()) return false;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    if (!(theta[j] >= lower_[j] - slack && theta[j] <= upper_[j] + slack)) return false;
  }
  return true;
}

Vector ParamBox::project(const VectorRef& theta) const {
  return theta.cwiseMax(lower_).cwiseMin(upper_);
}

Model::Model(std::string family, int p, int x_dim, ParamBox box, PartFn part, PartGradFn part_grad,
             PartHessFn part_hess)
    : family_(std::move(family)),
      p_(p),
      x_dim_(x_dim),
      box_(std::move(box)),
      part_(std::move(part)),
      part_grad_(std::move(part_grad)),
      part_hess_(std::move(part_hess)) {
  if (p_ < 0) throw DomainError("model: negative parameter count");
  if (box_.size() != p_ + 1) {
    std::ostringstream msg;
    msg << "model '" << family_ << "': parameter box has " << box_.size() << " coordinates, expected "
        << p_ + 1;
    throw DomainError(msg.str());
  }
  if (p_ > 0 && (!part_ || !part_grad_)) {
    throw DomainError("model '" + family_ + "': missing evaluation or gradient rule");
  }
}

double Model::value(const VectorRef& x, const VectorRef& theta) const {
  if (p_ == 0) return theta[0];
  return theta[0] + part_(x, theta.tail(p_));
}

void Model::gradient(const VectorRef& x, const VectorRef& theta, Eigen::Ref<Vector> out) const {
  out[0] = 1.0;
  if (p_ > 0) part_grad_(x, theta.tail(p_), out.tail(p_));
}

Matrix Model::hessian(const VectorRef& x, const VectorRef& theta) const {
  if (p_ == 0) return Matrix(0, 0);
  if (part_hess_) return part_hess_(x, theta.tail(p_));
  Matrix hess(p_, p_);
  Vector star = theta.tail(p_);
  Vector gp(p_), gm(p_);
  for (int j = 0; j < p_; ++j) {
    const double h = 1e-5 * (1.0 + std::abs(star[j]));
    const double orig = star[j];
    star[j] = orig + h;
    part_grad_(x, star, gp);
    star[j] = orig - h;
    part_grad_(x, star, gm);
    star[j] = orig;
    hess.col(j) = (gp - gm) / (2.0 * h);
  }
  return 0.5 * (hess + hess.transpose());
}

void Model::require_in_box(const VectorRef& theta) const {
  if (theta.size() != num_params()) {
    std::ostringstream msg;
    msg << "model '" << family_ << "': expected " << num_params() << " parameters, got "
        << theta.size();
    throw DomainError(msg.str());
  }
  if (!box_.contains(theta)) {
    std::ostringstream msg;
    msg << "model '" << family_ << "': parameter (" << theta.transpose()
        << ") lies outside the parameter box";
    throw DomainError(msg.str());
  }
}

Model Model::with_box(ParamBox box) const {
  return Model(family_, p_, x_dim_, std::move(box), part_, part_grad_, part_hess_);
}

namespace {

double logistic_unit(double u) {
  // 1 / (1 + exp(u)) without overflow
  if (u > 0.0) {
    const double e = std::exp(-u);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(u));
}

}  // namespace

std::vector<std::string> family_names() {
  return {"constant", "linear", "exponential", "biexponential", "logistic"};
}

int family_num_params(const std::string& name, int q) {
  if (name == "constant") return 1;
  if (name == "linear") return q + 1;
  if (name == "exponential") return 3;
  if (name == "biexponential" || name == "logistic") return 4;
  throw DomainError("unknown model family '" + name + "'");
}

Model make_family(const std::string& name, ParamBox box, int q) {
  if (name == "constant") {
    return Model(name, 0, 0, std::move(box), {}, {});
  }
  if (name == "linear") {
    if (q < 1) throw DomainError("linear family needs at least one design column");
    return Model(
        name, q, q, std::move(box),
        [q](const VectorRef& x, const VectorRef& t) { return x.head(q).dot(t); },
        [q](const VectorRef& x, const VectorRef&, Eigen::Ref<Vector> out) { out = x.head(q); },
        [q](const VectorRef&, const VectorRef&) { return Matrix::Zero(q, q).eval(); });
  }
  if (name == "exponential") {
    return Model(
        name, 2, 1, std::move(box),
        [](const VectorRef& x, const VectorRef& t) { return t[0] * std::exp(-t[1] * x[0]); },
        [](const VectorRef& x, const VectorRef& t, Eigen::Ref<Vector> out) {
          const double e = std::exp(-t[1] * x[0]);
          out[0] = e;
          out[1] = -t[0] * x[0] * e;
        },
        [](const VectorRef& x, const VectorRef& t) {
          const double e = std::exp(-t[1] * x[0]);
          Matrix h(2, 2);
          h << 0.0, -x[0] * e, -x[0] * e, t[0] * x[0] * x[0] * e;
          return h;
        });
  }
  if (name == "biexponential") {
    return Model(
        name, 3, 1, std::move(box),
        [](const VectorRef& x, const VectorRef& t) {
          return t[0] * (std::exp(-t[1] * x[0]) - std::exp(-t[2] * x[0]));
        },
        [](const VectorRef& x, const VectorRef& t, Eigen::Ref<Vector> out) {
          const double e2 = std::exp(-t[1] * x[0]);
          const double e3 = std::exp(-t[2] * x[0]);
          out[0] = e2 - e3;
          out[1] = -t[0] * x[0] * e2;
          out[2] = t[0] * x[0] * e3;
        },
        [](const VectorRef& x, const VectorRef& t) {
          const double s = x[0];
          const double e2 = std::exp(-t[1] * s);
          const double e3 = std::exp(-t[2] * s);
          Matrix h(3, 3);
          h << 0.0, -s * e2, s * e3,              //
              -s * e2, t[0] * s * s * e2, 0.0,    //
              s * e3, 0.0, -t[0] * s * s * e3;
          return h;
        });
  }
  if (name == "logistic") {
    // No analytic Hessian; diagnostics fall back to differences.
    return Model(
        name, 3, 1, std::move(box),
        [](const VectorRef& x, const VectorRef& t) {
          return t[0] * logistic_unit(t[1] - t[2] * x[0]);
        },
        [](const VectorRef& x, const VectorRef& t, Eigen::Ref<Vector> out) {
          const double s = logistic_unit(t[1] - t[2] * x[0]);
          const double ds = s * (1.0 - s);
          out[0] = s;
          out[1] = -t[0] * ds;
          out[2] = t[0] * x[0] * ds;
        });
  }
  throw DomainError("unknown model family '" + name + "'");
}

Dataset::Dataset(Vector y, Matrix x, std::optional<Matrix> z)
    : y_(std::move(y)), x_(std::move(x)), z_(std::move(z)) {
  if (x_.rows() != y_.size()) {
    throw SchemaError("dataset: design has " + std::to_string(x_.rows()) + " rows but there are " +
                      std::to_string(y_.size()) + " responses");
  }
  if (z_ && z_->rows() != y_.size()) {
    throw SchemaError("dataset: tested regressors have " + std::to_string(z_->rows()) +
                      " rows but there are " + std::to_string(y_.size()) + " responses");
  }
  if (!y_.allFinite()) throw DomainError("dataset: non-finite response");
  if (!x_.allFinite()) throw DomainError("dataset: non-finite design entry");
  if (z_ && !z_->allFinite()) throw DomainError("dataset: non-finite tested regressor");
  if (x_.size() > 0 && x_.minCoeff() < 0.0) {
    throw DomainError("dataset: design points must be nonnegative");
  }
}

const Matrix& Dataset::z() const {
  if (!z_) throw SchemaError("dataset has no tested regressors (z columns)");
  return *z_;
}

Dataset Dataset::with_y(Vector y) const { return Dataset(std::move(y), x_, z_); }

Dataset Dataset::without_z() const { return Dataset(y_, x_); }

void Dataset::require_fits(const Model& model) const {
  if (n() < model.p() + 2) {
    throw DomainError("dataset: n = " + std::to_string(n()) + " is too small for " +
                      std::to_string(model.num_params()) + " parameters (need n >= p + 2)");
  }
  if (q() < model.x_dim()) {
    throw SchemaError("dataset: family '" + model.family() + "' needs " +
                      std::to_string(model.x_dim()) + " design columns, found " +
                      std::to_string(q()));
  }
}

double eval_g(const Model& model, const VectorRef& x, const VectorRef& theta) {
  model.require_in_box(theta);
  if (!x.allFinite()) throw DomainError("eval_g: non-finite design point");
  if (x.size() < model.x_dim()) throw DomainError("eval_g: design point too short");
  const double value = model.value(x, theta);
  if (!std::isfinite(value)) throw DomainError("eval_g: non-finite regression value");
  return value;
}

void fill_design(const Model& model, const Matrix& x, const VectorRef& theta, Matrix& v) {
  const Eigen::Index n = x.rows();
  v.resize(n, model.num_params());
  Vector row(model.num_params());
  for (Eigen::Index i = 0; i < n; ++i) {
    model.gradient(x.row(i).transpose(), theta, row);
    v.row(i) = row.transpose();
  }
}

DesignEval eval_design(const Model& model, const Dataset& data, const VectorRef& theta) {
  model.require_in_box(theta);
  if (data.q() < model.x_dim()) throw SchemaError("eval_design: too few design columns");
  DesignEval out;
  fill_design(model, data.x(), theta, out.v);
  if (!out.v.allFinite()) throw DomainError("eval_design: non-finite gradient");
  out.q = (out.v.transpose() * out.v) / static_cast<double>(data.n());
  return out;
}

double check_gradient(const Model& model, const Dataset& data, const VectorRef& theta, double h) {
  if (!(h > 0.0) || !std::isfinite(h)) throw DomainError("check_gradient: step must be positive");
  model.require_in_box(theta);
  const ParamBox& box = model.box();
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    if (theta[j] - h < box.lower()[j] - kBoxSlack || theta[j] + h > box.upper()[j] + kBoxSlack) {
      throw DomainError("check_gradient: theta must be interior to the box by at least h");
    }
  }
  const DesignEval design = eval_design(model, data, theta);
  double worst = 0.0;
  Vector plus = theta;
  Vector minus = theta;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    // Use the exactly representable step actually taken.
    const double up = theta[j] + h;
    const double down = theta[j] - h;
    const double span = up - down;
    plus[j] = up;
    minus[j] = down;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      const auto xi = data.x().row(i).transpose();
      const double fd = (model.value(xi, plus) - model.value(xi, minus)) / span;
      const double analytic = design.v(i, j);
      worst = std::max(worst, std::abs(analytic - fd) / std::max(1.0, std::abs(analytic)));
    }
    plus[j] = theta[j];
    minus[j] = theta[j];
  }
  return worst;
}

RegularityReport check_regularity(const Model& model, const Dataset& data, int samples,
                                  std::uint64_t seed) {
  if (samples < 2) throw DomainError("check_regularity: need at least 2 samples");
  data.require_fits(model);

  const ParamBox& box = model.box();
  const int k = model.num_params();
  const Eigen::Index n = data.n();
  Rng rng(seed);

  auto draw = [&] {
    Vector t(k);
    for (int j = 0; j < k; ++j) t[j] = rng.uniform(box.lower()[j], box.upper()[j]);
    return t;
  };
  auto values = [&](const Vector& t) {
    Vector g(n);
    for (Eigen::Index i = 0; i < n; ++i) g[i] = model.value(data.x().row(i).transpose(), t);
    return g;
  };

  RegularityReport rep;
  rep.samples = samples;
  rep.lipschitz_ratio_min = std::numeric_limits<double>::infinity();
  rep.lipschitz_ratio_max = 0.0;
  rep.q_min_eigenvalue = std::numeric_limits<double>::infinity();
  rep.q_max_eigenvalue = 0.0;

  // sign_seen(i, j): bit 1 = positive seen, bit 2 = negative seen.
  Eigen::MatrixXi sign_seen = Eigen::MatrixXi::Zero(n, k);

  auto record_ratio = [&](const Vector& a, const Vector& b) {
    const double dist2 = (b - a).squaredNorm();
    if (dist2 <= 0.0) return;
    const double ratio = (values(b) - values(a)).squaredNorm() / static_cast<double>(n) / dist2;
    rep.lipschitz_ratio_min = std::min(rep.lipschitz_ratio_min, ratio);
    rep.lipschitz_ratio_max = std::max(rep.lipschitz_ratio_max, ratio);
  };

  Matrix v;
  for (int s = 0; s < samples; ++s) {
    const Vector t1 = draw();
    const Vector t2 = draw();
    record_ratio(t1, t2);
    // Also move along a single coordinate so a parameter with no effect is
    // detected exactly.
    Vector t3 = t1;
    const int axis = s % k;
    t3[axis] = rng.uniform(box.lower()[axis], box.upper()[axis]);
    record_ratio(t1, t3);

    fill_design(model, data.x(), t1, v);
    const Matrix q = (v.transpose() * v) / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(q, Eigen::EigenvaluesOnly);
    rep.q_min_eigenvalue = std::min(rep.q_min_eigenvalue, eig.eigenvalues().minCoeff());
    rep.q_max_eigenvalue = std::max(rep.q_max_eigenvalue, eig.eigenvalues().maxCoeff());
    rep.fourth_moment_max = std::max(
        rep.fourth_moment_max, v.rowwise().squaredNorm().array().square().sum() / static_cast<double>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int j = 0; j < k; ++j) {
        if (v(i, j) > 0.0) sign_seen(i, j) |= 1;
        if (v(i, j) < 0.0) sign_seen(i, j) |= 2;
      }
      if (model.p() > 0) {
        rep.hessian_norm_max =
            std::max(rep.hessian_norm_max, model.hessian(data.x().row(i).transpose(), t1).norm());
      }
    }
  }

  rep.monotone_columns.assign(k, true);
  for (int j = 0; j < k; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (sign_seen(i, j) == 3) rep.monotone_columns[j] = false;
    }
  }
  rep.monotone = std::all_of(rep.monotone_columns.begin(), rep.monotone_columns.end(),
                             [](bool b) { return b; });
  rep.q_positive_definite = rep.q_min_eigenvalue > 1e-10 * std::max(1.0, rep.q_max_eigenvalue);
  rep.lipschitz_lower_positive = rep.lipschitz_ratio_min > 1e-10;

  if (!rep.q_positive_definite) {
    rep.warnings.push_back("Q_n(theta) is numerically singular at some sampled theta");
  }
  if (!rep.lipschitz_lower_positive) {
    rep.warnings.push_back(
        "lower Lipschitz ratio is ~0: some parameter change leaves g unchanged on the design");
  }
  for (int j = 0; j < k; ++j) {
    if (!rep.monotone_columns[j]) {
      rep.warnings.push_back("gradient column " + std::to_string(j) +
                             " changes sign: g is not monotone in that coordinate over the box");
    }
  }
  return rep;
}

}  // namespace nlrank
