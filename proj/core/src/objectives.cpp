#include "adabatch/objectives.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "adabatch/rng.hpp"

namespace adabatch {

std::string to_string(Loss loss) {
  return loss == Loss::ridge ? "ridge" : "logistic";
}

Loss loss_from_string(const std::string& name) {
  if (name == "ridge") return Loss::ridge;
  if (name == "logistic") return Loss::logistic;
  throw std::invalid_argument(fmt::format("unknown objective '{}'", name));
}

namespace {

// log(1 + exp(z)) without overflow.
double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Objective::Objective(Loss loss, double lambda, std::shared_ptr<const Dataset> data)
    : loss_(loss), lambda_(lambda), data_(std::move(data)) {
  if (!data_) throw std::invalid_argument("objective needs a dataset");
  if (!(lambda_ > 0.0))
    throw std::invalid_argument("regularization lambda must be positive");
  row_sq_norms_.reserve(data_->n());
  for (const auto& r : data_->rows()) row_sq_norms_.push_back(r.squared_norm());
}

double Objective::component_value(std::size_t i, const Eigen::VectorXd& x) const {
  const double z = data_->row(i).dot(x);
  const double b = data_->label(i);
  const double reg = 0.5 * lambda_ * x.squaredNorm();
  if (loss_ == Loss::ridge) return 0.5 * (z - b) * (z - b) + reg;
  return 0.5 * softplus(b * z) + reg;
}

double Objective::value(const Eigen::VectorXd& x) const {
  double s = 0.0;
  for (std::size_t i = 0; i < n(); ++i) {
    const double z = data_->row(i).dot(x);
    const double b = data_->label(i);
    s += loss_ == Loss::ridge ? 0.5 * (z - b) * (z - b) : 0.5 * softplus(b * z);
  }
  return s / static_cast<double>(n()) + 0.5 * lambda_ * x.squaredNorm();
}

double Objective::link_derivative(std::size_t i, double z) const {
  const double b = data_->label(i);
  if (loss_ == Loss::ridge) return z - b;
  return 0.5 * b * sigmoid(b * z);
}

void Objective::add_component_gradient(std::size_t i, const Eigen::VectorXd& x,
                                       double scale, Eigen::VectorXd& out) const {
  const auto& row = data_->row(i);
  row.axpy(scale * link_derivative(i, row.dot(x)), out);
  out.noalias() += (scale * lambda_) * x;
}

Eigen::VectorXd Objective::component_gradient(std::size_t i, const Eigen::VectorXd& x) const {
  if (i >= n())
    throw std::out_of_range(fmt::format("component index {} out of range (n={})", i, n()));
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d()));
  add_component_gradient(i, x, 1.0, g);
  return g;
}

Eigen::VectorXd Objective::gradient(const Eigen::VectorXd& x) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d()));
  const double inv_n = 1.0 / static_cast<double>(n());
  for (std::size_t i = 0; i < n(); ++i) {
    const auto& row = data_->row(i);
    row.axpy(inv_n * link_derivative(i, row.dot(x)), g);
  }
  g.noalias() += lambda_ * x;
  return g;
}

double Objective::curvature_weight(std::size_t i) const {
  if (loss_ == Loss::ridge) return 1.0;
  const double b = data_->label(i);
  // (1/2) * sup sigmoid' = 1/8, times b^2 from the chain rule.
  return b * b / 8.0;
}

double SmoothnessProfile::max_component() const {
  return *std::max_element(component.begin(), component.end());
}

double top_eigenvalue(const Objective& obj, const std::vector<std::size_t>& subset,
                      const PowerIterationOptions& opts) {
  const auto d = static_cast<Eigen::Index>(obj.d());
  const auto& data = obj.data();
  const double inv_m = 1.0 / static_cast<double>(subset.size());

  auto apply = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(d);
    for (std::size_t i : subset) {
      const auto& row = data.row(i);
      row.axpy(inv_m * obj.curvature_weight(i) * row.dot(v), out);
    }
    return out;
  };

  Rng rng(0x5eed);
  Eigen::VectorXd v(d);
  for (Eigen::Index k = 0; k < d; ++k) v[k] = 1.0 + 0.1 * rng.normal();
  v.normalize();

  double theta = 0.0;
  double residual = 0.0;
  for (std::size_t it = 0; it < opts.max_iterations; ++it) {
    Eigen::VectorXd w = apply(v);
    const double next = v.dot(w);
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;  // subset spans nothing
    residual = (w - next * v).norm();
    if (it > 0 && std::abs(next - theta) <= opts.tolerance * std::abs(next)) return next;
    theta = next;
    v = w / wn;
  }
  throw ConvergenceError(
      fmt::format("power iteration did not converge in {} iterations (residual {:.3e})",
                  opts.max_iterations, residual),
      residual);
}

SmoothnessProfile smoothness_profile(const Objective& obj, const Partitioning& part,
                                     const PowerIterationOptions& opts) {
  if (part.n() != obj.n())
    throw std::invalid_argument("partitioning does not match dataset size");
  SmoothnessProfile p;
  const double lambda = obj.lambda();
  p.component.resize(obj.n());
  for (std::size_t i = 0; i < obj.n(); ++i)
    p.component[i] = obj.curvature_weight(i) * obj.row_squared_norm(i) + lambda;

  std::vector<std::size_t> all(obj.n());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  p.global = top_eigenvalue(obj, all, opts) + lambda;

  for (std::size_t j = 0; j < part.num_sets(); ++j) {
    const auto& set = part.set(j);
    p.partition.push_back(top_eigenvalue(obj, set, opts) + lambda);
    double mx = 0.0, sum = 0.0;
    for (std::size_t i : set) {
      mx = std::max(mx, p.component[i]);
      sum += p.component[i];
    }
    p.partition_max.push_back(mx);
    p.partition_mean.push_back(sum / static_cast<double>(set.size()));
  }
  p.mu = lambda;
  return p;
}

Eigen::VectorXd solve_reference(const Objective& obj, double tol, std::size_t max_iterations) {
  if (!(tol > 0.0)) throw std::invalid_argument("solver tolerance must be positive");
  const auto d = static_cast<Eigen::Index>(obj.d());

  if (obj.loss() == Loss::ridge) {
    // ((1/n) A'A + lambda I) x = (1/n) A'b
    const auto& data = obj.data();
    const double inv_n = 1.0 / static_cast<double>(obj.n());
    auto apply = [&](const Eigen::VectorXd& v) {
      Eigen::VectorXd out = obj.lambda() * v;
      for (const auto& row : data.rows()) row.axpy(inv_n * row.dot(v), out);
      return out;
    };
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
    for (std::size_t i = 0; i < obj.n(); ++i) data.row(i).axpy(inv_n * data.label(i), rhs);

    const std::size_t cap = max_iterations ? max_iterations : 10 * static_cast<std::size_t>(d) + 1000;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd r = rhs;
    Eigen::VectorXd p = r;
    double rr = r.squaredNorm();
    for (std::size_t it = 0; it < cap; ++it) {
      if (std::sqrt(rr) <= tol) return x;
      const Eigen::VectorXd ap = apply(p);
      const double alpha = rr / p.dot(ap);
      x += alpha * p;
      // Recompute the true residual periodically to shed accumulated drift.
      if ((it + 1) % 50 == 0)
        r = rhs - apply(x);
      else
        r -= alpha * ap;
      const double rr_next = r.squaredNorm();
      p = r + (rr_next / rr) * p;
      rr = rr_next;
    }
    const double res = (rhs - apply(x)).norm();
    if (res <= tol) return x;
    throw ConvergenceError(fmt::format("conjugate gradient hit {} iterations (residual {:.3e})", cap, res), res);
  }

  std::vector<std::size_t> all(obj.n());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const double step = 1.0 / (top_eigenvalue(obj, all) + obj.lambda());
  const std::size_t cap = max_iterations ? max_iterations : 1000000;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
  double gn = 0.0;
  for (std::size_t it = 0; it < cap; ++it) {
    const Eigen::VectorXd g = obj.gradient(x);
    gn = g.norm();
    if (gn <= tol) return x;
    x -= step * g;
  }
  throw ConvergenceError(fmt::format("gradient descent hit {} iterations (|grad| {:.3e})", cap, gn), gn);
}

}  // namespace adabatch
