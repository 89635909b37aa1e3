#pragma once

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "adabatch/dataset.hpp"

namespace adabatch {

enum class Loss { ridge, logistic };

std::string to_string(Loss loss);
Loss loss_from_string(const std::string& name);

/// An iterative routine stopped at its iteration cap.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Finite-sum objective f(x) = (1/n) sum_i f_i(x), where f_i is n times the
/// i-th data term plus (lambda/2)|x|^2.
///
///   ridge:    f_i(x) = 1/2 (a_i'x - b_i)^2          + lambda/2 |x|^2
///   logistic: f_i(x) = 1/2 log(1 + exp(b_i a_i'x))  + lambda/2 |x|^2
///
/// The logistic term keeps the sign convention exp(+b_i a_i'x).
class Objective {
 public:
  Objective(Loss loss, double lambda, std::shared_ptr<const Dataset> data);

  Loss loss() const noexcept { return loss_; }
  double lambda() const noexcept { return lambda_; }
  std::size_t n() const noexcept { return data_->n(); }
  std::size_t d() const noexcept { return data_->d(); }
  const Dataset& data() const noexcept { return *data_; }
  double row_squared_norm(std::size_t i) const { return row_sq_norms_[i]; }

  double value(const Eigen::VectorXd& x) const;
  double component_value(std::size_t i, const Eigen::VectorXd& x) const;

  /// Gradient of f_i at x. Throws std::out_of_range for a bad index.
  Eigen::VectorXd component_gradient(std::size_t i, const Eigen::VectorXd& x) const;
  /// out += scale * grad f_i(x), without allocating.
  void add_component_gradient(std::size_t i, const Eigen::VectorXd& x, double scale,
                              Eigen::VectorXd& out) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;

  /// Curvature bound of the data term along a_i, i.e. the scalar c_i with
  /// Hess f_i <= c_i a_i a_i' + lambda I (ridge: 1, logistic: b_i^2 / 8).
  double curvature_weight(std::size_t i) const;

 private:
  /// Derivative of the scalar data term with respect to z = a_i'x.
  double link_derivative(std::size_t i, double z) const;

  Loss loss_;
  double lambda_;
  std::shared_ptr<const Dataset> data_;
  std::vector<double> row_sq_norms_;
};

struct SmoothnessProfile {
  std::vector<double> component;     ///< L_i
  double global = 0.0;               ///< L
  std::vector<double> partition;     ///< L_Cj, smoothness of the partition mean
  std::vector<double> partition_max; ///< max_{i in Cj} L_i
  std::vector<double> partition_mean;///< average L_i over Cj (diagnostic only)
  double mu = 0.0;                   ///< strong convexity constant

  double max_component() const;
};

struct PowerIterationOptions {
  double tolerance = 1e-9;
  std::size_t max_iterations = 10000;
};

/// Largest eigenvalue of (1/|S|) sum_{i in S} c_i a_i a_i' by power iteration.
double top_eigenvalue(const Objective& obj, const std::vector<std::size_t>& subset,
                      const PowerIterationOptions& opts = {});

SmoothnessProfile smoothness_profile(const Objective& obj, const Partitioning& part,
                                     const PowerIterationOptions& opts = {});

/// Reference minimizer. Ridge: conjugate gradient on the normal equations
/// until the residual is <= tol. Logistic: gradient descent with step 1/L
/// until |grad f| <= tol.
Eigen::VectorXd solve_reference(const Objective& obj, double tol,
                                std::size_t max_iterations = 0);

}  // namespace adabatch
