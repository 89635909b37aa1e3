#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "adabatch/dataset.hpp"
#include "adabatch/objectives.hpp"
#include "adabatch/sampling.hpp"

namespace adabatch {

/// Gradient-norm statistics at a point x, grouped by partition.
struct NoiseAggregates {
  std::vector<double> h;              ///< h_i = |grad f_i(x)|^2
  std::vector<double> partition_mean; ///< hbar_Cj = mean of h_i over Cj
  std::vector<double> partition_grad; ///< h_Cj = |grad f_Cj(x)|^2
  double mean = 0.0;                  ///< hbar = mean of all h_i
};

/// One full pass over the data at x.
NoiseAggregates noise_aggregates_exact(const Objective& obj, const Partitioning& part,
                                       const Eigen::VectorXd& x);

/// Builds the aggregates from per-component norms and per-set gradient sums.
NoiseAggregates aggregates_from_sums(const Partitioning& part, std::vector<double> h,
                                     const std::vector<Eigen::VectorXd>& set_grad_sums);

/// Expected smoothness bound L(tau) for the strategy's own tau.
double expected_smoothness(const SamplingStrategy& s, const SmoothnessProfile& p);
double expected_smoothness(const SamplingStrategy& family, std::size_t tau,
                           const SmoothnessProfile& p);

/// Gradient noise sigma(x, tau) = E|grad f_v(x)|^2, exact for every x.
double gradient_noise(const SamplingStrategy& s, const NoiseAggregates& agg);
double gradient_noise(const SamplingStrategy& family, std::size_t tau,
                      const NoiseAggregates& agg);

// Single-set closed forms (tau-nice and tau-independent over all n examples).
double nice_expected_smoothness(std::size_t n, std::size_t tau, double L, double L_max);
double independent_expected_smoothness(double L, const std::vector<double>& component_L,
                                       const std::vector<double>& probs);
/// Noise at a minimizer, where the full gradient vanishes.
double nice_noise_at_optimum(std::size_t n, std::size_t tau, double sum_h);
double independent_noise_at_optimum(const std::vector<double>& h, const std::vector<double>& probs);

/// gamma = 1/2 min{1/L, eps*mu / m} with m = min(C, 2 sigma), or 2 sigma when
/// the cap is disabled (cap <= 0). A vanishing m selects 1/(2L).
double step_size(double expected_L, double sigma, double eps, double mu, double cap = 0.0);

/// ceil((2/mu) max{L, 2 sigma/(eps mu)} log(2 D / eps)), or 0 when D <= eps/2.
std::uint64_t iteration_bound(double expected_L, double sigma, double eps, double mu,
                              double x0_dist_sq);

struct ComplexityTerms {
  double smoothness_term = 0.0; ///< tau * L(tau)
  double noise_term = 0.0;      ///< 2/(eps mu) * tau * sigma(x*, tau)
  double log_factor = 0.0;      ///< log(2 |x0 - x*|^2 / eps)
  double value = 0.0;           ///< T(tau)

  double max_term() const { return smoothness_term > noise_term ? smoothness_term : noise_term; }
  bool noise_binding() const { return noise_term > smoothness_term; }
};

ComplexityTerms total_complexity(const SamplingStrategy& s, const SmoothnessProfile& p,
                                 const NoiseAggregates& agg_at_xstar, double eps, double mu,
                                 double x0_dist_sq);

struct TauChoice {
  std::size_t tau = 1;
  double tau_real = 1.0;     ///< unrounded minimizer before clamping
  bool gated = false;        ///< noise branch non-decreasing, so tau = 1
  bool fallback = false;     ///< degenerate denominator, resolved by scan
  std::size_t binding_set = 0;
};

/// Closed-form minimizer of max{tau L(tau), 2/(eps mu) tau sigma(tau)} over
/// integer tau in [1, max_tau]. The family must use default inclusion
/// probabilities (p_i = tau / n_Cj) for the independent variants.
TauChoice optimal_tau(const SamplingStrategy& family, const SmoothnessProfile& p,
                      const NoiseAggregates& agg, double eps, double mu);

/// Integer argmin of the same objective by exhaustive scan (smallest on ties).
std::size_t scan_optimal_tau(const SamplingStrategy& family, const SmoothnessProfile& p,
                             const NoiseAggregates& agg, double eps, double mu);

struct StepBounds {
  double gamma_min = 0.0;  ///< 0 when the cap is disabled (no positive bound)
  double gamma_max = 0.0;
};

StepBounds step_bounds(const SamplingStrategy& family, const SmoothnessProfile& p, double eps,
                       double mu, double cap);

struct NoiseCheck {
  double formula = 0.0;
  double enumerated = 0.0;
  double abs_diff = 0.0;
  /// Enumerated E|grad f_v(x) - grad f_v(x*)|^2.
  double smoothness_lhs = 0.0;
  /// 2 L(tau) (f(x) - f(x*)).
  double smoothness_rhs = 0.0;
};

/// Compares the noise formula with exhaustive enumeration of the sampling law
/// at x, and checks the expected-smoothness inequality against x_star.
NoiseCheck verify_noise_formula(const SamplingStrategy& s, const Objective& obj,
                                const SmoothnessProfile& p, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& x_star);

}  // namespace adabatch
