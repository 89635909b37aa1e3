#include "adabatch/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

namespace adabatch {

namespace {

double as_real(std::size_t v) { return static_cast<double>(v); }

void check_profile(const SamplingStrategy& s, const SmoothnessProfile& p) {
  if (p.partition.size() != s.partitioning().num_sets() || p.component.size() != s.n())
    throw std::invalid_argument("smoothness profile was computed for a different partitioning");
}

void check_aggregates(const SamplingStrategy& s, const NoiseAggregates& agg) {
  if (agg.partition_grad.size() != s.partitioning().num_sets() || agg.h.size() != s.n())
    throw std::invalid_argument("noise aggregates were computed for a different partitioning");
}

void require_pairs(const SamplingStrategy& s) {
  const auto& part = s.partitioning();
  for (std::size_t j = 0; j < part.num_sets(); ++j)
    if (part.set_size(j) < 2)
      throw std::domain_error(fmt::format(
          "nice sampling formulas need every partition to hold >= 2 examples (set {} has 1)", j));
}

SamplingStrategy at_tau(const SamplingStrategy& family, std::size_t tau) {
  return tau == family.tau() ? family : family.with_tau(tau);
}

}  // namespace

NoiseAggregates aggregates_from_sums(const Partitioning& part, std::vector<double> h,
                                     const std::vector<Eigen::VectorXd>& set_grad_sums) {
  NoiseAggregates agg;
  agg.h = std::move(h);
  double total = 0.0;
  for (std::size_t j = 0; j < part.num_sets(); ++j) {
    const double m = as_real(part.set_size(j));
    double sum = 0.0;
    for (std::size_t i : part.set(j)) sum += agg.h[i];
    total += sum;
    agg.partition_mean.push_back(sum / m);
    agg.partition_grad.push_back(set_grad_sums[j].squaredNorm() / (m * m));
  }
  agg.mean = total / as_real(part.n());
  return agg;
}

NoiseAggregates noise_aggregates_exact(const Objective& obj, const Partitioning& part,
                                       const Eigen::VectorXd& x) {
  if (part.n() != obj.n()) throw std::invalid_argument("partitioning does not match dataset size");
  const auto d = static_cast<Eigen::Index>(obj.d());
  std::vector<double> h(obj.n());
  std::vector<Eigen::VectorXd> sums(part.num_sets(), Eigen::VectorXd::Zero(d));
  Eigen::VectorXd g(d);
  for (std::size_t i = 0; i < obj.n(); ++i) {
    g.setZero();
    obj.add_component_gradient(i, x, 1.0, g);
    h[i] = g.squaredNorm();
    sums[part.owner(i)] += g;
  }
  return aggregates_from_sums(part, std::move(h), sums);
}

double expected_smoothness(const SamplingStrategy& s, const SmoothnessProfile& p) {
  check_profile(s, p);
  const auto& part = s.partitioning();
  const double n = as_real(s.n());
  const double tau = as_real(s.tau());
  if (s.n() == 1) return p.global;

  double best = 0.0;
  if (s.is_nice()) {
    require_pairs(s);
    for (std::size_t j = 0; j < part.num_sets(); ++j) {
      const double m = as_real(part.set_size(j));
      const double v = m / part.e(j) *
                       ((tau - 1.0) * p.partition[j] * m + (m - tau) * p.partition_max[j]);
      best = std::max(best, v);
    }
    return best / (n * tau);
  }
  for (std::size_t j = 0; j < part.num_sets(); ++j) {
    const double q = part.prob(j);
    double worst = 0.0;
    for (std::size_t i : part.set(j)) {
      const double pi = s.inclusion_prob(i);
      worst = std::max(worst, p.component[i] * (1.0 - pi) / (q * pi));
    }
    best = std::max(best, as_real(part.set_size(j)) * p.partition[j] / q + worst);
  }
  return best / n;
}

double expected_smoothness(const SamplingStrategy& family, std::size_t tau,
                           const SmoothnessProfile& p) {
  return expected_smoothness(at_tau(family, tau), p);
}

double gradient_noise(const SamplingStrategy& s, const NoiseAggregates& agg) {
  check_aggregates(s, agg);
  const auto& part = s.partitioning();
  const double n = as_real(s.n());
  const double tau = as_real(s.tau());
  if (s.n() == 1) return agg.partition_grad[0];

  double total = 0.0;
  if (s.is_nice()) {
    require_pairs(s);
    for (std::size_t j = 0; j < part.num_sets(); ++j) {
      const double m = as_real(part.set_size(j));
      total += m * m / part.e(j) *
               ((tau - 1.0) * agg.partition_grad[j] * m + (m - tau) * agg.partition_mean[j]);
    }
    return total / (n * n * tau);
  }
  for (std::size_t j = 0; j < part.num_sets(); ++j) {
    const double m = as_real(part.set_size(j));
    double inner = m * m * agg.partition_grad[j];
    for (std::size_t i : part.set(j)) {
      const double pi = s.inclusion_prob(i);
      inner += (1.0 - pi) / pi * agg.h[i];
    }
    total += inner / part.prob(j);
  }
  return total / (n * n);
}

double gradient_noise(const SamplingStrategy& family, std::size_t tau, const NoiseAggregates& agg) {
  return gradient_noise(at_tau(family, tau), agg);
}

double nice_expected_smoothness(std::size_t n_, std::size_t tau_, double L, double L_max) {
  if (n_ == 1) return L;
  const double n = as_real(n_), tau = as_real(tau_);
  return n * (tau - 1.0) / (tau * (n - 1.0)) * L + (n - tau) / (tau * (n - 1.0)) * L_max;
}

double independent_expected_smoothness(double L, const std::vector<double>& component_L,
                                       const std::vector<double>& probs) {
  const double n = as_real(component_L.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < component_L.size(); ++i)
    worst = std::max(worst, (1.0 - probs[i]) * component_L[i] / (probs[i] * n));
  return L + worst;
}

double nice_noise_at_optimum(std::size_t n_, std::size_t tau_, double sum_h) {
  if (n_ == 1) return 0.0;
  const double n = as_real(n_), tau = as_real(tau_);
  return (n - tau) / (n * tau * (n - 1.0)) * sum_h;
}

double independent_noise_at_optimum(const std::vector<double>& h, const std::vector<double>& probs) {
  const double n = as_real(h.size());
  double s = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) s += (1.0 - probs[i]) / probs[i] * h[i];
  return s / (n * n);
}

double step_size(double expected_L, double sigma, double eps, double mu, double cap) {
  if (!(expected_L > 0.0)) throw std::invalid_argument("expected smoothness must be positive");
  if (!(mu > 0.0) || !(eps > 0.0)) throw std::invalid_argument("mu and eps must be positive");
  const double noise = cap > 0.0 ? std::min(cap, 2.0 * sigma) : 2.0 * sigma;
  const double smooth_step = 1.0 / expected_L;
  if (!(noise > 0.0)) return 0.5 * smooth_step;
  return 0.5 * std::min(smooth_step, eps * mu / noise);
}

std::uint64_t iteration_bound(double expected_L, double sigma, double eps, double mu,
                              double x0_dist_sq) {
  if (x0_dist_sq <= eps / 2.0) return 0;
  const double k = 2.0 / mu * std::max(expected_L, 2.0 * sigma / (eps * mu)) *
                   std::log(2.0 * x0_dist_sq / eps);
  return static_cast<std::uint64_t>(std::ceil(k));
}

ComplexityTerms total_complexity(const SamplingStrategy& s, const SmoothnessProfile& p,
                                 const NoiseAggregates& agg_at_xstar, double eps, double mu,
                                 double x0_dist_sq) {
  ComplexityTerms t;
  const double tau = as_real(s.tau());
  t.smoothness_term = tau * expected_smoothness(s, p);
  t.noise_term = 2.0 / (eps * mu) * tau * gradient_noise(s, agg_at_xstar);
  t.log_factor = std::log(2.0 * x0_dist_sq / eps);
  t.value = 2.0 / mu * t.max_term() * t.log_factor;
  return t;
}

namespace {

double max_term(const SamplingStrategy& family, std::size_t tau, const SmoothnessProfile& p,
                const NoiseAggregates& agg, double eps, double mu) {
  const auto s = at_tau(family, tau);
  const double t = as_real(tau);
  return std::max(t * expected_smoothness(s, p), 2.0 / (eps * mu) * t * gradient_noise(s, agg));
}

}  // namespace

std::size_t scan_optimal_tau(const SamplingStrategy& family, const SmoothnessProfile& p,
                             const NoiseAggregates& agg, double eps, double mu) {
  std::size_t best = 1;
  double best_val = std::numeric_limits<double>::infinity();
  for (std::size_t tau = 1; tau <= family.max_tau(); ++tau) {
    const double v = max_term(family, tau, p, agg, eps, mu);
    if (v < best_val) {
      best_val = v;
      best = tau;
    }
  }
  return best;
}

TauChoice optimal_tau(const SamplingStrategy& family, const SmoothnessProfile& p,
                      const NoiseAggregates& agg, double eps, double mu) {
  check_profile(family, p);
  check_aggregates(family, agg);
  if (!family.has_default_probs())
    throw std::invalid_argument("optimal batch size requires p_i = tau / n_Cj inclusion probabilities");

  TauChoice choice;
  const std::size_t tau_max = family.max_tau();
  if (family.n() == 1 || tau_max == 1) return choice;

  const auto& part = family.partitioning();
  const double n = as_real(family.n());
  const double c = 2.0 / (eps * mu);
  const std::size_t K = part.num_sets();

  // tau*L(tau) is a max of increasing lines l_r(tau) = A_r tau + B_r and
  // c*tau*sigma(tau) is a single line S2' tau + S1'; the minimizer of the max
  // is the leftmost crossing (scaled by n^2 throughout).
  double slope_noise = 0.0;   // sum over sets of the noise slope, negated
  double offset_noise = 0.0;  // noise intercept
  std::vector<double> A(K), B(K);
  if (family.is_nice()) {
    require_pairs(family);
    for (std::size_t j = 0; j < K; ++j) {
      const double m = as_real(part.set_size(j));
      const double e = part.e(j);
      slope_noise += m * m / e * (agg.partition_mean[j] - m * agg.partition_grad[j]);
      offset_noise += m * m * m / e * (agg.partition_mean[j] - agg.partition_grad[j]);
      A[j] = n * m / e * (m * p.partition[j] - p.partition_max[j]);
      B[j] = n * m * m / e * (p.partition[j] - p.partition_max[j]);
    }
  } else {
    for (std::size_t j = 0; j < K; ++j) {
      const double m = as_real(part.set_size(j));
      const double q = part.prob(j);
      slope_noise += m / q * (agg.partition_mean[j] - m * agg.partition_grad[j]);
      offset_noise += m * m / q * agg.partition_mean[j];
      A[j] = n / q * (m * p.partition[j] - p.partition_max[j]);
      B[j] = -n * m / q * p.partition_max[j];
    }
  }

  if (slope_noise < 0.0) {
    choice.gated = true;
    return choice;
  }

  double tau_real = std::numeric_limits<double>::infinity();
  bool degenerate = false;
  for (std::size_t r = 0; r < K; ++r) {
    const double den = A[r] + c * slope_noise;
    if (!(den > 0.0)) {
      degenerate = true;
      continue;
    }
    const double t = (B[r] + c * offset_noise) / den;
    if (t < tau_real) {
      tau_real = t;
      choice.binding_set = r;
    }
  }
  if (degenerate || !std::isfinite(tau_real)) {
    choice.fallback = true;
    choice.tau = scan_optimal_tau(family, p, agg, eps, mu);
    choice.tau_real = as_real(choice.tau);
    return choice;
  }

  choice.tau_real = tau_real;
  const double clamped = std::clamp(tau_real, 1.0, as_real(tau_max));
  const auto lo = static_cast<std::size_t>(std::floor(clamped));
  const auto hi = static_cast<std::size_t>(std::ceil(clamped));
  if (lo == hi) {
    choice.tau = lo;
  } else {
    choice.tau = max_term(family, hi, p, agg, eps, mu) < max_term(family, lo, p, agg, eps, mu) ? hi : lo;
  }
  return choice;
}

StepBounds step_bounds(const SamplingStrategy& family, const SmoothnessProfile& p, double eps,
                       double mu, double cap) {
  double inv_min = std::numeric_limits<double>::infinity();
  double inv_max = 0.0;
  for (std::size_t tau = 1; tau <= family.max_tau(); ++tau) {
    const double inv = 1.0 / expected_smoothness(family, tau, p);
    inv_min = std::min(inv_min, inv);
    inv_max = std::max(inv_max, inv);
  }
  StepBounds b;
  b.gamma_max = 0.5 * inv_max;
  b.gamma_min = cap > 0.0 ? 0.5 * std::min(inv_min, eps * mu / cap) : 0.0;
  return b;
}

NoiseCheck verify_noise_formula(const SamplingStrategy& s, const Objective& obj,
                                const SmoothnessProfile& p, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& x_star) {
  const auto outcomes = enumerate(s);
  const std::size_t n = obj.n();
  const auto d = static_cast<Eigen::Index>(obj.d());
  std::vector<Eigen::VectorXd> g(n), g_star(n);
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = obj.component_gradient(i, x);
    g_star[i] = obj.component_gradient(i, x_star);
  }
  const double inv_n = 1.0 / as_real(n);
  NoiseCheck out;
  Eigen::VectorXd gv(d), dv(d);
  for (const auto& w : outcomes) {
    gv.setZero();
    dv.setZero();
    for (std::size_t k = 0; k < w.draw.size(); ++k) {
      const std::size_t i = w.draw.indices[k];
      const double scale = inv_n * w.draw.weights[k];
      gv += scale * g[i];
      dv += scale * (g[i] - g_star[i]);
    }
    out.enumerated += w.probability * gv.squaredNorm();
    out.smoothness_lhs += w.probability * dv.squaredNorm();
  }
  out.formula = gradient_noise(s, noise_aggregates_exact(obj, s.partitioning(), x));
  out.abs_diff = std::abs(out.formula - out.enumerated);
  out.smoothness_rhs = 2.0 * expected_smoothness(s, p) * (obj.value(x) - obj.value(x_star));
  return out;
}

}  // namespace adabatch
