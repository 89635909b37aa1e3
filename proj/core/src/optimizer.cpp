#include "adabatch/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <thread>

#include <fmt/format.h>

#include "adabatch/rng.hpp"

namespace adabatch {

GradientTracker::GradientTracker(const Objective& obj, const Partitioning& part,
                                 const Eigen::VectorXd& x)
    : part_(&part) {
  if (part.n() != obj.n()) throw std::invalid_argument("partitioning does not match dataset size");
  const auto d = static_cast<Eigen::Index>(obj.d());
  grads_.assign(obj.n(), Eigen::VectorXd::Zero(d));
  h_.assign(obj.n(), 0.0);
  sums_.assign(part.num_sets(), Eigen::VectorXd::Zero(d));
  sum_h_.assign(part.num_sets(), 0.0);
  for (std::size_t i = 0; i < obj.n(); ++i) {
    obj.add_component_gradient(i, x, 1.0, grads_[i]);
    h_[i] = grads_[i].squaredNorm();
  }
  resync();
}

void GradientTracker::refresh(const Objective& obj, const std::vector<std::size_t>& indices,
                              const Eigen::VectorXd& x) {
  Eigen::VectorXd g(x.size());
  for (std::size_t i : indices) {
    g.setZero();
    obj.add_component_gradient(i, x, 1.0, g);
    const std::size_t j = part_->owner(i);
    sums_[j] += g - grads_[i];
    const double hi = g.squaredNorm();
    sum_h_[j] += hi - h_[i];
    grads_[i] = g;
    h_[i] = hi;
  }
}

double GradientTracker::resync() {
  double drift = 0.0;
  for (std::size_t j = 0; j < part_->num_sets(); ++j) {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(sums_[j].size());
    double sh = 0.0;
    for (std::size_t i : part_->set(j)) {
      s += grads_[i];
      sh += h_[i];
    }
    drift = std::max(drift, (s - sums_[j]).lpNorm<Eigen::Infinity>());
    sums_[j] = std::move(s);
    sum_h_[j] = sh;
  }
  return drift;
}

NoiseAggregates GradientTracker::aggregates() const {
  NoiseAggregates agg;
  agg.h = h_;
  double total = 0.0;
  for (std::size_t j = 0; j < part_->num_sets(); ++j) {
    const double m = static_cast<double>(part_->set_size(j));
    // Rounding in the incremental sum can leave a tiny negative value.
    const double sh = std::max(0.0, sum_h_[j]);
    agg.partition_mean.push_back(sh / m);
    agg.partition_grad.push_back(sums_[j].squaredNorm() / (m * m));
    total += sh;
  }
  agg.mean = total / static_cast<double>(h_.size());
  return agg;
}

void RunConfig::validate() const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (!(max_epochs > 0.0)) throw std::invalid_argument("max_epochs must be positive");
  if (cap < 0.0) throw std::invalid_argument("variance cap must be >= 0 (0 disables it)");
  if (trace_every == 0) throw std::invalid_argument("trace_every must be >= 1");
  if (recompute_every == 0) throw std::invalid_argument("recompute_every must be >= 1");
  if (!(resync_epochs > 0.0)) throw std::invalid_argument("resync_epochs must be positive");
}

Eigen::VectorXd initial_point(const RunConfig& cfg, std::size_t d) {
  if (cfg.x0) {
    if (static_cast<std::size_t>(cfg.x0->size()) != d)
      throw std::invalid_argument(
          fmt::format("initial point has dimension {}, expected {}", cfg.x0->size(), d));
    return *cfg.x0;
  }
  Rng rng(mix_seed(cfg.seed, 0x1));
  Eigen::VectorXd x(static_cast<Eigen::Index>(d));
  for (Eigen::Index k = 0; k < x.size(); ++k) x[k] = rng.normal();
  return x;
}

std::uint64_t fixed_stream_seed(std::uint64_t seed, std::size_t tau) {
  return mix_seed(seed, 0x100 + tau);
}

namespace {

struct StepPlan {
  const SamplingStrategy* strategy;
  double L;
  double sigma;
  double gamma;
};

// Shared SGD recurrence. `plan` picks the law and step for iteration k;
// `direction` returns the stochastic gradient for a draw at x.
template <class Plan, class Direction, class Resync>
RunResult sgd_loop(const Objective& obj, const RunConfig& cfg, const Eigen::VectorXd& x_star,
                   Eigen::VectorXd x, Rng& rng, Plan&& plan, Direction&& direction,
                   Resync&& resync, const StepObserver& observer) {
  const double n = static_cast<double>(obj.n());
  const double d0 = (x - x_star).squaredNorm();
  auto rel = [&](const Eigen::VectorXd& y) { return d0 > 0.0 ? (y - x_star).squaredNorm() / d0 : 0.0; };

  RunResult res;
  std::uint64_t evaluations = 0;
  std::uint64_t since_resync = 0;
  const auto resync_after = static_cast<std::uint64_t>(std::ceil(cfg.resync_epochs * n));
  for (std::uint64_t k = 0;; ++k) {
    const StepPlan p = plan(k);
    const double epochs = static_cast<double>(evaluations) / n;
    const double r = rel(x);
    const bool reached = r <= cfg.target();
    const bool out_of_budget =
        epochs >= cfg.max_epochs || (cfg.max_iterations > 0 && k >= cfg.max_iterations);
    if (k % cfg.trace_every == 0 || reached || out_of_budget)
      res.trace.push_back({k, epochs, r, p.strategy->tau(), p.gamma, p.sigma, p.L});
    if (reached || out_of_budget) {
      res.iterations = k;
      res.epochs = epochs;
      res.rel_error = r;
      res.reached = reached;
      break;
    }

    const SampleDraw s = draw(*p.strategy, rng);
    if (observer) observer(k, x, s);
    const Eigen::VectorXd g = direction(s, x);
    x.noalias() -= p.gamma * g;
    if (!x.allFinite())
      throw DivergenceError(
          fmt::format("iterate became non-finite at iteration {} (tau={}, gamma={:.3e})", k + 1,
                      p.strategy->tau(), p.gamma),
          std::move(res.trace));

    evaluations += s.size();
    since_resync += s.size();
    if (since_resync >= resync_after) {
      res.max_tracker_drift = std::max(res.max_tracker_drift, resync());
      since_resync = 0;
    }
  }
  res.x = std::move(x);
  return res;
}

}  // namespace

RunResult run_adaptive(const Objective& obj, const SamplingStrategy& family,
                       const SmoothnessProfile& profile, const RunConfig& cfg,
                       const Eigen::VectorXd& x_star, const StepObserver& observer) {
  cfg.validate();
  if (!family.has_default_probs())
    throw std::invalid_argument("adaptive runs need default inclusion probabilities");
  const double mu = profile.mu;
  const double inv_n = 1.0 / static_cast<double>(obj.n());
  Eigen::VectorXd x = initial_point(cfg, obj.d());
  GradientTracker tracker(obj, family.partitioning(), x);
  Rng rng(mix_seed(cfg.seed, 0x2));

  std::optional<SamplingStrategy> current;
  double L = 0.0;
  auto plan = [&](std::uint64_t k) {
    if (!current || k % cfg.recompute_every == 0) {
      const auto agg = tracker.aggregates();
      const auto choice = optimal_tau(family, profile, agg, cfg.epsilon, mu);
      current.emplace(family.with_tau(choice.tau));
      L = expected_smoothness(*current, profile);
    }
    // Noise is re-read every iteration; only tau is held between recomputes.
    const double sigma = gradient_noise(*current, tracker.aggregates());
    return StepPlan{&*current, L, sigma, step_size(L, sigma, cfg.epsilon, mu, cfg.cap)};
  };
  auto direction = [&](const SampleDraw& s, const Eigen::VectorXd& at) {
    tracker.refresh(obj, s.indices, at);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(at.size());
    for (std::size_t t = 0; t < s.size(); ++t)
      g.noalias() += (inv_n * s.weights[t]) * tracker.grad(s.indices[t]);
    return g;
  };
  auto resync = [&] { return tracker.resync(); };
  return sgd_loop(obj, cfg, x_star, std::move(x), rng, plan, direction, resync, observer);
}

RunResult run_fixed(const Objective& obj, const SamplingStrategy& strategy,
                    const SmoothnessProfile& profile, const RunConfig& cfg,
                    const Eigen::VectorXd& x_star, const NoiseAggregates& agg_at_xstar,
                    const StepObserver& observer) {
  cfg.validate();
  const double L = expected_smoothness(strategy, profile);
  const double sigma = gradient_noise(strategy, agg_at_xstar);
  const StepPlan fixed{&strategy, L, sigma, step_size(L, sigma, cfg.epsilon, profile.mu, cfg.cap)};
  Rng rng(fixed_stream_seed(cfg.seed, strategy.tau()));
  auto plan = [&](std::uint64_t) { return fixed; };
  auto direction = [&](const SampleDraw& s, const Eigen::VectorXd& at) {
    return stochastic_gradient(obj, s, at);
  };
  auto resync = [] { return 0.0; };
  return sgd_loop(obj, cfg, x_star, initial_point(cfg, obj.d()), rng, plan, direction, resync,
                  observer);
}

std::map<std::size_t, GridEntry> grid_search(const Objective& obj, const SamplingStrategy& family,
                                             const SmoothnessProfile& profile,
                                             const std::vector<std::size_t>& taus,
                                             const RunConfig& cfg, const Eigen::VectorXd& x_star,
                                             const NoiseAggregates& agg_at_xstar) {
  cfg.validate();
  std::vector<SamplingStrategy> strategies;
  strategies.reserve(taus.size());
  for (std::size_t tau : taus) strategies.push_back(family.with_tau(tau));

  RunConfig quiet = cfg;
  quiet.trace_every = std::numeric_limits<std::size_t>::max();
  std::map<std::size_t, GridEntry> out;
  const std::size_t width = std::max(1u, std::thread::hardware_concurrency());
  for (std::size_t begin = 0; begin < strategies.size(); begin += width) {
    const std::size_t end = std::min(strategies.size(), begin + width);
    std::vector<std::future<RunResult>> jobs;
    for (std::size_t t = begin; t < end; ++t)
      jobs.push_back(std::async(std::launch::async, [&, t] {
        return run_fixed(obj, strategies[t], profile, quiet, x_star, agg_at_xstar);
      }));
    for (std::size_t t = begin; t < end; ++t) {
      const RunResult r = jobs[t - begin].get();
      out[taus[t]] = GridEntry{r.reached ? r.epochs : cfg.max_epochs, r.reached};
    }
  }
  return out;
}

double grid_percentile(const std::map<std::size_t, GridEntry>& grid, double epochs) {
  if (grid.empty()) return 0.0;
  std::size_t faster = 0;
  for (const auto& [tau, e] : grid)
    if (e.epochs < epochs) ++faster;
  return 100.0 * static_cast<double>(faster) / static_cast<double>(grid.size());
}

}  // namespace adabatch
