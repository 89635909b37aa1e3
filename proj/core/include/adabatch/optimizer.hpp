#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "adabatch/dataset.hpp"
#include "adabatch/objectives.hpp"
#include "adabatch/sampling.hpp"
#include "adabatch/theory.hpp"

namespace adabatch {

/// Last computed gradient of every component, plus the per-partition sums
/// needed for h_Cj. Memory is n * d doubles.
class GradientTracker {
 public:
  GradientTracker(const Objective& obj, const Partitioning& part, const Eigen::VectorXd& x);

  /// Re-evaluates grad f_i(x) for every i in `indices` and patches the sums.
  void refresh(const Objective& obj, const std::vector<std::size_t>& indices,
               const Eigen::VectorXd& x);

  /// Rebuilds the partition sums from the stored gradients. Returns the
  /// largest deviation of the incremental sums from the rebuilt ones.
  double resync();

  std::size_t n() const noexcept { return h_.size(); }
  const Eigen::VectorXd& grad(std::size_t i) const { return grads_[i]; }
  double h(std::size_t i) const { return h_[i]; }
  const std::vector<double>& h() const noexcept { return h_; }
  const Eigen::VectorXd& partition_sum(std::size_t j) const { return sums_[j]; }
  double partition_h_sum(std::size_t j) const { return sum_h_[j]; }

  NoiseAggregates aggregates() const;

 private:
  const Partitioning* part_;
  std::vector<Eigen::VectorXd> grads_;
  std::vector<double> h_;
  std::vector<Eigen::VectorXd> sums_;
  std::vector<double> sum_h_;
};

struct RunConfig {
  double epsilon = 1e-3;
  /// Variance cap C; 0 disables it.
  double cap = 0.0;
  std::uint64_t seed = 0;
  double max_epochs = 100.0;
  /// Stop once |x - x*|^2 / |x0 - x*|^2 falls to this; defaults to eps / 10.
  std::optional<double> target_rel_error;
  /// Hard iteration limit on top of max_epochs; 0 means none.
  std::uint64_t max_iterations = 0;
  std::size_t trace_every = 1;
  /// Starting point; standard normal entries drawn from `seed` when unset.
  std::optional<Eigen::VectorXd> x0;
  /// Iterations between batch-size updates in the adaptive run.
  std::size_t recompute_every = 1;
  /// Rebuild tracker partition sums after this many epochs of gradient work.
  double resync_epochs = 10.0;

  double target() const { return target_rel_error.value_or(epsilon / 10.0); }
  void validate() const;
};

Eigen::VectorXd initial_point(const RunConfig& cfg, std::size_t d);

struct TraceRecord {
  std::uint64_t iter = 0;
  double epochs = 0.0;
  double rel_error = 0.0;
  std::size_t tau = 0;
  double gamma = 0.0;
  double sigma = 0.0;
  double L = 0.0;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

struct RunResult {
  std::vector<TraceRecord> trace;
  Eigen::VectorXd x;
  std::uint64_t iterations = 0;
  double epochs = 0.0;
  double rel_error = 0.0;
  bool reached = false;
  /// Largest partition-sum drift seen at a tracker resync (adaptive only).
  double max_tracker_drift = 0.0;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::vector<TraceRecord> trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const std::vector<TraceRecord>& trace() const noexcept { return trace_; }

 private:
  std::vector<TraceRecord> trace_;
};

/// Called once per step with the iterate the batch is evaluated at.
using StepObserver =
    std::function<void(std::uint64_t iter, const Eigen::VectorXd& x, const SampleDraw& draw)>;

/// SGD with the batch size re-chosen every iteration from tracked gradient
/// statistics. `family` fixes the sampling variant and partitioning; its tau
/// is ignored. x_star only feeds the relative-error metric.
RunResult run_adaptive(const Objective& obj, const SamplingStrategy& family,
                       const SmoothnessProfile& profile, const RunConfig& cfg,
                       const Eigen::VectorXd& x_star, const StepObserver& observer = {});

/// SGD with the strategy's fixed tau and the constant step from
/// step_size(L(tau), sigma(x*, tau)).
RunResult run_fixed(const Objective& obj, const SamplingStrategy& strategy,
                    const SmoothnessProfile& profile, const RunConfig& cfg,
                    const Eigen::VectorXd& x_star, const NoiseAggregates& agg_at_xstar,
                    const StepObserver& observer = {});

/// Seed of the sampling stream used by run_fixed at batch size tau.
std::uint64_t fixed_stream_seed(std::uint64_t seed, std::size_t tau);

struct GridEntry {
  double epochs = 0.0;  ///< max_epochs when the target was not reached
  bool reached = false;
};

/// One run_fixed per tau, executed concurrently.
std::map<std::size_t, GridEntry> grid_search(const Objective& obj, const SamplingStrategy& family,
                                             const SmoothnessProfile& profile,
                                             const std::vector<std::size_t>& taus,
                                             const RunConfig& cfg, const Eigen::VectorXd& x_star,
                                             const NoiseAggregates& agg_at_xstar);

/// Percentage of grid entries that needed strictly fewer epochs than `epochs`.
double grid_percentile(const std::map<std::size_t, GridEntry>& grid, double epochs);

}  // namespace adabatch
