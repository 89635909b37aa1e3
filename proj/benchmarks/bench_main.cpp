#include <memory>

#include <benchmark/benchmark.h>

#include "adabatch/dataset.hpp"
#include "adabatch/objectives.hpp"
#include "adabatch/optimizer.hpp"
#include "adabatch/sampling.hpp"
#include "adabatch/theory.hpp"

namespace {

using namespace adabatch;

struct Instance {
  Objective obj;
  Partitioning part;
  SmoothnessProfile profile;
  Eigen::VectorXd x_star;
};

Instance make_instance(std::size_t n, std::size_t d, std::size_t blocks) {
  auto syn = make_synthetic({.n = n, .d = d, .noise = 1.0, .seed = 42, .normalize = true});
  Objective obj(Loss::ridge, 1.0, std::make_shared<const Dataset>(std::move(syn.data)));
  Partitioning part = blocks == 1 ? Partitioning::single(n) : make_partitioning(n, {.blocks = blocks});
  SmoothnessProfile profile = smoothness_profile(obj, part);
  Eigen::VectorXd x_star = solve_reference(obj, 1e-12);
  return {std::move(obj), std::move(part), std::move(profile), std::move(x_star)};
}

SamplingStrategy family_of(int variant, const Partitioning& part) {
  switch (variant) {
    case 0: return SamplingStrategy::nice(part.n(), 1);
    case 1: return SamplingStrategy::independent(part.n(), 1);
    case 2: return SamplingStrategy::partition_nice(part, 1);
    default: return SamplingStrategy::partition_independent(part, 1);
  }
}

void BM_Draw(benchmark::State& state) {
  const std::size_t n = 1000;
  const auto part = make_partitioning(n, {.blocks = 4});
  const auto s = family_of(static_cast<int>(state.range(0)), part).with_tau(
      static_cast<std::size_t>(state.range(1)));
  Rng rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(draw(s, rng));
  state.SetLabel(to_string(s.variant()));
}
BENCHMARK(BM_Draw)->ArgsProduct({{0, 1, 2, 3}, {1, 32, 200}});

void BM_OptimalTau(benchmark::State& state) {
  const auto variant = static_cast<int>(state.range(0));
  const Instance inst = make_instance(1000, 20, variant < 2 ? 1 : 4);
  const auto fam = family_of(variant, inst.part);
  const auto agg = noise_aggregates_exact(inst.obj, inst.part, inst.x_star);
  for (auto _ : state) benchmark::DoNotOptimize(optimal_tau(fam, inst.profile, agg, 1e-3, 1.0));
  state.SetLabel(to_string(fam.variant()));
}
BENCHMARK(BM_OptimalTau)->DenseRange(0, 3);

void BM_ScanOptimalTau(benchmark::State& state) {
  const Instance inst = make_instance(1000, 20, 1);
  const auto fam = family_of(0, inst.part);
  const auto agg = noise_aggregates_exact(inst.obj, inst.part, inst.x_star);
  for (auto _ : state) benchmark::DoNotOptimize(scan_optimal_tau(fam, inst.profile, agg, 1e-3, 1.0));
}
BENCHMARK(BM_ScanOptimalTau);

void BM_TrackerRefresh(benchmark::State& state) {
  const Instance inst = make_instance(1000, 20, 4);
  GradientTracker tracker(inst.obj, inst.part, Eigen::VectorXd::Zero(20));
  const auto s = SamplingStrategy::nice(1000, static_cast<std::size_t>(state.range(0)));
  Rng rng(3);
  for (auto _ : state) {
    const SampleDraw d = draw(s, rng);
    tracker.refresh(inst.obj, d.indices, inst.x_star);
    benchmark::DoNotOptimize(tracker.aggregates());
  }
}
BENCHMARK(BM_TrackerRefresh)->Arg(1)->Arg(32)->Arg(200);

// One epoch of work per iteration of the loop, adaptive versus fixed at tau*.
void BM_AdaptiveEpoch(benchmark::State& state) {
  const Instance inst = make_instance(1000, 20, 1);
  const auto fam = family_of(0, inst.part);
  RunConfig cfg{.epsilon = 1e-3, .seed = 5, .max_epochs = 1.0, .target_rel_error = 0.0,
                .trace_every = 1000000};
  for (auto _ : state) benchmark::DoNotOptimize(run_adaptive(inst.obj, fam, inst.profile, cfg, inst.x_star));
}
BENCHMARK(BM_AdaptiveEpoch)->Unit(benchmark::kMillisecond);

void BM_FixedEpoch(benchmark::State& state) {
  const Instance inst = make_instance(1000, 20, 1);
  const auto agg = noise_aggregates_exact(inst.obj, inst.part, inst.x_star);
  const auto tau = optimal_tau(family_of(0, inst.part), inst.profile, agg, 1e-3, 1.0).tau;
  const auto s = SamplingStrategy::nice(1000, tau);
  RunConfig cfg{.epsilon = 1e-3, .seed = 5, .max_epochs = 1.0, .target_rel_error = 0.0,
                .trace_every = 1000000};
  for (auto _ : state) benchmark::DoNotOptimize(run_fixed(inst.obj, s, inst.profile, cfg, inst.x_star, agg));
  state.SetLabel("tau=" + std::to_string(tau));
}
BENCHMARK(BM_FixedEpoch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
