#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "adabatch/optimizer.hpp"
#include "replay.hpp"
#include "test_instances.hpp"

namespace adabatch {
namespace {

using testing::make_objective;
using testing::random_point;

struct Problem {
  Objective obj;
  Partitioning part;
  SmoothnessProfile profile;
  Eigen::VectorXd x_star;
  NoiseAggregates agg_star;
};

Problem make_problem(SyntheticSpec spec, double lambda, std::size_t blocks = 1) {
  auto syn = make_synthetic(spec);
  Objective obj = make_objective(Loss::ridge, lambda, std::move(syn.data));
  Partitioning part = make_partitioning(spec.n, {.blocks = blocks});
  SmoothnessProfile prof = smoothness_profile(obj, part);
  Eigen::VectorXd xs = solve_reference(obj, 1e-12);
  NoiseAggregates agg = noise_aggregates_exact(obj, part, xs);
  return {std::move(obj), std::move(part), std::move(prof), std::move(xs), std::move(agg)};
}

void expect_tracker_matches(const GradientTracker& t, const Objective& obj, const Partitioning& part,
                            const std::vector<Eigen::VectorXd>& at, double tol) {
  for (std::size_t j = 0; j < part.num_sets(); ++j) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(obj.d()));
    double hs = 0.0;
    for (std::size_t i : part.set(j)) {
      const Eigen::VectorXd g = obj.component_gradient(i, at[i]);
      EXPECT_LE((t.grad(i) - g).norm(), tol);
      EXPECT_NEAR(t.h(i), g.squaredNorm(), tol * (1.0 + g.squaredNorm()));
      sum += g;
      hs += g.squaredNorm();
    }
    EXPECT_LE((t.partition_sum(j) - sum).lpNorm<Eigen::Infinity>(), tol);
    EXPECT_NEAR(t.partition_h_sum(j), hs, tol * (1.0 + hs));
  }
}

TEST(GradientTracker, InitialisesFromOneFullPass) {
  const Problem p = make_problem({.n = 12, .d = 4, .noise = 0.3, .seed = 1}, 0.1, 3);
  Rng rng(2);
  const Eigen::VectorXd x = random_point(4, rng);
  const GradientTracker t(p.obj, p.part, x);
  expect_tracker_matches(t, p.obj, p.part, std::vector<Eigen::VectorXd>(12, x), 1e-12);
  const auto a = t.aggregates();
  const auto exact = noise_aggregates_exact(p.obj, p.part, x);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(a.partition_grad[j], exact.partition_grad[j], 1e-12);
  EXPECT_NEAR(a.mean, exact.mean, 1e-12);
}

TEST(GradientTracker, AtOptimumSumsVanish) {
  const Problem p = make_problem({.n = 10, .d = 3, .noise = 0.5, .seed = 3}, 0.1, 2);
  const GradientTracker t(p.obj, p.part, p.x_star);
  EXPECT_LE((t.partition_sum(0) + t.partition_sum(1)).norm() / 10.0, 1e-8);
}

TEST(GradientTracker, SingleExample) {
  const Problem p = make_problem({.n = 1, .d = 3, .seed = 4}, 0.1);
  Rng rng(5);
  const Eigen::VectorXd x = random_point(3, rng);
  const GradientTracker t(p.obj, p.part, x);
  EXPECT_LE((t.grad(0) - p.obj.gradient(x)).norm(), 1e-14);
}

TEST(GradientTracker, FullAndEmptyRefresh) {
  const Problem p = make_problem({.n = 8, .d = 3, .noise = 0.2, .seed = 6}, 0.1, 2);
  Rng rng(7);
  const Eigen::VectorXd x0 = random_point(3, rng);
  const Eigen::VectorXd x1 = random_point(3, rng);
  GradientTracker t(p.obj, p.part, x0);
  const std::vector<double> before = t.h();
  t.refresh(p.obj, {}, x1);
  EXPECT_EQ(t.h(), before);
  t.refresh(p.obj, {0, 1, 2, 3, 4, 5, 6, 7}, x1);
  expect_tracker_matches(t, p.obj, p.part, std::vector<Eigen::VectorXd>(8, x1), 1e-12);
}

TEST(GradientTracker, RandomRefreshSequenceMatchesReplay) {
  const Problem p = make_problem({.n = 15, .d = 4, .noise = 0.5, .seed = 8}, 0.1, 3);
  Rng rng(9);
  const Eigen::VectorXd x0 = random_point(4, rng);
  GradientTracker t(p.obj, p.part, x0);
  std::vector<Eigen::VectorXd> last(15, x0);
  const auto fam = SamplingStrategy::partition_independent(p.part, 2);
  for (int step = 0; step < 500; ++step) {
    const Eigen::VectorXd x = random_point(4, rng, 3.0);
    const SampleDraw d = draw(fam, rng);
    t.refresh(p.obj, d.indices, x);
    for (std::size_t i : d.indices) last[i] = x;
  }
  expect_tracker_matches(t, p.obj, p.part, last, 1e-9);
  EXPECT_LE(t.resync(), 1e-9);
  expect_tracker_matches(t, p.obj, p.part, last, 1e-12);
}

TEST(RunConfig, Validation) {
  RunConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_DOUBLE_EQ(c.target(), c.epsilon / 10.0);
  c.target_rel_error = 0.5;
  EXPECT_DOUBLE_EQ(c.target(), 0.5);
  for (auto mutate : std::vector<void (*)(RunConfig&)>{
           [](RunConfig& r) { r.epsilon = 0.0; }, [](RunConfig& r) { r.max_epochs = -1.0; },
           [](RunConfig& r) { r.cap = -1.0; }, [](RunConfig& r) { r.trace_every = 0; },
           [](RunConfig& r) { r.recompute_every = 0; }, [](RunConfig& r) { r.resync_epochs = 0.0; }}) {
    RunConfig bad;
    mutate(bad);
    EXPECT_THROW(bad.validate(), std::invalid_argument);
  }
  RunConfig wrong;
  wrong.x0 = Eigen::VectorXd::Zero(2);
  EXPECT_THROW(initial_point(wrong, 3), std::invalid_argument);
}

TEST(RunFixed, FullBatchDescendsMonotonically) {
  const Problem p = make_problem({.n = 30, .d = 5, .noise = 0.5, .seed = 10}, 0.1);
  RunConfig cfg;
  cfg.max_epochs = 200;
  const RunResult r = run_fixed(p.obj, SamplingStrategy::nice(30, 30), p.profile, cfg, p.x_star, p.agg_star);
  ASSERT_GT(r.trace.size(), 3u);
  for (std::size_t k = 1; k < r.trace.size(); ++k) EXPECT_LT(r.trace[k].rel_error, r.trace[k - 1].rel_error);
  EXPECT_TRUE(r.reached);
  EXPECT_DOUBLE_EQ(r.epochs, static_cast<double>(r.iterations));
}

TEST(RunFixed, EpochsCountRealizedBatchSizes) {
  const Problem p = make_problem({.n = 20, .d = 3, .noise = 0.5, .seed = 11}, 0.1);
  RunConfig cfg;
  cfg.max_iterations = 37;
  cfg.max_epochs = 1e9;
  const RunResult r = run_fixed(p.obj, SamplingStrategy::nice(20, 4), p.profile, cfg, p.x_star, p.agg_star);
  EXPECT_EQ(r.iterations, 37u);
  EXPECT_DOUBLE_EQ(r.epochs, 37.0 * 4.0 / 20.0);

  std::size_t total = 0;
  testing::History hist;
  const RunResult ri = run_fixed(p.obj, SamplingStrategy::independent(20, 4), p.profile, cfg, p.x_star,
                                 p.agg_star, hist.observer());
  for (const auto& d : hist.draws) total += d.size();
  EXPECT_DOUBLE_EQ(ri.epochs, static_cast<double>(total) / 20.0);
}

TEST(RunFixed, IterationBoundIsRespectedInMedian) {
  const Problem p = make_problem({.n = 40, .d = 5, .noise = 0.5, .seed = 12}, 0.5);
  const double eps = 1e-2;
  for (std::size_t tau : {1u, 10u, 40u}) {
    const auto s = SamplingStrategy::nice(40, tau);
    const double L = expected_smoothness(s, p.profile);
    const double sigma = gradient_noise(s, p.agg_star);
    std::vector<double> dist;
    for (std::uint64_t seed = 0; seed < 11; ++seed) {
      RunConfig cfg;
      cfg.epsilon = eps;
      cfg.seed = seed;
      cfg.max_epochs = 1e9;
      cfg.target_rel_error = 0.0;
      const double d0 = (initial_point(cfg, 5) - p.x_star).squaredNorm();
      cfg.max_iterations = iteration_bound(L, sigma, eps, p.profile.mu, d0);
      const RunResult r = run_fixed(p.obj, s, p.profile, cfg, p.x_star, p.agg_star);
      dist.push_back((r.x - p.x_star).squaredNorm());
    }
    std::nth_element(dist.begin(), dist.begin() + 5, dist.end());
    EXPECT_LE(dist[5], eps) << "tau=" << tau;
  }
}

TEST(RunFixed, DivergenceIsReported) {
  const Problem p = make_problem({.n = 10, .d = 3, .noise = 0.5, .seed = 13}, 0.1);
  SmoothnessProfile wrong = p.profile;
  for (double& v : wrong.component) v *= 1e-4;
  for (double& v : wrong.partition) v *= 1e-4;
  for (double& v : wrong.partition_max) v *= 1e-4;
  wrong.global *= 1e-4;
  RunConfig cfg;
  cfg.max_epochs = 1e6;
  cfg.epsilon = 1e6;  // keep the noise branch from shrinking the step
  cfg.target_rel_error = 1e-12;
  try {
    run_fixed(p.obj, SamplingStrategy::nice(10, 10), wrong, cfg, p.x_star, p.agg_star);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_FALSE(e.trace().empty());
    EXPECT_NE(std::string(e.what()).find("non-finite"), std::string::npos);
  }
}

TEST(RunAdaptive, SameSeedSameTrace) {
  const Problem p = make_problem({.n = 30, .d = 5, .noise = 1.0, .seed = 14}, 1.0, 2);
  RunConfig cfg;
  cfg.seed = 5;
  cfg.max_epochs = 30;
  cfg.epsilon = 1e-2;
  const auto fam = SamplingStrategy::partition_nice(p.part, 1);
  const RunResult a = run_adaptive(p.obj, fam, p.profile, cfg, p.x_star);
  const RunResult b = run_adaptive(p.obj, fam, p.profile, cfg, p.x_star);
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_EQ(a.x, b.x);
  cfg.seed = 6;
  EXPECT_NE(run_adaptive(p.obj, fam, p.profile, cfg, p.x_star).trace, a.trace);
}

TEST(RunAdaptive, TraceMatchesReplayedHistory) {
  const Problem p = make_problem({.n = 24, .d = 4, .noise = 1.0, .seed = 15}, 1.0, 3);
  for (const auto& fam : {SamplingStrategy::nice(24, 1), SamplingStrategy::independent(24, 1),
                          SamplingStrategy::partition_nice(p.part, 1),
                          SamplingStrategy::partition_independent(p.part, 1)}) {
    RunConfig cfg;
    cfg.seed = 3;
    cfg.max_epochs = 20;
    cfg.epsilon = 1e-1;
    cfg.resync_epochs = 2.0;
    const auto prof = smoothness_profile(p.obj, fam.partitioning());
    testing::History hist;
    const RunResult r = run_adaptive(p.obj, fam, prof, cfg, p.x_star, hist.observer());
    const auto check = testing::replay_adaptive(p.obj, fam, prof, cfg.epsilon,
                                                initial_point(cfg, 4), hist, r.trace);
    EXPECT_EQ(check.rows_checked, r.trace.size());
    EXPECT_LE(check.max_rel_sigma_diff, 1e-9) << to_string(fam.variant());
    EXPECT_EQ(check.tau_mismatches, 0u) << to_string(fam.variant());
    EXPECT_LE(r.max_tracker_drift, 1e-9);
  }
}

TEST(RunAdaptive, StepSizesStayInsideBounds) {
  const Problem p = make_problem({.n = 30, .d = 5, .noise = 1.0, .seed = 16}, 1.0);
  const auto fam = SamplingStrategy::nice(30, 1);
  for (double cap : {0.0, 0.5}) {
    RunConfig cfg;
    cfg.cap = cap;
    cfg.max_epochs = 20;
    const auto bounds = step_bounds(fam, p.profile, cfg.epsilon, p.profile.mu, cap);
    const RunResult r = run_adaptive(p.obj, fam, p.profile, cfg, p.x_star);
    for (const auto& row : r.trace) {
      EXPECT_GE(row.gamma, bounds.gamma_min);
      EXPECT_LE(row.gamma, bounds.gamma_max * (1.0 + 1e-15));
    }
  }
}

TEST(RunAdaptive, InterpolationKeepsBatchSizeOne) {
  const Problem p = make_problem({.n = 30, .d = 5, .noise = 0.0, .signal = 0.0, .seed = 17}, 1.0);
  ASSERT_LT(p.agg_star.mean, 1e-20);
  RunConfig cfg;
  cfg.max_epochs = 2000;
  const RunResult r = run_adaptive(p.obj, SamplingStrategy::nice(30, 1), p.profile, cfg, p.x_star);
  EXPECT_TRUE(r.reached);
  for (const auto& row : r.trace) EXPECT_EQ(row.tau, 1u);
}

TEST(RunAdaptive, StopsAtTarget) {
  const Problem p = make_problem({.n = 20, .d = 3, .noise = 0.3, .seed = 18}, 1.0);
  RunConfig cfg;
  cfg.epsilon = 0.1;
  cfg.max_epochs = 500;
  const RunResult r = run_adaptive(p.obj, SamplingStrategy::nice(20, 1), p.profile, cfg, p.x_star);
  ASSERT_TRUE(r.reached);
  EXPECT_LE(r.rel_error, 0.01);
  EXPECT_GT(r.trace[r.trace.size() - 2].rel_error, 0.01);
  EXPECT_EQ(r.trace.back().iter, r.iterations);
}

TEST(GridSearch, EntriesMatchIndividualRuns) {
  const Problem p = make_problem({.n = 12, .d = 3, .noise = 0.5, .seed = 19}, 0.5);
  const auto fam = SamplingStrategy::nice(12, 1);
  std::vector<std::size_t> taus(12);
  for (std::size_t t = 0; t < 12; ++t) taus[t] = t + 1;
  RunConfig cfg;
  cfg.epsilon = 1e-2;
  cfg.max_epochs = 300;
  cfg.seed = 1;
  const auto grid = grid_search(p.obj, fam, p.profile, taus, cfg, p.x_star, p.agg_star);
  ASSERT_EQ(grid.size(), 12u);
  for (std::size_t tau : taus) {
    const RunResult r = run_fixed(p.obj, fam.with_tau(tau), p.profile, cfg, p.x_star, p.agg_star);
    EXPECT_EQ(grid.at(tau).reached, r.reached);
    EXPECT_DOUBLE_EQ(grid.at(tau).epochs, r.reached ? r.epochs : cfg.max_epochs);
  }
  EXPECT_TRUE(grid.at(12).reached);
}

TEST(GridSearch, FullBatchEntryDoesNotDependOnTheSamplingStream) {
  const Problem p = make_problem({.n = 12, .d = 3, .noise = 0.5, .seed = 19}, 0.5);
  const auto fam = SamplingStrategy::nice(12, 1);
  RunConfig cfg;
  cfg.epsilon = 1e-2;
  cfg.max_epochs = 300;
  cfg.x0 = Eigen::VectorXd::Ones(3);
  cfg.seed = 1;
  const double a = grid_search(p.obj, fam, p.profile, {12}, cfg, p.x_star, p.agg_star).at(12).epochs;
  cfg.seed = 99;
  EXPECT_DOUBLE_EQ(grid_search(p.obj, fam, p.profile, {12}, cfg, p.x_star, p.agg_star).at(12).epochs, a);
}

TEST(GridPercentile, CountsStrictlyFasterEntries) {
  const std::map<std::size_t, GridEntry> grid = {
      {1, {10.0, true}}, {2, {5.0, true}}, {3, {20.0, true}}, {4, {5.0, true}}};
  EXPECT_DOUBLE_EQ(grid_percentile(grid, 5.0), 0.0);
  EXPECT_DOUBLE_EQ(grid_percentile(grid, 10.0), 50.0);
  EXPECT_DOUBLE_EQ(grid_percentile(grid, 100.0), 100.0);
  EXPECT_DOUBLE_EQ(grid_percentile({}, 1.0), 0.0);
}

}  // namespace
}  // namespace adabatch
