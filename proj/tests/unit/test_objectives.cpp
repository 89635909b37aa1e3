#include <cmath>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "adabatch/objectives.hpp"
#include "test_instances.hpp"

namespace adabatch {
namespace {

using testing::make_objective;
using testing::random_dataset;
using testing::random_point;

Eigen::MatrixXd dense(const Dataset& ds) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ds.n()),
                                            static_cast<Eigen::Index>(ds.d()));
  for (std::size_t i = 0; i < ds.n(); ++i)
    for (std::size_t k = 0; k < ds.row(i).nnz(); ++k)
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(ds.row(i).indices[k])) =
          ds.row(i).values[k];
  return a;
}

double dense_top_eigenvalue(const Eigen::MatrixXd& a) {
  const Eigen::MatrixXd m = a.transpose() * a / static_cast<double>(a.rows());
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().maxCoeff();
}

TEST(Objective, ValuesAtOrigin) {
  const Dataset ds = random_dataset(7, 4, 1);
  const auto ridge = make_objective(Loss::ridge, 0.3, ds);
  double sb = 0.0;
  for (double b : ds.labels()) sb += b * b;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(4);
  EXPECT_NEAR(ridge.value(zero), sb / (2.0 * 7.0), 1e-14);

  const auto logistic = make_objective(Loss::logistic, 0.3, random_dataset(7, 4, 1, 0.7, true));
  EXPECT_NEAR(logistic.value(zero), 0.5 * std::log(2.0), 1e-15);
}

TEST(Objective, HandEvaluatedRidge) {
  const auto obj = make_objective(Loss::ridge, 1.0, Dataset({{{0}, {1.0}}}, {1.0}, 2));
  EXPECT_DOUBLE_EQ(obj.value(Eigen::Vector2d(1.0, 0.0)), 0.5);
}

TEST(Objective, LogisticGradientAtOrigin) {
  const Dataset ds = random_dataset(6, 5, 2, 0.8, true);
  const auto obj = make_objective(Loss::logistic, 0.1, ds);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(5);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    Eigen::VectorXd expect = Eigen::VectorXd::Zero(5);
    ds.row(i).axpy(0.25 * ds.label(i), expect);
    EXPECT_LE((obj.component_gradient(i, zero) - expect).norm(), 1e-15);
  }
}

TEST(Objective, LogisticIsOverflowSafe) {
  const auto obj = make_objective(Loss::logistic, 0.1, Dataset({{{0}, {1.0}}, {{0}, {1.0}}}, {1.0, -1.0}, 1));
  Eigen::VectorXd x(1);
  x[0] = 800.0;
  EXPECT_TRUE(std::isfinite(obj.value(x)));
  EXPECT_TRUE(obj.gradient(x).allFinite());
  // Half of the rows contribute 1/2 * 800, the other half ~0.
  EXPECT_NEAR(obj.value(x), 0.5 * 0.5 * 800.0 + 0.5 * 0.1 * 800.0 * 800.0, 1e-9);
}

TEST(Objective, ComponentGradientsMatchCentralDifferences) {
  for (Loss loss : {Loss::ridge, Loss::logistic}) {
    const auto obj = make_objective(loss, 0.2, random_dataset(8, 6, 3, 0.7, loss == Loss::logistic));
    Rng rng(9);
    for (int trial = 0; trial < 10; ++trial) {
      const Eigen::VectorXd x = random_point(6, rng);
      for (std::size_t i = 0; i < obj.n(); ++i) {
        Eigen::VectorXd fd(6);
        for (Eigen::Index k = 0; k < 6; ++k) {
          Eigen::VectorXd e = Eigen::VectorXd::Zero(6);
          e[k] = 1e-6;
          fd[k] = (obj.component_value(i, x + e) - obj.component_value(i, x - e)) / 2e-6;
        }
        EXPECT_LE((obj.component_gradient(i, x) - fd).norm(), 1e-5) << to_string(loss);
      }
    }
  }
}

TEST(Objective, FullGradientMatchesValueDifferences) {
  for (Loss loss : {Loss::ridge, Loss::logistic}) {
    const auto obj = make_objective(loss, 0.05, random_dataset(12, 5, 4, 0.6, loss == Loss::logistic));
    Rng rng(10);
    for (int trial = 0; trial < 10; ++trial) {
      const Eigen::VectorXd x = random_point(5, rng);
      const Eigen::VectorXd g = obj.gradient(x);
      Eigen::VectorXd fd(5);
      for (Eigen::Index k = 0; k < 5; ++k) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(5);
        e[k] = 1e-6;
        fd[k] = (obj.value(x + e) - obj.value(x - e)) / 2e-6;
      }
      EXPECT_LE((g - fd).norm(), 1e-4 * (1.0 + g.norm()));
    }
  }
}

TEST(Objective, ComponentGradientsAverageToFullGradient) {
  for (Loss loss : {Loss::ridge, Loss::logistic}) {
    const auto obj = make_objective(loss, 0.1, random_dataset(15, 7, 5, 0.5, loss == Loss::logistic));
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
      const Eigen::VectorXd x = random_point(7, rng, 2.0);
      Eigen::VectorXd avg = Eigen::VectorXd::Zero(7);
      for (std::size_t i = 0; i < obj.n(); ++i) avg += obj.component_gradient(i, x);
      avg /= static_cast<double>(obj.n());
      const Eigen::VectorXd g = obj.gradient(x);
      EXPECT_LE((avg - g).norm(), 1e-10 * (1.0 + g.norm()));
    }
  }
}

TEST(Objective, RejectsBadInput) {
  const Dataset ds = random_dataset(3, 2, 1);
  EXPECT_THROW(make_objective(Loss::ridge, 0.0, ds), std::invalid_argument);
  const auto obj = make_objective(Loss::ridge, 1.0, ds);
  EXPECT_THROW(obj.component_gradient(3, Eigen::VectorXd::Zero(2)), std::out_of_range);
  EXPECT_THROW(loss_from_string("hinge"), std::invalid_argument);
  EXPECT_EQ(loss_from_string(to_string(Loss::logistic)), Loss::logistic);
}

TEST(Smoothness, SingleUnitRow) {
  const auto obj = make_objective(Loss::ridge, 0.1, Dataset({{{0, 1}, {0.6, 0.8}}}, {1.0}, 2));
  const auto p = smoothness_profile(obj, Partitioning::single(1));
  EXPECT_NEAR(p.component[0], 1.1, 1e-12);
  EXPECT_NEAR(p.global, 1.1, 1e-9);
  EXPECT_DOUBLE_EQ(p.mu, 0.1);
}

TEST(Smoothness, OrthonormalRowsAgainstDenseEigensolver) {
  // Rows of a random 4x4 orthogonal matrix.
  Rng rng(17);
  Eigen::MatrixXd m(4, 4);
  for (Eigen::Index r = 0; r < 4; ++r)
    for (Eigen::Index c = 0; c < 4; ++c) m(r, c) = rng.normal();
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(m).householderQ();
  std::vector<SparseRow> rows(4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 4; ++k) {
      rows[i].indices.push_back(k);
      rows[i].values.push_back(q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
    }
  const Dataset ds(rows, {1.0, 2.0, 3.0, 4.0}, 4);
  const double oracle = dense_top_eigenvalue(dense(ds));
  EXPECT_NEAR(oracle, 0.25, 1e-12);
  const auto obj = make_objective(Loss::ridge, 0.5, ds);
  const auto p = smoothness_profile(obj, Partitioning::single(4));
  EXPECT_NEAR(p.global, oracle + 0.5, 1e-8);
}

TEST(Smoothness, PowerIterationMatchesDenseEigensolverOnPartitions) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Dataset ds = random_dataset(18, 6, seed, 0.6);
    const auto obj = make_objective(Loss::ridge, 0.01, ds);
    const Partitioning part = make_partitioning(18, {.blocks = 3});
    const auto p = smoothness_profile(obj, part);
    const Eigen::MatrixXd a = dense(ds);
    EXPECT_NEAR(p.global, dense_top_eigenvalue(a) + 0.01, 1e-6 * p.global);
    for (std::size_t j = 0; j < 3; ++j) {
      const Eigen::MatrixXd block = a.middleRows(static_cast<Eigen::Index>(part.set(j).front()), 6);
      EXPECT_NEAR(p.partition[j], dense_top_eigenvalue(block) + 0.01, 1e-6 * p.partition[j]);
      EXPECT_LE(p.partition[j], p.partition_max[j] + 1e-9);
    }
    EXPECT_LE(p.mu, p.global);
    EXPECT_LE(p.global, p.max_component() + 1e-9);
  }
}

TEST(Smoothness, LogisticIsRidgeScaledByOneEighth) {
  const Dataset ds = random_dataset(10, 4, 6, 0.8, true);
  const Partitioning part = make_partitioning(10, {.blocks = 2});
  const double lambda = 0.2;
  const auto r = smoothness_profile(make_objective(Loss::ridge, lambda, ds), part);
  const auto l = smoothness_profile(make_objective(Loss::logistic, lambda, ds), part);
  for (std::size_t i = 0; i < 10; ++i)
    EXPECT_NEAR(l.component[i] - lambda, (r.component[i] - lambda) / 8.0, 1e-12);
  EXPECT_NEAR(l.global - lambda, (r.global - lambda) / 8.0, 1e-8);
  for (std::size_t j = 0; j < 2; ++j)
    EXPECT_NEAR(l.partition[j] - lambda, (r.partition[j] - lambda) / 8.0, 1e-8);
}

TEST(Smoothness, ComponentLipschitzBoundHolds) {
  for (Loss loss : {Loss::ridge, Loss::logistic}) {
    const Dataset ds = random_dataset(10, 5, 7, 0.7);  // real-valued labels for logistic too
    const auto obj = make_objective(loss, 0.1, ds);
    const auto p = smoothness_profile(obj, Partitioning::single(10));
    Rng rng(21);
    for (int trial = 0; trial < 100; ++trial) {
      const Eigen::VectorXd x = random_point(5, rng, 3.0);
      const Eigen::VectorXd y = random_point(5, rng, 3.0);
      for (std::size_t i = 0; i < 10; ++i) {
        const double lhs = (obj.component_gradient(i, x) - obj.component_gradient(i, y)).norm();
        EXPECT_LE(lhs, p.component[i] * (x - y).norm() * (1.0 + 1e-12)) << to_string(loss);
      }
    }
  }
}

TEST(Smoothness, StrongConvexityHolds) {
  for (Loss loss : {Loss::ridge, Loss::logistic}) {
    const auto obj = make_objective(loss, 0.3, random_dataset(12, 4, 8, 0.7, loss == Loss::logistic));
    const auto p = smoothness_profile(obj, Partitioning::single(12));
    const Eigen::VectorXd xs = solve_reference(obj, 1e-11);
    const double fs = obj.value(xs);
    Rng rng(22);
    for (int trial = 0; trial < 100; ++trial) {
      const Eigen::VectorXd x = random_point(4, rng, 2.0);
      EXPECT_GE(obj.value(x) - fs, 0.5 * p.mu * (x - xs).squaredNorm() - 1e-12);
    }
  }
}

TEST(SolveReference, OneDimensionalRidge) {
  const auto obj = make_objective(Loss::ridge, 1.0, Dataset({{{0}, {1.0}}}, {2.0}, 1));
  const Eigen::VectorXd xs = solve_reference(obj, 1e-12);
  EXPECT_NEAR(xs[0], 1.0, 1e-12);
}

TEST(SolveReference, GradientBelowTolerance) {
  for (Loss loss : {Loss::ridge, Loss::logistic}) {
    const auto obj = make_objective(loss, 0.05, random_dataset(30, 8, 9, 0.5, loss == Loss::logistic));
    const Eigen::VectorXd xs = solve_reference(obj, 1e-9);
    EXPECT_LE(obj.gradient(xs).norm(), 1e-9 * 1.01) << to_string(loss);
    // Stationarity in the component form as well.
    Eigen::VectorXd avg = Eigen::VectorXd::Zero(8);
    for (std::size_t i = 0; i < obj.n(); ++i) avg += obj.component_gradient(i, xs);
    EXPECT_LE(avg.norm() / 30.0, 1e-8);
  }
}

TEST(SolveReference, IterationCapRaisesWithResidual) {
  const auto obj = make_objective(Loss::logistic, 1e-3, random_dataset(30, 8, 9, 0.5, true));
  try {
    solve_reference(obj, 1e-12, 3);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_GT(e.residual(), 1e-12);
  }
  EXPECT_THROW(solve_reference(obj, 0.0), std::invalid_argument);
}

}  // namespace
}  // namespace adabatch
