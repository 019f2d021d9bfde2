#include "clustmix/adapt.hpp"

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "clustmix/dataset.hpp"
#include "clustmix/rng.hpp"
#include "test_support.hpp"

namespace clustmix {
namespace {

KernelConfig rbf(double bandwidth, double lambda = 1e-3) {
  KernelConfig cfg;
  cfg.bandwidth = bandwidth;
  cfg.ridge_lambda = lambda;
  return cfg;
}

Eigen::MatrixXd random_matrix(int rows, int cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform01();
  }
  return m;
}

TEST(KernelMatrix, UnitDiagonalAndClosedForm) {
  Rng rng(1);
  const Eigen::MatrixXd x = random_matrix(6, 3, rng);
  const auto k = kernel_matrix(x, x, rbf(0.7));
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(k(i, i), 1.0, 1e-14);

  Eigen::MatrixXd a(1, 2), b(1, 2);
  a << 0.0, 0.0;
  const double h = 0.4;
  b << h * std::sqrt(2.0), 0.0;  // distance h*sqrt(2) -> entry e^-1
  EXPECT_NEAR(kernel_matrix(a, b, rbf(h))(0, 0), std::exp(-1.0), 1e-14);
}

TEST(KernelMatrix, RidgeShiftKeepsEigenvaluesAboveLambda) {
  Rng rng(2);
  const Eigen::MatrixXd x = random_matrix(10, 2, rng);
  const double lambda = 0.05;
  Eigen::MatrixXd shifted = kernel_matrix(x, x, rbf(0.5));
  shifted.diagonal().array() += lambda;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(shifted);
  EXPECT_GE(eig.eigenvalues().minCoeff(), lambda - 1e-10);
}

TEST(KernelMatrix, RejectsDimensionMismatch) {
  Eigen::MatrixXd a(2, 2), b(2, 3);
  a.setZero();
  b.setZero();
  EXPECT_THROW(kernel_matrix(a, b, rbf(1.0)), DataError);
}

TEST(KrrLoss, IdentityAtMatchingSupports) {
  // Xs = Xt, ys = yt: residual = lambda (K + lambda I)^-1 y, so
  // loss = lambda^2 / 2 * ||(K + lambda I)^-1 y||^2.
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 5 + static_cast<int>(rng.uniform_index(8));
    const Eigen::MatrixXd x = random_matrix(n, 2, rng);
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, 2);
    for (int i = 0; i < n; ++i) y(i, static_cast<int>(rng.uniform_index(2))) = 1.0;

    const double lambda = 0.01 + rng.uniform01();
    const auto cfg = rbf(0.6, lambda);
    const double loss = krr_loss(x, y, x, y, cfg);

    Eigen::MatrixXd reg = kernel_matrix(x, x, cfg);
    reg.diagonal().array() += lambda;
    const Eigen::MatrixXd solved = reg.llt().solve(y);
    EXPECT_NEAR(loss, 0.5 * lambda * lambda * solved.squaredNorm(), 1e-10);
  }
}

TEST(KrrLoss, LargeLambdaApproachesPureTargetNorm) {
  Rng rng(4);
  const Eigen::MatrixXd xt = random_matrix(12, 2, rng);
  const Eigen::MatrixXd xs = random_matrix(4, 2, rng);
  Eigen::MatrixXd yt = Eigen::MatrixXd::Zero(12, 2);
  for (int i = 0; i < 12; ++i) yt(i, i % 2) = 1.0;
  Eigen::MatrixXd ys = Eigen::MatrixXd::Zero(4, 2);
  for (int i = 0; i < 4; ++i) ys(i, i % 2) = 1.0;

  const double limit = 0.5 * yt.squaredNorm();
  double prev_gap = 1e300;
  for (double lambda : {1e2, 1e4, 1e6}) {
    const double loss = krr_loss(xt, yt, xs, ys, rbf(0.5, lambda));
    const double gap = std::abs(loss - limit);
    EXPECT_LT(gap, prev_gap);
    prev_gap = gap;
  }
  EXPECT_LT(prev_gap, 1e-3);
}

TEST(KrrLoss, MatchesNaiveDenseEvaluation) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd xt = random_matrix(8, 2, rng);
    const Eigen::MatrixXd xs = random_matrix(3, 2, rng);
    Eigen::MatrixXd yt = Eigen::MatrixXd::Zero(8, 2);
    for (int i = 0; i < 8; ++i) yt(i, static_cast<int>(rng.uniform_index(2))) = 1.0;
    Eigen::MatrixXd ys = Eigen::MatrixXd::Zero(3, 2);
    for (int i = 0; i < 3; ++i) ys(i, static_cast<int>(rng.uniform_index(2))) = 1.0;

    const double bandwidth = 0.3 + rng.uniform01();
    const double lambda = 0.01 + 0.2 * rng.uniform01();
    const double lib = krr_loss(xt, yt, xs, ys, rbf(bandwidth, lambda));
    const double naive = testsupport::naive_krr_loss(xt, yt, xs, ys, bandwidth, lambda);
    EXPECT_NEAR(lib, naive, 1e-9 * (1.0 + naive));
  }
}

TEST(CombinedLoss, ReductionsAtTheEndpoints) {
  Rng rng(6);
  const Eigen::MatrixXd xt = random_matrix(10, 2, rng);
  const Eigen::MatrixXd xs_init = random_matrix(3, 2, rng);
  const Eigen::MatrixXd xs = random_matrix(3, 2, rng);
  Eigen::MatrixXd yt = Eigen::MatrixXd::Zero(10, 2);
  for (int i = 0; i < 10; ++i) yt(i, i % 2) = 1.0;
  Eigen::MatrixXd ys = Eigen::MatrixXd::Zero(3, 2);
  for (int i = 0; i < 3; ++i) ys(i, i % 2) = 1.0;
  const auto cfg = rbf(0.5);

  const double krr_at_init = krr_loss(xt, yt, xs_init, ys, cfg);
  EXPECT_NEAR(combined_loss(xs_init, ys, xt, yt, xs_init, 0.25, cfg),
              0.75 * krr_at_init, 1e-12);
  EXPECT_NEAR(combined_loss(xs, ys, xt, yt, xs_init, 0.0, cfg),
              krr_loss(xt, yt, xs, ys, cfg), 1e-15);
  EXPECT_NEAR(combined_loss(xs_init, ys, xt, yt, xs_init, 1.0, cfg), 0.0, 1e-15);
  EXPECT_GT(combined_loss(xs, ys, xt, yt, xs_init, 1.0, cfg), 0.0);
}

ClusterSet clusters_from_centroids(const Eigen::MatrixXd& centroids,
                                   const std::vector<int>& labels) {
  ClusterSet set;
  for (int i = 0; i < centroids.rows(); ++i) {
    ClusterEntry e;
    e.component.mean = centroids.row(i).transpose();
    e.component.variance = 1e-3;
    e.label = labels[static_cast<std::size_t>(i)];
    e.member_indices = {i};
    set.clusters.push_back(std::move(e));
  }
  return set;
}

Dataset slice_of(const Eigen::MatrixXd& x, const std::vector<int>& labels, int c) {
  Dataset d;
  d.features = x;
  d.labels = labels;
  d.class_count = c;
  return d;
}

TEST(Adapt, AlphaOneIsIdentityOnSupportPoints) {
  Rng rng(7);
  const Eigen::MatrixXd x = random_matrix(20, 2, rng);
  std::vector<int> labels(20);
  for (auto& y : labels) y = static_cast<int>(rng.uniform_index(2));
  const Eigen::MatrixXd centroids = random_matrix(4, 2, rng);
  const auto set = clusters_from_centroids(centroids, {0, 1, 0, 1});

  AdaptConfig acfg;
  acfg.alpha = 1.0;
  acfg.max_steps = 50;
  const auto result = adapt(set, slice_of(x, labels, 2), rbf(0.5), acfg);
  EXPECT_EQ(result.support_points, result.initial_points);
}

TEST(Adapt, GradientMatchesCentralFiniteDifferences) {
  // Relative error < 1e-4 against a central-difference oracle on >= 20
  // random instances, checked on the full combined objective.
  Rng rng(8);
  int checked = 0;
  for (int trial = 0; trial < 24; ++trial) {
    const int t = 6 + static_cast<int>(rng.uniform_index(6));
    const int s = 2 + static_cast<int>(rng.uniform_index(3));
    const Eigen::MatrixXd xt = random_matrix(t, 2, rng);
    Eigen::MatrixXd yt = Eigen::MatrixXd::Zero(t, 2);
    for (int i = 0; i < t; ++i) yt(i, static_cast<int>(rng.uniform_index(2))) = 1.0;
    Eigen::MatrixXd ys = Eigen::MatrixXd::Zero(s, 2);
    for (int i = 0; i < s; ++i) ys(i, i % 2) = 1.0;
    const Eigen::MatrixXd xs = random_matrix(s, 2, rng);
    const Eigen::MatrixXd xs_init = random_matrix(s, 2, rng);
    const double alpha = 0.3 * rng.uniform01();
    const auto cfg = rbf(0.4 + 0.4 * rng.uniform01(), 0.05);

    // Analytic gradient through the solve, assembled as in adapt().
    const auto solve = detail::krr_solve(xt, yt, xs, ys, cfg);
    const Eigen::MatrixXd g_krr = detail::krr_gradient(solve, xt, xs, cfg.bandwidth);
    const double denom = fidelity_denominator(xs_init);
    const Eigen::MatrixXd analytic =
        alpha * 2.0 * (xs - xs_init) / denom + (1.0 - alpha) * g_krr;

    const double h = 1e-5;
    double max_rel = 0.0;
    for (int i = 0; i < s; ++i) {
      for (int j = 0; j < 2; ++j) {
        Eigen::MatrixXd plus = xs, minus = xs;
        plus(i, j) += h;
        minus(i, j) -= h;
        const double fd = (combined_loss(plus, ys, xt, yt, xs_init, alpha, cfg) -
                           combined_loss(minus, ys, xt, yt, xs_init, alpha, cfg)) /
                          (2.0 * h);
        const double rel = std::abs(analytic(i, j) - fd) /
                           std::max(1e-8, std::abs(fd));
        max_rel = std::max(max_rel, rel);
      }
    }
    EXPECT_LT(max_rel, 1e-4) << "trial " << trial;
    ++checked;
  }
  EXPECT_GE(checked, 20);
}

TEST(Adapt, LossTraceNonincreasingAndClamped) {
  Rng rng(9);
  const auto d = make_toy(ToyKind::kMoons, 80, 12);
  const auto scaler = fit_scaler(d);
  const auto scaled = apply_scaler(d, scaler);

  Eigen::MatrixXd centroids = random_matrix(6, 2, rng);
  const auto set = clusters_from_centroids(centroids, {0, 1, 0, 1, 0, 1});
  AdaptConfig acfg;
  acfg.alpha = 0.3;
  acfg.max_steps = 60;
  const auto result = adapt(set, scaled, rbf(0.0 /* median heuristic */), acfg);

  for (std::size_t i = 1; i < result.loss_trace.size(); ++i) {
    EXPECT_LE(result.loss_trace[i].second, result.loss_trace[i - 1].second);
  }
  EXPECT_GE(result.support_points.minCoeff(), 0.0);
  EXPECT_LE(result.support_points.maxCoeff(), 1.0);
}

TEST(Adapt, ImprovesKrrLossFromMisclassifyingInitialization) {
  // Separable blobs; centroids deliberately pushed toward the boundary so
  // the initialization misclassifies edge points, adaptation must strictly
  // improve the regression loss.
  const auto d = make_toy(ToyKind::kBlobs, 120, 3);
  const auto scaled = apply_scaler(d, fit_scaler(d));

  Eigen::MatrixXd centroids(2, 2);
  centroids << 0.45, 0.45, 0.55, 0.55;  // nearly collapsed at the boundary
  const auto set = clusters_from_centroids(centroids, {0, 1});

  AdaptConfig acfg;
  acfg.alpha = 0.0;  // pure KRR objective
  acfg.max_steps = 120;
  const auto cfg = rbf(0.3, 1e-3);
  const auto result = adapt(set, scaled, cfg, acfg);

  const Eigen::MatrixXd ys = result.support_labels;
  const Eigen::MatrixXd yt = one_hot(scaled.labels, 2);
  const double before = krr_loss(scaled.features, yt, result.initial_points, ys, cfg);
  const double after = krr_loss(scaled.features, yt, result.support_points, ys, cfg);
  EXPECT_LT(after, before);
  EXPECT_LT(after, 0.8 * before);
}

TEST(Adapt, RejectsEmptyClusterSet) {
  ClusterSet empty;
  Dataset d;
  d.features.resize(2, 2);
  d.features.setZero();
  d.labels = {0, 0};
  d.class_count = 1;
  AdaptConfig acfg;
  EXPECT_THROW(adapt(empty, d, rbf(0.5), acfg), DataError);
}

TEST(MedianHeuristic, PositiveAndScaleTracking) {
  Rng rng(10);
  const Eigen::MatrixXd x = random_matrix(50, 2, rng);
  const double h1 = median_heuristic_bandwidth(x);
  const double h2 = median_heuristic_bandwidth(2.0 * x);
  EXPECT_GT(h1, 0.0);
  EXPECT_NEAR(h2, 2.0 * h1, 1e-9);
}

}  // namespace
}  // namespace clustmix
