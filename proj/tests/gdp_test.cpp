#include "clustmix/gdp.hpp"

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "clustmix/rng.hpp"
#include "test_support.hpp"

namespace clustmix {
namespace {

TEST(StdNormalCdf, MatchesIntegrationOracle) {
  EXPECT_DOUBLE_EQ(std_normal_cdf(0.0), 0.5);
  EXPECT_NEAR(std_normal_cdf(1.96), 0.9750021048517796, 1e-12);
  EXPECT_NEAR(std_normal_cdf(1.96), testsupport::oracle_phi(1.96), 1e-12);
  for (double x = -6.0; x <= 6.0; x += 0.173) {
    EXPECT_NEAR(std_normal_cdf(x), testsupport::oracle_phi(x), 1e-12) << "x=" << x;
  }
}

TEST(StdNormalCdf, DeepTail) {
  const double tail = std_normal_cdf(-8.0);
  EXPECT_GT(tail, 0.0);
  EXPECT_LT(tail, 1e-15);
  EXPECT_NEAR(tail / testsupport::oracle_phi(-8.0), 1.0, 1e-9);
}

TEST(StdNormalCdf, SymmetryAndMonotonicity) {
  double prev = -1.0;
  for (double x = -10.0; x <= 10.0; x += 0.0917) {
    EXPECT_NEAR(std_normal_cdf(-x), 1.0 - std_normal_cdf(x), 1e-15);
    const double v = std_normal_cdf(x);
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(LogStdNormalCdf, AgreesWithDirectLogInOverlap) {
  for (double x = -36.0; x <= 2.0; x += 0.37) {
    EXPECT_NEAR(log_std_normal_cdf(x), std::log(std_normal_cdf(x)),
                1e-10 * std::abs(std::log(std_normal_cdf(x))) + 1e-12)
        << "x=" << x;
  }
  // Below the erfc underflow point the value must stay finite and ordered.
  double prev = log_std_normal_cdf(-300.0);
  EXPECT_TRUE(std::isfinite(prev));
  for (double x = -299.0; x <= -36.0; x += 1.0) {
    const double v = log_std_normal_cdf(x);
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GT(v, prev);
    prev = v;
  }
}

TEST(DeltaOfMu, FrozenOracleValues) {
  EXPECT_NEAR(delta_of_mu(0.0, 0.2), 0.07965567455405796, 1e-9);
  EXPECT_NEAR(delta_of_mu(1.0, 1.0), 0.12693673750664395, 1e-9);
  EXPECT_NEAR(delta_of_mu(0.0, 0.2), testsupport::oracle_delta(0.0, 0.2), 1e-12);
  EXPECT_NEAR(delta_of_mu(1.0, 1.0), testsupport::oracle_delta(1.0, 1.0), 1e-12);
}

TEST(DeltaOfMu, IdenticalDistributionsLimit) {
  EXPECT_LT(delta_of_mu(0.0, 1e-9), 1e-9);
  EXPECT_LT(delta_of_mu(0.0, 1e-3), 1e-3);
}

TEST(DeltaOfMu, RejectsBadArguments) {
  EXPECT_THROW(delta_of_mu(1.0, 0.0), ConfigError);
  EXPECT_THROW(delta_of_mu(1.0, -1.0), ConfigError);
  EXPECT_THROW(delta_of_mu(-0.5, 1.0), ConfigError);
}

TEST(DeltaOfMu, MonotoneAndBounded) {
  // Strict monotonicity holds wherever delta has not underflowed to zero.
  const std::vector<double> eps_grid{0.0, 0.1, 0.5, 1.0, 3.0, 10.0};
  const std::vector<double> mu_grid{0.05, 0.1, 0.3, 0.7, 1.0, 2.0, 5.0};
  for (double eps : eps_grid) {
    double prev = -1.0;
    for (double mu : mu_grid) {
      const double d = delta_of_mu(eps, mu);
      EXPECT_GE(d, 0.0);
      EXPECT_LE(d, 1.0);
      if (d > 1e-30) {
        EXPECT_GT(d, prev) << "eps=" << eps << " mu=" << mu;
      }
      prev = d;
    }
  }
  for (double mu : mu_grid) {
    double prev = 2.0;
    for (double eps : eps_grid) {
      const double d = delta_of_mu(eps, mu);
      if (prev > 1e-30) {
        EXPECT_LT(d, prev) << "mu=" << mu << " eps=" << eps;
      }
      prev = d;
    }
  }
}

TEST(DeltaOfMu, StaysFiniteForHugeEpsilon) {
  const double d = delta_of_mu(700.0, 0.5);
  EXPECT_TRUE(std::isfinite(d));
  EXPECT_GE(d, 0.0);
  EXPECT_LE(d, 1.0);
}

TEST(ComposeMu, ClosedForms) {
  EXPECT_DOUBLE_EQ(compose_mu({0.3, 0.4}), 0.5);
  EXPECT_DOUBLE_EQ(compose_mu({0.7}), 0.7);
  const std::vector<double> five(5, 0.2);
  EXPECT_NEAR(compose_mu(five), 0.2 * std::sqrt(5.0), 1e-15);
  EXPECT_DOUBLE_EQ(compose_mu({0.3, 0.4}), compose_mu({0.4, 0.3}));
  EXPECT_THROW(compose_mu({}), ConfigError);
  EXPECT_THROW(compose_mu({0.2, -0.1}), ConfigError);
}

TEST(MechanismMu, ClosedForms) {
  EXPECT_DOUBLE_EQ(mechanism_mu({10, 0.5, 1, 1}), 0.2);
  EXPECT_DOUBLE_EQ(mechanism_mu({20, 0.5, 1, 1}), 0.1);
  EXPECT_DOUBLE_EQ(mechanism_mu({6, 1.0, 9, 4}), 1.0);
  EXPECT_THROW(mechanism_mu({0, 1.0, 1, 1}), ConfigError);
  EXPECT_THROW(mechanism_mu({1, 0.0, 1, 1}), ConfigError);
}

TEST(MechanismDelta, AgreesWithMuRouteOnGrid) {
  // Two evaluation routes for the same quantity must agree to 1e-14.
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const MechanismShape shape{1 + static_cast<long long>(rng.uniform_index(500)),
                               0.01 + rng.uniform01() * 3.0,
                               1 + static_cast<int>(rng.uniform_index(100)),
                               1 + static_cast<int>(rng.uniform_index(10))};
    const double eps = rng.uniform01() * 10.0;
    const double via_shape = mechanism_delta(eps, shape);
    const double via_mu = delta_of_mu(eps, mechanism_mu(shape));
    EXPECT_NEAR(via_shape, via_mu, 1e-14)
        << "l=" << shape.l << " sigma=" << shape.sigma << " D=" << shape.feature_count
        << " C=" << shape.class_count << " eps=" << eps;
  }
}

TEST(MechanismDelta, OracleValue) {
  // mu = sqrt(1*1)/(10*0.5) = 0.2.
  const double d = mechanism_delta(1.0, {10, 0.5, 1, 1});
  EXPECT_NEAR(d, 1.7546333318962327e-8, 1e-15);
  EXPECT_NEAR(d, testsupport::oracle_delta(1.0, 0.2), 1e-15);
}

TEST(MechanismDelta, MonotoneInShape) {
  const double eps = 1.0;
  double prev = 2.0;
  for (double lsigma : {0.5, 1.0, 2.0, 4.0, 8.0}) {
    const double d = mechanism_delta(eps, {1, lsigma, 2, 1});
    EXPECT_LT(d, prev);
    prev = d;
  }
  EXPECT_LT(mechanism_delta(eps, {10, 0.5, 2, 1}),
            mechanism_delta(eps, {10, 0.5, 4, 1}));
  EXPECT_LT(mechanism_delta(eps, {10, 0.5, 2, 1}),
            mechanism_delta(eps, {10, 0.5, 2, 3}));
}

TEST(CalibrateSigma, RoundTripOnRandomTuples) {
  Rng rng(99);
  for (int i = 0; i < 200; ++i) {
    const double eps = rng.uniform01() * 5.0;
    const double delta = std::pow(10.0, -1.0 - rng.uniform01() * 6.0);
    const long long l = 1 + static_cast<long long>(rng.uniform_index(300));
    const int c = 1 + static_cast<int>(rng.uniform_index(10));
    const int d = 1 + static_cast<int>(rng.uniform_index(50));
    const double sigma = calibrate_sigma(eps, delta, l, c, d);
    EXPECT_LE(mechanism_delta(eps, {l, sigma, d, c}), delta);
    EXPECT_GT(mechanism_delta(eps, {l, sigma * (1.0 - 1e-4), d, c}), delta);
  }
}

TEST(CalibrateSigma, ScalesInverselyWithMixtureSize) {
  const double s100 = calibrate_sigma(1.0, 1e-5, 100, 1, 2);
  const double s200 = calibrate_sigma(1.0, 1e-5, 200, 1, 2);
  EXPECT_NEAR(s200, 0.5 * s100, 1e-5 * s100);
}

TEST(CalibrateSigma, MatchesDenseGridScan) {
  // Independent oracle: scan sigma on a fine grid for the feasibility edge.
  const double eps = 1.0, delta = 1e-5;
  const long long l = 100;
  const int c = 1, d = 2;
  const double sigma = calibrate_sigma(eps, delta, l, c, d);
  double scan = -1.0;
  for (double s = 1e-3; s < 1.0; s *= 1.0 + 1e-4) {
    if (mechanism_delta(eps, {l, s, d, c}) <= delta) {
      scan = s;
      break;
    }
  }
  ASSERT_GT(scan, 0.0);
  EXPECT_NEAR(sigma, scan, 2e-4 * scan);
  EXPECT_NEAR(sigma, 0.05275909854174817, 1e-6 * sigma);
}

TEST(CalibrateSigma, CacheReturnsIdenticalValue) {
  const double first = calibrate_sigma(2.0, 1e-6, 64, 3, 7);
  const double second = calibrate_sigma(2.0, 1e-6, 64, 3, 7);
  EXPECT_EQ(first, second);
}

TEST(CalibrateSigma, RejectsBadTargets) {
  EXPECT_THROW(calibrate_sigma(1.0, 0.0, 10, 1, 1), ConfigError);
  EXPECT_THROW(calibrate_sigma(1.0, 1.0, 10, 1, 1), ConfigError);
  EXPECT_THROW(calibrate_sigma(1.0, 0.5, 0, 1, 1), ConfigError);
}

TEST(MinMixtureSize, RoundTripAgainstLinearScan) {
  Rng rng(1234);
  for (int i = 0; i < 50; ++i) {
    const double eps = 0.1 + rng.uniform01() * 5.0;
    const double delta = std::pow(10.0, -1.0 - rng.uniform01() * 5.0);
    const double sigma_max = 0.05 + rng.uniform01() * 2.0;
    const int c = 1 + static_cast<int>(rng.uniform_index(5));
    const int d = 1 + static_cast<int>(rng.uniform_index(20));
    const long long l_min = min_mixture_size(eps, delta, sigma_max, c, d);
    EXPECT_LE(mechanism_delta(eps, {l_min, sigma_max, d, c}), delta);
    if (l_min > 1) {
      EXPECT_GT(mechanism_delta(eps, {l_min - 1, sigma_max, d, c}), delta);
    }
    if (l_min < 4000) {
      long long scan = -1;
      for (long long l = 1; l <= 4000; ++l) {
        if (mechanism_delta(eps, {l, sigma_max, d, c}) <= delta) {
          scan = l;
          break;
        }
      }
      EXPECT_EQ(l_min, scan);
    }
  }
}

TEST(MinMixtureSize, LargerCeilingNeverNeedsMore) {
  long long prev = 1LL << 40;
  for (double sigma_max : {0.05, 0.1, 0.3, 1.0, 3.0}) {
    const long long l = min_mixture_size(1.0, 1e-4, sigma_max, 2, 2);
    EXPECT_LE(l, prev);
    prev = l;
  }
}

TEST(MinMixtureSize, LargeEpsilonNeedsSmallClusters) {
  const long long l = min_mixture_size(10.0, 1e-2, 1.0, 1, 2);
  EXPECT_LE(l, 3);
  long long scan = -1;
  for (long long cand = 1; cand <= 100; ++cand) {
    if (mechanism_delta(10.0, {cand, 1.0, 2, 1}) <= 1e-2) {
      scan = cand;
      break;
    }
  }
  EXPECT_EQ(l, scan);
}

TEST(MuForTarget, SaturatesBudget) {
  for (double eps : {0.0, 0.5, 1.0, 5.0}) {
    for (double delta : {1e-2, 1e-5, 1e-8}) {
      const double mu = mu_for_target(eps, delta);
      EXPECT_LE(delta_of_mu(eps, mu), delta);
      EXPECT_GT(delta_of_mu(eps, mu * 1.001), delta);
    }
  }
}

TEST(PrivacyParams, DerivedMuIsConsistent) {
  const PrivacyParams pp = make_privacy_params(1.0, 1e-5);
  EXPECT_NEAR(pp.mu, 0.2680511232112942, 1e-6);
  EXPECT_THROW(make_privacy_params(-1.0, 1e-5), ConfigError);
  EXPECT_THROW(make_privacy_params(1.0, 1.5), ConfigError);
}

}  // namespace
}  // namespace clustmix
