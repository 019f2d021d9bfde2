#pragma once

// Gaussian differential privacy accounting for the mixing mechanism:
// mu-GDP <-> (epsilon, delta) conversion, composition, the mixture-mechanism
// delta, and calibration solvers for minimal noise / minimal mixture size.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "clustmix/errors.hpp"

namespace clustmix {

// Target (epsilon, delta) plus the derived GDP parameter: the largest mu for
// which delta_of_mu(epsilon, mu) stays within the delta budget.
struct PrivacyParams {
  double epsilon = 1.0;
  double delta = 1e-5;
  double mu = 0.0;
};

// Shape of one averaging-plus-noise release: l records averaged, per-coordinate
// noise sigma, over D features and C classes.
struct MechanismShape {
  long long l = 1;
  double sigma = 1.0;
  int feature_count = 1;
  int class_count = 1;
};

inline double std_normal_cdf(double x) {
  return 0.5 * std::erfc(-x * M_SQRT1_2);
}

// log Phi(x), finite for any double. Direct evaluation underflows near
// x = -37.5; below -36 we use the continued tail expansion
// Phi(x) ~ phi(x)/(-x) * (1 - 1/x^2 + 3/x^4 - 15/x^6 + 105/x^8).
inline double log_std_normal_cdf(double x) {
  if (x > -36.0) {
    return std::log(std_normal_cdf(x));
  }
  const double x2 = x * x;
  const double series =
      1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2) +
      105.0 / (x2 * x2 * x2 * x2);
  return -0.5 * x2 - std::log(-x) - 0.5 * std::log(2.0 * M_PI) +
         std::log(series);
}

namespace detail {

// Phi(a) - e^eps * Phi(b), with the product evaluated in log space so the
// expression stays finite for eps up to ~700.
inline double phi_difference(double epsilon, double a, double b) {
  const double lead = std_normal_cdf(a);
  const double tail = std::exp(epsilon + log_std_normal_cdf(b));
  return std::clamp(lead - tail, 0.0, 1.0);
}

}  // namespace detail

// delta(eps) = Phi(-eps/mu + mu/2) - e^eps * Phi(-eps/mu - mu/2).
inline double delta_of_mu(double epsilon, double mu) {
  if (!(mu > 0.0)) throw ConfigError("delta_of_mu: mu must be positive");
  if (epsilon < 0.0) throw ConfigError("delta_of_mu: epsilon must be >= 0");
  const double ratio = epsilon / mu;
  return detail::phi_difference(epsilon, -ratio + 0.5 * mu, -ratio - 0.5 * mu);
}

// n-fold composition: sqrt(sum mu_i^2).
inline double compose_mu(const std::vector<double>& mus) {
  if (mus.empty()) throw ConfigError("compose_mu: empty list");
  double sum_sq = 0.0;
  for (double m : mus) {
    if (!(m > 0.0)) throw ConfigError("compose_mu: all mu must be positive");
    sum_sq += m * m;
  }
  return std::sqrt(sum_sq);
}

inline void validate_shape(const MechanismShape& s) {
  if (s.l < 1) throw ConfigError("mechanism shape: l must be >= 1");
  if (!(s.sigma > 0.0)) throw ConfigError("mechanism shape: sigma must be > 0");
  if (s.feature_count < 1) throw ConfigError("mechanism shape: D must be >= 1");
  if (s.class_count < 1) throw ConfigError("mechanism shape: C must be >= 1");
}

// mu = sqrt(C*D) / (l * sigma).
inline double mechanism_mu(const MechanismShape& shape) {
  validate_shape(shape);
  return std::sqrt(static_cast<double>(shape.class_count) *
                   static_cast<double>(shape.feature_count)) /
         (static_cast<double>(shape.l) * shape.sigma);
}

// delta(eps, sigma, l, C, D)
//   = Phi(-eps*l*sigma/sqrt(CD) + sqrt(CD)/(2 l sigma))
//     - e^eps * Phi(-eps*l*sigma/sqrt(CD) - sqrt(CD)/(2 l sigma)).
// Kept as a separate evaluation route from delta_of_mu(mechanism_mu(.));
// the two must agree to 1e-14.
inline double mechanism_delta(double epsilon, const MechanismShape& shape) {
  validate_shape(shape);
  if (epsilon < 0.0) throw ConfigError("mechanism_delta: epsilon must be >= 0");
  const double root_cd =
      std::sqrt(static_cast<double>(shape.class_count) *
                static_cast<double>(shape.feature_count));
  const double scaled = static_cast<double>(shape.l) * shape.sigma / root_cd;
  const double half = 1.0 / (2.0 * scaled);
  return detail::phi_difference(epsilon, -epsilon * scaled + half,
                                -epsilon * scaled - half);
}

namespace detail {

struct CalibrationKey {
  std::int64_t epsilon_fixed;
  std::int64_t delta_fixed;
  long long l;
  int class_count;
  int feature_count;
  auto operator<=>(const CalibrationKey&) const = default;
};

inline std::int64_t fixed_point(double x) {
  // 12 significant-ish digits; collisions only between inputs that agree to
  // this precision, which then calibrate to the same sigma anyway.
  return static_cast<std::int64_t>(std::llround(x * 1e12));
}

inline std::map<CalibrationKey, double>& calibration_cache() {
  static std::map<CalibrationKey, double> cache;
  return cache;
}

inline std::mutex& calibration_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace detail

// Smallest sigma with mechanism_delta(eps, {l, sigma, C, D}) <= delta_target.
// delta is strictly decreasing in sigma, so a bracketing bisection converges;
// results are cached on rounded inputs.
inline double calibrate_sigma(double epsilon, double delta_target, long long l,
                              int class_count, int feature_count) {
  if (!(delta_target > 0.0 && delta_target < 1.0)) {
    throw ConfigError("calibrate_sigma: delta target must be in (0, 1)");
  }
  if (l < 1) throw ConfigError("calibrate_sigma: l must be >= 1");
  if (epsilon < 0.0) throw ConfigError("calibrate_sigma: epsilon must be >= 0");

  const detail::CalibrationKey key{detail::fixed_point(epsilon),
                                   detail::fixed_point(delta_target), l,
                                   class_count, feature_count};
  {
    std::lock_guard<std::mutex> lock(detail::calibration_mutex());
    auto it = detail::calibration_cache().find(key);
    if (it != detail::calibration_cache().end()) return it->second;
  }

  constexpr double kSigmaCap = 1e6;
  const auto delta_at = [&](double sigma) {
    return mechanism_delta(epsilon,
                           {l, sigma, feature_count, class_count});
  };

  double hi = 1e-3;
  while (delta_at(hi) > delta_target) {
    hi *= 2.0;
    if (hi > kSigmaCap) {
      std::ostringstream msg;
      msg << "calibrate_sigma: no sigma <= 1e6 meets delta <= " << delta_target
          << " at epsilon " << epsilon << ", l " << l;
      throw InfeasibleError(msg.str());
    }
  }
  double lo = 0.0;  // delta -> 1 as sigma -> 0+, always above the target
  while (hi - lo > 1e-9 * hi) {
    const double mid = lo == 0.0 ? hi / 2.0 : 0.5 * (lo + hi);
    if (delta_at(mid) > delta_target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }

  {
    std::lock_guard<std::mutex> lock(detail::calibration_mutex());
    detail::calibration_cache().emplace(key, hi);
  }
  return hi;
}

// Smallest integer l >= 1 with mechanism_delta(eps, {l, sigma_max, C, D})
// <= delta_target. delta is decreasing in l; exponential search then integer
// bisection, exact at the boundary.
inline long long min_mixture_size(double epsilon, double delta_target,
                                  double sigma_max, int class_count,
                                  int feature_count) {
  if (!(delta_target > 0.0 && delta_target < 1.0)) {
    throw ConfigError("min_mixture_size: delta target must be in (0, 1)");
  }
  if (!(sigma_max > 0.0)) {
    throw ConfigError("min_mixture_size: sigma_max must be > 0");
  }
  if (epsilon < 0.0) throw ConfigError("min_mixture_size: epsilon must be >= 0");

  constexpr long long kLCap = 1000000000LL;
  const auto feasible = [&](long long l) {
    return mechanism_delta(epsilon,
                           {l, sigma_max, feature_count, class_count}) <=
           delta_target;
  };
  if (feasible(1)) return 1;
  long long hi = 2;
  while (!feasible(hi)) {
    hi *= 2;
    if (hi > kLCap) {
      std::ostringstream msg;
      msg << "min_mixture_size: no l <= 1e9 meets delta <= " << delta_target
          << " at epsilon " << epsilon << ", sigma_max " << sigma_max;
      throw InfeasibleError(msg.str());
    }
  }
  long long lo = hi / 2;  // infeasible
  while (hi - lo > 1) {
    const long long mid = lo + (hi - lo) / 2;
    if (feasible(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

// Largest mu whose (epsilon, delta(epsilon)) curve stays within the budget.
inline double mu_for_target(double epsilon, double delta_target) {
  if (!(delta_target > 0.0 && delta_target < 1.0)) {
    throw ConfigError("mu_for_target: delta target must be in (0, 1)");
  }
  double lo = 1e-12, hi = 1e-12;
  while (delta_of_mu(epsilon, hi) <= delta_target) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e9) break;  // delta target close to 1; mu effectively unbounded
  }
  while (hi - lo > 1e-12 * hi) {
    const double mid = 0.5 * (lo + hi);
    if (delta_of_mu(epsilon, mid) <= delta_target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

inline PrivacyParams make_privacy_params(double epsilon, double delta) {
  if (epsilon < 0.0) throw ConfigError("privacy: epsilon must be >= 0");
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ConfigError("privacy: delta must be in (0, 1)");
  }
  return PrivacyParams{epsilon, delta, mu_for_target(epsilon, delta)};
}

}  // namespace clustmix
