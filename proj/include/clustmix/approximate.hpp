#pragma once

// Approximate step: random slicing of the dataset into regions, then
// size-constrained isotropic Gaussian mixture fitting per (slice, class)
// via hard-assignment EM, with a constrained k-means fallback.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "clustmix/dataset.hpp"
#include "clustmix/errors.hpp"
#include "clustmix/parallel.hpp"
#include "clustmix/rng.hpp"

namespace clustmix {

struct Slice {
  std::vector<int> row_indices;  // ascending
  int feature = 0;               // sliced feature
  double lower = -std::numeric_limits<double>::infinity();  // exclusive
  double upper = std::numeric_limits<double>::infinity();   // inclusive
};

struct GmmComponent {
  Eigen::VectorXd mean;
  double variance = 0.0;  // isotropic, floored at kVarianceFloor
  double weight = 0.0;    // within its fitting region
};

inline constexpr double kVarianceFloor = 1e-9;

struct ClusterEntry {
  std::vector<int> member_indices;  // global row indices, ascending
  GmmComponent component;
  int label = 0;
  int slice_index = 0;
};

struct ClusterSet {
  std::vector<ClusterEntry> clusters;
  long long min_size = 1;
};

// Picks one feature uniformly at random, samples n_slices-1 cutoff values
// uniformly from that feature's observed values, and partitions rows into
// the intervals the cutoffs bound (a row joins the first slice whose cutoff
// is >= its value; the region above the top cutoff forms the last slice).
// Empty slices are dropped.
inline std::vector<Slice> random_slice(const Dataset& d, int n_slices,
                                       std::uint64_t seed) {
  if (n_slices < 1) throw ConfigError("random_slice: n_slices must be >= 1");
  const int t = static_cast<int>(d.row_count());
  Rng rng(mix_seed(seed, 0x57a3eULL));
  const int feature =
      static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(d.feature_count())));

  std::vector<double> cutoffs;
  for (int i = 0; i < n_slices - 1; ++i) {
    const int row = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(t)));
    cutoffs.push_back(d.features(row, feature));
  }
  std::sort(cutoffs.begin(), cutoffs.end());
  cutoffs.erase(std::unique(cutoffs.begin(), cutoffs.end()), cutoffs.end());

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<Slice> slices(cutoffs.size() + 1);
  for (std::size_t s = 0; s < slices.size(); ++s) {
    slices[s].feature = feature;
    slices[s].lower = s == 0 ? -inf : cutoffs[s - 1];
    slices[s].upper = s < cutoffs.size() ? cutoffs[s] : inf;
  }
  for (int i = 0; i < t; ++i) {
    const double v = d.features(i, feature);
    const auto it = std::lower_bound(cutoffs.begin(), cutoffs.end(), v);
    slices[static_cast<std::size_t>(it - cutoffs.begin())].row_indices.push_back(i);
  }
  slices.erase(std::remove_if(slices.begin(), slices.end(),
                              [](const Slice& s) { return s.row_indices.empty(); }),
               slices.end());
  return slices;
}

namespace detail {

struct FitState {
  std::vector<std::vector<int>> members;  // local indices per cluster
  Eigen::MatrixXd means;                  // k x D
  Eigen::VectorXd variances;              // k
  std::vector<double> objective_trace;    // accepted iterations only
  int iterations = 0;
};

// Greedy size-constrained assignment: point-cluster pairs in descending
// score order; a pair is taken only if enough unassigned points remain for
// every other cluster to still reach l_min. Feasible by construction when
// k * l_min <= n.
inline std::vector<std::vector<int>> constrained_assign(
    const Eigen::MatrixXd& scores /* n x k, larger is better */, int l_min) {
  const int n = static_cast<int>(scores.rows());
  const int k = static_cast<int>(scores.cols());

  struct Pair {
    double score;
    int point, cluster;
  };
  std::vector<Pair> pairs;
  pairs.reserve(static_cast<std::size_t>(n) * k);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < k; ++c) pairs.push_back({scores(i, c), i, c});
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.point != b.point) return a.point < b.point;
    return a.cluster < b.cluster;
  });

  std::vector<std::vector<int>> members(k);
  std::vector<bool> assigned(n, false);
  int unassigned = n;
  int total_deficit = k * l_min;
  for (const Pair& p : pairs) {
    if (unassigned == 0) break;
    if (assigned[p.point]) continue;
    const bool fills_deficit = static_cast<int>(members[p.cluster].size()) < l_min;
    const int deficit_after = total_deficit - (fills_deficit ? 1 : 0);
    if (unassigned - 1 < deficit_after) continue;  // reserve for deficits
    members[p.cluster].push_back(p.point);
    assigned[p.point] = true;
    --unassigned;
    if (fills_deficit) --total_deficit;
  }
  for (auto& m : members) std::sort(m.begin(), m.end());
  return members;
}

inline double log_gauss_iso(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                            double variance) {
  const double d = static_cast<double>(x.size());
  return -0.5 * d * std::log(2.0 * M_PI * variance) -
         (x - mean).squaredNorm() / (2.0 * variance);
}

inline double gmm_objective(const Eigen::MatrixXd& points,
                            const std::vector<std::vector<int>>& members,
                            const Eigen::MatrixXd& means,
                            const Eigen::VectorXd& variances) {
  double ll = 0.0;
  for (std::size_t c = 0; c < members.size(); ++c) {
    for (int i : members[c]) {
      ll += log_gauss_iso(points.row(i).transpose(), means.row(static_cast<int>(c)).transpose(),
                          variances(static_cast<int>(c)));
    }
  }
  return ll;
}

inline void update_moments(const Eigen::MatrixXd& points,
                           const std::vector<std::vector<int>>& members,
                           Eigen::MatrixXd& means, Eigen::VectorXd& variances) {
  const auto dims = static_cast<double>(points.cols());
  for (std::size_t c = 0; c < members.size(); ++c) {
    const auto& m = members[c];
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(points.cols());
    for (int i : m) mean += points.row(i).transpose();
    mean /= static_cast<double>(m.size());
    double ss = 0.0;
    for (int i : m) ss += (points.row(i).transpose() - mean).squaredNorm();
    means.row(static_cast<int>(c)) = mean.transpose();
    variances(static_cast<int>(c)) =
        std::max(ss / (static_cast<double>(m.size()) * dims), kVarianceFloor);
  }
}

// k-means++ seeding.
inline Eigen::MatrixXd seed_centers(const Eigen::MatrixXd& points, int k, Rng& rng) {
  const int n = static_cast<int>(points.rows());
  Eigen::MatrixXd centers(k, points.cols());
  centers.row(0) = points.row(static_cast<int>(rng.uniform_index(n)));
  Eigen::VectorXd dist2 = (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = dist2.sum();
    int chosen = 0;
    if (total > 0.0) {
      double target = rng.uniform01() * total;
      for (int i = 0; i < n; ++i) {
        target -= dist2(i);
        if (target <= 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = static_cast<int>(rng.uniform_index(n));
    }
    centers.row(c) = points.row(chosen);
    dist2 = dist2.cwiseMin((points.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  return centers;
}

}  // namespace detail

struct FitQuality {
  std::vector<double> objective_trace;
  int iterations = 0;
  bool used_fallback = false;
};

namespace detail {

// Shared EM-style loop. score_fn(points, means, variances) yields the n x k
// assignment scores; objective_fn evaluates the maximized objective. The
// E-step keeps the better of {greedy assignment, previous assignment}, so
// the accepted objective trace is nondecreasing; a non-improving iteration
// ends the loop with the best iterate retained.
template <typename ScoreFn, typename ObjectiveFn>
FitState constrained_fit_loop(const Eigen::MatrixXd& points, int k, int l_min,
                              std::uint64_t seed, int max_iter, double tol,
                              const ScoreFn& score_fn, const ObjectiveFn& objective_fn) {
  const int n = static_cast<int>(points.rows());
  if (k < 1) throw ConfigError("constrained fit: k must be >= 1");
  if (l_min < 1) throw ConfigError("constrained fit: l_min must be >= 1");
  if (static_cast<long long>(k) * l_min > n) {
    std::ostringstream msg;
    msg << "constrained fit infeasible: k=" << k << " * l_min=" << l_min
        << " exceeds " << n << " rows";
    throw InfeasibleError(msg.str());
  }

  Rng rng(mix_seed(seed, 0xc145ULL));
  FitState state;
  state.means = seed_centers(points, k, rng);
  const Eigen::RowVectorXd grand_mean = points.colwise().mean();
  const double grand_var = std::max(
      (points.rowwise() - grand_mean).rowwise().squaredNorm().sum() /
          (static_cast<double>(n) * points.cols()),
      kVarianceFloor);
  state.variances = Eigen::VectorXd::Constant(k, grand_var);

  double best = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iter; ++iter) {
    const Eigen::MatrixXd scores = score_fn(points, state.means, state.variances);
    auto proposal = constrained_assign(scores, l_min);
    if (!state.members.empty()) {
      // Greedy assignment is not guaranteed optimal; never move to a worse
      // assignment than the incumbent under the current parameters.
      const double prop = objective_fn(points, proposal, state.means, state.variances);
      const double inc = objective_fn(points, state.members, state.means, state.variances);
      if (prop < inc) proposal = state.members;
    }
    Eigen::MatrixXd means = state.means;
    Eigen::VectorXd variances = state.variances;
    update_moments(points, proposal, means, variances);
    const double objective = objective_fn(points, proposal, means, variances);
    if (!std::isfinite(objective)) {
      throw NumericError("constrained fit: objective is not finite");
    }
    if (iter > 0 && objective <= best + tol) {
      if (objective > best) {
        state.members = std::move(proposal);
        state.means = std::move(means);
        state.variances = std::move(variances);
        state.objective_trace.push_back(objective);
        ++state.iterations;
      }
      break;
    }
    state.members = std::move(proposal);
    state.means = std::move(means);
    state.variances = std::move(variances);
    state.objective_trace.push_back(objective);
    best = objective;
    ++state.iterations;
  }
  return state;
}

inline std::vector<ClusterEntry> state_to_clusters(const Eigen::MatrixXd& points,
                                                   const FitState& state) {
  std::vector<ClusterEntry> out;
  const double n = static_cast<double>(points.rows());
  for (std::size_t c = 0; c < state.members.size(); ++c) {
    ClusterEntry e;
    e.member_indices = state.members[c];
    e.component.mean = state.means.row(static_cast<int>(c)).transpose();
    e.component.variance = state.variances(static_cast<int>(c));
    e.component.weight = static_cast<double>(state.members[c].size()) / n;
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace detail

// Hard-assignment EM on the isotropic mixture with every cluster size held
// at >= l_min. Returns k clusters over local point indices.
inline std::vector<ClusterEntry> fit_constrained_gmm(
    const Eigen::MatrixXd& points, int k, int l_min, std::uint64_t seed,
    int max_iter = 60, double tol = 1e-9, FitQuality* quality = nullptr) {
  const auto score = [](const Eigen::MatrixXd& pts, const Eigen::MatrixXd& means,
                        const Eigen::VectorXd& variances) {
    const int n = static_cast<int>(pts.rows());
    const int k_ = static_cast<int>(means.rows());
    Eigen::MatrixXd s(n, k_);
    for (int c = 0; c < k_; ++c) {
      const double v = variances(c);
      const double norm = -0.5 * pts.cols() * std::log(2.0 * M_PI * v);
      const Eigen::VectorXd sq =
          (pts.rowwise() - means.row(c)).rowwise().squaredNorm();
      s.col(c) = (norm - sq.array() / (2.0 * v)).matrix();
    }
    return s;
  };
  const auto objective = [](const Eigen::MatrixXd& pts,
                            const std::vector<std::vector<int>>& members,
                            const Eigen::MatrixXd& means,
                            const Eigen::VectorXd& variances) {
    return detail::gmm_objective(pts, members, means, variances);
  };
  const auto state =
      detail::constrained_fit_loop(points, k, l_min, seed, max_iter, tol, score, objective);
  if (quality) {
    quality->objective_trace = state.objective_trace;
    quality->iterations = state.iterations;
  }
  return detail::state_to_clusters(points, state);
}

// Same constraint machinery minimizing within-cluster squared distance.
inline std::vector<ClusterEntry> fallback_constrained_kmeans(
    const Eigen::MatrixXd& points, int k, int l_min, std::uint64_t seed,
    int max_iter = 60, FitQuality* quality = nullptr) {
  const auto score = [](const Eigen::MatrixXd& pts, const Eigen::MatrixXd& means,
                        const Eigen::VectorXd&) {
    const int k_ = static_cast<int>(means.rows());
    Eigen::MatrixXd s(pts.rows(), k_);
    for (int c = 0; c < k_; ++c) {
      s.col(c) = -(pts.rowwise() - means.row(c)).rowwise().squaredNorm();
    }
    return s;
  };
  const auto objective = [](const Eigen::MatrixXd& pts,
                            const std::vector<std::vector<int>>& members,
                            const Eigen::MatrixXd& means, const Eigen::VectorXd&) {
    double ss = 0.0;
    for (std::size_t c = 0; c < members.size(); ++c) {
      for (int i : members[c]) {
        ss += (pts.row(i) - means.row(static_cast<int>(c))).squaredNorm();
      }
    }
    return -ss;
  };
  const auto state =
      detail::constrained_fit_loop(points, k, l_min, seed, max_iter, 1e-12, score, objective);
  if (quality) {
    quality->objective_trace = state.objective_trace;
    quality->iterations = state.iterations;
    quality->used_fallback = true;
  }
  return detail::state_to_clusters(points, state);
}

struct SkippedGroup {
  int slice_index;
  int label;
  int row_count;
};

struct ApproxDiagnostics {
  std::vector<SkippedGroup> skipped;     // (slice, class) groups below l_min
  std::vector<int> em_iterations;        // per fitted group
  std::vector<std::vector<double>> objective_traces;
  int fallback_count = 0;
};

struct ApproxResult {
  ClusterSet clusters;
  std::vector<Slice> slices;
  ApproxDiagnostics diagnostics;
};

// Full Approximate stage: slice, then cluster each (slice, class) group
// separately so every cluster carries an unambiguous label. k defaults to
// floor(count / (2 * l_min)) per group and is reduced to floor(count/l_min)
// when the requested k is infeasible. Groups below l_min are skipped and
// reported. EM failures revert to constrained k-means.
inline ApproxResult approximate(const Dataset& d, int n_slices, int k_per_slice,
                                long long l_min, std::uint64_t seed) {
  if (l_min < 1) throw ConfigError("approximate: l_min must be >= 1");
  ApproxResult result;
  result.clusters.min_size = l_min;
  result.slices = random_slice(d, n_slices, seed);

  struct Group {
    int slice_index;
    int label;
    std::vector<int> rows;  // global indices
  };
  std::vector<Group> groups;
  for (std::size_t s = 0; s < result.slices.size(); ++s) {
    std::vector<std::vector<int>> by_class(d.class_count);
    for (int row : result.slices[s].row_indices) {
      by_class[d.labels[row]].push_back(row);
    }
    for (int c = 0; c < d.class_count; ++c) {
      if (by_class[c].empty()) continue;
      if (static_cast<long long>(by_class[c].size()) < l_min) {
        result.diagnostics.skipped.push_back(
            {static_cast<int>(s), c, static_cast<int>(by_class[c].size())});
        continue;
      }
      groups.push_back({static_cast<int>(s), c, std::move(by_class[c])});
    }
  }

  struct GroupOutcome {
    std::vector<ClusterEntry> clusters;
    FitQuality quality;
  };
  std::vector<GroupOutcome> outcomes(groups.size());
  parallel_for(static_cast<int>(groups.size()), [&](int g) {
    const Group& group = groups[g];
    const int count = static_cast<int>(group.rows.size());
    Eigen::MatrixXd points(count, d.feature_count());
    for (int i = 0; i < count; ++i) points.row(i) = d.features.row(group.rows[i]);

    const long long max_k = count / l_min;
    long long k = k_per_slice > 0 ? std::min<long long>(k_per_slice, max_k)
                                  : std::max<long long>(1, count / (2 * l_min));
    k = std::min(k, max_k);

    const std::uint64_t fit_seed =
        mix_seed(seed, static_cast<std::uint64_t>(group.slice_index),
                 static_cast<std::uint64_t>(group.label));
    GroupOutcome& out = outcomes[g];
    try {
      out.clusters = fit_constrained_gmm(points, static_cast<int>(k),
                                         static_cast<int>(l_min), fit_seed, 60,
                                         1e-9, &out.quality);
    } catch (const NumericError&) {
      out.clusters = fallback_constrained_kmeans(points, static_cast<int>(k),
                                                 static_cast<int>(l_min),
                                                 fit_seed, 60, &out.quality);
    }
    for (ClusterEntry& e : out.clusters) {
      for (int& idx : e.member_indices) idx = group.rows[idx];
      e.label = group.label;
      e.slice_index = group.slice_index;
    }
  });

  for (auto& out : outcomes) {
    result.diagnostics.em_iterations.push_back(out.quality.iterations);
    result.diagnostics.objective_traces.push_back(out.quality.objective_trace);
    if (out.quality.used_fallback) ++result.diagnostics.fallback_count;
    for (auto& e : out.clusters) result.clusters.clusters.push_back(std::move(e));
  }
  return result;
}

}  // namespace clustmix
