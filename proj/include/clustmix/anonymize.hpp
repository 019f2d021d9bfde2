#pragma once

// Anonymize step: one synthetic record per cluster, formed by averaging the
// cluster's members (or taking the adapted support point) and adding
// per-coordinate Gaussian noise calibrated through the GDP accountant.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "clustmix/adapt.hpp"
#include "clustmix/approximate.hpp"
#include "clustmix/dataset.hpp"
#include "clustmix/errors.hpp"
#include "clustmix/gdp.hpp"
#include "clustmix/rng.hpp"

namespace clustmix {

struct MixConfig {
  double sigma = 0.0;  // noise std per coordinate; 0 keeps the pure average
  std::uint64_t seed = 0;
};

struct SyntheticRecord {
  Eigen::VectorXd features;  // clamped to [0,1]
  int label = 0;
  int cluster_id = -1;       // provenance
  long long l_used = 0;
  double sigma_used = 0.0;
};

namespace detail {

// Member-index-ascending accumulation; the fixed order keeps the sigma = 0
// path bitwise reproducible.
inline Eigen::VectorXd ordered_mean(const Eigen::MatrixXd& members) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(members.cols());
  for (Eigen::Index i = 0; i < members.rows(); ++i) {
    sum += members.row(i).transpose();
  }
  return sum / static_cast<double>(members.rows());
}

inline Eigen::VectorXd add_noise_and_clamp(Eigen::VectorXd x, const MixConfig& cfg) {
  if (cfg.sigma > 0.0) {
    Rng rng(cfg.seed);
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      x(j) += cfg.sigma * rng.normal();
    }
  }
  return x.cwiseMax(0.0).cwiseMin(1.0);
}

}  // namespace detail

// Coordinate-wise mean of the members plus iid N(0, sigma^2) per coordinate,
// clamped back into the unit hypercube.
inline SyntheticRecord mix_cluster(const Eigen::MatrixXd& members, int label,
                                   const MixConfig& cfg) {
  if (members.rows() < 1) throw DataError("mix_cluster: empty member set");
  SyntheticRecord rec;
  rec.features = detail::add_noise_and_clamp(detail::ordered_mean(members), cfg);
  rec.label = label;
  rec.l_used = members.rows();
  rec.sigma_used = cfg.sigma;
  return rec;
}

// Pre-noise value blends the cluster mean with the adapted support point;
// both operands live in [0,1]^D, so the convex combination does too.
inline SyntheticRecord mix_with_adapted(const Eigen::MatrixXd& members, int label,
                                        const Eigen::VectorXd& adapted_point,
                                        double blend, const MixConfig& cfg) {
  if (members.rows() < 1) throw DataError("mix_with_adapted: empty cluster");
  if (!(blend >= 0.0 && blend <= 1.0)) {
    throw ConfigError("mix_with_adapted: blend must be in [0, 1]");
  }
  SyntheticRecord rec;
  const Eigen::VectorXd pre =
      (1.0 - blend) * detail::ordered_mean(members) + blend * adapted_point;
  rec.features = detail::add_noise_and_clamp(pre, cfg);
  rec.label = label;
  rec.l_used = members.rows();
  rec.sigma_used = cfg.sigma;
  return rec;
}

// DPMix-style comparator: each synthetic record averages l distinct randomly
// drawn records; draws are disjoint across records so each original point is
// used at most once. Label is the majority of the mixed set, ties to the
// smallest class index.
inline std::vector<SyntheticRecord> random_mix_baseline(const Dataset& d, long long l,
                                                        long long count,
                                                        const MixConfig& cfg) {
  if (l < 1) throw ConfigError("random_mix_baseline: l must be >= 1");
  if (count * l > d.row_count()) {
    throw InfeasibleError("random_mix_baseline: count * l exceeds row count");
  }
  std::vector<int> order(d.row_count());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  Rng rng(mix_seed(cfg.seed, 0xba5eULL));
  rng.shuffle(order);

  std::vector<SyntheticRecord> out;
  for (long long r = 0; r < count; ++r) {
    std::vector<int> picked(order.begin() + r * l, order.begin() + (r + 1) * l);
    std::sort(picked.begin(), picked.end());
    Eigen::MatrixXd members(l, d.feature_count());
    std::vector<int> votes(d.class_count, 0);
    for (long long i = 0; i < l; ++i) {
      members.row(i) = d.features.row(picked[i]);
      ++votes[d.labels[picked[i]]];
    }
    const int label = static_cast<int>(
        std::max_element(votes.begin(), votes.end()) - votes.begin());
    MixConfig rec_cfg{cfg.sigma, mix_seed(cfg.seed, 0xd1ceULL, static_cast<std::uint64_t>(r))};
    SyntheticRecord rec = mix_cluster(members, label, rec_cfg);
    rec.cluster_id = static_cast<int>(r);
    out.push_back(std::move(rec));
  }
  return out;
}

struct AnonymizeDiagnostics {
  int infeasible_clusters = 0;
};

// One record per cluster: noise std calibrated for that cluster's size via
// the GDP accountant; clusters whose calibration is infeasible are skipped
// and counted. Noise streams derive from (seed, cluster id) so evaluation
// order is irrelevant.
inline std::vector<SyntheticRecord> anonymize(
    const ClusterSet& clusters, const Dataset& train,
    const std::optional<AdaptResult>& adapted, const PrivacyParams& pp,
    double sigma_max, std::uint64_t seed, AnonymizeDiagnostics* diag = nullptr,
    double blend = 1.0) {
  const int dims = static_cast<int>(train.feature_count());
  std::vector<SyntheticRecord> out;
  int infeasible = 0;
  for (std::size_t c = 0; c < clusters.clusters.size(); ++c) {
    const ClusterEntry& cluster = clusters.clusters[c];
    const long long l = static_cast<long long>(cluster.member_indices.size());
    double sigma = 0.0;
    try {
      sigma = calibrate_sigma(pp.epsilon, pp.delta, l, train.class_count, dims);
    } catch (const InfeasibleError&) {
      ++infeasible;
      continue;
    }
    // Sizes >= l_min(sigma_max) keep sigma under the ceiling; a cluster
    // that still exceeds it came from a mismatched l_min and is dropped.
    if (sigma > sigma_max * (1.0 + 1e-6)) {
      ++infeasible;
      continue;
    }
    Eigen::MatrixXd members(l, dims);
    for (long long i = 0; i < l; ++i) {
      members.row(i) = train.features.row(cluster.member_indices[i]);
    }
    MixConfig cfg{sigma, mix_seed(seed, 0xa07eULL, static_cast<std::uint64_t>(c))};
    SyntheticRecord rec =
        adapted ? mix_with_adapted(members, cluster.label,
                                   adapted->support_points.row(static_cast<Eigen::Index>(c))
                                       .transpose(),
                                   blend, cfg)
                : mix_cluster(members, cluster.label, cfg);
    rec.cluster_id = static_cast<int>(c);
    out.push_back(std::move(rec));
  }
  if (diag) diag->infeasible_clusters = infeasible;
  return out;
}

}  // namespace clustmix
