#pragma once

// End-to-end orchestration: slicing, constrained clustering, adaptation,
// calibration, mixing, and the sigma_max sweep with utility-based selection.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clustmix/adapt.hpp"
#include "clustmix/anonymize.hpp"
#include "clustmix/approximate.hpp"
#include "clustmix/dataset.hpp"
#include "clustmix/errors.hpp"
#include "clustmix/eval.hpp"
#include "clustmix/gdp.hpp"
#include "clustmix/parallel.hpp"

namespace clustmix {

struct PrivacyTarget {
  double epsilon = 1.0;
  double delta = 0.0;  // 0: use 1/T at synthesis time
};

inline std::vector<double> default_sigma_max_grid() {
  // 8 log-spaced values in [0.01, 1].
  std::vector<double> grid;
  for (int i = 0; i < 8; ++i) {
    grid.push_back(std::pow(10.0, -2.0 + 2.0 * i / 7.0));
  }
  return grid;
}

struct SynthesisConfig {
  PrivacyTarget privacy;
  int n_slices = 4;
  int k_per_slice = 0;  // 0: floor(count / (2 l_min)) per (slice, class)
  std::vector<double> sigma_max_grid = default_sigma_max_grid();
  double alpha = 0.5;
  KernelConfig kernel;
  AdaptConfig adapt;
  std::uint64_t seed = 0;
};

struct RecordPrivacy {
  long long l = 0;
  double sigma = 0.0;
  double mu = 0.0;
  double delta_at_epsilon = 0.0;
};

struct AdaptDiag {
  int slice_index = 0;
  int steps = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<std::pair<int, double>> loss_trace;
};

struct StageDiagnostics {
  std::vector<SkippedGroup> skipped_groups;
  int infeasible_clusters = 0;
  int fallback_fits = 0;
  std::vector<int> em_iterations;
  std::vector<AdaptDiag> adapt;
};

struct SynthesisReport {
  Dataset synthetic;  // scaled space, [0,1]^D
  double epsilon = 0.0;
  double delta_target = 0.0;
  double sigma_max = 0.0;
  long long l_min = 0;
  std::vector<RecordPrivacy> realized;
  double max_record_delta = 0.0;
  StageDiagnostics diagnostics;
  // Grid selection; filled by synthesize().
  double selected_sigma_max = 0.0;
  double selection_score = 0.0;
  struct Candidate {
    double sigma_max = 0.0;
    long long l_min = 0;
    long long records = 0;
    double score = 0.0;
    bool feasible = false;
    std::string note;
  };
  std::vector<Candidate> candidates;
};

namespace detail {

inline void require_unit_hypercube(const Dataset& d) {
  if (d.row_count() == 0) throw DataError("synthesize: empty training set");
  if (d.features.minCoeff() < -1e-12 || d.features.maxCoeff() > 1.0 + 1e-12) {
    throw DataError("synthesize: training features must be scaled to [0,1]");
  }
}

inline Dataset records_to_dataset(const std::vector<SyntheticRecord>& records,
                                  int feature_count, int class_count) {
  Dataset d;
  d.class_count = class_count;
  d.features.resize(static_cast<Eigen::Index>(records.size()), feature_count);
  d.labels.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    d.features.row(static_cast<Eigen::Index>(i)) = records[i].features.transpose();
    d.labels.push_back(records[i].label);
  }
  return d;
}

// Selection utility: accuracy over every real training row. Candidates that
// lost classes are still scored against the full set, so degenerate
// synthetic data cannot win by restriction.
inline double selection_score(const Dataset& synthetic, const Dataset& real_train,
                              std::uint64_t seed) {
  const auto projection = project_classes(synthetic);
  Dataset train_view = synthetic;
  if (static_cast<int>(projection.present.size()) < synthetic.class_count) {
    for (int& y : train_view.labels) y = projection.to_reduced[y];
    train_view.class_count = static_cast<int>(projection.present.size());
  }
  const ClassifierModel model = train_classifier(train_view, 300, 1.0, seed);
  const Eigen::MatrixXd probs = predict_proba(model, real_train.features);
  int hits = 0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index argmax = 0;
    probs.row(i).maxCoeff(&argmax);
    if (projection.present[static_cast<std::size_t>(argmax)] ==
        real_train.labels[static_cast<std::size_t>(i)]) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(probs.rows());
}

}  // namespace detail

// One synthesis pass at a fixed sigma_max: minimum mixture size from the
// accountant, slicing + constrained clustering, per-slice adaptation
// (skipped when alpha = 1 or max_steps = 0), then calibrated mixing.
inline SynthesisReport synthesize_once(const Dataset& train,
                                       const SynthesisConfig& cfg,
                                       double sigma_max) {
  detail::require_unit_hypercube(train);
  const auto t = train.row_count();
  const double delta =
      cfg.privacy.delta > 0.0 ? cfg.privacy.delta : 1.0 / static_cast<double>(t);
  const PrivacyParams pp = make_privacy_params(cfg.privacy.epsilon, delta);
  const int dims = static_cast<int>(train.feature_count());

  SynthesisReport report;
  report.epsilon = pp.epsilon;
  report.delta_target = pp.delta;
  report.sigma_max = sigma_max;
  report.l_min =
      min_mixture_size(pp.epsilon, pp.delta, sigma_max, train.class_count, dims);

  const std::uint64_t stage_seed =
      mix_seed(cfg.seed, std::bit_cast<std::uint64_t>(sigma_max));
  ApproxResult approx = approximate(train, cfg.n_slices, cfg.k_per_slice,
                                    report.l_min, mix_seed(stage_seed, 1));
  report.diagnostics.skipped_groups = approx.diagnostics.skipped;
  report.diagnostics.fallback_fits = approx.diagnostics.fallback_count;
  report.diagnostics.em_iterations = approx.diagnostics.em_iterations;
  if (approx.clusters.clusters.empty()) {
    throw InfeasibleError("synthesize: no (slice, class) group can hold a cluster of size " +
                          std::to_string(report.l_min));
  }

  std::optional<AdaptResult> merged;
  const bool run_adapt = cfg.alpha < 1.0 && cfg.adapt.max_steps > 0;
  if (run_adapt) {
    AdaptConfig acfg = cfg.adapt;
    acfg.alpha = cfg.alpha;
    // Group clusters by slice; adapt each slice against its own rows.
    AdaptResult all;
    all.support_points.resize(static_cast<Eigen::Index>(approx.clusters.clusters.size()), dims);
    all.initial_points.resize(all.support_points.rows(), dims);
    all.support_labels.resize(all.support_points.rows(), train.class_count);
    for (std::size_t s = 0; s < approx.slices.size(); ++s) {
      ClusterSet fragment;
      fragment.min_size = approx.clusters.min_size;
      std::vector<std::size_t> positions;
      for (std::size_t c = 0; c < approx.clusters.clusters.size(); ++c) {
        if (approx.clusters.clusters[c].slice_index == static_cast<int>(s)) {
          fragment.clusters.push_back(approx.clusters.clusters[c]);
          positions.push_back(c);
        }
      }
      if (fragment.clusters.empty()) continue;
      const Dataset slice_rows = detail::take_rows(train, approx.slices[s].row_indices);
      const AdaptResult local = adapt(fragment, slice_rows, cfg.kernel, acfg);
      for (std::size_t i = 0; i < positions.size(); ++i) {
        all.support_points.row(static_cast<Eigen::Index>(positions[i])) =
            local.support_points.row(static_cast<Eigen::Index>(i));
        all.initial_points.row(static_cast<Eigen::Index>(positions[i])) =
            local.initial_points.row(static_cast<Eigen::Index>(i));
        all.support_labels.row(static_cast<Eigen::Index>(positions[i])) =
            local.support_labels.row(static_cast<Eigen::Index>(i));
      }
      AdaptDiag diag;
      diag.slice_index = static_cast<int>(s);
      diag.steps = static_cast<int>(local.loss_trace.size()) - 1;
      diag.initial_loss = local.loss_trace.front().second;
      diag.final_loss = local.loss_trace.back().second;
      diag.loss_trace = local.loss_trace;
      report.diagnostics.adapt.push_back(std::move(diag));
    }
    merged = std::move(all);
  }

  AnonymizeDiagnostics mix_diag;
  const auto records = anonymize(approx.clusters, train, merged, pp, sigma_max,
                                 mix_seed(stage_seed, 2), &mix_diag);
  report.diagnostics.infeasible_clusters = mix_diag.infeasible_clusters;
  if (records.empty()) {
    throw InfeasibleError("synthesize: every cluster failed noise calibration");
  }

  report.synthetic = detail::records_to_dataset(records, dims, train.class_count);
  for (const auto& rec : records) {
    const MechanismShape shape{rec.l_used, rec.sigma_used, dims, train.class_count};
    RecordPrivacy rp;
    rp.l = rec.l_used;
    rp.sigma = rec.sigma_used;
    rp.mu = mechanism_mu(shape);
    rp.delta_at_epsilon = mechanism_delta(pp.epsilon, shape);
    report.max_record_delta = std::max(report.max_record_delta, rp.delta_at_epsilon);
    report.realized.push_back(rp);
  }
  return report;
}

// Sweep the sigma_max grid, score each candidate's synthetic set by training
// the built-in classifier and evaluating accuracy on the real training set,
// and keep the best (ties to the smaller sigma_max). The selection step
// reuses the training data and is not covered by the (epsilon, delta)
// accounting; reports carry that caveat.
inline SynthesisReport synthesize(const Dataset& train, const SynthesisConfig& cfg) {
  if (cfg.sigma_max_grid.empty()) {
    throw ConfigError("synthesize: sigma_max_grid must be nonempty");
  }
  for (double s : cfg.sigma_max_grid) {
    if (!(s > 0.0)) throw ConfigError("synthesize: sigma_max values must be > 0");
  }
  std::vector<double> grid = cfg.sigma_max_grid;
  std::sort(grid.begin(), grid.end());

  struct Slot {
    std::optional<SynthesisReport> report;
    SynthesisReport::Candidate candidate;
  };
  std::vector<Slot> slots(grid.size());
  const std::uint64_t score_seed = mix_seed(cfg.seed, 0x5c03eULL);
  parallel_for(static_cast<int>(grid.size()), [&](int i) {
    Slot& slot = slots[static_cast<std::size_t>(i)];
    slot.candidate.sigma_max = grid[static_cast<std::size_t>(i)];
    try {
      SynthesisReport r = synthesize_once(train, cfg, grid[static_cast<std::size_t>(i)]);
      slot.candidate.l_min = r.l_min;
      slot.candidate.records = r.synthetic.row_count();
      slot.candidate.score = detail::selection_score(r.synthetic, train, score_seed);
      slot.candidate.feasible = true;
      slot.report = std::move(r);
    } catch (const InfeasibleError& e) {
      slot.candidate.note = e.what();
    }
  });

  int best = -1;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i].candidate.feasible) continue;
    if (best < 0 || slots[i].candidate.score > slots[static_cast<std::size_t>(best)].candidate.score) {
      best = static_cast<int>(i);  // grid ascending: strict > keeps the smaller sigma on ties
    }
  }
  if (best < 0) {
    throw InfeasibleError("synthesize: every sigma_max candidate is infeasible");
  }

  SynthesisReport report = std::move(*slots[static_cast<std::size_t>(best)].report);
  report.selected_sigma_max = report.sigma_max;
  report.selection_score = slots[static_cast<std::size_t>(best)].candidate.score;
  for (auto& slot : slots) report.candidates.push_back(std::move(slot.candidate));
  return report;
}

// Random-mixing comparator at the same (epsilon, delta) target: for each
// sigma_max candidate the mixture size comes from the accountant, the noise
// from calibrate_sigma, and records average disjoint random draws. Selection
// mirrors synthesize().
inline SynthesisReport baseline_synthesize(const Dataset& train,
                                           const SynthesisConfig& cfg) {
  detail::require_unit_hypercube(train);
  if (cfg.sigma_max_grid.empty()) {
    throw ConfigError("baseline: sigma_max_grid must be nonempty");
  }
  const auto t = train.row_count();
  const double delta =
      cfg.privacy.delta > 0.0 ? cfg.privacy.delta : 1.0 / static_cast<double>(t);
  const PrivacyParams pp = make_privacy_params(cfg.privacy.epsilon, delta);
  const int dims = static_cast<int>(train.feature_count());

  std::vector<double> grid = cfg.sigma_max_grid;
  std::sort(grid.begin(), grid.end());
  const std::uint64_t score_seed = mix_seed(cfg.seed, 0x5c03eULL);

  struct Slot {
    std::optional<SynthesisReport> report;
    SynthesisReport::Candidate candidate;
  };
  std::vector<Slot> slots(grid.size());
  parallel_for(static_cast<int>(grid.size()), [&](int i) {
    Slot& slot = slots[static_cast<std::size_t>(i)];
    const double sigma_max = grid[static_cast<std::size_t>(i)];
    slot.candidate.sigma_max = sigma_max;
    try {
      const long long l =
          min_mixture_size(pp.epsilon, pp.delta, sigma_max, train.class_count, dims);
      const long long count = t / l;
      if (count < 1) {
        throw InfeasibleError("baseline: mixture size exceeds row count");
      }
      const double sigma = calibrate_sigma(pp.epsilon, pp.delta, l,
                                           train.class_count, dims);
      const std::uint64_t mix_seed_value =
          mix_seed(cfg.seed, 0xbea7ULL, std::bit_cast<std::uint64_t>(sigma_max));
      const auto records =
          random_mix_baseline(train, l, count, MixConfig{sigma, mix_seed_value});

      SynthesisReport r;
      r.epsilon = pp.epsilon;
      r.delta_target = pp.delta;
      r.sigma_max = sigma_max;
      r.l_min = l;
      r.synthetic = detail::records_to_dataset(records, dims, train.class_count);
      for (const auto& rec : records) {
        const MechanismShape shape{rec.l_used, rec.sigma_used, dims, train.class_count};
        RecordPrivacy rp{rec.l_used, rec.sigma_used, mechanism_mu(shape),
                         mechanism_delta(pp.epsilon, shape)};
        r.max_record_delta = std::max(r.max_record_delta, rp.delta_at_epsilon);
        r.realized.push_back(rp);
      }
      slot.candidate.l_min = l;
      slot.candidate.records = r.synthetic.row_count();
      slot.candidate.score = detail::selection_score(r.synthetic, train, score_seed);
      slot.candidate.feasible = true;
      slot.report = std::move(r);
    } catch (const InfeasibleError& e) {
      slot.candidate.note = e.what();
    } catch (const DataError& e) {
      // Single-class mixes can defeat classifier training; treat as infeasible.
      slot.candidate.note = e.what();
    }
  });

  int best = -1;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i].candidate.feasible) continue;
    if (best < 0 || slots[i].candidate.score > slots[static_cast<std::size_t>(best)].candidate.score) {
      best = static_cast<int>(i);
    }
  }
  if (best < 0) {
    throw InfeasibleError("baseline: every sigma_max candidate is infeasible");
  }
  SynthesisReport report = std::move(*slots[static_cast<std::size_t>(best)].report);
  report.selected_sigma_max = report.sigma_max;
  report.selection_score = slots[static_cast<std::size_t>(best)].candidate.score;
  for (auto& slot : slots) report.candidates.push_back(std::move(slot.candidate));
  return report;
}

}  // namespace clustmix
