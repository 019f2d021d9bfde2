#pragma once

// Utility evaluation: multinomial logistic classifier, AUC (binary and
// micro-averaged one-vs-one), accuracy, and the train-on-synthetic /
// test-on-real comparison harness.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clustmix/dataset.hpp"
#include "clustmix/errors.hpp"

namespace clustmix {

struct ClassifierModel {
  Eigen::MatrixXd weights;        // C x (D+1), last column is the bias
  std::vector<double> loss_trace; // accepted steps, nonincreasing
};

enum class Metric { kAuc, kOvoAuc, kAccuracy };

inline Metric metric_from_string(const std::string& s) {
  if (s == "auc") return Metric::kAuc;
  if (s == "ovo-auc") return Metric::kOvoAuc;
  if (s == "accuracy") return Metric::kAccuracy;
  throw ConfigError("unknown metric \"" + s + "\" (auc, ovo-auc, accuracy)");
}

inline std::string metric_to_string(Metric m) {
  switch (m) {
    case Metric::kAuc: return "auc";
    case Metric::kOvoAuc: return "ovo-auc";
    case Metric::kAccuracy: return "accuracy";
  }
  return "?";
}

struct UtilityReport {
  double real_score = 0.0;
  double synthetic_score = 0.0;
  Metric metric = Metric::kAccuracy;
  double gap = 0.0;  // real - synthetic
  std::string diagnostics;
};

namespace detail {

inline Eigen::MatrixXd with_bias(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd xb(x.rows(), x.cols() + 1);
  xb.leftCols(x.cols()) = x;
  xb.col(x.cols()).setOnes();
  return xb;
}

inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p = logits;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double m = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

inline double cross_entropy(const Eigen::MatrixXd& probs, const std::vector<int>& labels) {
  double loss = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    loss -= std::log(std::max(probs(i, labels[static_cast<std::size_t>(i)]), 1e-300));
  }
  return loss / static_cast<double>(probs.rows());
}

}  // namespace detail

// Full-batch gradient descent on multinomial cross-entropy; steps that do
// not decrease the loss are rejected with the rate halved. Zero
// initialization makes the run deterministic regardless of seed.
inline ClassifierModel train_classifier(const Dataset& d, int epochs = 300,
                                        double lr = 1.0, std::uint64_t seed = 0) {
  (void)seed;
  const int c = d.class_count;
  const Eigen::Index t = d.row_count();
  if (t < c) throw DataError("train_classifier: fewer rows than classes");
  std::vector<int> counts(c, 0);
  for (int y : d.labels) ++counts[y];
  for (int k = 0; k < c; ++k) {
    if (counts[k] == 0) {
      throw DataError("train_classifier: class " + std::to_string(k) +
                      " has no examples");
    }
  }

  const Eigen::MatrixXd xb = detail::with_bias(d.features);
  Eigen::MatrixXd target = Eigen::MatrixXd::Zero(t, c);
  for (Eigen::Index i = 0; i < t; ++i) target(i, d.labels[static_cast<std::size_t>(i)]) = 1.0;

  ClassifierModel model;
  model.weights = Eigen::MatrixXd::Zero(c, xb.cols());
  Eigen::MatrixXd probs = detail::softmax_rows(xb * model.weights.transpose());
  double loss = detail::cross_entropy(probs, d.labels);
  model.loss_trace.push_back(loss);

  double rate = lr;
  for (int epoch = 0; epoch < epochs && rate > 1e-14; ++epoch) {
    const Eigen::MatrixXd grad =
        (probs - target).transpose() * xb / static_cast<double>(t);
    if (grad.norm() < 1e-12) break;
    const Eigen::MatrixXd candidate = model.weights - rate * grad;
    const Eigen::MatrixXd cand_probs =
        detail::softmax_rows(xb * candidate.transpose());
    const double cand_loss = detail::cross_entropy(cand_probs, d.labels);
    if (cand_loss < loss) {
      model.weights = candidate;
      probs = cand_probs;
      loss = cand_loss;
      model.loss_trace.push_back(loss);
    } else {
      rate *= 0.5;
    }
  }
  return model;
}

inline Eigen::MatrixXd predict_proba(const ClassifierModel& model,
                                     const Eigen::MatrixXd& features) {
  return detail::softmax_rows(detail::with_bias(features) * model.weights.transpose());
}

inline double accuracy(const Eigen::MatrixXd& probs, const std::vector<int>& labels) {
  int hits = 0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index argmax = 0;
    probs.row(i).maxCoeff(&argmax);
    if (static_cast<int>(argmax) == labels[static_cast<std::size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(probs.rows());
}

// Mann-Whitney AUC with half credit for ties.
inline double auc_binary(const std::vector<double>& scores,
                         const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw DataError("auc_binary: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Average ranks across tie blocks.
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (labels[k] == 1) {
      rank_sum += rank[k];
      ++n_pos;
    } else if (labels[k] != 0) {
      throw DataError("auc_binary: labels must be 0/1");
    }
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw DataError("auc_binary: both classes must be present");
  }
  const double u = rank_sum - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// One-vs-one micro average: for each unordered class pair, restrict to rows
// of those classes, rank by p_i / (p_i + p_j), and weight the pair AUC by
// its row count. Pairs with a missing class are skipped.
inline double auc_ovo_micro(const Eigen::MatrixXd& probs,
                            const std::vector<int>& labels) {
  const int c = static_cast<int>(probs.cols());
  if (c < 2) throw DataError("auc_ovo_micro: need at least two classes");
  double weighted = 0.0;
  long long total = 0;
  for (int i = 0; i < c; ++i) {
    for (int j = i + 1; j < c; ++j) {
      std::vector<double> scores;
      std::vector<int> binary;
      for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        const int y = labels[static_cast<std::size_t>(r)];
        if (y != i && y != j) continue;
        const double pi = probs(r, i), pj = probs(r, j);
        scores.push_back(pi + pj > 0.0 ? pi / (pi + pj) : 0.5);
        binary.push_back(y == i ? 1 : 0);
      }
      const bool has_i = std::find(binary.begin(), binary.end(), 1) != binary.end();
      const bool has_j = std::find(binary.begin(), binary.end(), 0) != binary.end();
      if (!has_i || !has_j) continue;
      weighted += auc_binary(scores, binary) * static_cast<double>(scores.size());
      total += static_cast<long long>(scores.size());
    }
  }
  if (total == 0) throw DataError("auc_ovo_micro: every class pair is incomplete");
  return weighted / static_cast<double>(total);
}

inline double score_metric(const Eigen::MatrixXd& probs, const std::vector<int>& labels,
                           Metric metric) {
  switch (metric) {
    case Metric::kAccuracy:
      return accuracy(probs, labels);
    case Metric::kAuc: {
      if (probs.cols() != 2) {
        throw DataError("metric auc requires binary labels; use ovo-auc");
      }
      std::vector<double> scores(probs.rows());
      for (Eigen::Index i = 0; i < probs.rows(); ++i) scores[static_cast<std::size_t>(i)] = probs(i, 1);
      return auc_binary(scores, labels);
    }
    case Metric::kOvoAuc:
      return auc_ovo_micro(probs, labels);
  }
  throw ConfigError("score_metric: bad metric");
}

namespace detail {

// Maps labels onto the classes actually present, for synthetic sets that
// lost a class along the way.
struct ClassProjection {
  std::vector<int> present;          // original class ids, ascending
  std::vector<int> to_reduced;       // original -> reduced or -1
};

inline ClassProjection project_classes(const Dataset& d) {
  ClassProjection p;
  std::vector<bool> seen(d.class_count, false);
  for (int y : d.labels) seen[y] = true;
  p.to_reduced.assign(d.class_count, -1);
  for (int c = 0; c < d.class_count; ++c) {
    if (seen[c]) {
      p.to_reduced[c] = static_cast<int>(p.present.size());
      p.present.push_back(c);
    }
  }
  return p;
}

}  // namespace detail

// Trains one classifier on the real training set and one on the synthetic
// set with identical hyperparameters, then scores both on the real test
// set. If the synthetic set lost classes, both scores are computed over the
// surviving classes and the report says so.
inline UtilityReport evaluate_utility(const Dataset& real_train,
                                      const Dataset& synth_train,
                                      const Dataset& real_test, Metric metric,
                                      std::uint64_t seed, int epochs = 300,
                                      double lr = 1.0) {
  if (real_train.feature_count() != synth_train.feature_count() ||
      real_train.feature_count() != real_test.feature_count()) {
    throw DataError("evaluate_utility: feature dimension mismatch");
  }
  UtilityReport report;
  report.metric = metric;

  const auto projection = detail::project_classes(synth_train);
  const bool reduced =
      static_cast<int>(projection.present.size()) < real_train.class_count;

  Dataset synth = synth_train;
  Dataset train = real_train;
  Dataset test = real_test;
  if (reduced) {
    const auto filter = [&](const Dataset& src) {
      std::vector<int> rows;
      for (Eigen::Index i = 0; i < src.row_count(); ++i) {
        if (projection.to_reduced[src.labels[static_cast<std::size_t>(i)]] >= 0) {
          rows.push_back(static_cast<int>(i));
        }
      }
      Dataset out = detail::take_rows(src, rows);
      for (int& y : out.labels) y = projection.to_reduced[y];
      out.class_count = static_cast<int>(projection.present.size());
      return out;
    };
    synth = filter(synth_train);
    train = filter(real_train);
    test = filter(real_test);
    std::ostringstream msg;
    msg << "synthetic data lost "
        << real_train.class_count - static_cast<int>(projection.present.size())
        << " classes; scored over the remaining " << projection.present.size();
    report.diagnostics = msg.str();
  }

  const ClassifierModel real_model = train_classifier(train, epochs, lr, seed);
  const ClassifierModel synth_model = train_classifier(synth, epochs, lr, seed);
  report.real_score = score_metric(predict_proba(real_model, test.features),
                                   test.labels, metric);
  report.synthetic_score = score_metric(predict_proba(synth_model, test.features),
                                        test.labels, metric);
  report.gap = report.real_score - report.synthetic_score;
  return report;
}

}  // namespace clustmix
