#pragma once

// Adapt step: kernel inducing points. Support points start at cluster
// centroids and descend the alpha-weighted combination of centroid fidelity
// and kernel ridge regression loss, staying inside the unit hypercube.

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "clustmix/approximate.hpp"
#include "clustmix/dataset.hpp"
#include "clustmix/errors.hpp"

namespace clustmix {

struct KernelConfig {
  std::string kind = "rbf";
  double bandwidth = 0.0;     // <= 0: median heuristic on the targets
  double ridge_lambda = 1e-3;
};

struct AdaptConfig {
  double alpha = 0.5;            // weight on centroid fidelity
  double learning_rate = 0.5;
  int max_steps = 100;
  double grad_tolerance = 1e-7;
};

struct AdaptResult {
  Eigen::MatrixXd support_points;   // S x D, clamped to [0,1]
  Eigen::MatrixXd support_labels;   // S x C one-hot
  Eigen::MatrixXd initial_points;   // S x D centroids
  std::vector<std::pair<int, double>> loss_trace;  // accepted steps
};

inline void validate_kernel(const KernelConfig& cfg) {
  if (cfg.kind != "rbf") throw ConfigError("kernel: unknown kind \"" + cfg.kind + "\"");
  if (!(cfg.ridge_lambda > 0.0)) throw ConfigError("kernel: ridge_lambda must be > 0");
}

// Median pairwise distance of the rows (subsampled past 256 rows).
inline double median_heuristic_bandwidth(const Eigen::MatrixXd& x) {
  const int n = static_cast<int>(x.rows());
  const int step = n > 256 ? n / 256 : 1;
  std::vector<double> dists;
  for (int i = 0; i < n; i += step) {
    for (int j = i + step; j < n; j += step) {
      dists.push_back((x.row(i) - x.row(j)).norm());
    }
  }
  if (dists.empty()) return 1.0;
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
  const double med = dists[dists.size() / 2];
  return med > 0.0 ? med : 1.0;
}

// K(i,j) = exp(-||a_i - b_j||^2 / (2 h^2)).
inline Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& a,
                                     const Eigen::MatrixXd& b,
                                     const KernelConfig& cfg) {
  validate_kernel(cfg);
  if (a.cols() != b.cols()) throw DataError("kernel_matrix: dimension mismatch");
  const double h = cfg.bandwidth > 0.0 ? cfg.bandwidth : 1.0;
  Eigen::MatrixXd sq = (-2.0 * a * b.transpose());
  sq.colwise() += a.rowwise().squaredNorm();
  sq.rowwise() += b.rowwise().squaredNorm().transpose();
  return (-sq.cwiseMax(0.0) / (2.0 * h * h)).array().exp();
}

inline Eigen::MatrixXd one_hot(const std::vector<int>& labels, int class_count) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()),
                                            class_count);
  for (std::size_t i = 0; i < labels.size(); ++i) y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  return y;
}

namespace detail {

struct KrrSolve {
  double loss = 0.0;
  Eigen::MatrixXd k_ts;      // T x S
  Eigen::MatrixXd k_ss;      // S x S
  Eigen::MatrixXd coeff;     // G = (K_ss + lambda I)^-1 y_s, S x C
  Eigen::MatrixXd residual;  // y_t - K_ts G, T x C
  Eigen::LLT<Eigen::MatrixXd> llt;
};

inline KrrSolve krr_solve(const Eigen::MatrixXd& xt, const Eigen::MatrixXd& yt,
                          const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys,
                          const KernelConfig& cfg) {
  if (xs.rows() < 1) throw DataError("krr: need at least one support point");
  if (xt.cols() != xs.cols() || yt.cols() != ys.cols() || yt.rows() != xt.rows() ||
      ys.rows() != xs.rows()) {
    throw DataError("krr: shape mismatch");
  }
  KrrSolve s;
  s.k_ss = kernel_matrix(xs, xs, cfg);
  Eigen::MatrixXd reg = s.k_ss;
  reg.diagonal().array() += cfg.ridge_lambda;
  s.llt.compute(reg);
  if (s.llt.info() != Eigen::Success) {
    throw NumericError("krr: Cholesky factorization failed (increase ridge_lambda)");
  }
  s.coeff = s.llt.solve(ys);
  s.k_ts = kernel_matrix(xt, xs, cfg);
  s.residual = yt - s.k_ts * s.coeff;
  s.loss = 0.5 * s.residual.squaredNorm();
  return s;
}

}  // namespace detail

// L_KRR = 1/2 || y_t - K_{XtXs} (K_{XsXs} + lambda I)^-1 y_s ||_F^2.
inline double krr_loss(const Eigen::MatrixXd& xt, const Eigen::MatrixXd& yt,
                       const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys,
                       const KernelConfig& cfg) {
  return detail::krr_solve(xt, yt, xs, ys, cfg).loss;
}

inline double fidelity_denominator(const Eigen::MatrixXd& xs_init) {
  const double tr = xs_init.squaredNorm();
  return tr < 1e-12 ? 1.0 : tr;
}

// alpha * tr((Xs - Xs0)'(Xs - Xs0)) / tr(Xs0' Xs0) + (1 - alpha) * L_KRR.
inline double combined_loss(const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys,
                            const Eigen::MatrixXd& xt, const Eigen::MatrixXd& yt,
                            const Eigen::MatrixXd& xs_init, double alpha,
                            const KernelConfig& cfg) {
  const double fidelity = (xs - xs_init).squaredNorm() / fidelity_denominator(xs_init);
  const double krr = alpha < 1.0 ? krr_loss(xt, yt, xs, ys, cfg) : 0.0;
  return alpha * fidelity + (1.0 - alpha) * krr;
}

namespace detail {

// Gradient of L_KRR with respect to the support points, differentiating
// through the regularized solve:
//   dL = -tr(R' dK_ts G) + tr(R' K_ts A^-1 dK_ss G),  A = K_ss + lambda I
// with RBF kernel derivatives folded in per point.
inline Eigen::MatrixXd krr_gradient(const KrrSolve& s, const Eigen::MatrixXd& xt,
                                    const Eigen::MatrixXd& xs, double bandwidth) {
  const Eigen::MatrixXd b = s.llt.solve(s.k_ts.transpose() * s.residual);  // S x C
  const Eigen::MatrixXd w_ts = -(s.residual * s.coeff.transpose());        // T x S
  const Eigen::MatrixXd w_ss = b * s.coeff.transpose();                    // S x S

  const double inv_h2 = 1.0 / (bandwidth * bandwidth);
  const Eigen::MatrixXd e_ts = w_ts.cwiseProduct(s.k_ts);  // T x S
  const Eigen::MatrixXd e_ss = w_ss.cwiseProduct(s.k_ss);  // S x S

  // d||.||-term from K_ts: sum_t e_ts(t,s) * (x_t - z_s) / h^2.
  Eigen::MatrixXd grad =
      inv_h2 * (e_ts.transpose() * xt -
                e_ts.colwise().sum().transpose().asDiagonal() * xs);
  // From K_ss, both occurrences of z_s: sum_j (e_ss + e_ss')(s,j) (z_j - z_s)/h^2.
  const Eigen::MatrixXd sym = e_ss + e_ss.transpose();
  grad += inv_h2 * (sym * xs - sym.rowwise().sum().asDiagonal() * xs);
  return grad;
}

}  // namespace detail

// Optimizes support points within one slice. Gradient descent with
// backtracking: a step that does not decrease the loss is rejected and the
// learning rate halved, so the accepted-loss trace is nonincreasing. Points
// are clamped to [0,1]^D after every step. Cholesky failures escalate
// lambda x10 up to three times before propagating.
inline AdaptResult adapt(const ClusterSet& clusters, const Dataset& slice_rows,
                         const KernelConfig& kernel_cfg, const AdaptConfig& cfg) {
  if (clusters.clusters.empty()) throw DataError("adapt: no clusters in slice");
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) {
    throw ConfigError("adapt: alpha must be in [0, 1]");
  }
  const int s_count = static_cast<int>(clusters.clusters.size());
  const int dims = static_cast<int>(slice_rows.feature_count());

  AdaptResult result;
  result.initial_points.resize(s_count, dims);
  std::vector<int> labels(s_count);
  for (int i = 0; i < s_count; ++i) {
    result.initial_points.row(i) = clusters.clusters[i].component.mean.transpose();
    labels[i] = clusters.clusters[i].label;
  }
  result.initial_points = result.initial_points.cwiseMax(0.0).cwiseMin(1.0);
  result.support_labels = one_hot(labels, slice_rows.class_count);
  result.support_points = result.initial_points;

  KernelConfig cfg_k = kernel_cfg;
  if (cfg_k.bandwidth <= 0.0) {
    cfg_k.bandwidth = median_heuristic_bandwidth(slice_rows.features);
  }
  const Eigen::MatrixXd& xt = slice_rows.features;
  const Eigen::MatrixXd yt = one_hot(slice_rows.labels, slice_rows.class_count);
  const Eigen::MatrixXd& ys = result.support_labels;
  const double denom = fidelity_denominator(result.initial_points);

  const auto loss_and_grad = [&](const Eigen::MatrixXd& xs, Eigen::MatrixXd* grad) {
    double krr = 0.0;
    Eigen::MatrixXd g_krr = Eigen::MatrixXd::Zero(xs.rows(), xs.cols());
    if (cfg.alpha < 1.0) {
      KernelConfig local = cfg_k;
      for (int attempt = 0;; ++attempt) {
        try {
          const auto solve = detail::krr_solve(xt, yt, xs, ys, local);
          krr = solve.loss;
          if (grad) g_krr = detail::krr_gradient(solve, xt, xs, local.bandwidth);
          break;
        } catch (const NumericError&) {
          if (attempt >= 3) throw;
          local.ridge_lambda *= 10.0;
        }
      }
    }
    const double fidelity = (xs - result.initial_points).squaredNorm() / denom;
    if (grad) {
      *grad = cfg.alpha * 2.0 * (xs - result.initial_points) / denom +
              (1.0 - cfg.alpha) * g_krr;
    }
    return cfg.alpha * fidelity + (1.0 - cfg.alpha) * krr;
  };

  Eigen::MatrixXd grad;
  double loss = loss_and_grad(result.support_points, &grad);
  result.loss_trace.push_back({0, loss});
  double lr = cfg.learning_rate;
  for (int step = 1; step <= cfg.max_steps; ++step) {
    if (grad.norm() < cfg.grad_tolerance || lr < 1e-15) break;
    const Eigen::MatrixXd candidate =
        (result.support_points - lr * grad).cwiseMax(0.0).cwiseMin(1.0);
    const double candidate_loss = loss_and_grad(candidate, nullptr);
    if (candidate_loss < loss) {
      result.support_points = candidate;
      loss = candidate_loss;
      result.loss_trace.push_back({step, loss});
      loss_and_grad(result.support_points, &grad);
    } else {
      lr *= 0.5;
    }
  }
  return result;
}

}  // namespace clustmix
