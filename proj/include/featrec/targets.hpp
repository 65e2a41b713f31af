// Copyright 2026 The featrec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "featrec/errors.hpp"
#include "featrec/rng.hpp"
#include "featrec/sym.hpp"

namespace featrec {

// Phi = G G' for a p x r standard Gaussian G; rank r almost surely, asserted
// numerically.
inline FeatureMatrix random_psd(int p, int r, std::uint64_t seed) {
  if (r < 1 || r > p) throw error("random_psd: rank must satisfy 1 <= r <= p");
  Rng rng(seed);
  Eigen::MatrixXd g(p, r);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < r; ++j) g(i, j) = rng.normal();
  FeatureMatrix phi(Eigen::MatrixXd(g * g.transpose()));
  if (phi.rank() != r) throw degenerate_error("random_psd: sampled factor lost rank");
  return phi;
}

// Gram of a dictionary: D'D over the activation dimension by default, DD'
// when transpose is requested.
inline FeatureMatrix dictionary_gram(const Eigen::MatrixXd& d, bool transpose = false) {
  if (!d.allFinite()) throw error("dictionary_gram: dictionary has non-finite entries");
  if (transpose) return FeatureMatrix(Eigen::MatrixXd(d * d.transpose()));
  return FeatureMatrix(Eigen::MatrixXd(d.transpose() * d));
}

// ---------------------------------------------------------------------------
// Recursive Feature Machine on monomial regression.

struct RfmSpec {
  int dim = 10;
  std::vector<int> monomial;      // product of these coordinates
  std::optional<int> indicator;   // times 1(z_indicator > 0)
  int n_train = 4000;
  int iterations = 5;
  std::uint64_t seed = 0;
  double bandwidth = 10.0;  // L
  double ridge = 1e-3;      // eps
};

struct RfmModel {
  Eigen::MatrixXd train_inputs;  // n x d
  Eigen::VectorXd coefficients;  // a = (K + eps I)^-1 y
  FeatureMatrix feature_matrix;  // d x d, PSD
  double bandwidth = 10.0;
  double ridge = 1e-3;
};

// Training inputs z ~ N(0, 0.5 I_d), drawn row by row.
inline Eigen::MatrixXd rfm_sample_inputs(int n, int d, Rng& rng) {
  const double stddev = std::sqrt(0.5);
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = stddev * rng.normal();
  return x;
}

inline Eigen::VectorXd rfm_labels(const Eigen::MatrixXd& x, const std::vector<int>& monomial,
                                  const std::optional<int>& indicator) {
  Eigen::VectorXd y = Eigen::VectorXd::Ones(x.rows());
  for (int j : monomial) {
    if (j < 0 || j >= x.cols()) throw error("rfm_labels: monomial index out of range");
    y = y.cwiseProduct(x.col(j));
  }
  if (indicator) {
    if (*indicator < 0 || *indicator >= x.cols())
      throw error("rfm_labels: indicator index out of range");
    for (Eigen::Index i = 0; i < y.size(); ++i)
      if (x(i, *indicator) <= 0.0) y(i) = 0.0;
  }
  return y;
}

namespace detail {

// Pairwise Mahalanobis distances d_ij = sqrt((x_i - z_j)' Phi (x_i - z_j)).
inline Eigen::MatrixXd mahalanobis_distances(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z,
                                             const Eigen::MatrixXd& phi) {
  const Eigen::MatrixXd xphi = x * phi;
  const Eigen::VectorXd row_quads = (xphi.cwiseProduct(x)).rowwise().sum();
  const Eigen::VectorXd col_quads = ((z * phi).cwiseProduct(z)).rowwise().sum();
  Eigen::MatrixXd quads = (-2.0 * (xphi * z.transpose())).colwise() + row_quads;
  quads.rowwise() += col_quads.transpose();
  return quads.cwiseMax(0.0).cwiseSqrt();
}

inline Eigen::MatrixXd laplace_kernel(const Eigen::MatrixXd& dist, double bandwidth) {
  return (-dist / bandwidth).array().exp().matrix();
}

}  // namespace detail

// Ridge fit of the kernel coefficients for a fixed feature matrix; no AGOP
// update. Shared by the trainer and the downstream evaluation.
inline RfmModel rfm_fit_coefficients(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                     const FeatureMatrix& phi, double bandwidth, double ridge) {
  const Eigen::MatrixXd dist = detail::mahalanobis_distances(x, x, phi.entries());
  Eigen::MatrixXd k = detail::laplace_kernel(dist, bandwidth);
  k.diagonal().array() += ridge;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(k);
  if (ldlt.info() != Eigen::Success)
    throw divergence_error("rfm: kernel system is singular, increase the ridge");
  RfmModel model{x, ldlt.solve(y), phi, bandwidth, ridge};
  if (!model.coefficients.allFinite())
    throw divergence_error("rfm: non-finite coefficients, increase the ridge");
  return model;
}

// RFM training loop: kernel ridge fit, then the average gradient outer
// product update Phi <- sum_z g(z) g(z)' / n with g the analytic kernel
// gradient, then spectral normalization. Initial Phi = I.
inline RfmModel rfm_train(const RfmSpec& spec) {
  if (spec.n_train < 10 * spec.dim)
    throw error("rfm_train: n_train must be at least 10x the dimension");
  Rng rng(spec.seed);
  const Eigen::MatrixXd x = rfm_sample_inputs(spec.n_train, spec.dim, rng);
  const Eigen::VectorXd y = rfm_labels(x, spec.monomial, spec.indicator);

  FeatureMatrix phi(Eigen::MatrixXd(Eigen::MatrixXd::Identity(spec.dim, spec.dim)));
  const int n = spec.n_train;
  for (int iter = 0; iter < spec.iterations; ++iter) {
    const RfmModel fit = rfm_fit_coefficients(x, y, phi, spec.bandwidth, spec.ridge);

    // g(z_j) = Phi sum_i w_ij (x_i - z_j) with w_ij = a_i K_ij / (L d_ij),
    // folded into G = Phi X' (W - diag(colsum W)); coincident points (d = 0)
    // contribute zero by the gradient-at-kink convention.
    const Eigen::MatrixXd dist = detail::mahalanobis_distances(x, x, phi.entries());
    Eigen::MatrixXd w(n, n);
    const double inv_bw = 1.0 / spec.bandwidth;
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        const double d = dist(i, j);
        w(i, j) = d > 1e-12
                      ? fit.coefficients(i) * std::exp(-d * inv_bw) / (spec.bandwidth * d)
                      : 0.0;
      }
    }

    const Eigen::VectorXd colsum = w.colwise().sum();
    Eigen::MatrixXd mixed = x.transpose() * w;  // d x n
    mixed -= x.transpose() * colsum.asDiagonal();
    const Eigen::MatrixXd g = phi.entries() * mixed;
    Eigen::MatrixXd agop = (g * g.transpose()) / static_cast<double>(n);
    if (!agop.allFinite()) throw divergence_error("rfm_train: non-finite gradient outer product");

    FeatureMatrix candidate{agop};
    const double top = candidate.max_eigenvalue();
    if (top <= 0.0) throw divergence_error("rfm_train: gradient outer product collapsed");
    phi = FeatureMatrix(Eigen::MatrixXd(candidate.entries() / top));
  }
  return rfm_fit_coefficients(x, y, phi, spec.bandwidth, spec.ridge);
}

inline Eigen::VectorXd rfm_predict(const RfmModel& model, const Eigen::MatrixXd& inputs) {
  if (inputs.cols() != model.train_inputs.cols())
    throw dim_error("rfm_predict: input dimension mismatch");
  const Eigen::MatrixXd dist =
      detail::mahalanobis_distances(inputs, model.train_inputs, model.feature_matrix.entries());
  return detail::laplace_kernel(dist, model.bandwidth) * model.coefficients;
}

inline double rfm_mse(const RfmModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() != y.size()) throw dim_error("rfm_mse: label count mismatch");
  return (rfm_predict(model, x) - y).squaredNorm() / static_cast<double>(y.size());
}

}  // namespace featrec
