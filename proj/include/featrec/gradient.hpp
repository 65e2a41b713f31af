// Copyright 2026 The featrec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "featrec/errors.hpp"
#include "featrec/learner.hpp"
#include "featrec/rng.hpp"
#include "featrec/sym.hpp"

namespace featrec {

// One rescaled-pair constraint in sparse form against the fixed reference
// y = e_1: ||U' u||^2 = c * ||U' e_1||^2.
struct SparseConstraint {
  std::vector<int> idx;
  std::vector<double> val;
  double target = 0.0;  // c >= 0
};

struct GradientConfig {
  int batch_size = 4096;
  double step_size = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double clip_norm = 1.0;
  int max_epochs = 2000;
  double early_stop_loss = 1e-10;  // mean MSE loss
  double reg = 1e-4;               // Frobenius regularization coefficient
  std::uint64_t seed = 0;          // batch shuffling
  std::vector<std::pair<std::pair<int, int>, double>> fixed_entries{{{0, 0}, 1.0}};
};

// Low-rank iterate Phi = U U' with optimizer moments. Fixed entries are
// re-pinned after every update.
struct LowRankState {
  Eigen::MatrixXd u;
  Eigen::MatrixXd moment1;
  Eigen::MatrixXd moment2;
  long step = 0;
};

struct GradientOutcome {
  LowRankState state;
  SolveReport report;
  int epochs_run = 0;
};

// Thrown on NaN/Inf loss; carries the last finite iterate.
struct gradient_divergence_error : divergence_error {
  gradient_divergence_error(const std::string& what, LowRankState last)
      : divergence_error(what), last_state(std::move(last)) {}
  LowRankState last_state;
};

namespace detail {

inline void pin_fixed_entries(Eigen::MatrixXd& u, const GradientConfig& cfg) {
  for (const auto& [pos, value] : cfg.fixed_entries) {
    if (pos.first < u.rows() && pos.second < u.cols()) u(pos.first, pos.second) = value;
  }
}

inline Eigen::VectorXd sparse_project(const Eigen::MatrixXd& u, const SparseConstraint& c) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(u.cols());
  for (std::size_t k = 0; k < c.idx.size(); ++k) w += c.val[k] * u.row(c.idx[k]).transpose();
  return w;
}

}  // namespace detail

// Mean MSE loss (no regularizer) of the current iterate over a constraint set.
inline double gradient_loss(const Eigen::MatrixXd& u,
                            const std::vector<SparseConstraint>& constraints) {
  if (constraints.empty()) return 0.0;
  const double ref = u.row(0).squaredNorm();
  double total = 0.0;
  for (const SparseConstraint& c : constraints) {
    const double r = detail::sparse_project(u, c).squaredNorm() - c.target * ref;
    total += r * r;
  }
  return total / static_cast<double>(constraints.size());
}

// Gradient of (1/|B|) sum r_i^2 + reg*||U||_F^2 over one batch.
inline Eigen::MatrixXd gradient_of_batch(const Eigen::MatrixXd& u,
                                         const std::vector<SparseConstraint>& constraints,
                                         const std::vector<int>& batch, double reg) {
  Eigen::MatrixXd grad = 2.0 * reg * u;
  if (batch.empty()) return grad;
  const Eigen::VectorXd w_ref = u.row(0).transpose();
  const double ref = w_ref.squaredNorm();
  const double scale = 4.0 / static_cast<double>(batch.size());
  for (int index : batch) {
    const SparseConstraint& c = constraints[index];
    const Eigen::VectorXd w = detail::sparse_project(u, c);
    const double r = w.squaredNorm() - c.target * ref;
    const double coeff = scale * r;
    for (std::size_t k = 0; k < c.idx.size(); ++k)
      grad.row(c.idx[k]) += coeff * c.val[k] * w.transpose();
    grad.row(0) -= coeff * c.target * w_ref.transpose();
  }
  return grad;
}

// Batched low-rank solver: adaptive-moment steps on the rescaled-pair
// regression loss with gradient-norm clipping and entry re-pinning after
// every update. Deterministic given the config seed.
inline GradientOutcome solve_gradient(const std::vector<SparseConstraint>& constraints, int p,
                                      int r, const GradientConfig& cfg = {}) {
  if (r < 1 || r > p) throw error("solve_gradient: rank must satisfy 1 <= r <= p");
  if (constraints.empty()) throw error("solve_gradient: empty constraint set");
  if (cfg.max_epochs < 1 || cfg.batch_size < 1)
    throw error("solve_gradient: max_epochs and batch_size must be positive");
  for (const SparseConstraint& c : constraints) {
    if (c.target < 0.0) throw error("solve_gradient: negative constraint target");
    if (c.idx.size() != c.val.size())
      throw error("solve_gradient: index/value length mismatch");
    for (int i : c.idx)
      if (i < 0 || i >= p) throw error("solve_gradient: constraint index out of range");
  }

  Rng rng(cfg.seed, 0x6c6f7772616e6bull);
  LowRankState state;
  state.u.resize(p, r);
  const double init_scale = 0.1 / std::sqrt(static_cast<double>(r));
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < r; ++j) state.u(i, j) = init_scale * rng.normal();
  detail::pin_fixed_entries(state.u, cfg);
  state.moment1 = Eigen::MatrixXd::Zero(p, r);
  state.moment2 = Eigen::MatrixXd::Zero(p, r);

  std::vector<int> order(constraints.size());
  std::iota(order.begin(), order.end(), 0);

  LowRankState last_finite = state;
  double epoch_loss = std::numeric_limits<double>::infinity();
  int epoch = 0;
  const double eps = 1e-8;
  for (; epoch < cfg.max_epochs; ++epoch) {
    // Fisher-Yates with the counter-based stream.
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
      std::swap(order[i - 1], order[j]);
    }
    double loss_sum = 0.0;
    long batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<int> batch(order.begin() + start, order.begin() + stop);

      const Eigen::VectorXd w_ref = state.u.row(0).transpose();
      const double ref = w_ref.squaredNorm();
      double batch_loss = 0.0;
      for (int index : batch) {
        const double res =
            detail::sparse_project(state.u, constraints[index]).squaredNorm() -
            constraints[index].target * ref;
        batch_loss += res * res;
      }
      batch_loss /= static_cast<double>(batch.size());
      if (!std::isfinite(batch_loss))
        throw gradient_divergence_error("solve_gradient: non-finite loss", last_finite);
      last_finite = state;
      loss_sum += batch_loss;
      ++batches;

      Eigen::MatrixXd grad = gradient_of_batch(state.u, constraints, batch, cfg.reg);
      const double gnorm = grad.norm();
      if (gnorm > cfg.clip_norm) grad *= cfg.clip_norm / gnorm;

      ++state.step;
      state.moment1 = cfg.beta1 * state.moment1 + (1.0 - cfg.beta1) * grad;
      state.moment2 = cfg.beta2 * state.moment2 + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
      const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
      const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
      const Eigen::MatrixXd m_hat = state.moment1 / bias1;
      const Eigen::MatrixXd v_hat = state.moment2 / bias2;
      state.u -= cfg.step_size *
                 m_hat.cwiseQuotient(v_hat.cwiseSqrt() + Eigen::MatrixXd::Constant(p, r, eps));
      detail::pin_fixed_entries(state.u, cfg);
      if (!state.u.allFinite())
        throw gradient_divergence_error("solve_gradient: non-finite iterate", last_finite);
    }
    epoch_loss = loss_sum / static_cast<double>(batches);
    if (epoch_loss < cfg.early_stop_loss) {
      ++epoch;
      break;
    }
  }

  GradientOutcome out{state,
                      SolveReport{FeatureMatrix(Eigen::MatrixXd(state.u * state.u.transpose())),
                                  0, false, epoch_loss},
                      epoch};
  return out;
}

// ---------------------------------------------------------------------------
// Sparse constraint stream file: JSON lines, header {"dim":p,"reference":"e1"}.

inline std::vector<SparseConstraint> make_sparse_constraints(
    const std::vector<Activation>& samples, const FeatureMatrix& target) {
  const double ref = target.entries()(0, 0);
  if (ref <= target.quad_tol())
    throw degenerate_error("make_sparse_constraints: target (1,1) entry vanishes, e1 cannot anchor");
  std::vector<SparseConstraint> out;
  out.reserve(samples.size());
  for (const Activation& v : samples) {
    SparseConstraint c;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (v(i) != 0.0) {
        c.idx.push_back(static_cast<int>(i));
        c.val.push_back(v(i));
      }
    }
    c.target = target.quad(v) / ref;
    if (c.target < 0.0) c.target = 0.0;  // PSD quad forms; clamp eigen-noise
    out.push_back(std::move(c));
  }
  return out;
}

inline void write_stream_jsonl(const std::string& path, int dim,
                               const std::vector<SparseConstraint>& constraints) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  out << nlohmann::json{{"dim", dim}, {"reference", "e1"}}.dump() << '\n';
  for (const SparseConstraint& c : constraints) {
    out << nlohmann::json{{"idx", c.idx}, {"val", c.val}, {"c", c.target}}.dump() << '\n';
  }
  if (!out) throw io_error("write failed: " + path);
}

struct StreamFile {
  int dim = 0;
  std::vector<SparseConstraint> constraints;
};

inline StreamFile read_stream_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line)) throw io_error("stream file is empty: " + path);
  StreamFile file;
  try {
    const nlohmann::json header = nlohmann::json::parse(line);
    file.dim = header.at("dim").get<int>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const nlohmann::json j = nlohmann::json::parse(line);
      SparseConstraint c;
      c.idx = j.at("idx").get<std::vector<int>>();
      c.val = j.at("val").get<std::vector<double>>();
      c.target = j.at("c").get<double>();
      file.constraints.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw io_error("stream file parse error in " + path + ": " + e.what());
  }
  return file;
}

}  // namespace featrec
