// Copyright 2026 The featrec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "featrec/errors.hpp"
#include "featrec/feedback.hpp"
#include "featrec/learner.hpp"
#include "featrec/targets.hpp"

namespace featrec {

// Elementwise Pearson correlation over all p^2 entries.
inline double pcc(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw dim_error("pcc: shape mismatch");
  const double mean_a = a.mean();
  const double mean_b = b.mean();
  const Eigen::ArrayXXd da = a.array() - mean_a;
  const Eigen::ArrayXXd db = b.array() - mean_b;
  const double var_a = (da * da).sum();
  const double var_b = (db * db).sum();
  if (var_a == 0.0 || var_b == 0.0)
    throw degenerate_error("pcc: correlation undefined for a constant matrix");
  return (da * db).sum() / std::sqrt(var_a * var_b);
}

// Feature-equivalence success tolerance of the exact solver.
inline constexpr double kSuccessTol = 1e-6;

struct TrialResult {
  std::uint64_t seed = 0;
  std::string method;
  int n_feedback = 0;
  bool success = false;
  double pcc = 0.0;
  double residual = 0.0;
  double wall_time_s = 0.0;
};

struct TrialParams {
  TeachMethod method = TeachMethod::Sample;
  int n = 0;                // sample count; ignored by the constructive teachers
  double zero_prob = 0.9;   // sparse-sample only
};

// One sample-teach-solve-evaluate round against a known target.
inline TrialResult run_trial(const FeatureMatrix& target, const TrialParams& params,
                             std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  TrialResult result;
  result.seed = seed;
  result.method = to_string(params.method);
  try {
    FeedbackSet fs;
    switch (params.method) {
      case TeachMethod::Eigen:
        fs = teach_eigendecomposition(target);
        break;
      case TeachMethod::SparseConstruct:
        fs = teach_sparse_constructive(target);
        break;
      case TeachMethod::Sample:
        fs = teach_from_samples(sample_general(params.n, target.dim(), seed), target);
        break;
      case TeachMethod::SparseSample: {
        const SparseDistribution dist =
            SparseDistribution::uniform(target.dim(), params.zero_prob);
        fs = teach_from_samples(sample_sparse(params.n, dist, seed), target);
        fs.method = to_string(TeachMethod::SparseSample);
        break;
      }
    }
    fs.seed = seed;
    result.n_feedback = static_cast<int>(fs.size());
    if (fs.items.empty()) {
      result.success = false;  // nothing to constrain the learner with
    } else {
      const SolveReport report = solve_nullspace(build_system(fs));
      result.residual = report.residual;
      result.pcc = pcc(target.entries(), report.solution.entries());
      result.success = report.unique_up_to_scale &&
                       is_feature_equivalent(target, report.solution, kSuccessTol).equivalent;
    }
  } catch (const degenerate_error&) {
    result.success = false;  // e.g. every sparse sample fell in the null space
  } catch (const infeasible_error&) {
    result.success = false;
  }
  result.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

struct CurvePoint {
  int n = 0;
  double frequency = 0.0;
  double mean_pcc = 0.0;
};

struct CurveResult {
  std::vector<TrialResult> trials;  // ordered by (n, seed)
  std::vector<CurvePoint> points;   // ordered by n
};

// Sweeps feedback sizes over seeds. Trials run concurrently up to `threads`;
// each trial owns its RNG and slot, results are merged in (n, seed) order.
inline CurveResult success_curve(const FeatureMatrix& target, TeachMethod method,
                                 const std::vector<int>& n_values,
                                 const std::vector<std::uint64_t>& seeds, double zero_prob = 0.9,
                                 int threads = 0) {
  CurveResult result;
  const std::size_t total = n_values.size() * seeds.size();
  result.trials.resize(total);

  if (threads <= 0) {
    const unsigned hw = std::thread::hardware_concurrency();
    threads = hw == 0 ? 1 : static_cast<int>(hw);
  }
  threads = static_cast<int>(
      std::min<std::size_t>(static_cast<std::size_t>(threads), std::max<std::size_t>(total, 1)));

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t at = next.fetch_add(1);
      if (at >= total) return;
      const int n = n_values[at / seeds.size()];
      const std::uint64_t seed = seeds[at % seeds.size()];
      TrialParams params{method, n, zero_prob};
      result.trials[at] = run_trial(target, params, seed);
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  for (std::size_t block = 0; block < n_values.size(); ++block) {
    CurvePoint point;
    point.n = n_values[block];
    double pcc_sum = 0.0;
    int hits = 0;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const TrialResult& trial = result.trials[block * seeds.size() + s];
      hits += trial.success ? 1 : 0;
      pcc_sum += trial.pcc;
    }
    point.frequency = static_cast<double>(hits) / static_cast<double>(seeds.size());
    point.mean_pcc = pcc_sum / static_cast<double>(seeds.size());
    result.points.push_back(point);
  }
  return result;
}

inline void write_results_csv(const std::string& path, const std::vector<TrialResult>& trials,
                              const std::vector<int>& n_values, std::size_t seeds_per_n) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  out << "seed,method,n,success,pcc,residual,wall_time_s\n";
  out.precision(12);
  for (std::size_t at = 0; at < trials.size(); ++at) {
    const TrialResult& t = trials[at];
    const int n = n_values[at / seeds_per_n];
    out << t.seed << ',' << t.method << ',' << n << ',' << (t.success ? 1 : 0) << ',' << t.pcc
        << ',' << t.residual << ',' << t.wall_time_s << '\n';
  }
  if (!out) throw io_error("write failed: " + path);
}

inline nlohmann::json curve_summary_json(const CurveResult& curve, const std::string& method) {
  nlohmann::json points = nlohmann::json::array();
  for (const CurvePoint& p : curve.points)
    points.push_back({{"n", p.n}, {"frequency", p.frequency}, {"mean_pcc", p.mean_pcc}});
  return {{"method", method}, {"points", points}};
}

// Fits the kernel coefficients once per feature matrix (no AGOP updates) on a
// shared train split and reports both test MSEs. learned_scale is the factor
// lambda with target ~ lambda * learned; the bandwidth of the learned model
// shrinks by sqrt(lambda) so that the two kernels agree when the matrices are
// feature-equivalent.
inline std::pair<double, double> rfm_downstream_mse(const FeatureMatrix& target_phi,
                                                    const FeatureMatrix& learned_phi,
                                                    const RfmSpec& spec,
                                                    const Eigen::MatrixXd& test_x,
                                                    const Eigen::VectorXd& test_y,
                                                    double learned_scale = 1.0) {
  Rng rng(spec.seed);
  const Eigen::MatrixXd train_x = rfm_sample_inputs(spec.n_train, spec.dim, rng);
  const Eigen::VectorXd train_y = rfm_labels(train_x, spec.monomial, spec.indicator);

  const RfmModel with_target =
      rfm_fit_coefficients(train_x, train_y, target_phi, spec.bandwidth, spec.ridge);
  if (!(learned_scale > 0.0))
    throw error("rfm_downstream_mse: learned_scale must be positive");
  const double learned_bandwidth = spec.bandwidth / std::sqrt(learned_scale);
  const RfmModel with_learned =
      rfm_fit_coefficients(train_x, train_y, learned_phi, learned_bandwidth, spec.ridge);

  return {rfm_mse(with_target, test_x, test_y), rfm_mse(with_learned, test_x, test_y)};
}

}  // namespace featrec
