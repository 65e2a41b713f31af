// Copyright 2026 The featrec Authors
// SPDX-License-Identifier: Apache-2.0
//
// featrec command line: generate targets, teach them, solve the feedback,
// evaluate results, and compute sampling bounds. All randomness flows from
// --seed through a counter-based generator, so identical invocations produce
// identical outputs.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "featrec/bounds.hpp"
#include "featrec/eval.hpp"
#include "featrec/feedback.hpp"
#include "featrec/gradient.hpp"
#include "featrec/io.hpp"
#include "featrec/learner.hpp"
#include "featrec/targets.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitIo = 4;

using nlohmann::json;

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

int curve_threads() {
  if (const char* env = std::getenv("FEATREC_THREADS")) {
    const int parsed = std::atoi(env);
    if (parsed > 0) return parsed;
  }
  return 0;  // library default: hardware concurrency
}

json target_summary(const featrec::FeatureMatrix& phi) {
  return {{"dim", phi.dim()}, {"rank", phi.rank()}, {"trace", phi.trace()}};
}

struct CommandError {
  int code;
  std::string message;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"feature-matrix recovery from comparison feedback"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value config file; flags take precedence");

  std::uint64_t seed = 0;

  // --- target ---------------------------------------------------------------
  auto* target_cmd = app.add_subcommand("target", "generate a ground-truth feature matrix");
  target_cmd->require_subcommand(1);

  int t_dim = 10, t_rank = 4;
  std::string t_out;
  auto* random_cmd = target_cmd->add_subcommand("random-psd", "random low-rank PSD target");
  random_cmd->add_option("--dim", t_dim, "matrix dimension p")->required();
  random_cmd->add_option("--rank", t_rank, "rank r <= p")->required();
  random_cmd->add_option("--seed", seed, "rng seed");
  random_cmd->add_option("--out", t_out, "output matrix file (.fmx or .csv)")->required();

  std::string rfm_monomial = "0,1";
  int rfm_indicator = -1;
  int rfm_ntrain = 4000, rfm_iters = 5, rfm_dim = 10;
  double rfm_bandwidth = 10.0, rfm_ridge = 1e-3;
  std::string rfm_out;
  auto* rfm_cmd = target_cmd->add_subcommand("rfm", "recursive-feature-machine trained target");
  rfm_cmd->add_option("--dim", rfm_dim, "input dimension d")->required();
  rfm_cmd->add_option("--monomial", rfm_monomial, "comma-separated coordinate indices");
  rfm_cmd->add_option("--indicator", rfm_indicator, "indicator coordinate (omit for none)");
  rfm_cmd->add_option("--n-train", rfm_ntrain, "training sample count");
  rfm_cmd->add_option("--iters", rfm_iters, "feature-update iterations");
  rfm_cmd->add_option("--bandwidth", rfm_bandwidth, "kernel bandwidth L");
  rfm_cmd->add_option("--ridge", rfm_ridge, "ridge coefficient");
  rfm_cmd->add_option("--seed", seed, "rng seed");
  rfm_cmd->add_option("--out", rfm_out, "output matrix file")->required();

  std::string dict_in, dict_out;
  bool dict_transpose = false;
  auto* dict_cmd = target_cmd->add_subcommand("dictionary", "gram matrix of a dictionary file");
  dict_cmd->add_option("--in", dict_in, "dictionary matrix (.fmx or .csv)")->required();
  dict_cmd->add_flag("--transpose", dict_transpose, "use D D' instead of D' D");
  dict_cmd->add_option("--out", dict_out, "output matrix file")->required();

  // --- teach ----------------------------------------------------------------
  auto* teach_cmd = app.add_subcommand("teach", "produce a feedback set for a target");
  std::string teach_target, teach_method, teach_out, teach_format = "pairs";
  int teach_n = 0, teach_sparsity = 3;
  double teach_zero_prob = 0.9;
  teach_cmd->add_option("--target", teach_target, "target matrix file")->required();
  teach_cmd->add_option("--method", teach_method, "eigen|sparse-construct|sample|sparse-sample")
      ->required();
  teach_cmd->add_option("--n", teach_n, "sample count (sampling methods)");
  teach_cmd->add_option("--sparsity", teach_sparsity, "hard sparsity cap for stream output");
  teach_cmd->add_option("--zero-prob", teach_zero_prob, "per-index zero probability");
  teach_cmd->add_option("--seed", seed, "rng seed");
  teach_cmd->add_option("--format", teach_format, "pairs|stream output layout");
  teach_cmd->add_option("--out", teach_out, "output JSONL file")->required();

  // --- solve ----------------------------------------------------------------
  auto* solve_cmd = app.add_subcommand("solve", "recover a feature matrix from feedback");
  std::string solve_feedback, solve_out, solve_report, solve_solver = "nullspace";
  std::string solve_target;
  int solve_rank = 0, solve_epochs = 2000, solve_batch = 4096;
  double solve_lr = 1e-3, solve_reg = 1e-4, solve_tol = 1e-8, solve_loss_tol = 1e-6;
  solve_cmd->add_option("--feedback", solve_feedback, "feedback JSONL (pairs or stream)")
      ->required();
  solve_cmd->add_option("--solver", solve_solver, "nullspace|gradient");
  solve_cmd->add_option("--rank", solve_rank, "factor rank (gradient solver)");
  solve_cmd->add_option("--epochs", solve_epochs, "max epochs (gradient solver)");
  solve_cmd->add_option("--batch", solve_batch, "batch size (gradient solver)");
  solve_cmd->add_option("--lr", solve_lr, "step size (gradient solver)");
  solve_cmd->add_option("--reg", solve_reg, "regularization (gradient solver)");
  solve_cmd->add_option("--tol", solve_tol, "residual tolerance relative to ||solution||_F");
  solve_cmd->add_option("--loss-tol", solve_loss_tol, "mean-loss success bar (gradient solver)");
  solve_cmd->add_option("--seed", seed, "rng seed");
  solve_cmd->add_option("--target", solve_target, "optional target for a PCC report");
  solve_cmd->add_option("--out", solve_out, "learned matrix file")->required();
  solve_cmd->add_option("--report", solve_report, "report JSON file (also printed)");

  // --- eval -----------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "metrics and experiment sweeps");
  eval_cmd->require_subcommand(1);

  std::string pcc_a, pcc_b;
  auto* pcc_cmd = eval_cmd->add_subcommand("pcc", "elementwise Pearson correlation");
  pcc_cmd->add_option("--a", pcc_a, "matrix file")->required();
  pcc_cmd->add_option("--b", pcc_b, "matrix file")->required();

  std::string curve_target, curve_method, curve_n = "55,110,550,1100";
  std::string curve_out, curve_summary;
  int curve_seeds = 20;
  double curve_zero_prob = 0.9;
  auto* curve_cmd = eval_cmd->add_subcommand("curve", "recovery-frequency sweep over n");
  curve_cmd->add_option("--target", curve_target, "target matrix file")->required();
  curve_cmd->add_option("--method", curve_method, "teaching method")->required();
  curve_cmd->add_option("--n", curve_n, "comma-separated sample counts");
  curve_cmd->add_option("--seeds", curve_seeds, "number of per-n trials");
  curve_cmd->add_option("--zero-prob", curve_zero_prob, "sparse sampling zero probability");
  curve_cmd->add_option("--seed", seed, "base seed; trial i uses seed+i");
  curve_cmd->add_option("--out", curve_out, "results CSV path");
  curve_cmd->add_option("--summary", curve_summary, "summary JSON path");

  std::string down_target, down_learned, down_monomial = "0,1";
  int down_indicator = -1, down_dim = 10, down_ntrain = 4000, down_ntest = 4000;
  double down_bandwidth = 10.0, down_ridge = 1e-3;
  auto* down_cmd = eval_cmd->add_subcommand("downstream", "test MSE with target vs learned matrix");
  down_cmd->add_option("--target", down_target, "target matrix file")->required();
  down_cmd->add_option("--learned", down_learned, "learned matrix file")->required();
  down_cmd->add_option("--dim", down_dim, "input dimension d");
  down_cmd->add_option("--monomial", down_monomial, "comma-separated coordinate indices");
  down_cmd->add_option("--indicator", down_indicator, "indicator coordinate (omit for none)");
  down_cmd->add_option("--n-train", down_ntrain, "training sample count");
  down_cmd->add_option("--n-test", down_ntest, "test sample count");
  down_cmd->add_option("--bandwidth", down_bandwidth, "kernel bandwidth L");
  down_cmd->add_option("--ridge", down_ridge, "ridge coefficient");
  down_cmd->add_option("--seed", seed, "rng seed");

  // --- bound ----------------------------------------------------------------
  auto* bound_cmd = app.add_subcommand("bound", "sparse-sampling coverage bound");
  int bound_dim = 10, bound_sparsity = 3;
  double bound_zero_prob = 0.5, bound_delta = 0.05;
  bound_cmd->add_option("--dim", bound_dim, "dimension p")->required();
  bound_cmd->add_option("--sparsity", bound_sparsity, "sparsity s")->required();
  bound_cmd->add_option("--zero-prob", bound_zero_prob, "per-index zero probability")->required();
  bound_cmd->add_option("--delta", bound_delta, "failure probability")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;  // help/version exit clean, misuse exits 2
  }

  try {
    if (random_cmd->parsed()) {
      const featrec::FeatureMatrix phi = featrec::random_psd(t_dim, t_rank, seed);
      featrec::write_matrix(t_out, phi.entries());
      json summary = target_summary(phi);
      summary["seed"] = seed;
      std::cout << summary.dump() << "\n";
    } else if (rfm_cmd->parsed()) {
      featrec::RfmSpec spec;
      spec.dim = rfm_dim;
      spec.monomial = parse_int_list(rfm_monomial);
      if (rfm_indicator >= 0) spec.indicator = rfm_indicator;
      spec.n_train = rfm_ntrain;
      spec.iterations = rfm_iters;
      spec.seed = seed;
      spec.bandwidth = rfm_bandwidth;
      spec.ridge = rfm_ridge;
      const featrec::RfmModel model = featrec::rfm_train(spec);
      featrec::write_matrix(rfm_out, model.feature_matrix.entries());
      json summary = target_summary(model.feature_matrix);
      summary["seed"] = seed;
      std::cout << summary.dump() << "\n";
    } else if (dict_cmd->parsed()) {
      const Eigen::MatrixXd d = featrec::read_matrix(dict_in);
      const featrec::FeatureMatrix phi = featrec::dictionary_gram(d, dict_transpose);
      featrec::write_matrix(dict_out, phi.entries());
      std::cout << target_summary(phi).dump() << "\n";
    } else if (teach_cmd->parsed()) {
      const featrec::FeatureMatrix target(featrec::read_matrix(teach_target));
      const featrec::TeachMethod method = featrec::teach_method_from_string(teach_method);
      const bool sampling =
          method == featrec::TeachMethod::Sample || method == featrec::TeachMethod::SparseSample;
      if (sampling && teach_n < 1)
        throw CommandError{kExitUsage, "--n is required for sampling methods"};

      if (teach_format == "stream") {
        if (!sampling)
          throw CommandError{kExitUsage,
                             "--format stream requires a sampling method (sample|sparse-sample)"};
        std::vector<featrec::Activation> samples;
        if (method == featrec::TeachMethod::Sample) {
          samples = featrec::sample_general(teach_n, target.dim(), seed);
        } else {
          const double zero_prob = teach_cmd->count("--zero-prob")
                                       ? teach_zero_prob
                                       : 1.0 - static_cast<double>(teach_sparsity) / target.dim();
          samples = featrec::sample_sparse_capped(
              teach_n, featrec::SparseDistribution::uniform(target.dim(), zero_prob),
              teach_sparsity, seed);
        }
        const auto stream = featrec::make_sparse_constraints(samples, target);
        featrec::write_stream_jsonl(teach_out, target.dim(), stream);
        std::cout << json{{"count", stream.size()}, {"seed", seed}}.dump() << "\n";
      } else if (teach_format == "pairs") {
        featrec::FeedbackSet fs;
        switch (method) {
          case featrec::TeachMethod::Eigen:
            fs = featrec::teach_eigendecomposition(target);
            break;
          case featrec::TeachMethod::SparseConstruct:
            fs = featrec::teach_sparse_constructive(target);
            break;
          case featrec::TeachMethod::Sample:
            fs = featrec::teach_from_samples(featrec::sample_general(teach_n, target.dim(), seed),
                                             target);
            break;
          case featrec::TeachMethod::SparseSample:
            fs = featrec::teach_from_samples(
                featrec::sample_sparse(
                    teach_n, featrec::SparseDistribution::uniform(target.dim(), teach_zero_prob),
                    seed),
                target);
            fs.method = featrec::to_string(featrec::TeachMethod::SparseSample);
            break;
        }
        fs.seed = seed;
        featrec::write_feedback_jsonl(teach_out, fs);
        std::cout << json{{"count", fs.size()}, {"seed", seed}}.dump() << "\n";
      } else {
        throw CommandError{kExitUsage, "unknown --format: " + teach_format};
      }
    } else if (solve_cmd->parsed()) {
      json report;
      Eigen::MatrixXd learned;
      bool within_tolerance = false;
      if (solve_solver == "nullspace") {
        const featrec::FeedbackSet fs = featrec::read_feedback_jsonl(solve_feedback);
        const featrec::SolveReport sr = featrec::solve_nullspace(featrec::build_system(fs));
        learned = sr.solution.entries();
        within_tolerance = sr.residual <= solve_tol * learned.norm();
        report = {{"version_space_dim", sr.version_space_dim},
                  {"unique", sr.unique_up_to_scale},
                  {"residual", sr.residual},
                  {"trace", 1.0}};
      } else if (solve_solver == "gradient") {
        if (solve_cmd->count("--rank") == 0)
          throw CommandError{kExitUsage, "--rank is required for the gradient solver"};
        const featrec::StreamFile stream = featrec::read_stream_jsonl(solve_feedback);
        featrec::GradientConfig cfg;
        cfg.max_epochs = solve_epochs;
        cfg.batch_size = solve_batch;
        cfg.step_size = solve_lr;
        cfg.reg = solve_reg;
        cfg.seed = seed;
        const featrec::GradientOutcome out =
            featrec::solve_gradient(stream.constraints, stream.dim, solve_rank, cfg);
        learned = out.report.solution.entries();
        within_tolerance = out.report.residual <= solve_loss_tol;
        report = {{"version_space_dim", 0},
                  {"unique", false},
                  {"residual", out.report.residual},
                  {"epochs", out.epochs_run},
                  {"trace", learned.trace()}};
      } else {
        throw CommandError{kExitUsage, "unknown --solver: " + solve_solver};
      }
      if (!solve_target.empty()) {
        const Eigen::MatrixXd target = featrec::read_matrix(solve_target);
        report["pcc"] = featrec::pcc(target, learned);
      }
      featrec::write_matrix(solve_out, learned);
      if (!solve_report.empty()) {
        std::ofstream rep_out(solve_report);
        if (!rep_out) throw featrec::io_error("cannot open for writing: " + solve_report);
        rep_out << report.dump(2) << "\n";
      }
      std::cout << report.dump() << "\n";
      if (!within_tolerance) return kExitInfeasible;
    } else if (pcc_cmd->parsed()) {
      const Eigen::MatrixXd a = featrec::read_matrix(pcc_a);
      const Eigen::MatrixXd b = featrec::read_matrix(pcc_b);
      std::cout << json{{"pcc", featrec::pcc(a, b)}}.dump() << "\n";
    } else if (curve_cmd->parsed()) {
      const featrec::FeatureMatrix target(featrec::read_matrix(curve_target));
      const featrec::TeachMethod method = featrec::teach_method_from_string(curve_method);
      const std::vector<int> n_values = parse_int_list(curve_n);
      if (n_values.empty()) throw CommandError{kExitUsage, "--n must list at least one count"};
      std::vector<std::uint64_t> seeds;
      for (int i = 0; i < curve_seeds; ++i) seeds.push_back(seed + static_cast<std::uint64_t>(i));
      const featrec::CurveResult curve = featrec::success_curve(
          target, method, n_values, seeds, curve_zero_prob, curve_threads());
      if (!curve_out.empty())
        featrec::write_results_csv(curve_out, curve.trials, n_values, seeds.size());
      json summary = featrec::curve_summary_json(curve, curve_method);
      summary["seed"] = seed;
      if (!curve_summary.empty()) {
        std::ofstream sum_out(curve_summary);
        if (!sum_out) throw featrec::io_error("cannot open for writing: " + curve_summary);
        sum_out << summary.dump(2) << "\n";
      }
      std::cout << summary.dump() << "\n";
    } else if (down_cmd->parsed()) {
      const featrec::FeatureMatrix target(featrec::read_matrix(down_target));
      const featrec::FeatureMatrix learned(featrec::read_matrix(down_learned));
      featrec::RfmSpec spec;
      spec.dim = down_dim;
      spec.monomial = parse_int_list(down_monomial);
      if (down_indicator >= 0) spec.indicator = down_indicator;
      spec.n_train = down_ntrain;
      spec.seed = seed;
      spec.bandwidth = down_bandwidth;
      spec.ridge = down_ridge;
      const auto equiv = featrec::is_feature_equivalent(target, learned, 1e-6);
      const double scale = equiv.scale > 0.0 ? equiv.scale : 1.0;
      featrec::Rng rng(seed, 1);  // test split drawn from an independent substream
      const Eigen::MatrixXd test_x = featrec::rfm_sample_inputs(down_ntest, spec.dim, rng);
      const Eigen::VectorXd test_y = featrec::rfm_labels(test_x, spec.monomial, spec.indicator);
      const auto [mse_target, mse_learned] =
          featrec::rfm_downstream_mse(target, learned, spec, test_x, test_y, scale);
      std::cout << json{{"mse_target", mse_target},
                        {"mse_learned", mse_learned},
                        {"scale", scale},
                        {"seed", seed}}
                       .dump()
                << "\n";
    } else if (bound_cmd->parsed()) {
      const featrec::SparseCoverageTerms terms =
          featrec::sparse_coverage_terms(bound_dim, bound_sparsity, bound_zero_prob);
      const long long n =
          featrec::sparse_coverage_bound(bound_dim, bound_sparsity, bound_zero_prob, bound_delta);
      std::cout << json{{"p1", terms.p1}, {"p2", terms.p2}, {"log_p_s", terms.log_p_s}, {"n", n}}
                       .dump()
                << "\n";
    }
  } catch (const CommandError& e) {
    std::cerr << "featrec: " << e.message << "\n";
    return e.code;
  } catch (const featrec::io_error& e) {
    std::cerr << "featrec: " << e.what() << "\n";
    return kExitIo;
  } catch (const featrec::infeasible_error& e) {
    std::cerr << "featrec: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const featrec::divergence_error& e) {
    std::cerr << "featrec: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const featrec::error& e) {
    std::cerr << "featrec: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "featrec: " << e.what() << "\n";
    return kExitUsage;
  }
  return 0;
}
