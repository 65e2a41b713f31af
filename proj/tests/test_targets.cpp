// Copyright 2026 The featrec Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include "featrec/eval.hpp"
#include "featrec/targets.hpp"

using namespace featrec;

TEST_CASE("random_psd ranks and determinism") {
  const FeatureMatrix full = random_psd(6, 6, 1);
  CHECK(full.rank() == 6);
  CHECK(full.eigen().values.minCoeff() > 0.0);

  const FeatureMatrix rank1 = random_psd(6, 1, 2);
  CHECK(rank1.rank() == 1);

  const FeatureMatrix a = random_psd(10, 4, 3);
  CHECK(a.rank() == 4);
  const FeatureMatrix b = random_psd(10, 4, 3);
  CHECK((a.entries() - b.entries()).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(random_psd(4, 5, 1), error);
}

TEST_CASE("dictionary gram conventions and spectrum") {
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(4, 4);
  CHECK((dictionary_gram(identity).entries() - identity).norm() == 0.0);

  Eigen::MatrixXd cols(3, 2);
  cols << 2, 0, 0, 3, 0, 0;
  const FeatureMatrix gram = dictionary_gram(cols);
  CHECK(gram.dim() == 2);
  CHECK(gram.entries()(0, 0) == Catch::Approx(4.0));
  CHECK(gram.entries()(1, 1) == Catch::Approx(9.0));
  CHECK(std::abs(gram.entries()(0, 1)) < 1e-12);

  Rng rng(12);
  Eigen::MatrixXd d(20, 8);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 8; ++j) d(i, j) = rng.normal();
  const FeatureMatrix phi = dictionary_gram(d);
  CHECK(phi.rank() == 8);
  const Eigen::VectorXd squared_singular =
      d.jacobiSvd().singularValues().array().square().matrix();
  for (int i = 0; i < 8; ++i)
    CHECK(phi.eigen().values(i) ==
          Catch::Approx(squared_singular(i)).epsilon(1e-8));

  const FeatureMatrix flipped = dictionary_gram(d, true);
  CHECK(flipped.dim() == 20);
  CHECK(flipped.rank() == 8);
}

TEST_CASE("rfm with zero iterations keeps the identity") {
  RfmSpec spec;
  spec.dim = 4;
  spec.monomial = {0};
  spec.n_train = 50;
  spec.iterations = 0;
  spec.seed = 5;
  const RfmModel model = rfm_train(spec);
  CHECK((model.feature_matrix.entries() - Eigen::MatrixXd::Identity(4, 4)).norm() == 0.0);
  CHECK(model.coefficients.allFinite());
}

TEST_CASE("rfm train rejects undersized training sets") {
  RfmSpec spec;
  spec.dim = 10;
  spec.monomial = {0};
  spec.n_train = 50;
  CHECK_THROWS_AS(rfm_train(spec), error);
}

TEST_CASE("rfm on a linear target concentrates on the active coordinate") {
  RfmSpec spec;
  spec.dim = 5;
  spec.monomial = {0};
  spec.n_train = 600;
  spec.iterations = 4;
  spec.seed = 11;
  const RfmModel model = rfm_train(spec);
  const Eigen::MatrixXd& phi = model.feature_matrix.entries();
  CHECK(model.feature_matrix.is_psd());
  CHECK(phi(0, 0) >= 0.5 * phi.trace());
}

TEST_CASE("rfm predictions interpolate at a small ridge") {
  RfmSpec spec;
  spec.dim = 3;
  spec.monomial = {0, 1};
  spec.n_train = 30;
  spec.iterations = 1;
  spec.seed = 7;
  spec.ridge = 1e-10;
  const RfmModel model = rfm_train(spec);
  const Eigen::VectorXd labels =
      rfm_labels(model.train_inputs, spec.monomial, spec.indicator);
  const Eigen::VectorXd fitted = rfm_predict(model, model.train_inputs);
  CHECK((fitted - labels).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("trained rfm beats the zero predictor") {
  RfmSpec spec;
  spec.dim = 6;
  spec.monomial = {0, 1};
  spec.indicator = 5;
  spec.n_train = 400;
  spec.iterations = 3;
  spec.seed = 21;
  const RfmModel model = rfm_train(spec);

  Rng rng(1234);
  const Eigen::MatrixXd test_x = rfm_sample_inputs(400, spec.dim, rng);
  const Eigen::VectorXd test_y = rfm_labels(test_x, spec.monomial, spec.indicator);
  const double mse_model = rfm_mse(model, test_x, test_y);
  const double mse_zero = test_y.squaredNorm() / static_cast<double>(test_y.size());
  CHECK(mse_model < mse_zero);
}

TEST_CASE("feature-equivalent matrices with rescaled bandwidth predict identically") {
  RfmSpec spec;
  spec.dim = 4;
  spec.monomial = {0, 2};
  spec.n_train = 60;
  spec.iterations = 2;
  spec.seed = 31;
  const RfmModel model = rfm_train(spec);

  const double lambda = 3.7;
  const FeatureMatrix scaled(Eigen::MatrixXd(lambda * model.feature_matrix.entries()));
  const Eigen::VectorXd labels =
      rfm_labels(model.train_inputs, spec.monomial, spec.indicator);
  const RfmModel rescaled = rfm_fit_coefficients(
      model.train_inputs, labels, scaled, model.bandwidth * std::sqrt(lambda), model.ridge);

  Rng rng(77);
  const Eigen::MatrixXd test_x = rfm_sample_inputs(50, spec.dim, rng);
  const Eigen::VectorXd a = rfm_predict(model, test_x);
  const Eigen::VectorXd b = rfm_predict(rescaled, test_x);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("rfm feature matrix stays PSD across iterations and is seed deterministic") {
  RfmSpec spec;
  spec.dim = 4;
  spec.monomial = {1};
  spec.n_train = 80;
  spec.iterations = 3;
  spec.seed = 13;
  const RfmModel a = rfm_train(spec);
  const RfmModel b = rfm_train(spec);
  CHECK(a.feature_matrix.is_psd());
  CHECK((a.feature_matrix.entries() - b.feature_matrix.entries()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.feature_matrix.max_eigenvalue() == Catch::Approx(1.0));  // spectral normalization
}
