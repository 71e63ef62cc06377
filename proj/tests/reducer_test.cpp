// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "locqor/error.hpp"
#include "locqor/reducer.hpp"

namespace locqor::reducer {
namespace {

AutoencoderConfig small_config(std::size_t in = 8, std::vector<std::size_t> hidden = {8, 4},
                               std::size_t d = 2) {
  AutoencoderConfig c;
  c.input_dim = in;
  c.hidden = std::move(hidden);
  c.latent_dim = d;
  return c;
}

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

Autoencoder trained_small(std::uint64_t seed = 3) {
  TrainConfig tc;
  tc.epochs = 5;
  tc.batch_size = 16;
  tc.learning_rate = 1e-2;
  tc.seed = seed;
  return train_autoencoder(random_matrix(200, 8, 9), small_config(), tc);
}

// --- shapes and inference ---------------------------------------------------------

TEST(Autoencoder, LayerShapesMirror) {
  const auto ae = Autoencoder::create(small_config(64, {32, 16}, 8), 1);
  const auto& L = ae.layers();
  ASSERT_EQ(L.size(), 6u);
  const std::vector<std::pair<std::size_t, std::size_t>> dims{{64, 32}, {32, 16}, {16, 8},
                                                              {8, 16},  {16, 32}, {32, 64}};
  for (std::size_t l = 0; l < L.size(); ++l) {
    EXPECT_EQ(L[l].in_dim(), dims[l].first) << l;
    EXPECT_EQ(L[l].out_dim(), dims[l].second) << l;
  }
  EXPECT_EQ(ae.encoder_depth(), 3u);
  EXPECT_FALSE(L.back().batch_norm);
  EXPECT_FALSE(L.back().leaky);
  EXPECT_EQ(L[2].dropout, 0.0);  // latent
  EXPECT_EQ(L[0].dropout, 0.3);
  EXPECT_TRUE(L[2].batch_norm);
  EXPECT_NO_THROW(ae.validate());
}

TEST(Autoencoder, UntrainedInferenceFiniteWithRightWidths) {
  auto ae = Autoencoder::create(small_config(64, {32, 16}, 8), 1);
  ae.set_mode(Mode::kInfer);
  std::vector<double> x(64, 0.5);
  const auto z = ae.encode(x);
  ASSERT_EQ(z.size(), 8u);
  for (double v : z) EXPECT_TRUE(std::isfinite(v));
  const auto r = ae.reconstruct(x);
  EXPECT_EQ(r.output.size(), 64u);
  EXPECT_TRUE(std::isfinite(r.mse));
}

TEST(Autoencoder, InferenceRequiresInferModeAndWidth) {
  auto ae = Autoencoder::create(small_config(), 1);
  std::vector<double> x(8, 0.0);
  EXPECT_THROW(ae.encode(x), Error);
  ae.set_mode(Mode::kInfer);
  std::vector<double> wrong(7, 0.0);
  EXPECT_THROW(ae.encode(wrong), ShapeError);
}

TEST(Autoencoder, ConfigValidation) {
  EXPECT_THROW(Autoencoder::create(small_config(0), 1), ConfigError);
  auto c = small_config();
  c.dropout = 1.0;
  EXPECT_THROW(Autoencoder::create(c, 1), ConfigError);
}

TEST(Autoencoder, BatchEncodeMatchesIndividual) {
  const auto ae = trained_small();
  const auto x = random_matrix(8, 37, 4);
  const auto z = ae.encode_batch(x);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const Eigen::VectorXd col = x.col(j);
    const auto one = ae.encode(std::span<const double>(col.data(), 8));
    for (Eigen::Index i = 0; i < z.rows(); ++i) EXPECT_NEAR(z(i, j), one[i], 1e-6);
  }
}

TEST(Autoencoder, EncodeIsPure) {
  const auto ae = trained_small();
  std::vector<double> x{1, 2, 3, 4, 5, 6, 7, 8};
  EXPECT_EQ(ae.encode(x), ae.encode(x));
}

TEST(Autoencoder, IdenticalRowsIdenticalLatents) {
  const auto ae = trained_small();
  Eigen::MatrixXd x(8, 3);
  x.colwise() = random_matrix(8, 1, 1).col(0);
  const auto z = ae.encode_batch(x);
  EXPECT_EQ(z.col(0), z.col(1));
  EXPECT_EQ(z.col(0), z.col(2));
}

// --- primitives --------------------------------------------------------------------

TEST(BatchNormalize, ZeroMeanUnitVariancePerFeature) {
  auto z = random_matrix(5, 300, 7);
  z.row(2).array() += 40.0;
  z.row(3) *= 9.0;
  BatchNormCache cache;
  const auto y = batch_normalize(z, 1e-5, &cache);
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const double mean = y.row(i).mean();
    const double var = (y.row(i).array() - mean).square().mean();
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(var, 1.0, 1e-3);
  }
  EXPECT_NEAR(cache.mean(2), z.row(2).mean(), 1e-12);
}

TEST(DropoutMask, RateAndScale) {
  Rng rng(11);
  const auto m = dropout_mask(100, 1000, 0.3, rng);
  std::size_t zeros = 0;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double v = m.data()[i];
    if (v == 0.0) {
      ++zeros;
    } else {
      EXPECT_DOUBLE_EQ(v, 1.0 / 0.7);
    }
  }
  EXPECT_NEAR(static_cast<double>(zeros) / static_cast<double>(m.size()), 0.3, 0.02);
}

// --- gradients ---------------------------------------------------------------------

TEST(GradientCheck, TinyModelPasses) {
  const auto ae = Autoencoder::create(small_config(), 5);
  const auto x = random_matrix(8, 4, 6);
  GradientCheckOptions opts;
  opts.samples_per_tensor = 1000;  // every coordinate
  const auto report = gradient_check(ae, x, opts);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
  EXPECT_LT(report.max_rel_error, 1e-4);
  EXPECT_GT(report.checked, 100u);
}

TEST(GradientCheck, CorruptedGradientFails) {
  const auto ae = Autoencoder::create(small_config(), 5);
  const auto x = random_matrix(8, 4, 6);
  auto grads = analytic_gradients(ae, x);
  grads[1].weight(0, 0) += 0.05 + std::abs(grads[1].weight(0, 0));
  GradientCheckOptions opts;
  opts.samples_per_tensor = 1000;
  const auto report = check_gradients(ae, x, grads, opts);
  EXPECT_FALSE(report.passed);
  ASSERT_FALSE(report.worst.empty());
  EXPECT_EQ(report.worst.front().layer, 1u);
  EXPECT_EQ(report.worst.front().tensor, "weight");
}

TEST(GradientCheck, PlainReluSlope) {
  auto cfg = small_config();
  cfg.leaky_slope = 0.0;
  const auto ae = Autoencoder::create(cfg, 8);
  const auto report = gradient_check(ae, random_matrix(8, 4, 2));
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(GradientCheck, MismatchedGradientListRejected) {
  const auto ae = Autoencoder::create(small_config(), 5);
  Gradients empty;
  EXPECT_THROW(check_gradients(ae, random_matrix(8, 4, 6), empty), ShapeError);
}

// --- training ----------------------------------------------------------------------

TEST(Training, LossDecreasesAndLogFilled) {
  TrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 32;
  tc.learning_rate = 1e-2;
  TrainLog log;
  const auto ae = train_autoencoder(random_matrix(300, 8, 1), small_config(), tc, &log);
  ASSERT_EQ(log.train_mse.size(), 30u);
  EXPECT_LT(log.train_mse.back(), log.train_mse.front());
  EXPECT_EQ(log.val_mse.size(), 30u);
  EXPECT_GE(log.best_epoch, 1u);
  EXPECT_EQ(ae.mode(), Mode::kInfer);
}

TEST(Training, DeterministicForSeed) {
  const auto a = to_tensors(trained_small(3));
  const auto b = to_tensors(trained_small(3));
  const auto c = to_tensors(trained_small(4));
  ASSERT_EQ(a.size(), b.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].data, b[i].data) << a[i].name;
    differs |= a[i].data != c[i].data;
  }
  EXPECT_TRUE(differs);
}

TEST(Training, ParametersAreFloat32) {
  const auto ae = trained_small();
  for (const auto& l : ae.layers()) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) {
      const double v = l.weight.data()[i];
      EXPECT_EQ(v, static_cast<double>(static_cast<float>(v)));
    }
  }
}

TEST(Training, InputErrors) {
  TrainConfig tc;
  tc.batch_size = 64;
  EXPECT_THROW(train_autoencoder(random_matrix(20, 8, 1), small_config(), tc), DataError);
  EXPECT_THROW(train_autoencoder(random_matrix(200, 7, 1), small_config(), tc), ShapeError);
  auto bad = random_matrix(200, 8, 1);
  bad(3, 3) = NAN;
  EXPECT_THROW(train_autoencoder(bad, small_config(), tc), NumericError);
}

// --- persistence -------------------------------------------------------------------

TEST(Tensors, RoundTripBitExact) {
  const auto ae = trained_small();
  const auto tensors = to_tensors(ae);
  const auto back = from_tensors(ae.config(), tensors);
  EXPECT_EQ(back.mode(), Mode::kInfer);
  const auto x = random_matrix(8, 10, 12);
  EXPECT_EQ(ae.encode_batch(x), back.encode_batch(x));
  EXPECT_EQ(ae.reconstruct_batch(x), back.reconstruct_batch(x));
}

TEST(Tensors, MalformedRejected) {
  const auto ae = trained_small();
  auto tensors = to_tensors(ae);
  auto missing = tensors;
  missing.pop_back();
  EXPECT_THROW(from_tensors(ae.config(), missing), ShapeError);
  auto renamed = tensors;
  renamed[0].name = "bogus";
  EXPECT_THROW(from_tensors(ae.config(), renamed), ShapeError);
  auto truncated = tensors;
  truncated[0].data.pop_back();
  EXPECT_THROW(from_tensors(ae.config(), truncated), ShapeError);
}

}  // namespace
}  // namespace locqor::reducer
