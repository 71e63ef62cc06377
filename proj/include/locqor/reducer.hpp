// SPDX-License-Identifier: Apache-2.0
//
// Encoder-decoder network that compresses concatenated line+module
// embeddings to a d-dimensional latent, trained on reconstruction MSE.
//
// Every hidden layer is FC -> BatchNorm -> LeakyReLU -> Dropout (the latent
// layer has no dropout); the output layer is a plain FC so reconstructions
// are unbounded. Matrices hold one sample per column.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "locqor/util.hpp"

namespace locqor::reducer {

struct AutoencoderConfig {
  std::size_t input_dim = 0;
  std::size_t latent_dim = 128;
  /// Encoder hidden widths; the decoder mirrors them.
  std::vector<std::size_t> hidden = {4096, 1024};
  double leaky_slope = 0.01;
  double dropout = 0.3;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
  bool batch_norm = false;
  Eigen::VectorXd gamma, beta;
  Eigen::VectorXd running_mean, running_var;
  bool leaky = false;
  double dropout = 0.0;

  std::size_t in_dim() const { return static_cast<std::size_t>(weight.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(weight.rows()); }
};

enum class Mode { kTrain, kInfer };

struct Reconstruction {
  std::vector<double> output;
  double mse = 0.0;
};

class Autoencoder {
 public:
  Autoencoder() = default;

  /// Xavier-uniform weights, zero biases, gamma = 1, beta = 0, running
  /// mean 0 / variance 1. Starts in train mode.
  static Autoencoder create(const AutoencoderConfig& config, std::uint64_t seed);

  const AutoencoderConfig& config() const { return config_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::size_t encoder_depth() const { return config_.hidden.size() + 1; }
  std::size_t input_dim() const { return config_.input_dim; }
  std::size_t latent_dim() const { return config_.latent_dim; }

  Mode mode() const { return mode_; }
  void set_mode(Mode m) { mode_ = m; }

  /// Inference-mode encoder over a batch (input_dim x B) -> latent_dim x B.
  Eigen::MatrixXd encode_batch(const Eigen::MatrixXd& x) const;
  /// Inference-mode full pass (input_dim x B) -> input_dim x B.
  Eigen::MatrixXd reconstruct_batch(const Eigen::MatrixXd& x) const;

  std::vector<double> encode(std::span<const double> x) const;
  Reconstruction reconstruct(std::span<const double> x) const;

  /// Rounds every parameter and running statistic to float32.
  void round_to_storage();

  /// Checks layer shapes chain correctly and running variances are positive.
  void validate() const;

 private:
  void require_infer(std::size_t width) const;

  AutoencoderConfig config_;
  std::vector<DenseLayer> layers_;
  Mode mode_ = Mode::kTrain;
};

// --- layer primitives (exposed for tests) ----------------------------------------

struct BatchNormCache {
  Eigen::VectorXd mean, var, inv_std;
  Eigen::MatrixXd xhat;
};

/// Batch-statistics normalization of z (features x batch), before gamma/beta.
Eigen::MatrixXd batch_normalize(const Eigen::MatrixXd& z, double eps, BatchNormCache* cache);

/// Inverted dropout: zeroes each entry with probability `rate` and scales
/// survivors by 1/(1-rate). Returns the applied multiplier mask.
Eigen::MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng);

// --- gradients ------------------------------------------------------------------------

struct LayerGradients {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias, gamma, beta;
};

using Gradients = std::vector<LayerGradients>;

struct ForwardOptions {
  bool batch_stats = true;       // BatchNorm uses batch statistics
  bool update_running = false;   // and updates the running averages
  bool dropout = false;
  Rng* rng = nullptr;            // required when dropout is on
};

/// Mean squared reconstruction error over all entries of the batch.
double batch_loss(Autoencoder& model, const Eigen::MatrixXd& x, const ForwardOptions& opts);

/// Forward + backward pass; returns the loss and fills `grads`.
double loss_and_gradients(Autoencoder& model, const Eigen::MatrixXd& x, const ForwardOptions& opts,
                          Gradients& grads);

// --- training -------------------------------------------------------------------------

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 128;
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double validation_fraction = 0.1;
  /// After the last epoch, re-estimate BatchNorm running statistics from the
  /// training rows with dropout off, so inference sees the statistics of the
  /// network it actually runs.
  bool recalibrate_batch_norm = true;
  std::uint64_t seed = 1;
};

struct TrainLog {
  std::vector<double> train_mse;
  std::vector<double> val_mse;
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  double learning_rate = 0.0;
  double weight_decay = 0.0;
  std::size_t batch_size = 0;
  std::size_t best_epoch = 0;  // 1-based; 0 when no validation rows
  double best_val_mse = 0.0;
};

/// Trains on the rows of `data` (N x input_dim, one sample per row). The
/// returned model is in infer mode with float32-rounded parameters.
Autoencoder train_autoencoder(const Eigen::MatrixXd& data, const AutoencoderConfig& model_config,
                              const TrainConfig& train_config, TrainLog* log = nullptr);

// --- gradient check ----------------------------------------------------------------------

struct GradientCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  std::size_t samples_per_tensor = 200;
  std::uint64_t seed = 0;
  /// Relative error denominator floor, so vanishing gradients compare by
  /// absolute error.
  double denominator_floor = 1e-6;
};

struct CoordinateError {
  std::size_t layer = 0;
  std::string tensor;  // "weight" | "bias" | "gamma" | "beta"
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradientCheckReport {
  bool passed = false;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::vector<CoordinateError> worst;  // largest errors first
};

/// Gradients under the check's conditions: BatchNorm batch statistics, no
/// dropout, no running-stat updates.
Gradients analytic_gradients(const Autoencoder& model, const Eigen::MatrixXd& x);

/// Compares `analytic` against central finite differences of batch_loss.
GradientCheckReport check_gradients(const Autoencoder& model, const Eigen::MatrixXd& x,
                                    const Gradients& analytic, const GradientCheckOptions& opts = {});

GradientCheckReport gradient_check(const Autoencoder& model, const Eigen::MatrixXd& x,
                                   const GradientCheckOptions& opts = {});

// --- persistence ---------------------------------------------------------------------------

struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> data;  // row-major
};

std::vector<Tensor> to_tensors(const Autoencoder& model);
/// Inverse of to_tensors; the result is in infer mode.
Autoencoder from_tensors(const AutoencoderConfig& config, const std::vector<Tensor>& tensors);

}  // namespace locqor::reducer
