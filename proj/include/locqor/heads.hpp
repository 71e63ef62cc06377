// SPDX-License-Identifier: Apache-2.0
//
// Prediction heads over feature rows: gradient-boosted trees (binary or
// regression) and a single sigmoid neuron.
#pragma once

#include <cstdint>
#include <json.hpp>
#include <span>
#include <vector>

namespace locqor::heads {

/// Non-owning row-major N x W view.
struct MatrixView {
  std::span<const double> data;
  std::size_t rows = 0;
  std::size_t cols = 0;

  MatrixView() = default;
  MatrixView(std::span<const double> d, std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return data.subspan(r * cols, cols); }
};

/// (#negatives) / (#positives). Throws DataError unless both classes occur.
double auto_pos_weight(std::span<const double> y);

enum class GbdtTask { kBinary, kRegression };
enum class Growth { kDepthLimited, kLeafLimited };

struct GbdtConfig {
  GbdtTask task = GbdtTask::kBinary;
  int n_estimators = 500;
  double learning_rate = 0.05;
  Growth growth = Growth::kDepthLimited;
  int max_depth = 30;    // depth-limited growth; ignored when <= 0 in leaf-limited mode
  int num_leaves = 100;  // leaf-limited growth
  double feature_fraction = 1.0;
  bool pos_weight_auto = true;  // binary only; otherwise pos_weight is used
  double pos_weight = 1.0;
  std::size_t min_samples_leaf = 1;
  std::uint64_t seed = 0;

  static GbdtConfig depth_limited(GbdtTask task);
  /// num_leaves=100 with feature_fraction=0.8.
  static GbdtConfig leaf_limited(GbdtTask task);
  void validate() const;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double leaf_value = 0.0;  // unscaled; prediction adds learning_rate * leaf_value
  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  /// Leaf value reached by `f`; rows with f[feature] <= threshold go left.
  double leaf(std::span<const double> f) const;
  std::size_t depth() const;
  std::size_t leaf_count() const;
};

struct GbdtModel {
  GbdtConfig config;
  double base_score = 0.0;  // log-odds (binary) or mean (regression)
  double pos_weight = 1.0;  // weight actually applied to positives
  std::size_t feature_width = 0;
  std::vector<Tree> trees;

  double raw_score(std::span<const double> f) const;
  void validate() const;
};

/// Training loss after 0, 1, ..., T trees: MSE (regression) or
/// weight-normalized logistic loss (binary).
struct GbdtTrainLog {
  std::vector<double> loss;
};

GbdtModel train_gbdt(const MatrixView& F, std::span<const double> y, const GbdtConfig& cfg,
                     GbdtTrainLog* log = nullptr);

/// Probability for binary models, value for regression models.
double predict_gbdt(const GbdtModel& model, std::span<const double> f);

nlohmann::json gbdt_config_to_json(const GbdtConfig& cfg);
/// Missing keys keep their defaults; unknown enum values throw DataError.
GbdtConfig gbdt_config_from_json(const nlohmann::json& j);
nlohmann::json gbdt_to_json(const GbdtModel& model);
GbdtModel gbdt_from_json(const nlohmann::json& j);

struct LogisticConfig {
  double lr = 1e-4;
  int epochs = 100;
  std::size_t batch_size = 128;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool pos_weight_auto = false;
  double pos_weight = 1.0;
  std::uint64_t seed = 0;
};

struct LogisticModel {
  std::vector<double> weights;
  double bias = 0.0;
  int trained_epochs = 0;
  double lr = 1e-4;

  double logit(std::span<const double> f) const;
  double predict(std::span<const double> f) const;
  void validate() const;
};

/// Mean (positive-weighted) binary cross-entropy.
double bce_loss(const LogisticModel& model, const MatrixView& F, std::span<const double> y,
                double pos_weight = 1.0);
/// Gradient of bce_loss with respect to weights (grad_w) and bias (return value).
double bce_gradient(const LogisticModel& model, const MatrixView& F, std::span<const double> y,
                    std::vector<double>& grad_w, double pos_weight = 1.0);

LogisticModel train_logistic(const MatrixView& F, std::span<const double> y,
                             const LogisticConfig& cfg, std::vector<double>* epoch_loss = nullptr);

nlohmann::json logistic_config_to_json(const LogisticConfig& cfg);
LogisticConfig logistic_config_from_json(const nlohmann::json& j);
nlohmann::json logistic_to_json(const LogisticModel& model);
LogisticModel logistic_from_json(const nlohmann::json& j);

inline bool classify(double score, double threshold = 0.5) { return score >= threshold; }

double sigmoid(double x);

}  // namespace locqor::heads
