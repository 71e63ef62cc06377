// SPDX-License-Identifier: Apache-2.0
//
// Classification and regression metrics, module-level WNS aggregation and
// the versioned evaluation report.
#pragma once

#include <cstdint>
#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "locqor/corpus.hpp"

namespace locqor::eval {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  std::size_t total() const { return tp + fp + tn + fn; }
};

/// Entries are 0 (negative) or nonzero (positive).
ConfusionCounts confusion(std::span<const std::uint8_t> truth,
                          std::span<const std::uint8_t> predicted);

struct PrecisionRecallF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Any 0/0 ratio is reported as 0.
PrecisionRecallF1 precision_recall_f1(const ConfusionCounts& c);

/// 1 - SSE/SST. Throws DataError on fewer than 2 pairs or constant y.
double r2(std::span<const double> y, std::span<const double> y_hat);

/// Mean of |y - y_hat| / |y|. Throws DataError naming the first index with
/// |y| <= eps.
double mape(std::span<const double> y, std::span<const double> y_hat, double eps = 1e-9);

/// Worst (smallest) slack. Throws DataError on an empty list.
double module_wns(std::span<const double> line_wns);

enum class Task { kCongestion, kTiming, kWns };
std::string to_string(Task task);
/// Accepts "congestion", "timing" or "wns"; throws ConfigError otherwise.
Task parse_task(const std::string& name);
inline bool is_classification(Task t) { return t != Task::kWns; }

struct RegressionMetrics {
  std::size_t n = 0;
  std::optional<double> r2;    // absent when undefined (n < 2 or constant truth)
  std::optional<double> mape;  // absent when n == 0
};

struct GroupMetrics {
  std::string name;  // "overall" or a design id
  std::optional<ConfusionCounts> counts;
  std::optional<PrecisionRecallF1> prf;
  std::optional<RegressionMetrics> line;
  std::optional<RegressionMetrics> module;
};

struct MetricsReport {
  Task task = Task::kCongestion;
  double threshold = 0.5;
  GroupMetrics overall;
  std::vector<GroupMetrics> per_design;
  nlohmann::json config = nlohmann::json::object();

  /// Schema "report_v1".
  nlohmann::json to_json() const;
  /// Aligned plain-text table, one row per group.
  std::string to_text() const;
};

/// Per-module (design, module, predicted, true) WNS over the labeled test
/// lines. Truth is the module's sentinel row when present, otherwise the min
/// over its labeled test lines.
struct ModuleWnsPair {
  std::string design_id;
  std::string module_id;
  double predicted = 0.0;
  double truth = 0.0;
};
std::vector<ModuleWnsPair> module_wns_pairs(std::span<const double> predictions,
                                            const corpus::Dataset& dataset);

/// `predictions` holds one score per test example in dataset order:
/// probabilities for classification tasks, slack in ns for the WNS task.
MetricsReport evaluate_run(std::span<const double> predictions, const corpus::Dataset& dataset,
                           Task task, double threshold = 0.5,
                           const nlohmann::json& config = nlohmann::json::object());

}  // namespace locqor::eval
