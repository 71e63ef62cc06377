// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <string>

#include "locqor/error.hpp"
#include "locqor/eval.hpp"

namespace locqor::eval {

ConfusionCounts confusion(std::span<const std::uint8_t> truth,
                          std::span<const std::uint8_t> predicted) {
  if (truth.size() != predicted.size()) throw ShapeError("confusion: length mismatch");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i]) (predicted[i] ? c.tp : c.fn)++;
    else (predicted[i] ? c.fp : c.tn)++;
  }
  return c;
}

namespace {
double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }
}  // namespace

PrecisionRecallF1 precision_recall_f1(const ConfusionCounts& c) {
  PrecisionRecallF1 m;
  const auto tp = static_cast<double>(c.tp);
  m.precision = ratio(tp, tp + static_cast<double>(c.fp));
  m.recall = ratio(tp, tp + static_cast<double>(c.fn));
  m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
  return m;
}

double r2(std::span<const double> y, std::span<const double> y_hat) {
  if (y.size() != y_hat.size()) throw ShapeError("r2: length mismatch");
  if (y.size() < 2) throw DataError("undefined R²: need at least 2 values");
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double sse = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sse += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
    sst += (y[i] - mean) * (y[i] - mean);
  }
  if (sst == 0.0) throw DataError("undefined R²: constant truth");
  return 1.0 - sse / sst;
}

double mape(std::span<const double> y, std::span<const double> y_hat, double eps) {
  if (y.size() != y_hat.size()) throw ShapeError("mape: length mismatch");
  if (y.empty()) throw DataError("mape: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (std::abs(y[i]) <= eps) {
      throw DataError("mape: |y| <= eps at index " + std::to_string(i));
    }
    total += std::abs(y[i] - y_hat[i]) / std::abs(y[i]);
  }
  return total / static_cast<double>(y.size());
}

double module_wns(std::span<const double> line_wns) {
  if (line_wns.empty()) throw DataError("module_wns: empty line list");
  return *std::min_element(line_wns.begin(), line_wns.end());
}

std::string to_string(Task task) {
  switch (task) {
    case Task::kCongestion: return "congestion";
    case Task::kTiming: return "timing";
    case Task::kWns: return "wns";
  }
  return "?";
}

Task parse_task(const std::string& name) {
  if (name == "congestion") return Task::kCongestion;
  if (name == "timing") return Task::kTiming;
  if (name == "wns") return Task::kWns;
  throw ConfigError("unknown task '" + name + "' (expected congestion, timing or wns)");
}

}  // namespace locqor::eval
