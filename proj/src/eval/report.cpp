// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <map>
#include <sstream>

#include "locqor/error.hpp"
#include "locqor/eval.hpp"

namespace locqor::eval {

namespace {

bool truth_of(const corpus::Example& ex, Task task) {
  return task == Task::kCongestion ? ex.congestion : ex.timing;
}

std::vector<const corpus::Example*> test_examples(const corpus::Dataset& dataset) {
  std::vector<const corpus::Example*> out;
  for (const auto& ex : dataset.examples) {
    if (ex.split == corpus::Split::kTest) out.push_back(&ex);
  }
  return out;
}

RegressionMetrics regression(const std::vector<double>& y, const std::vector<double>& y_hat) {
  RegressionMetrics m;
  m.n = y.size();
  if (y.size() >= 2) {
    try {
      m.r2 = r2(y, y_hat);
    } catch (const DataError&) {
      // constant truth: R² undefined for this group
    }
  }
  if (!y.empty()) m.mape = mape(y, y_hat);
  return m;
}

struct Accumulator {
  std::vector<std::uint8_t> truth, pred;
  std::vector<double> y, y_hat;
  std::vector<double> my, my_hat;
};

GroupMetrics finish(const std::string& name, const Accumulator& a, Task task) {
  GroupMetrics g;
  g.name = name;
  if (is_classification(task)) {
    g.counts = confusion(a.truth, a.pred);
    g.prf = precision_recall_f1(*g.counts);
  } else {
    g.line = regression(a.y, a.y_hat);
    g.module = regression(a.my, a.my_hat);
  }
  return g;
}

nlohmann::json opt(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json group_json(const GroupMetrics& g) {
  nlohmann::json j = {{"name", g.name}};
  if (g.counts) {
    j["counts"] = {{"tp", g.counts->tp}, {"fp", g.counts->fp}, {"tn", g.counts->tn},
                   {"fn", g.counts->fn}};
    j["precision"] = g.prf->precision;
    j["recall"] = g.prf->recall;
    j["f1"] = g.prf->f1;
  }
  auto reg = [](const RegressionMetrics& m) {
    return nlohmann::json{{"n", m.n}, {"r2", opt(m.r2)}, {"mape", opt(m.mape)}};
  };
  if (g.line) j["line"] = reg(*g.line);
  if (g.module) j["module"] = reg(*g.module);
  return j;
}

std::string cell(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

}  // namespace

std::vector<ModuleWnsPair> module_wns_pairs(std::span<const double> predictions,
                                            const corpus::Dataset& dataset) {
  const auto tests = test_examples(dataset);
  if (predictions.size() != tests.size()) {
    throw ShapeError("module_wns_pairs: " + std::to_string(predictions.size()) +
                     " predictions for " + std::to_string(tests.size()) + " test examples");
  }
  std::map<std::pair<std::string, std::string>, std::pair<std::vector<double>, std::vector<double>>>
      groups;
  for (std::size_t i = 0; i < tests.size(); ++i) {
    const auto& ex = *tests[i];
    if (!ex.wns_ns) continue;
    auto& [pred, truth] = groups[{ex.line.design_id, ex.line.module_id}];
    pred.push_back(predictions[i]);
    truth.push_back(*ex.wns_ns);
  }
  std::vector<ModuleWnsPair> out;
  for (const auto& [key, v] : groups) {
    ModuleWnsPair p{key.first, key.second, module_wns(v.first), module_wns(v.second)};
    if (auto it = dataset.module_wns.find(key); it != dataset.module_wns.end()) {
      p.truth = it->second;
    }
    out.push_back(std::move(p));
  }
  return out;
}

MetricsReport evaluate_run(std::span<const double> predictions, const corpus::Dataset& dataset,
                           Task task, double threshold, const nlohmann::json& config) {
  const auto tests = test_examples(dataset);
  if (predictions.size() != tests.size()) {
    throw ShapeError("evaluate_run: " + std::to_string(predictions.size()) +
                     " predictions for " + std::to_string(tests.size()) + " test examples");
  }
  MetricsReport report;
  report.task = task;
  report.threshold = threshold;
  report.config = config;

  Accumulator all;
  std::map<std::string, Accumulator> designs;
  for (std::size_t i = 0; i < tests.size(); ++i) {
    const auto& ex = *tests[i];
    auto& d = designs[ex.line.design_id];
    if (is_classification(task)) {
      for (auto* a : {&all, &d}) {
        a->truth.push_back(truth_of(ex, task));
        a->pred.push_back(predictions[i] >= threshold);
      }
    } else if (ex.wns_ns) {
      for (auto* a : {&all, &d}) {
        a->y.push_back(*ex.wns_ns);
        a->y_hat.push_back(predictions[i]);
      }
    }
  }
  if (task == Task::kWns) {
    for (const auto& p : module_wns_pairs(predictions, dataset)) {
      for (auto* a : {&all, &designs[p.design_id]}) {
        a->my.push_back(p.truth);
        a->my_hat.push_back(p.predicted);
      }
    }
  }
  report.overall = finish("overall", all, task);
  for (const auto& [name, acc] : designs) report.per_design.push_back(finish(name, acc, task));
  return report;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& g : per_design) per.push_back(group_json(g));
  return {{"schema", "report_v1"},
          {"task", to_string(task)},
          {"threshold", threshold},
          {"overall", group_json(overall)},
          {"per_design", per},
          {"config", config}};
}

std::string MetricsReport::to_text() const {
  std::vector<std::vector<std::string>> rows;
  if (is_classification(task)) {
    rows.push_back({"group", "tp", "fp", "tn", "fn", "precision", "recall", "f1"});
  } else {
    rows.push_back({"group", "lines", "line_r2", "line_mape", "modules", "module_r2", "module_mape"});
  }
  auto add = [&](const GroupMetrics& g) {
    if (g.counts) {
      rows.push_back({g.name, std::to_string(g.counts->tp), std::to_string(g.counts->fp),
                      std::to_string(g.counts->tn), std::to_string(g.counts->fn),
                      cell(g.prf->precision), cell(g.prf->recall), cell(g.prf->f1)});
    } else {
      rows.push_back({g.name, std::to_string(g.line->n), cell(g.line->r2), cell(g.line->mape),
                      std::to_string(g.module->n), cell(g.module->r2), cell(g.module->mape)});
    }
  };
  for (const auto& g : per_design) add(g);
  add(overall);

  std::vector<std::size_t> width(rows[0].size(), 0);
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::ostringstream out;
  out << "task: " << to_string(task);
  if (is_classification(task)) out << "  threshold: " << threshold;
  out << '\n';
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c == 0) {
        out << r[c] << std::string(width[c] - r[c].size(), ' ');
      } else {
        out << "  " << std::string(width[c] - r[c].size(), ' ') << r[c];
      }
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace locqor::eval
