// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <string>

#include "locqor/error.hpp"
#include "locqor/heads.hpp"
#include "locqor/util.hpp"

namespace locqor::heads {

MatrixView::MatrixView(std::span<const double> d, std::size_t r, std::size_t c)
    : data(d), rows(r), cols(c) {
  if (d.size() != r * c) {
    throw ShapeError("matrix view: " + std::to_string(d.size()) + " values for " +
                     std::to_string(r) + "x" + std::to_string(c));
  }
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double auto_pos_weight(std::span<const double> y) {
  std::size_t pos = 0, neg = 0;
  for (double v : y) {
    if (v == 1.0) ++pos;
    else if (v == 0.0) ++neg;
    else throw DataError("auto_pos_weight: labels must be 0 or 1");
  }
  if (pos == 0 || neg == 0) throw DataError("auto_pos_weight: both classes must be present");
  return static_cast<double>(neg) / static_cast<double>(pos);
}

GbdtConfig GbdtConfig::depth_limited(GbdtTask task) {
  GbdtConfig c;
  c.task = task;
  return c;
}

GbdtConfig GbdtConfig::leaf_limited(GbdtTask task) {
  GbdtConfig c;
  c.task = task;
  c.growth = Growth::kLeafLimited;
  c.max_depth = -1;
  c.feature_fraction = 0.8;
  return c;
}

void GbdtConfig::validate() const {
  if (n_estimators < 1) throw ConfigError("gbdt: n_estimators must be >= 1");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
    throw ConfigError("gbdt: learning_rate must be in (0, 1]");
  }
  if (!(feature_fraction > 0.0 && feature_fraction <= 1.0)) {
    throw ConfigError("gbdt: feature_fraction must be in (0, 1]");
  }
  if (growth == Growth::kDepthLimited && max_depth < 1) {
    throw ConfigError("gbdt: max_depth must be >= 1");
  }
  if (growth == Growth::kLeafLimited && num_leaves < 2) {
    throw ConfigError("gbdt: num_leaves must be >= 2");
  }
  if (!pos_weight_auto && !(pos_weight >= 1.0 && std::isfinite(pos_weight))) {
    throw ConfigError("gbdt: pos_weight must be >= 1");
  }
  if (min_samples_leaf < 1) throw ConfigError("gbdt: min_samples_leaf must be >= 1");
}

double Tree::leaf(std::span<const double> f) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(f[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left
                                                                                          : n.right);
  }
  return nodes[i].leaf_value;
}

std::size_t Tree::depth() const {
  std::vector<std::size_t> d(nodes.size(), 0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (!nodes[i].is_leaf()) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return best;
}

std::size_t Tree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

double GbdtModel::raw_score(std::span<const double> f) const {
  if (f.size() != feature_width) {
    throw ShapeError("predict_gbdt: expected " + std::to_string(feature_width) +
                     " features, got " + std::to_string(f.size()));
  }
  double s = base_score;
  for (const auto& t : trees) s += config.learning_rate * t.leaf(f);
  return s;
}

void GbdtModel::validate() const {
  config.validate();
  if (!std::isfinite(base_score)) throw DataError("gbdt: non-finite base_score");
  if (trees.size() > static_cast<std::size_t>(config.n_estimators)) {
    throw DataError("gbdt: more trees than n_estimators");
  }
  for (std::size_t t = 0; t < trees.size(); ++t) {
    const auto& nodes = trees[t].nodes;
    if (nodes.empty()) throw DataError("gbdt: tree " + std::to_string(t) + " is empty");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto& n = nodes[i];
      if (n.is_leaf()) {
        if (!std::isfinite(n.leaf_value)) throw DataError("gbdt: non-finite leaf value");
        continue;
      }
      const auto lim = static_cast<int>(nodes.size());
      if (static_cast<std::size_t>(n.feature) >= feature_width || n.left <= static_cast<int>(i) ||
          n.right <= static_cast<int>(i) || n.left >= lim || n.right >= lim ||
          !std::isfinite(n.threshold)) {
        throw DataError("gbdt: malformed node " + std::to_string(i) + " in tree " +
                        std::to_string(t));
      }
    }
  }
}

double predict_gbdt(const GbdtModel& model, std::span<const double> f) {
  const double s = model.raw_score(f);
  return model.config.task == GbdtTask::kBinary ? sigmoid(s) : s;
}

namespace {

constexpr double kHessianFloor = 1e-12;

struct SplitChoice {
  bool valid = false;
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

struct NodeWork {
  int node = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  int depth = 0;
  double g = 0.0;
  double h = 0.0;
  SplitChoice split;
};

// Exact greedy tree growth over per-feature presorted row lists. Every
// node owns the same [begin, end) range in each active feature's list.
class TreeBuilder {
 public:
  TreeBuilder(const std::vector<std::vector<double>>& cols,
              const std::vector<std::vector<std::uint32_t>>& sorted, const GbdtConfig& cfg)
      : cols_(cols), sorted_(sorted), cfg_(cfg), idx_(cols.size()) {
    const std::size_t n = cols.empty() ? 0 : cols[0].size();
    tmp_.resize(n);
    left_.resize(n);
  }

  Tree build(const std::vector<double>& g, const std::vector<double>& h,
             const std::vector<int>& features) {
    g_ = &g;
    h_ = &h;
    features_ = &features;
    for (int f : features) idx_[static_cast<std::size_t>(f)] = sorted_[static_cast<std::size_t>(f)];

    Tree tree;
    tree.nodes.emplace_back();
    NodeWork root;
    root.end = g.size();
    for (std::size_t i = 0; i < g.size(); ++i) {
      root.g += g[i];
      root.h += h[i];
    }
    root.split = find_split(root);

    if (cfg_.growth == Growth::kDepthLimited) {
      std::vector<NodeWork> stack{root};
      // FIFO order keeps node numbering breadth-first.
      for (std::size_t q = 0; q < stack.size(); ++q) {
        NodeWork w = stack[q];
        if (w.depth < cfg_.max_depth && w.split.valid) {
          auto [l, r] = apply(tree, w);
          stack.push_back(l);
          stack.push_back(r);
        } else {
          make_leaf(tree, w);
        }
      }
    } else {
      auto worse = [](const NodeWork& a, const NodeWork& b) {
        if (a.split.gain != b.split.gain) return a.split.gain < b.split.gain;
        return a.node > b.node;
      };
      std::priority_queue<NodeWork, std::vector<NodeWork>, decltype(worse)> open(worse);
      std::vector<NodeWork> done;
      open.push(root);
      std::size_t leaves = 1;
      while (!open.empty()) {
        NodeWork w = open.top();
        open.pop();
        const bool depth_ok = cfg_.max_depth <= 0 || w.depth < cfg_.max_depth;
        if (!w.split.valid || !depth_ok ||
            leaves >= static_cast<std::size_t>(cfg_.num_leaves)) {
          done.push_back(w);
          continue;
        }
        auto [l, r] = apply(tree, w);
        ++leaves;
        open.push(l);
        open.push(r);
      }
      for (const auto& w : done) make_leaf(tree, w);
    }
    return tree;
  }

 private:
  // Any active feature's list holds the node's rows in its range.
  const std::vector<std::uint32_t>& node_rows() const {
    return idx_[static_cast<std::size_t>(features_->front())];
  }

  SplitChoice find_split(const NodeWork& w) const {
    SplitChoice best;
    const std::size_t n = w.end - w.begin;
    const std::size_t msl = cfg_.min_samples_leaf;
    if (n < 2 * msl || w.h <= kHessianFloor) return best;
    const double parent = w.g * w.g / w.h;
    const double min_gain = 1e-12 * std::max(1.0, std::abs(parent));
    const auto& g = *g_;
    const auto& h = *h_;
    for (int f : *features_) {
      const auto& list = idx_[static_cast<std::size_t>(f)];
      const auto& x = cols_[static_cast<std::size_t>(f)];
      double gl = 0.0, hl = 0.0;
      for (std::size_t i = w.begin; i + 1 < w.end; ++i) {
        const std::uint32_t r = list[i];
        gl += g[r];
        hl += h[r];
        const std::size_t nl = i - w.begin + 1;
        const double a = x[r];
        const double b = x[list[i + 1]];
        if (!(a < b) || nl < msl || n - nl < msl) continue;
        const double hr = w.h - hl;
        if (hl <= kHessianFloor || hr <= kHessianFloor) continue;
        const double gr = w.g - gl;
        const double gain = gl * gl / hl + gr * gr / hr - parent;
        if (gain > min_gain && gain > best.gain) {
          double mid = a + (b - a) / 2.0;
          if (!(mid < b)) mid = a;
          best = {true, f, mid, gain};
        }
      }
    }
    return best;
  }

  std::pair<NodeWork, NodeWork> apply(Tree& tree, const NodeWork& w) {
    const auto f = static_cast<std::size_t>(w.split.feature);
    const auto& x = cols_[f];
    const auto& rows = node_rows();
    NodeWork l, r;
    for (std::size_t i = w.begin; i < w.end; ++i) {
      const std::uint32_t row = rows[i];
      left_[row] = x[row] <= w.split.threshold ? 1 : 0;
      if (left_[row]) {
        l.g += (*g_)[row];
        l.h += (*h_)[row];
      } else {
        r.g += (*g_)[row];
        r.h += (*h_)[row];
      }
    }
    std::size_t nl = 0;
    for (int ff : *features_) {
      auto& list = idx_[static_cast<std::size_t>(ff)];
      std::size_t out = w.begin, nr = 0;
      for (std::size_t i = w.begin; i < w.end; ++i) {
        const std::uint32_t row = list[i];
        if (left_[row]) list[out++] = row;
        else tmp_[nr++] = row;
      }
      std::copy(tmp_.begin(), tmp_.begin() + static_cast<std::ptrdiff_t>(nr),
                list.begin() + static_cast<std::ptrdiff_t>(out));
      nl = out - w.begin;
    }

    const int li = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    auto& node = tree.nodes[static_cast<std::size_t>(w.node)];
    node.feature = w.split.feature;
    node.threshold = w.split.threshold;
    node.left = li;
    node.right = li + 1;

    l.node = li;
    l.begin = w.begin;
    l.end = w.begin + nl;
    l.depth = w.depth + 1;
    r.node = li + 1;
    r.begin = w.begin + nl;
    r.end = w.end;
    r.depth = w.depth + 1;
    l.split = find_split(l);
    r.split = find_split(r);
    return {l, r};
  }

  static void make_leaf(Tree& tree, const NodeWork& w) {
    tree.nodes[static_cast<std::size_t>(w.node)].leaf_value =
        w.h > kHessianFloor ? w.g / w.h : 0.0;
  }

  const std::vector<std::vector<double>>& cols_;
  const std::vector<std::vector<std::uint32_t>>& sorted_;
  const GbdtConfig& cfg_;
  std::vector<std::vector<std::uint32_t>> idx_;
  std::vector<std::uint32_t> tmp_;
  std::vector<std::uint8_t> left_;
  const std::vector<double>* g_ = nullptr;
  const std::vector<double>* h_ = nullptr;
  const std::vector<int>* features_ = nullptr;
};

double log1p_exp(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double training_loss(const GbdtConfig& cfg, std::span<const double> y,
                     const std::vector<double>& w, const std::vector<double>& score) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (cfg.task == GbdtTask::kRegression) {
      const double e = y[i] - score[i];
      num += e * e;
      den += 1.0;
    } else {
      // -y log p - (1-y) log(1-p) with p = sigmoid(s)
      const double l = y[i] == 1.0 ? log1p_exp(-score[i]) : log1p_exp(score[i]);
      num += w[i] * l;
      den += w[i];
    }
  }
  return num / den;
}

}  // namespace

GbdtModel train_gbdt(const MatrixView& F, std::span<const double> y, const GbdtConfig& cfg,
                     GbdtTrainLog* log) {
  cfg.validate();
  const std::size_t n = F.rows, width = F.cols;
  if (n < 2) throw DataError("train_gbdt: need at least 2 rows");
  if (width < 1) throw DataError("train_gbdt: need at least 1 feature");
  if (y.size() != n) throw ShapeError("train_gbdt: label count != row count");
  for (std::size_t i = 0; i < F.data.size(); ++i) {
    if (!std::isfinite(F.data[i])) {
      throw DataError("train_gbdt: non-finite feature at row " + std::to_string(i / width) +
                      ", column " + std::to_string(i % width));
    }
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw DataError("train_gbdt: non-finite label");
  }

  GbdtModel model;
  model.config = cfg;
  model.feature_width = width;

  std::vector<double> w(n, 1.0);
  if (cfg.task == GbdtTask::kBinary) {
    const double auto_w = auto_pos_weight(y);  // also checks labels and classes
    model.pos_weight = cfg.pos_weight_auto ? auto_w : cfg.pos_weight;
    double wp = 0.0, wn = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (y[i] == 1.0) {
        w[i] = model.pos_weight;
        wp += w[i];
      } else {
        wn += 1.0;
      }
    }
    model.base_score = std::log(wp / wn);
  } else {
    model.base_score = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  }

  std::vector<double> score(n, model.base_score);
  if (log) log->loss = {training_loss(cfg, y, w, score)};

  if (cfg.task == GbdtTask::kRegression &&
      std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; })) {
    return model;
  }

  std::vector<std::vector<double>> cols(width, std::vector<double>(n));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < width; ++c) cols[c][r] = F.at(r, c);
  }
  std::vector<std::vector<std::uint32_t>> sorted(width, std::vector<std::uint32_t>(n));
  for (std::size_t c = 0; c < width; ++c) {
    auto& s = sorted[c];
    std::iota(s.begin(), s.end(), 0u);
    const auto& x = cols[c];
    std::stable_sort(s.begin(), s.end(), [&](std::uint32_t a, std::uint32_t b) { return x[a] < x[b]; });
  }

  const std::size_t n_features =
      cfg.feature_fraction >= 1.0
          ? width
          : std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.feature_fraction *
                                                                           static_cast<double>(width))));
  std::vector<int> all(width);
  std::iota(all.begin(), all.end(), 0);
  Rng rng(cfg.seed);

  TreeBuilder builder(cols, sorted, cfg);
  std::vector<double> g(n), h(n);
  for (int t = 0; t < cfg.n_estimators; ++t) {
    std::vector<int> features = all;
    if (n_features < width) {
      rng.shuffle(features);
      features.resize(n_features);
      std::sort(features.begin(), features.end());
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (cfg.task == GbdtTask::kRegression) {
        g[i] = y[i] - score[i];
        h[i] = 1.0;
      } else {
        const double p = sigmoid(score[i]);
        g[i] = w[i] * (y[i] - p);
        h[i] = w[i] * p * (1.0 - p);
      }
    }
    Tree tree = builder.build(g, h, features);
    if (tree.nodes.size() == 1 && std::abs(tree.nodes[0].leaf_value) < 1e-15) break;
    for (std::size_t i = 0; i < n; ++i) score[i] += cfg.learning_rate * tree.leaf(F.row(i));
    model.trees.push_back(std::move(tree));
    if (log) log->loss.push_back(training_loss(cfg, y, w, score));
  }
  return model;
}

nlohmann::json gbdt_config_to_json(const GbdtConfig& c) {
  nlohmann::json j = {
      {"task", c.task == GbdtTask::kBinary ? "binary" : "regression"},
      {"n_estimators", c.n_estimators},
      {"learning_rate", c.learning_rate},
      {"growth", c.growth == Growth::kDepthLimited ? "depth_limited" : "leaf_limited"},
      {"max_depth", c.max_depth},
      {"num_leaves", c.num_leaves},
      {"feature_fraction", c.feature_fraction},
      {"min_samples_leaf", c.min_samples_leaf},
      {"seed", c.seed},
  };
  j["pos_weight"] = c.pos_weight_auto ? nlohmann::json("auto") : nlohmann::json(c.pos_weight);
  return j;
}

GbdtConfig gbdt_config_from_json(const nlohmann::json& c) {
  try {
    GbdtConfig g;
    if (c.contains("task")) {
      const std::string task = c.at("task");
      if (task != "binary" && task != "regression") throw DataError("unknown gbdt task " + task);
      g.task = task == "binary" ? GbdtTask::kBinary : GbdtTask::kRegression;
    }
    if (c.contains("growth")) {
      const std::string growth = c.at("growth");
      if (growth != "depth_limited" && growth != "leaf_limited") {
        throw DataError("unknown gbdt growth " + growth);
      }
      g.growth = growth == "depth_limited" ? Growth::kDepthLimited : Growth::kLeafLimited;
    }
    g.n_estimators = c.value("n_estimators", g.n_estimators);
    g.learning_rate = c.value("learning_rate", g.learning_rate);
    g.max_depth = c.value("max_depth", g.max_depth);
    g.num_leaves = c.value("num_leaves", g.num_leaves);
    g.feature_fraction = c.value("feature_fraction", g.feature_fraction);
    g.min_samples_leaf = c.value("min_samples_leaf", g.min_samples_leaf);
    g.seed = c.value("seed", g.seed);
    if (c.contains("pos_weight")) {
      const auto& pw = c.at("pos_weight");
      if (pw.is_string()) {
        if (pw != "auto") throw DataError("pos_weight must be a number or \"auto\"");
        g.pos_weight_auto = true;
      } else {
        g.pos_weight_auto = false;
        g.pos_weight = pw.get<double>();
      }
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("gbdt config: ") + e.what());
  }
}

nlohmann::json gbdt_to_json(const GbdtModel& model) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : model.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes) {
      if (n.is_leaf()) {
        nodes.push_back({{"leaf_value", n.leaf_value}});
      } else {
        nodes.push_back(
            {{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}});
      }
    }
    trees.push_back(std::move(nodes));
  }
  return {{"type", "gbdt"},
          {"config", gbdt_config_to_json(model.config)},
          {"base_score", model.base_score},
          {"pos_weight_applied", model.pos_weight},
          {"feature_width", model.feature_width},
          {"trees", trees}};
}

GbdtModel gbdt_from_json(const nlohmann::json& j) {
  try {
    if (j.at("type") != "gbdt") throw DataError("not a gbdt head");
    GbdtModel m;
    m.config = gbdt_config_from_json(j.at("config"));
    m.base_score = j.at("base_score");
    m.pos_weight = j.at("pos_weight_applied");
    m.feature_width = j.at("feature_width");
    for (const auto& tj : j.at("trees")) {
      Tree t;
      for (const auto& nj : tj) {
        TreeNode n;
        if (nj.contains("leaf_value")) {
          n.leaf_value = nj.at("leaf_value");
        } else {
          n.feature = nj.at("feature");
          n.threshold = nj.at("threshold");
          n.left = nj.at("left");
          n.right = nj.at("right");
          if (n.feature < 0) throw DataError("negative split feature");
        }
        t.nodes.push_back(n);
      }
      m.trees.push_back(std::move(t));
    }
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("gbdt json: ") + e.what());
  }
}

}  // namespace locqor::heads
