// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numeric>
#include <string>

#include "locqor/error.hpp"
#include "locqor/heads.hpp"
#include "locqor/util.hpp"

namespace locqor::heads {

double LogisticModel::logit(std::span<const double> f) const {
  if (f.size() != weights.size()) {
    throw ShapeError("logistic: expected " + std::to_string(weights.size()) + " features, got " +
                     std::to_string(f.size()));
  }
  double s = bias;
  for (std::size_t i = 0; i < f.size(); ++i) s += weights[i] * f[i];
  return s;
}

double LogisticModel::predict(std::span<const double> f) const { return sigmoid(logit(f)); }

void LogisticModel::validate() const {
  if (!std::isfinite(bias)) throw NumericError("logistic: non-finite bias");
  for (double w : weights) {
    if (!std::isfinite(w)) throw NumericError("logistic: non-finite weight");
  }
}

namespace {

void check_binary(std::span<const double> y) {
  bool pos = false, neg = false;
  for (double v : y) {
    if (v == 1.0) pos = true;
    else if (v == 0.0) neg = true;
    else throw DataError("logistic: labels must be 0 or 1");
  }
  if (!pos || !neg) throw DataError("logistic: both classes must be present");
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

double bce_loss(const LogisticModel& model, const MatrixView& F, std::span<const double> y,
                double pos_weight) {
  double total = 0.0;
  for (std::size_t i = 0; i < F.rows; ++i) {
    const double s = model.logit(F.row(i));
    total += y[i] == 1.0 ? pos_weight * softplus(-s) : softplus(s);
  }
  return total / static_cast<double>(F.rows);
}

double bce_gradient(const LogisticModel& model, const MatrixView& F, std::span<const double> y,
                    std::vector<double>& grad_w, double pos_weight) {
  grad_w.assign(F.cols, 0.0);
  double grad_b = 0.0;
  const double inv_n = 1.0 / static_cast<double>(F.rows);
  for (std::size_t i = 0; i < F.rows; ++i) {
    const auto row = F.row(i);
    const double p = sigmoid(model.logit(row));
    const double r = (y[i] == 1.0 ? pos_weight * (p - 1.0) : p) * inv_n;
    for (std::size_t c = 0; c < F.cols; ++c) grad_w[c] += r * row[c];
    grad_b += r;
  }
  return grad_b;
}

LogisticModel train_logistic(const MatrixView& F, std::span<const double> y,
                             const LogisticConfig& cfg, std::vector<double>* epoch_loss) {
  if (y.size() != F.rows) throw ShapeError("train_logistic: label count != row count");
  check_binary(y);
  if (cfg.epochs < 0 || cfg.batch_size < 1 || !(cfg.lr > 0.0)) {
    throw ConfigError("train_logistic: invalid epochs, batch_size or lr");
  }
  const double pw = cfg.pos_weight_auto ? auto_pos_weight(y) : cfg.pos_weight;

  LogisticModel m;
  m.weights.assign(F.cols, 0.0);
  m.lr = cfg.lr;
  std::vector<double> mw(F.cols, 0.0), vw(F.cols, 0.0), gw;
  double mb = 0.0, vb = 0.0;
  long step = 0;

  std::vector<std::size_t> order(F.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(cfg.seed);
  std::vector<double> batch_x, batch_y;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t b = 0; b < F.rows; b += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, F.rows - b);
      batch_x.clear();
      batch_y.clear();
      for (std::size_t i = b; i < b + len; ++i) {
        const auto row = F.row(order[i]);
        batch_x.insert(batch_x.end(), row.begin(), row.end());
        batch_y.push_back(y[order[i]]);
      }
      const MatrixView view(batch_x, len, F.cols);
      const double gb = bce_gradient(m, view, batch_y, gw, pw);
      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      auto adam = [&](double& p, double& mo, double& ve, double g) {
        mo = cfg.beta1 * mo + (1.0 - cfg.beta1) * g;
        ve = cfg.beta2 * ve + (1.0 - cfg.beta2) * g * g;
        p -= cfg.lr * (mo / c1) / (std::sqrt(ve / c2) + cfg.eps);
      };
      for (std::size_t c = 0; c < F.cols; ++c) adam(m.weights[c], mw[c], vw[c], gw[c]);
      adam(m.bias, mb, vb, gb);
    }
    const double loss = bce_loss(m, F, y, pw);
    if (!std::isfinite(loss)) {
      throw NumericError("train_logistic: non-finite loss at epoch " + std::to_string(epoch + 1));
    }
    if (epoch_loss) epoch_loss->push_back(loss);
    m.trained_epochs = epoch + 1;
  }
  return m;
}

nlohmann::json logistic_config_to_json(const LogisticConfig& c) {
  nlohmann::json j = {{"lr", c.lr},         {"epochs", c.epochs}, {"batch_size", c.batch_size},
                      {"beta1", c.beta1},   {"beta2", c.beta2},   {"eps", c.eps},
                      {"seed", c.seed}};
  j["pos_weight"] = c.pos_weight_auto ? nlohmann::json("auto") : nlohmann::json(c.pos_weight);
  return j;
}

LogisticConfig logistic_config_from_json(const nlohmann::json& j) {
  try {
    LogisticConfig c;
    c.lr = j.value("lr", c.lr);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.seed = j.value("seed", c.seed);
    if (j.contains("pos_weight")) {
      const auto& pw = j.at("pos_weight");
      if (pw.is_string()) {
        if (pw != "auto") throw DataError("pos_weight must be a number or \"auto\"");
        c.pos_weight_auto = true;
      } else {
        c.pos_weight_auto = false;
        c.pos_weight = pw.get<double>();
      }
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("logistic config: ") + e.what());
  }
}

nlohmann::json logistic_to_json(const LogisticModel& model) {
  return {{"type", "logistic"},
          {"weights", model.weights},
          {"bias", model.bias},
          {"trained_epochs", model.trained_epochs},
          {"lr", model.lr}};
}

LogisticModel logistic_from_json(const nlohmann::json& j) {
  try {
    if (j.at("type") != "logistic") throw DataError("not a logistic head");
    LogisticModel m;
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias");
    m.trained_epochs = j.at("trained_epochs");
    m.lr = j.at("lr");
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("logistic json: ") + e.what());
  }
}

}  // namespace locqor::heads
