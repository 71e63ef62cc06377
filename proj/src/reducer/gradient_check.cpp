// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "locqor/error.hpp"
#include "locqor/reducer.hpp"

namespace locqor::reducer {

namespace {

constexpr ForwardOptions kCheckMode{.batch_stats = true, .update_running = false, .dropout = false};

double* tensor_data(DenseLayer& layer, const std::string& name) {
  if (name == "weight") return layer.weight.data();
  if (name == "bias") return layer.bias.data();
  if (name == "gamma") return layer.gamma.data();
  return layer.beta.data();
}

const double* grad_data(const LayerGradients& g, const std::string& name) {
  if (name == "weight") return g.weight.data();
  if (name == "bias") return g.bias.data();
  if (name == "gamma") return g.gamma.data();
  return g.beta.data();
}

std::size_t tensor_size(const DenseLayer& layer, const std::string& name) {
  if (name == "weight") return static_cast<std::size_t>(layer.weight.size());
  if (name == "bias") return static_cast<std::size_t>(layer.bias.size());
  if (!layer.batch_norm) return 0;
  return static_cast<std::size_t>(name == "gamma" ? layer.gamma.size() : layer.beta.size());
}

}  // namespace

Gradients analytic_gradients(const Autoencoder& model, const Eigen::MatrixXd& x) {
  Autoencoder work = model;
  Gradients g;
  loss_and_gradients(work, x, kCheckMode, g);
  return g;
}

GradientCheckReport check_gradients(const Autoencoder& model, const Eigen::MatrixXd& x,
                                    const Gradients& analytic, const GradientCheckOptions& opts) {
  if (analytic.size() != model.layers().size()) {
    throw ShapeError("gradient check: gradient list does not match the model");
  }
  Autoencoder work = model;
  Rng rng(opts.seed);
  GradientCheckReport report;
  std::vector<CoordinateError> all;

  for (std::size_t l = 0; l < work.layers().size(); ++l) {
    for (const std::string name : {"weight", "bias", "gamma", "beta"}) {
      const std::size_t size = tensor_size(work.layers()[l], name);
      if (size == 0) continue;
      std::vector<std::size_t> coords(size);
      for (std::size_t i = 0; i < size; ++i) coords[i] = i;
      rng.shuffle(coords);
      coords.resize(std::min(size, opts.samples_per_tensor));
      std::sort(coords.begin(), coords.end());

      const double* g = grad_data(analytic[l], name);
      for (std::size_t idx : coords) {
        double* p = tensor_data(work.layers()[l], name) + idx;
        const double saved = *p;
        *p = saved + opts.step;
        const double up = batch_loss(work, x, kCheckMode);
        *p = saved - opts.step;
        const double down = batch_loss(work, x, kCheckMode);
        *p = saved;
        const double numeric = (up - down) / (2.0 * opts.step);
        const double a = g[idx];
        const double denom = std::max({std::abs(a), std::abs(numeric), opts.denominator_floor});
        const double rel = std::abs(a - numeric) / denom;
        all.push_back({l, name, idx, a, numeric, rel});
        report.max_rel_error = std::max(report.max_rel_error, rel);
      }
    }
  }
  report.checked = all.size();
  report.passed = report.max_rel_error < opts.tolerance;
  std::sort(all.begin(), all.end(),
            [](const CoordinateError& a, const CoordinateError& b) { return a.rel_error > b.rel_error; });
  all.resize(std::min<std::size_t>(all.size(), 10));
  report.worst = std::move(all);
  return report;
}

GradientCheckReport gradient_check(const Autoencoder& model, const Eigen::MatrixXd& x,
                                   const GradientCheckOptions& opts) {
  return check_gradients(model, x, analytic_gradients(model, x), opts);
}

}  // namespace locqor::reducer
