// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>

#include "locqor/error.hpp"
#include "locqor/reducer.hpp"

namespace locqor::reducer {

namespace {

constexpr double kMinRunningVar = std::numeric_limits<float>::min();

struct LayerCache {
  Eigen::MatrixXd input;
  BatchNormCache bn;
  Eigen::MatrixXd pre_act;  // input of the activation
  Eigen::MatrixXd drop;     // dropout multipliers, empty when not applied
};

Eigen::MatrixXd affine(const DenseLayer& layer, const Eigen::MatrixXd& a) {
  Eigen::MatrixXd z = layer.weight * a;
  z.colwise() += layer.bias;
  return z;
}

Eigen::MatrixXd leaky(const Eigen::MatrixXd& y, double slope) {
  return y.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
}

Eigen::MatrixXd normalize_running(const DenseLayer& layer, const Eigen::MatrixXd& z, double eps) {
  Eigen::VectorXd inv_std = (layer.running_var.array() + eps).rsqrt().matrix();
  Eigen::MatrixXd xhat = z.colwise() - layer.running_mean;
  return xhat.array().colwise() * inv_std.array();
}

Eigen::MatrixXd scale_shift(const DenseLayer& layer, const Eigen::MatrixXd& xhat) {
  Eigen::MatrixXd y = xhat.array().colwise() * layer.gamma.array();
  y.colwise() += layer.beta;
  return y;
}

Eigen::MatrixXd forward_layer(DenseLayer& layer, const Eigen::MatrixXd& a,
                              const AutoencoderConfig& cfg, const ForwardOptions& opts,
                              LayerCache* cache) {
  Eigen::MatrixXd y = affine(layer, a);
  if (layer.batch_norm) {
    Eigen::MatrixXd xhat;
    if (opts.batch_stats) {
      BatchNormCache local;
      BatchNormCache& bn = cache ? cache->bn : local;
      xhat = batch_normalize(y, cfg.bn_eps, &bn);
      if (opts.update_running) {
        const double n = static_cast<double>(y.cols());
        const double unbias = n > 1 ? n / (n - 1) : 1.0;
        layer.running_mean = (1 - cfg.bn_momentum) * layer.running_mean + cfg.bn_momentum * bn.mean;
        layer.running_var =
            ((1 - cfg.bn_momentum) * layer.running_var + cfg.bn_momentum * unbias * bn.var)
                .cwiseMax(kMinRunningVar);
      }
      if (cache) cache->bn.xhat = xhat;
    } else {
      xhat = normalize_running(layer, y, cfg.bn_eps);
    }
    y = scale_shift(layer, xhat);
  }
  if (cache) {
    cache->input = a;
    cache->pre_act = y;
  }
  Eigen::MatrixXd h = layer.leaky ? leaky(y, cfg.leaky_slope) : std::move(y);
  if (opts.dropout && layer.dropout > 0.0) {
    Eigen::MatrixXd mask = dropout_mask(h.rows(), h.cols(), layer.dropout, *opts.rng);
    h.array() *= mask.array();
    if (cache) cache->drop = std::move(mask);
  } else if (cache) {
    cache->drop.resize(0, 0);
  }
  return h;
}

// Gradient of the layer input given the gradient of the layer output.
Eigen::MatrixXd backward_layer(const DenseLayer& layer, const LayerCache& cache,
                               const AutoencoderConfig& cfg, bool batch_stats, Eigen::MatrixXd dout,
                               LayerGradients& g) {
  if (cache.drop.size() > 0) dout.array() *= cache.drop.array();
  if (layer.leaky) {
    const double slope = cfg.leaky_slope;
    dout.array() *= cache.pre_act.unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; }).array();
  }
  Eigen::MatrixXd dz;
  if (layer.batch_norm) {
    const Eigen::MatrixXd& xhat = cache.bn.xhat;
    g.gamma = (dout.array() * xhat.array()).rowwise().sum().matrix();
    g.beta = dout.rowwise().sum();
    Eigen::MatrixXd dxhat = dout.array().colwise() * layer.gamma.array();
    if (batch_stats) {
      const double n = static_cast<double>(dout.cols());
      Eigen::VectorXd sum_dxhat = dxhat.rowwise().sum();
      Eigen::VectorXd sum_dxhat_xhat = (dxhat.array() * xhat.array()).rowwise().sum().matrix();
      Eigen::ArrayXXd t = n * dxhat.array();
      t.colwise() -= sum_dxhat.array();
      t -= xhat.array().colwise() * sum_dxhat_xhat.array();
      dz = (t.colwise() * (cache.bn.inv_std.array() / n)).matrix();
    } else {
      Eigen::VectorXd inv_std = (layer.running_var.array() + cfg.bn_eps).rsqrt().matrix();
      dz = dxhat.array().colwise() * inv_std.array();
    }
  } else {
    dz = std::move(dout);
  }
  g.weight = dz * cache.input.transpose();
  g.bias = dz.rowwise().sum();
  return layer.weight.transpose() * dz;
}

Eigen::MatrixXd infer_pass(const Autoencoder& model, const Eigen::MatrixXd& x, std::size_t n_layers) {
  const auto& cfg = model.config();
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const DenseLayer& layer = model.layers()[l];
    Eigen::MatrixXd y = affine(layer, a);
    if (layer.batch_norm) y = scale_shift(layer, normalize_running(layer, y, cfg.bn_eps));
    a = layer.leaky ? leaky(y, cfg.leaky_slope) : std::move(y);
  }
  return a;
}

template <typename M>
void adamw_step(M& param, const M& grad, M& m, M& v, const TrainConfig& tc, std::size_t step) {
  const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(step));
  param *= (1.0 - tc.learning_rate * tc.weight_decay);
  m = tc.beta1 * m + (1.0 - tc.beta1) * grad;
  v = tc.beta2 * v + (1.0 - tc.beta2) * grad.cwiseProduct(grad);
  const double step_size = tc.learning_rate / bc1;
  const double sqrt_bc2 = std::sqrt(bc2);
  param.array() -= step_size * m.array() / (v.array().sqrt() / sqrt_bc2 + tc.adam_eps);
}

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& xt, const std::vector<std::size_t>& idx,
                               std::size_t begin, std::size_t end) {
  Eigen::MatrixXd out(xt.rows(), static_cast<Eigen::Index>(end - begin));
  for (std::size_t i = begin; i < end; ++i) {
    out.col(static_cast<Eigen::Index>(i - begin)) = xt.col(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

}  // namespace

Eigen::MatrixXd batch_normalize(const Eigen::MatrixXd& z, double eps, BatchNormCache* cache) {
  const double n = static_cast<double>(z.cols());
  Eigen::VectorXd mean = z.rowwise().sum() / n;
  Eigen::MatrixXd centered = z.colwise() - mean;
  Eigen::VectorXd var = centered.array().square().rowwise().sum().matrix() / n;
  Eigen::VectorXd inv_std = (var.array() + eps).rsqrt().matrix();
  Eigen::MatrixXd xhat = centered.array().colwise() * inv_std.array();
  if (cache) {
    cache->mean = std::move(mean);
    cache->var = std::move(var);
    cache->inv_std = std::move(inv_std);
  }
  return xhat;
}

Eigen::MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  Eigen::MatrixXd mask(rows, cols);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) mask(r, c) = rng.uniform() < rate ? 0.0 : keep_scale;
  }
  return mask;
}

Autoencoder Autoencoder::create(const AutoencoderConfig& config, std::uint64_t seed) {
  if (config.input_dim == 0 || config.latent_dim == 0) {
    throw ConfigError("autoencoder: input and latent dimensions must be positive");
  }
  if (!(config.dropout >= 0.0 && config.dropout < 1.0)) {
    throw ConfigError("autoencoder: dropout must be in [0, 1)");
  }
  Autoencoder ae;
  ae.config_ = config;
  std::vector<std::size_t> widths{config.input_dim};
  for (auto h : config.hidden) widths.push_back(h);
  widths.push_back(config.latent_dim);
  for (auto it = config.hidden.rbegin(); it != config.hidden.rend(); ++it) widths.push_back(*it);
  widths.push_back(config.input_dim);

  const std::size_t n_layers = widths.size() - 1;
  const std::size_t latent_layer = config.hidden.size();
  Rng rng(seed);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto in = static_cast<Eigen::Index>(widths[l]);
    const auto out = static_cast<Eigen::Index>(widths[l + 1]);
    DenseLayer layer;
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    layer.weight.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = rng.uniform(-bound, bound);
    }
    layer.bias = Eigen::VectorXd::Zero(out);
    const bool is_output = l + 1 == n_layers;
    layer.batch_norm = !is_output;
    layer.leaky = !is_output;
    layer.dropout = (is_output || l == latent_layer) ? 0.0 : config.dropout;
    if (layer.batch_norm) {
      layer.gamma = Eigen::VectorXd::Ones(out);
      layer.beta = Eigen::VectorXd::Zero(out);
      layer.running_mean = Eigen::VectorXd::Zero(out);
      layer.running_var = Eigen::VectorXd::Ones(out);
    }
    ae.layers_.push_back(std::move(layer));
  }
  ae.mode_ = Mode::kTrain;
  return ae;
}

void Autoencoder::validate() const {
  const std::size_t expected = 2 * (config_.hidden.size() + 1);
  if (layers_.size() != expected) throw ShapeError("autoencoder: wrong layer count");
  std::size_t width = config_.input_dim;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.in_dim() != width) {
      throw ShapeError("autoencoder: layer " + std::to_string(l) + " expects width " +
                       std::to_string(layer.in_dim()) + ", previous layer produces " +
                       std::to_string(width));
    }
    if (static_cast<std::size_t>(layer.bias.size()) != layer.out_dim()) {
      throw ShapeError("autoencoder: bias size mismatch in layer " + std::to_string(l));
    }
    if (layer.batch_norm && (layer.running_var.array() <= 0.0).any()) {
      throw ShapeError("autoencoder: non-positive running variance in layer " + std::to_string(l));
    }
    width = layer.out_dim();
  }
  if (width != config_.input_dim) throw ShapeError("autoencoder: output width != input width");
  if (layers_[encoder_depth() - 1].out_dim() != config_.latent_dim) {
    throw ShapeError("autoencoder: latent width mismatch");
  }
}

void Autoencoder::require_infer(std::size_t width) const {
  if (mode_ != Mode::kInfer) throw Error("autoencoder is not in infer mode");
  if (width != config_.input_dim) {
    throw ShapeError("autoencoder: input width " + std::to_string(width) + ", expected " +
                     std::to_string(config_.input_dim));
  }
}

Eigen::MatrixXd Autoencoder::encode_batch(const Eigen::MatrixXd& x) const {
  require_infer(static_cast<std::size_t>(x.rows()));
  return infer_pass(*this, x, encoder_depth());
}

Eigen::MatrixXd Autoencoder::reconstruct_batch(const Eigen::MatrixXd& x) const {
  require_infer(static_cast<std::size_t>(x.rows()));
  return infer_pass(*this, x, layers_.size());
}

std::vector<double> Autoencoder::encode(std::span<const double> x) const {
  Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
  Eigen::MatrixXd z = encode_batch(Eigen::MatrixXd(v));
  return std::vector<double>(z.data(), z.data() + z.size());
}

Reconstruction Autoencoder::reconstruct(std::span<const double> x) const {
  Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
  Eigen::MatrixXd out = reconstruct_batch(Eigen::MatrixXd(v));
  Reconstruction r;
  r.output.assign(out.data(), out.data() + out.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = r.output[i] - x[i];
    sum += d * d;
  }
  r.mse = x.empty() ? 0.0 : sum / static_cast<double>(x.size());
  return r;
}

void Autoencoder::round_to_storage() {
  auto round_all = [](auto& m) { m = m.unaryExpr([](double v) { return round_f32(v); }); };
  for (auto& layer : layers_) {
    round_all(layer.weight);
    round_all(layer.bias);
    if (layer.batch_norm) {
      round_all(layer.gamma);
      round_all(layer.beta);
      round_all(layer.running_mean);
      round_all(layer.running_var);
      layer.running_var = layer.running_var.cwiseMax(kMinRunningVar);
    }
  }
}

double batch_loss(Autoencoder& model, const Eigen::MatrixXd& x, const ForwardOptions& opts) {
  Eigen::MatrixXd a = x;
  for (auto& layer : model.layers()) a = forward_layer(layer, a, model.config(), opts, nullptr);
  return (a - x).squaredNorm() / static_cast<double>(x.size());
}

double loss_and_gradients(Autoencoder& model, const Eigen::MatrixXd& x, const ForwardOptions& opts,
                          Gradients& grads) {
  auto& layers = model.layers();
  std::vector<LayerCache> caches(layers.size());
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    a = forward_layer(layers[l], a, model.config(), opts, &caches[l]);
  }
  const double n = static_cast<double>(x.size());
  Eigen::MatrixXd diff = a - x;
  const double loss = diff.squaredNorm() / n;

  grads.assign(layers.size(), LayerGradients{});
  Eigen::MatrixXd d = (2.0 / n) * diff;
  for (std::size_t l = layers.size(); l-- > 0;) {
    d = backward_layer(layers[l], caches[l], model.config(), opts.batch_stats, std::move(d), grads[l]);
  }
  return loss;
}

Autoencoder train_autoencoder(const Eigen::MatrixXd& data, const AutoencoderConfig& model_config,
                              const TrainConfig& tc, TrainLog* log) {
  const auto n = static_cast<std::size_t>(data.rows());
  if (static_cast<std::size_t>(data.cols()) != model_config.input_dim) {
    throw ShapeError("train_autoencoder: data width " + std::to_string(data.cols()) +
                     " != input_dim " + std::to_string(model_config.input_dim));
  }
  if (tc.batch_size < 2) throw ConfigError("train_autoencoder: batch size must be >= 2");
  if (n < tc.batch_size) {
    throw DataError("train_autoencoder: " + std::to_string(n) + " rows < batch size " +
                    std::to_string(tc.batch_size));
  }
  if (!data.allFinite()) throw NumericError("train_autoencoder: non-finite input");

  Autoencoder model = Autoencoder::create(model_config, tc.seed);
  Rng split_rng(tc.seed ^ 0x5eed5eedULL);
  Rng shuffle_rng(tc.seed + 1);
  Rng dropout_rng(tc.seed + 2);

  const Eigen::MatrixXd xt = data.transpose();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  split_rng.shuffle(order);
  const auto n_val = static_cast<std::size_t>(tc.validation_fraction * static_cast<double>(n));
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  const Eigen::MatrixXd xval = gather_columns(xt, val_idx, 0, val_idx.size());

  auto& layers = model.layers();
  Gradients m(layers.size()), v(layers.size()), grads;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    m[l].weight = Eigen::MatrixXd::Zero(layers[l].weight.rows(), layers[l].weight.cols());
    m[l].bias = Eigen::VectorXd::Zero(layers[l].bias.size());
    if (layers[l].batch_norm) {
      m[l].gamma = Eigen::VectorXd::Zero(layers[l].gamma.size());
      m[l].beta = Eigen::VectorXd::Zero(layers[l].beta.size());
    }
    v[l] = m[l];
  }

  TrainLog local_log;
  TrainLog& tl = log ? *log : local_log;
  tl = TrainLog{};
  tl.seed = tc.seed;
  tl.learning_rate = tc.learning_rate;
  tl.weight_decay = tc.weight_decay;
  tl.batch_size = tc.batch_size;
  tl.best_val_mse = std::numeric_limits<double>::infinity();

  ForwardOptions fwd{.batch_stats = true, .update_running = true, .dropout = true, .rng = &dropout_rng};
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    shuffle_rng.shuffle(train_idx);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    std::size_t batch_no = 0;
    for (std::size_t b = 0; b < train_idx.size(); b += tc.batch_size) {
      const std::size_t e = std::min(train_idx.size(), b + tc.batch_size);
      if (e - b < 2) continue;  // batch statistics need two samples
      ++batch_no;
      Eigen::MatrixXd xb = gather_columns(xt, train_idx, b, e);
      const double loss = loss_and_gradients(model, xb, fwd, grads);
      if (!std::isfinite(loss)) {
        throw NumericError("train_autoencoder: non-finite loss at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch_no));
      }
      ++step;
      for (std::size_t l = 0; l < layers.size(); ++l) {
        adamw_step(layers[l].weight, grads[l].weight, m[l].weight, v[l].weight, tc, step);
        adamw_step(layers[l].bias, grads[l].bias, m[l].bias, v[l].bias, tc, step);
        if (layers[l].batch_norm) {
          adamw_step(layers[l].gamma, grads[l].gamma, m[l].gamma, v[l].gamma, tc, step);
          adamw_step(layers[l].beta, grads[l].beta, m[l].beta, v[l].beta, tc, step);
        }
      }
      loss_sum += loss * static_cast<double>(e - b);
      seen += e - b;
    }
    tl.train_mse.push_back(seen ? loss_sum / static_cast<double>(seen) : 0.0);
    if (n_val > 0) {
      const Eigen::MatrixXd rec = infer_pass(model, xval, layers.size());
      const double val = (rec - xval).squaredNorm() / static_cast<double>(xval.size());
      tl.val_mse.push_back(val);
      if (val < tl.best_val_mse) {
        tl.best_val_mse = val;
        tl.best_epoch = epoch;
      }
    } else {
      tl.val_mse.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  tl.epochs = tc.epochs;
  if (n_val == 0) tl.best_val_mse = std::numeric_limits<double>::quiet_NaN();

  if (tc.recalibrate_batch_norm) {
    Eigen::MatrixXd a = gather_columns(xt, train_idx, 0, train_idx.size());
    const double cnt = static_cast<double>(a.cols());
    for (auto& layer : layers) {
      Eigen::MatrixXd y = affine(layer, a);
      if (layer.batch_norm) {
        Eigen::VectorXd mean = y.rowwise().sum() / cnt;
        Eigen::VectorXd var =
            (y.colwise() - mean).array().square().rowwise().sum().matrix() / std::max(1.0, cnt - 1);
        layer.running_mean = mean;
        layer.running_var = var.cwiseMax(kMinRunningVar);
        y = scale_shift(layer, normalize_running(layer, y, model.config().bn_eps));
      }
      a = layer.leaky ? leaky(y, model.config().leaky_slope) : std::move(y);
    }
  }

  model.round_to_storage();
  model.set_mode(Mode::kInfer);
  return model;
}

std::vector<Tensor> to_tensors(const Autoencoder& model) {
  std::vector<Tensor> out;
  auto add = [&](const std::string& name, const auto& m) {
    Tensor t;
    t.name = name;
    const auto rows = static_cast<std::size_t>(m.rows());
    const auto cols = static_cast<std::size_t>(m.cols());
    t.shape = cols == 1 && m.ColsAtCompileTime == 1 ? std::vector<std::size_t>{rows}
                                                   : std::vector<std::size_t>{rows, cols};
    t.data.reserve(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        t.data.push_back(static_cast<float>(m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c))));
      }
    }
    out.push_back(std::move(t));
  };
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    const auto& layer = model.layers()[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    add(p + "weight", layer.weight);
    add(p + "bias", layer.bias);
    if (layer.batch_norm) {
      add(p + "gamma", layer.gamma);
      add(p + "beta", layer.beta);
      add(p + "running_mean", layer.running_mean);
      add(p + "running_var", layer.running_var);
    }
  }
  return out;
}

Autoencoder from_tensors(const AutoencoderConfig& config, const std::vector<Tensor>& tensors) {
  Autoencoder model = Autoencoder::create(config, 0);
  std::size_t next = 0;
  auto take = [&](const std::string& name, auto& m) {
    if (next >= tensors.size()) throw ShapeError("autoencoder tensors: missing " + name);
    const Tensor& t = tensors[next++];
    if (t.name != name) throw ShapeError("autoencoder tensors: expected " + name + ", got " + t.name);
    const auto rows = static_cast<std::size_t>(m.rows());
    const auto cols = static_cast<std::size_t>(m.cols());
    if (t.data.size() != rows * cols) throw ShapeError("autoencoder tensors: bad size for " + name);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t.data[r * cols + c];
      }
    }
  };
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    auto& layer = model.layers()[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    take(p + "weight", layer.weight);
    take(p + "bias", layer.bias);
    if (layer.batch_norm) {
      take(p + "gamma", layer.gamma);
      take(p + "beta", layer.beta);
      take(p + "running_mean", layer.running_mean);
      take(p + "running_var", layer.running_var);
    }
  }
  if (next != tensors.size()) throw ShapeError("autoencoder tensors: unexpected extra tensors");
  model.validate();
  model.set_mode(Mode::kInfer);
  return model;
}

}  // namespace locqor::reducer
