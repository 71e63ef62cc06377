// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "locqor/error.hpp"
#include "locqor/pipeline.hpp"

namespace locqor::pipeline {

namespace {

// Prefixes the stage name while keeping the error category, which the CLI
// maps to an exit code.
template <typename Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(name + ": " + e.what());
  } catch (const ProviderError& e) {
    throw ProviderError(name + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(name + ": " + e.what());
  } catch (const Error& e) {
    throw Error(name + ": " + e.what());
  }
}

nlohmann::json autoencoder_json(const reducer::AutoencoderConfig& c) {
  return {{"input_dim", c.input_dim},     {"latent_dim", c.latent_dim}, {"hidden", c.hidden},
          {"leaky_slope", c.leaky_slope}, {"dropout", c.dropout},       {"bn_eps", c.bn_eps},
          {"bn_momentum", c.bn_momentum}};
}

struct HeadData {
  std::vector<double> x;
  std::vector<double> y;
  std::size_t rows = 0;
};

HeadData head_rows(const features::FeatureTable& table, eval::Task task) {
  HeadData d;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    if (table.split[r] != corpus::Split::kTrain) continue;
    double y = 0.0;
    switch (task) {
      case eval::Task::kCongestion: y = table.congestion[r]; break;
      case eval::Task::kTiming: y = table.timing[r]; break;
      case eval::Task::kWns:
        if (std::isnan(table.wns[r])) continue;
        y = table.wns[r];
        break;
    }
    const auto row = table.row(r);
    d.x.insert(d.x.end(), row.begin(), row.end());
    d.y.push_back(y);
    ++d.rows;
  }
  return d;
}

double task_threshold(const nlohmann::json& manifest) { return manifest.at("threshold"); }

}  // namespace

TrainResult train_pipeline(const PipelineConfig& config, const corpus::Dataset& dataset,
                           const embed::EmbeddingProvider& provider, embed::EmbeddingCache* cache,
                           const LogFn& log) {
  config.validate();
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  if (config.head.type == "logistic") {
    for (auto t : config.tasks()) {
      if (!eval::is_classification(t)) {
        throw ConfigError("head: the logistic head supports classification tasks only");
      }
    }
  }

  say("embedding " + std::to_string(dataset.examples.size()) + " lines in " +
      std::to_string(dataset.modules.size()) + " modules with " + provider.identity());
  const Eigen::MatrixXd concat =
      stage("embedding", [&] { return features::concat_features(dataset, provider, cache); });

  std::vector<Eigen::Index> train_idx;
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    if (dataset.examples[i].split == corpus::Split::kTrain) {
      train_idx.push_back(static_cast<Eigen::Index>(i));
    }
  }
  if (train_idx.size() < 2) throw DataError("dataset: fewer than 2 training lines");

  reducer::AutoencoderConfig ae_cfg = config.reducer;
  ae_cfg.input_dim = 2 * provider.k();
  reducer::TrainConfig tc = config.reducer_train;
  tc.seed = config.seed;
  TrainResult result;
  say("training autoencoder " + std::to_string(ae_cfg.input_dim) + " -> " +
      std::to_string(ae_cfg.latent_dim) + " on " + std::to_string(train_idx.size()) + " rows");
  const reducer::Autoencoder ae = stage("reducer", [&] {
    const Eigen::MatrixXd data = concat(train_idx, Eigen::all);
    return reducer::train_autoencoder(data, ae_cfg, tc, &result.reducer_log);
  });
  const auto& rl = result.reducer_log;
  if (!rl.train_mse.empty()) {
    say("autoencoder train mse " + format_double(rl.train_mse.front()) + " -> " +
        format_double(rl.train_mse.back()));
  }

  const features::FeatureTable table = stage(
      "features", [&] { return features::build_feature_table(dataset, concat, ae, config.context); });

  nlohmann::json echo = config.to_json();
  echo.erase("paths");
  nlohmann::json reducer_log = {{"epochs", rl.epochs},
                                {"batch_size", rl.batch_size},
                                {"best_epoch", rl.best_epoch},
                                {"best_val_mse", rl.best_val_mse}};
  if (!rl.train_mse.empty()) {
    reducer_log["first_train_mse"] = rl.train_mse.front();
    reducer_log["final_train_mse"] = rl.train_mse.back();
  }

  for (const eval::Task task : config.tasks()) {
    const std::string name = eval::to_string(task);
    HeadData d = head_rows(table, task);
    say("training " + config.head.type + " head for " + name + " on " + std::to_string(d.rows) +
        " rows x " + std::to_string(table.width) + " features");
    HeadModel head = stage("head " + name, [&]() -> HeadModel {
      const heads::MatrixView view(d.x, d.rows, table.width);
      if (config.head.type == "gbdt") {
        heads::GbdtConfig g = config.head.gbdt;
        g.task = eval::is_classification(task) ? heads::GbdtTask::kBinary
                                               : heads::GbdtTask::kRegression;
        g.seed = config.seed;
        heads::GbdtTrainLog glog;
        auto m = heads::train_gbdt(view, d.y, g, &glog);
        result.gbdt_logs.push_back(std::move(glog));
        return {std::move(m)};
      }
      heads::LogisticConfig lc = config.head.logistic;
      lc.seed = config.seed;
      return {heads::train_logistic(view, d.y, lc)};
    });

    ModelBundle b;
    b.autoencoder = ae;
    b.head = std::move(head);
    b.manifest = {
        {"format", kBundleFormat},
        {"task", name},
        {"context", config.context},
        {"head", b.head.type()},
        {"threshold", eval::is_classification(task) ? config.head.threshold
                                                    : config.head.wns_threshold},
        {"provider",
         {{"kind", provider.kind()}, {"identity", provider.identity()}, {"k", provider.k()}}},
        {"k", provider.k()},
        {"d", ae_cfg.latent_dim},
        {"reducer", autoencoder_json(ae_cfg)},
        {"seeds", {{"seed", config.seed}, {"split_seed", dataset.split_seed}}},
        {"train_fraction", dataset.train_fraction},
        {"strip_comments", config.strip_comments},
        {"created_at", creation_timestamp()},
        {"train_log", {{"reducer", reducer_log}, {"head_rows", d.rows}}},
        {"config", echo},
    };
    result.bundles.push_back(std::move(b));
  }
  return result;
}

std::vector<double> predict_dataset(const ModelBundle& bundle, const corpus::Dataset& dataset,
                                    const embed::EmbeddingProvider& provider,
                                    embed::EmbeddingCache* cache) {
  const auto table = stage("features", [&] {
    return features::build_feature_table(dataset, provider, bundle.autoencoder, bundle.context(),
                                         cache);
  });
  std::vector<double> out(table.rows());
  for (std::size_t r = 0; r < table.rows(); ++r) out[r] = bundle.head.score(table.row(r));
  return out;
}

void check_provider(const ModelBundle& bundle, const embed::EmbeddingProvider& provider,
                    bool allow_mismatch) {
  const std::size_t k = bundle.manifest.at("k");
  if (provider.k() != k) {
    throw ConfigError("provider width " + std::to_string(provider.k()) + " != bundle width " +
                      std::to_string(k));
  }
  if (provider.identity() != bundle.provider_identity() && !allow_mismatch) {
    throw ConfigError("provider identity '" + provider.identity() + "' does not match bundle '" +
                      bundle.provider_identity() + "' (use --allow-provider-mismatch to override)");
  }
}

eval::MetricsReport evaluate_bundle(const ModelBundle& bundle, const corpus::Dataset& dataset,
                                    const embed::EmbeddingProvider& provider,
                                    embed::EmbeddingCache* cache) {
  const auto all = predict_dataset(bundle, dataset, provider, cache);
  std::vector<double> test;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (dataset.examples[i].split == corpus::Split::kTest) test.push_back(all[i]);
  }
  nlohmann::json echo = bundle.manifest.at("config");
  echo["bundle_created_at"] = bundle.manifest.at("created_at");
  return eval::evaluate_run(test, dataset, bundle.task(), task_threshold(bundle.manifest), echo);
}

nlohmann::json Diagnostic::to_json() const {
  nlohmann::json j = {{"path", path},   {"module_id", module_id}, {"line", line},
                      {"task", task},   {"score", score},         {"threshold", threshold}};
  if (predicted_wns) j["predicted_wns"] = *predicted_wns;
  return j;
}

std::vector<Diagnostic> annotate_source(const std::vector<ModelBundle>& bundles,
                                        std::string_view source, const std::string& path,
                                        const embed::EmbeddingProvider& provider,
                                        embed::EmbeddingCache* cache) {
  corpus::validate_utf8(source);
  struct Flag {
    Diagnostic d;
    std::size_t bundle;
  };
  std::vector<Flag> flags;
  for (std::size_t bi = 0; bi < bundles.size(); ++bi) {
    const auto& b = bundles[bi];
    const bool strip = b.manifest.value("strip_comments", false);
    // Stripping keeps every newline, so spans keep original line numbers.
    const std::string text = strip ? corpus::strip_comments(source) : std::string(source);
    auto modules = corpus::detect_modules(text, "", path);
    if (modules.empty()) throw SourceError(path + ": no module found", 1);
    const corpus::Dataset ds = corpus::build_dataset(std::move(modules), {}, 0, 1.0);
    std::map<std::string, int> start;
    for (const auto& m : ds.modules) start[m.module_id] = m.start_line;

    const auto scores = predict_dataset(b, ds, provider, cache);
    const eval::Task task = b.task();
    const double threshold = task_threshold(b.manifest);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const auto& line = ds.examples[i].line;
      const bool flagged = eval::is_classification(task) ? heads::classify(scores[i], threshold)
                                                         : scores[i] < threshold;
      if (!flagged) continue;
      Diagnostic d;
      d.path = path;
      d.module_id = line.module_id;
      d.line = start.at(line.module_id) + line.line_no - 1;
      d.task = eval::to_string(task);
      d.score = scores[i];
      d.threshold = threshold;
      if (task == eval::Task::kWns) d.predicted_wns = scores[i];
      flags.push_back({std::move(d), bi});
    }
  }
  std::stable_sort(flags.begin(), flags.end(), [](const Flag& a, const Flag& b) {
    return std::tie(a.d.line, a.bundle) < std::tie(b.d.line, b.bundle);
  });
  std::vector<Diagnostic> out;
  for (auto& f : flags) out.push_back(std::move(f.d));
  return out;
}

}  // namespace locqor::pipeline
