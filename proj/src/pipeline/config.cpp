// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "locqor/error.hpp"
#include "locqor/pipeline.hpp"
#include "locqor/util.hpp"

extern char** environ;

namespace locqor::pipeline {

namespace {

constexpr std::string_view kEnvPrefix = "LOCQOR_";

// Recursive merge that rejects keys the defaults do not have.
void strict_merge(nlohmann::json& base, const nlohmann::json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError("config: expected an object at '" + where + "'");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw ConfigError("config: unknown key '" + path + "'");
    auto& slot = base[key];
    if (slot.is_object()) {
      strict_merge(slot, value, path);
    } else {
      slot = value;
    }
  }
}

}  // namespace

nlohmann::json PipelineConfig::to_json() const {
  nlohmann::json gbdt = heads::gbdt_config_to_json(head.gbdt);
  gbdt.erase("task");  // fixed per task
  gbdt.erase("seed");  // derived from the top-level seed
  nlohmann::json logistic = heads::logistic_config_to_json(head.logistic);
  logistic.erase("seed");
  const auto& r = synthetic.rules;
  return {
      {"task", task},
      {"seed", seed},
      {"context", context},
      {"train_fraction", train_fraction},
      {"strip_comments", strip_comments},
      {"provider",
       {{"kind", provider.kind},
        {"k", provider.k},
        {"seed", provider.seed},
        {"path", provider.path},
        {"endpoint", provider.endpoint},
        {"max_in_flight", provider.max_in_flight},
        {"timeout_s", provider.timeout_s}}},
      {"reducer",
       {{"latent_dim", reducer.latent_dim},
        {"hidden", reducer.hidden},
        {"leaky_slope", reducer.leaky_slope},
        {"dropout", reducer.dropout},
        {"bn_eps", reducer.bn_eps},
        {"bn_momentum", reducer.bn_momentum},
        {"epochs", reducer_train.epochs},
        {"batch_size", reducer_train.batch_size},
        {"learning_rate", reducer_train.learning_rate},
        {"weight_decay", reducer_train.weight_decay},
        {"beta1", reducer_train.beta1},
        {"beta2", reducer_train.beta2},
        {"adam_eps", reducer_train.adam_eps},
        {"validation_fraction", reducer_train.validation_fraction},
        {"recalibrate_batch_norm", reducer_train.recalibrate_batch_norm}}},
      {"head",
       {{"type", head.type},
        {"threshold", head.threshold},
        {"wns_threshold", head.wns_threshold},
        {"gbdt", gbdt},
        {"logistic", logistic}}},
      {"paths",
       {{"corpus", paths.corpus},
        {"labels", paths.labels},
        {"bundle", paths.bundle},
        {"cache", paths.cache},
        {"report", paths.report}}},
      {"synthetic",
       {{"n_modules", synthetic.n_modules},
        {"lines_per_module", synthetic.lines_per_module},
        {"modules_per_file", synthetic.modules_per_file},
        {"n_designs", synthetic.n_designs},
        {"seed", synthetic.seed},
        {"congestion_rate", r.congestion_rate},
        {"timing_trigger_rate", r.timing_trigger_rate},
        {"arith_rate", r.arith_rate},
        {"wns_intercept", r.wns_intercept},
        {"wns_per_mul", r.wns_per_mul},
        {"wns_per_add", r.wns_per_add}}},
  };
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  try {
    PipelineConfig c;
    c.task = j.at("task");
    c.seed = j.at("seed");
    c.context = j.at("context");
    c.train_fraction = j.at("train_fraction");
    c.strip_comments = j.at("strip_comments");

    const auto& p = j.at("provider");
    c.provider.kind = p.at("kind");
    c.provider.k = p.at("k");
    c.provider.seed = p.at("seed");
    c.provider.path = p.at("path");
    c.provider.endpoint = p.at("endpoint");
    c.provider.max_in_flight = p.at("max_in_flight");
    c.provider.timeout_s = p.at("timeout_s");

    const auto& r = j.at("reducer");
    c.reducer.latent_dim = r.at("latent_dim");
    c.reducer.hidden = r.at("hidden").get<std::vector<std::size_t>>();
    c.reducer.leaky_slope = r.at("leaky_slope");
    c.reducer.dropout = r.at("dropout");
    c.reducer.bn_eps = r.at("bn_eps");
    c.reducer.bn_momentum = r.at("bn_momentum");
    c.reducer_train.epochs = r.at("epochs");
    c.reducer_train.batch_size = r.at("batch_size");
    c.reducer_train.learning_rate = r.at("learning_rate");
    c.reducer_train.weight_decay = r.at("weight_decay");
    c.reducer_train.beta1 = r.at("beta1");
    c.reducer_train.beta2 = r.at("beta2");
    c.reducer_train.adam_eps = r.at("adam_eps");
    c.reducer_train.validation_fraction = r.at("validation_fraction");
    c.reducer_train.recalibrate_batch_norm = r.at("recalibrate_batch_norm");

    const auto& h = j.at("head");
    c.head.type = h.at("type");
    c.head.threshold = h.at("threshold");
    c.head.wns_threshold = h.at("wns_threshold");
    c.head.gbdt = heads::gbdt_config_from_json(h.at("gbdt"));
    c.head.logistic = heads::logistic_config_from_json(h.at("logistic"));

    const auto& pa = j.at("paths");
    c.paths.corpus = pa.at("corpus");
    c.paths.labels = pa.at("labels");
    c.paths.bundle = pa.at("bundle");
    c.paths.cache = pa.at("cache");
    c.paths.report = pa.at("report");

    const auto& s = j.at("synthetic");
    c.synthetic.n_modules = s.at("n_modules");
    c.synthetic.lines_per_module = s.at("lines_per_module");
    c.synthetic.modules_per_file = s.at("modules_per_file");
    c.synthetic.n_designs = s.at("n_designs");
    c.synthetic.seed = s.at("seed");
    c.synthetic.rules.congestion_rate = s.at("congestion_rate");
    c.synthetic.rules.timing_trigger_rate = s.at("timing_trigger_rate");
    c.synthetic.rules.arith_rate = s.at("arith_rate");
    c.synthetic.rules.wns_intercept = s.at("wns_intercept");
    c.synthetic.rules.wns_per_mul = s.at("wns_per_mul");
    c.synthetic.rules.wns_per_add = s.at("wns_per_add");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const DataError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

void PipelineConfig::validate() const {
  if (task != "all") eval::parse_task(task);
  if (provider.kind != "mock" && provider.kind != "file" && provider.kind != "remote") {
    throw ConfigError("config: provider.kind must be mock, file or remote");
  }
  if (provider.kind == "mock" && provider.k < 8) throw ConfigError("config: mock provider needs k >= 8");
  if (provider.kind == "file" && provider.path.empty()) {
    throw ConfigError("config: provider.path is required for the file provider");
  }
  if (provider.kind == "remote" && provider.endpoint.empty()) {
    throw ConfigError("config: provider.endpoint is required for the remote provider");
  }
  if (reducer.latent_dim < 1) throw ConfigError("config: reducer.latent_dim must be >= 1");
  if (!(reducer.dropout >= 0.0 && reducer.dropout < 1.0)) {
    throw ConfigError("config: reducer.dropout must be in [0, 1)");
  }
  if (reducer_train.batch_size < 2) throw ConfigError("config: reducer.batch_size must be >= 2");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("config: train_fraction must be in (0, 1)");
  }
  if (head.type != "gbdt" && head.type != "logistic") {
    throw ConfigError("config: head.type must be gbdt or logistic");
  }
  if (!(head.threshold >= 0.0 && head.threshold <= 1.0)) {
    throw ConfigError("config: head.threshold must be in [0, 1]");
  }
  try {
    head.gbdt.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config: head.") + e.what());
  }
}

std::vector<eval::Task> PipelineConfig::tasks() const {
  if (task == "all") return {eval::Task::kCongestion, eval::Task::kTiming, eval::Task::kWns};
  return {eval::parse_task(task)};
}

void apply_env_overrides(nlohmann::json& doc, const std::map<std::string, std::string>& env) {
  for (const auto& [name, value] : env) {
    if (!name.starts_with(kEnvPrefix)) continue;
    std::string rest = name.substr(kEnvPrefix.size());
    std::transform(rest.begin(), rest.end(), rest.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    std::vector<std::string> keys;
    for (std::size_t pos = 0;;) {
      const auto next = rest.find("__", pos);
      keys.push_back(rest.substr(pos, next - pos));
      if (next == std::string::npos) break;
      pos = next + 2;
    }
    nlohmann::json* node = &doc;
    std::string path;
    for (const auto& k : keys) {
      path += (path.empty() ? "" : ".") + k;
      if (!node->is_object() || !node->contains(k)) {
        throw ConfigError("config: environment variable " + name + " names unknown key '" + path +
                          "'");
      }
      node = &(*node)[k];
    }
    if (node->is_object()) {
      throw ConfigError("config: environment variable " + name + " names a section, not a value");
    }
    auto parsed = nlohmann::json::parse(value, nullptr, false);
    *node = (parsed.is_discarded() || (node->is_string() && !parsed.is_string()))
                ? nlohmann::json(value)
                : parsed;
  }
}

std::map<std::string, std::string> process_environment() {
  std::map<std::string, std::string> env;
  for (char** e = environ; e && *e; ++e) {
    const std::string_view entry(*e);
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    env.emplace(std::string(entry.substr(0, eq)), std::string(entry.substr(eq + 1)));
  }
  return env;
}

PipelineConfig load_config(const std::optional<std::filesystem::path>& file,
                           const std::map<std::string, std::string>& env,
                           const nlohmann::json* base) {
  nlohmann::json doc = base ? *base : PipelineConfig{}.to_json();
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("config: cannot open " + file->string());
    nlohmann::json patch;
    try {
      patch = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config: " + file->string() + ": " + e.what());
    }
    strict_merge(doc, patch, "");
  }
  apply_env_overrides(doc, env);
  PipelineConfig config = PipelineConfig::from_json(doc);
  config.validate();
  return config;
}

std::unique_ptr<embed::EmbeddingProvider> make_provider(const ProviderSpec& spec) {
  if (spec.kind == "mock") return std::make_unique<embed::MockProvider>(spec.k, spec.seed);
  if (spec.kind == "file") {
    if (!std::filesystem::exists(spec.path)) {
      throw ConfigError("embedding store not found: " + spec.path);
    }
    return std::make_unique<embed::FileStoreProvider>(spec.path);
  }
  if (spec.kind == "remote") {
    embed::RemoteProvider::Options o;
    o.max_in_flight = spec.max_in_flight;
    o.timeout_seconds = static_cast<int>(std::lround(spec.timeout_s));
    return std::make_unique<embed::RemoteProvider>(spec.endpoint, o);
  }
  throw ConfigError("unknown provider kind '" + spec.kind + "'");
}

}  // namespace locqor::pipeline
