// SPDX-License-Identifier: Apache-2.0
//
// Configuration, model bundles and the train / evaluate / annotate flows
// behind the command-line tool.
#pragma once

#include <filesystem>
#include <functional>
#include <json.hpp>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "locqor/corpus.hpp"
#include "locqor/embedding.hpp"
#include "locqor/eval.hpp"
#include "locqor/features.hpp"
#include "locqor/heads.hpp"
#include "locqor/reducer.hpp"

namespace locqor::pipeline {

// --- configuration -------------------------------------------------------------

struct ProviderSpec {
  std::string kind = "mock";  // mock | file | remote
  std::size_t k = 64;         // mock only; file and remote report their own width
  std::uint64_t seed = 0;     // mock only
  std::string path;           // file store
  std::string endpoint;       // remote
  std::size_t max_in_flight = 4;
  double timeout_s = 30.0;
};

struct HeadSpec {
  std::string type = "gbdt";  // gbdt | logistic
  heads::GbdtConfig gbdt;
  heads::LogisticConfig logistic;
  double threshold = 0.5;      // classification operating point
  double wns_threshold = 0.0;  // annotate flags predicted WNS below this (ns)
};

struct Paths {
  std::string corpus;
  std::string labels;
  std::string bundle;  // output of train; a directory for --task all
  std::string cache;   // optional embedding cache file
  std::string report;  // output directory of evaluate
};

struct PipelineConfig {
  std::string task = "congestion";  // congestion | timing | wns | all
  std::uint64_t seed = 1;
  std::size_t context = 5;
  double train_fraction = 0.8;
  bool strip_comments = false;
  ProviderSpec provider;
  reducer::AutoencoderConfig reducer;  // input_dim is set from the provider
  reducer::TrainConfig reducer_train;
  HeadSpec head;
  Paths paths;
  corpus::SyntheticConfig synthetic;

  nlohmann::json to_json() const;
  /// Reads a complete document as produced by to_json(); see load_config for
  /// partial documents.
  static PipelineConfig from_json(const nlohmann::json& j);
  /// Throws ConfigError on an out-of-range value.
  void validate() const;
  std::vector<eval::Task> tasks() const;
};

/// Applies LOCQOR_<A>__<B>=value entries onto the nested key a.b. Values are
/// parsed as JSON when possible, otherwise taken as strings. Unknown keys
/// are a ConfigError.
void apply_env_overrides(nlohmann::json& doc, const std::map<std::string, std::string>& env);
std::map<std::string, std::string> process_environment();

/// Defaults, then the optional file, then environment overrides. `base`
/// replaces the built-in defaults (as a complete to_json() document).
PipelineConfig load_config(const std::optional<std::filesystem::path>& file,
                           const std::map<std::string, std::string>& env,
                           const nlohmann::json* base = nullptr);

std::unique_ptr<embed::EmbeddingProvider> make_provider(const ProviderSpec& spec);

// --- heads -----------------------------------------------------------------------

struct HeadModel {
  std::variant<heads::GbdtModel, heads::LogisticModel> model;

  std::string type() const;
  /// Probability (classification) or predicted WNS (regression).
  double score(std::span<const double> f) const;
  nlohmann::json to_json() const;
  static HeadModel from_json(const nlohmann::json& j);
};

// --- bundles ---------------------------------------------------------------------

inline constexpr std::string_view kBundleMagic = "LOCQBDL1";
inline constexpr int kBundleFormat = 1;

/// Byte layout: magic | sha256 of everything after it | u64 manifest length |
/// manifest JSON | u32 tensor count | per tensor (u32 name length, name,
/// u32 rank, u32 dims, f32 data) | u64 head length | head JSON.
struct ModelBundle {
  nlohmann::json manifest;
  reducer::Autoencoder autoencoder;
  HeadModel head;

  eval::Task task() const;
  std::size_t context() const;
  std::string provider_identity() const;
};

std::string serialize_bundle(const ModelBundle& bundle);
/// Throws BundleError on a bad magic, hash mismatch or malformed payload.
ModelBundle parse_bundle(std::string_view bytes);
void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_bundle(const std::filesystem::path& path);

/// ISO-8601 UTC creation time, from SOURCE_DATE_EPOCH when set.
std::string creation_timestamp();

// --- flows -----------------------------------------------------------------------

using LogFn = std::function<void(const std::string&)>;

struct TrainResult {
  std::vector<ModelBundle> bundles;  // one per task, in tasks() order
  reducer::TrainLog reducer_log;
  std::vector<heads::GbdtTrainLog> gbdt_logs;
};

/// Trains the autoencoder once on the train split, then one head per task.
TrainResult train_pipeline(const PipelineConfig& config, const corpus::Dataset& dataset,
                           const embed::EmbeddingProvider& provider,
                           embed::EmbeddingCache* cache = nullptr, const LogFn& log = {});

/// Scores every example of `dataset` in dataset order.
std::vector<double> predict_dataset(const ModelBundle& bundle, const corpus::Dataset& dataset,
                                    const embed::EmbeddingProvider& provider,
                                    embed::EmbeddingCache* cache = nullptr);

/// Throws ConfigError when the provider identity or width differs from the
/// bundle's, unless `allow_mismatch`.
void check_provider(const ModelBundle& bundle, const embed::EmbeddingProvider& provider,
                    bool allow_mismatch);

eval::MetricsReport evaluate_bundle(const ModelBundle& bundle, const corpus::Dataset& dataset,
                                    const embed::EmbeddingProvider& provider,
                                    embed::EmbeddingCache* cache = nullptr);

struct Diagnostic {
  std::string path;
  std::string module_id;
  int line = 0;  // 1-based line in the annotated file
  std::string task;
  double score = 0.0;
  double threshold = 0.0;
  std::optional<double> predicted_wns;

  nlohmann::json to_json() const;
};

/// Flags lines of one source file under every bundle; sorted by line, then
/// bundle order.
std::vector<Diagnostic> annotate_source(const std::vector<ModelBundle>& bundles,
                                        std::string_view source, const std::string& path,
                                        const embed::EmbeddingProvider& provider,
                                        embed::EmbeddingCache* cache = nullptr);

/// Paths of the bundles to load: a file as is, or every *.bundle in a
/// directory in name order.
std::vector<std::filesystem::path> resolve_bundles(const std::filesystem::path& path);

}  // namespace locqor::pipeline
