// SPDX-License-Identifier: Apache-2.0
//
// locqor: predict congestion, timing and WNS for lines of Verilog source.
#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>

#include "locqor/error.hpp"
#include "locqor/pipeline.hpp"
#include "locqor/util.hpp"

namespace fs = std::filesystem;
using namespace locqor;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitFlagged = 2;
constexpr int kExitRuntime = 3;

void log(const std::string& msg) { std::cerr << "[locqor] " << msg << '\n'; }

struct CommonFlags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> task;
  std::optional<std::size_t> context;
  std::optional<std::string> provider;
  std::optional<std::string> endpoint;
  std::optional<std::string> store;
  std::optional<std::size_t> k;
  std::optional<std::string> cache;

  void attach(CLI::App* app, bool with_task) {
    app->add_option("--config", config, "JSON configuration file")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "Seed for splitting and training");
    if (with_task) {
      app->add_option("--task", task, "congestion, timing, wns, or all")
          ->check(CLI::IsMember({"congestion", "timing", "wns", "all"}));
      app->add_option("--context", context, "Context radius p (lines on each side)");
    }
    app->add_option("--provider", provider, "Embedding provider")
        ->check(CLI::IsMember({"mock", "file", "remote"}));
    app->add_option("--endpoint", endpoint, "Embedding server URL (remote provider)");
    app->add_option("--store", store, "Embedding store file (file provider)");
    app->add_option("--k", k, "Hidden width of the mock provider");
    app->add_option("--cache", cache, "Embedding cache file (read and updated)");
  }

  pipeline::PipelineConfig load(const nlohmann::json* base = nullptr) const {
    std::optional<fs::path> file;
    if (config) file = *config;
    auto c = pipeline::load_config(file, pipeline::process_environment(), base);
    if (seed) c.seed = *seed;
    if (task) c.task = *task;
    if (context) c.context = *context;
    if (provider) c.provider.kind = *provider;
    if (endpoint) c.provider.endpoint = *endpoint;
    if (store) c.provider.path = *store;
    if (k) c.provider.k = *k;
    if (cache) c.paths.cache = *cache;
    c.validate();
    return c;
  }
};

// Keeps an optional on-disk embedding cache in sync for one command.
class CacheFile {
 public:
  explicit CacheFile(const std::string& path) : path_(path) {
    if (!path_.empty() && fs::exists(path_)) cache_.load(path_);
  }
  embed::EmbeddingCache* get() { return path_.empty() ? nullptr : &cache_; }
  void save() const {
    if (!path_.empty()) cache_.save(path_);
  }

 private:
  std::string path_;
  embed::EmbeddingCache cache_;
};

// Base config for evaluate/annotate: defaults with the provider recorded in
// the bundle, so a mock-trained bundle needs no provider flags.
nlohmann::json base_from_bundle(const pipeline::ModelBundle& b) {
  nlohmann::json base = pipeline::PipelineConfig{}.to_json();
  if (b.manifest.contains("config") && b.manifest["config"].contains("provider")) {
    base["provider"] = b.manifest["config"]["provider"];
  }
  return base;
}

int cmd_gen_synthetic(const CommonFlags& f, const std::optional<std::string>& out,
                      std::optional<int> modules, std::optional<int> lines,
                      std::optional<int> designs) {
  auto c = f.load();
  if (out) {
    c.paths.corpus = (fs::path(*out) / "corpus").string();
    c.paths.labels = (fs::path(*out) / "labels.csv").string();
  }
  if (c.paths.corpus.empty() || c.paths.labels.empty()) {
    throw ConfigError("gen-synthetic: give --out or paths.corpus and paths.labels");
  }
  if (f.seed) c.synthetic.seed = *f.seed;
  if (modules) c.synthetic.n_modules = *modules;
  if (lines) c.synthetic.lines_per_module = *lines;
  if (designs) c.synthetic.n_designs = *designs;
  const auto corpus = corpus::generate_synthetic_corpus(c.synthetic);
  corpus::write_synthetic_corpus(corpus, c.paths.corpus, c.paths.labels);
  log("wrote " + std::to_string(corpus.files.size()) + " files and " +
      std::to_string(corpus.labels.size()) + " label rows to " + c.paths.corpus + " and " +
      c.paths.labels);
  return kExitOk;
}

int cmd_train(const CommonFlags& f, const std::optional<std::string>& corpus_dir,
              const std::optional<std::string>& labels, const std::optional<std::string>& out) {
  auto c = f.load();
  if (corpus_dir) c.paths.corpus = *corpus_dir;
  if (labels) c.paths.labels = *labels;
  if (out) c.paths.bundle = *out;
  if (c.paths.corpus.empty() || c.paths.labels.empty() || c.paths.bundle.empty()) {
    throw ConfigError("train: corpus, labels and output bundle paths are required");
  }
  if (!fs::exists(c.paths.labels)) throw DataError("label file not found: " + c.paths.labels);
  const auto dataset = corpus::build_dataset(c.paths.corpus, c.paths.labels, c.seed,
                                             c.train_fraction, {c.strip_comments});
  const auto provider = pipeline::make_provider(c.provider);
  CacheFile cache(c.paths.cache);
  auto result = pipeline::train_pipeline(c, dataset, *provider, cache.get(), log);
  cache.save();

  const bool suite = c.task == "all";
  for (const auto& b : result.bundles) {
    const fs::path path = suite ? fs::path(c.paths.bundle) /
                                      (b.manifest["task"].get<std::string>() + ".bundle")
                                : fs::path(c.paths.bundle);
    pipeline::save_bundle(b, path);
    log("wrote " + path.string());
  }
  const auto& rl = result.reducer_log;
  nlohmann::json summary = {{"epochs", rl.epochs},
                            {"seed", rl.seed},
                            {"learning_rate", rl.learning_rate},
                            {"weight_decay", rl.weight_decay},
                            {"batch_size", rl.batch_size},
                            {"best_epoch", rl.best_epoch},
                            {"best_val_mse", rl.best_val_mse}};
  if (!rl.train_mse.empty()) summary["final_train_mse"] = rl.train_mse.back();
  log("train log " + summary.dump());
  return kExitOk;
}

std::vector<pipeline::ModelBundle> load_bundles(const std::vector<std::string>& args) {
  std::vector<pipeline::ModelBundle> out;
  for (const auto& a : args) {
    for (const auto& p : pipeline::resolve_bundles(a)) out.push_back(pipeline::load_bundle(p));
  }
  if (out.empty()) throw ConfigError("no bundle given");
  return out;
}

int cmd_evaluate(const CommonFlags& f, const std::vector<std::string>& bundle_args,
                 const std::optional<std::string>& corpus_dir,
                 const std::optional<std::string>& labels, const std::optional<std::string>& out,
                 bool allow_mismatch) {
  const auto bundles = load_bundles(bundle_args);
  const auto base = base_from_bundle(bundles.front());
  auto c = f.load(&base);
  if (corpus_dir) c.paths.corpus = *corpus_dir;
  if (labels) c.paths.labels = *labels;
  if (out) c.paths.report = *out;
  if (c.paths.corpus.empty() || c.paths.labels.empty()) {
    throw ConfigError("evaluate: corpus and labels paths are required");
  }
  if (!fs::exists(c.paths.labels)) throw DataError("label file not found: " + c.paths.labels);
  const auto provider = pipeline::make_provider(c.provider);
  CacheFile cache(c.paths.cache);
  for (const auto& b : bundles) {
    pipeline::check_provider(b, *provider, allow_mismatch);
    const auto dataset = corpus::build_dataset(
        c.paths.corpus, c.paths.labels, b.manifest["seeds"]["split_seed"].get<std::uint64_t>(),
        b.manifest["train_fraction"].get<double>(),
        {b.manifest.value("strip_comments", false)});
    const auto report = pipeline::evaluate_bundle(b, dataset, *provider, cache.get());
    std::cout << report.to_text();
    if (!c.paths.report.empty()) {
      fs::create_directories(c.paths.report);
      const std::string stem = "report_" + eval::to_string(report.task);
      const fs::path dir(c.paths.report);
      write_file((dir / (stem + ".json")).string(), report.to_json().dump(2) + "\n");
      write_file((dir / (stem + ".txt")).string(), report.to_text());
      log("wrote " + (dir / (stem + ".json")).string());
    }
  }
  cache.save();
  return kExitOk;
}

int cmd_annotate(const CommonFlags& f, const std::vector<std::string>& bundle_args,
                 const std::vector<std::string>& files, bool fail_on_flag, bool allow_mismatch) {
  const auto bundles = load_bundles(bundle_args);
  const auto base = base_from_bundle(bundles.front());
  const auto c = f.load(&base);
  const auto provider = pipeline::make_provider(c.provider);
  for (const auto& b : bundles) pipeline::check_provider(b, *provider, allow_mismatch);
  CacheFile cache(c.paths.cache);
  std::size_t flagged = 0;
  for (const auto& path : files) {
    const std::string source = read_file(path);
    for (const auto& d : pipeline::annotate_source(bundles, source, path, *provider, cache.get())) {
      std::cout << d.to_json().dump() << '\n';
      ++flagged;
    }
  }
  std::cout.flush();
  cache.save();
  return fail_on_flag && flagged > 0 ? kExitFlagged : kExitOk;
}

int cmd_serve_info(const CommonFlags& f) {
  const auto c = f.load();
  const auto provider = pipeline::make_provider(c.provider);
  nlohmann::json info = {{"kind", provider->kind()},
                         {"k", provider->k()},
                         {"identity", provider->identity()}};
  if (const auto* remote = dynamic_cast<const embed::RemoteProvider*>(provider.get())) {
    info["backend"] = remote->backend();
    info["endpoint"] = c.provider.endpoint;
  }
  std::cout << info.dump() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Line-level congestion, timing and WNS prediction for Verilog"};
  app.require_subcommand(1);

  CommonFlags gen_f, train_f, eval_f, ann_f, info_f;

  auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic corpus and label file");
  gen_f.attach(gen, false);
  std::optional<std::string> gen_out;
  std::optional<int> gen_modules, gen_lines, gen_designs;
  gen->add_option("--out", gen_out, "Output directory (corpus/ and labels.csv)");
  gen->add_option("--modules", gen_modules, "Number of modules");
  gen->add_option("--lines", gen_lines, "Lines per module");
  gen->add_option("--designs", gen_designs, "Number of designs");

  auto* train = app.add_subcommand("train", "Train the autoencoder and a prediction head");
  train_f.attach(train, true);
  std::optional<std::string> train_corpus, train_labels, train_out;
  train->add_option("--corpus", train_corpus, "Corpus directory (<design>/*.v)");
  train->add_option("--labels", train_labels, "Label CSV");
  train->add_option("--out", train_out, "Bundle file, or a directory with --task all");

  auto* evaluate = app.add_subcommand("evaluate", "Score a bundle on the held-out split");
  eval_f.attach(evaluate, false);
  std::vector<std::string> eval_bundles;
  std::optional<std::string> eval_corpus, eval_labels, eval_out;
  bool eval_allow = false;
  evaluate->add_option("--bundle", eval_bundles, "Bundle file or suite directory")->required();
  evaluate->add_option("--corpus", eval_corpus, "Corpus directory");
  evaluate->add_option("--labels", eval_labels, "Label CSV");
  evaluate->add_option("--out", eval_out, "Directory for JSON and text reports");
  evaluate->add_flag("--allow-provider-mismatch", eval_allow,
                     "Accept a provider whose identity differs from the bundle's");

  auto* annotate = app.add_subcommand("annotate", "Flag lines of Verilog files (NDJSON on stdout)");
  ann_f.attach(annotate, false);
  std::vector<std::string> ann_bundles, ann_files;
  bool ann_fail = false, ann_allow = false;
  annotate->add_option("--bundle", ann_bundles, "Bundle file or suite directory (repeatable)")
      ->required();
  annotate->add_option("files", ann_files, "Verilog files")->required()->check(CLI::ExistingFile);
  annotate->add_flag("--fail-on-flag", ann_fail, "Exit with status 2 when any line is flagged");
  annotate->add_flag("--allow-provider-mismatch", ann_allow,
                     "Accept a provider whose identity differs from the bundle's");

  auto* info = app.add_subcommand("serve-info", "Print the configured provider's identity");
  info_f.attach(info, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_synthetic(gen_f, gen_out, gen_modules, gen_lines, gen_designs);
    if (*train) return cmd_train(train_f, train_corpus, train_labels, train_out);
    if (*evaluate) {
      return cmd_evaluate(eval_f, eval_bundles, eval_corpus, eval_labels, eval_out, eval_allow);
    }
    if (*annotate) return cmd_annotate(ann_f, ann_bundles, ann_files, ann_fail, ann_allow);
    if (*info) return cmd_serve_info(info_f);
  } catch (const ConfigError& e) {
    std::cerr << "locqor: error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const SourceError& e) {
    std::cerr << "locqor: error: line " << e.line() << ": " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "locqor: error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
