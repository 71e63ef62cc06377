// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

#include "locqor/error.hpp"
#include "locqor/pipeline.hpp"
#include "test_support.hpp"

namespace locqor::pipeline {
namespace {

using nlohmann::json;

PipelineConfig small_config(const std::string& task = "congestion") {
  PipelineConfig c;
  c.task = task;
  c.seed = 3;
  c.context = 1;
  c.provider.k = 16;
  c.reducer.hidden = {32};
  c.reducer.latent_dim = 8;
  c.reducer_train.epochs = 4;
  c.reducer_train.batch_size = 32;
  c.reducer_train.learning_rate = 1e-2;
  c.head.gbdt.n_estimators = 20;
  c.head.gbdt.max_depth = 4;
  c.head.gbdt.learning_rate = 0.3;
  c.synthetic.n_modules = 12;
  c.synthetic.lines_per_module = 40;
  c.synthetic.n_designs = 2;
  c.synthetic.rules.congestion_rate = 0.15;
  return c;
}

class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir();
    const auto cfg = small_config();
    corpus::write_synthetic_corpus(corpus::generate_synthetic_corpus(cfg.synthetic), *dir_ / "c",
                                   *dir_ / "l.csv");
    dataset_ = new corpus::Dataset(corpus::build_dataset(*dir_ / "c", *dir_ / "l.csv", cfg.seed));
  }
  static void TearDownTestSuite() {
    delete dataset_;
    delete dir_;
  }
  static testing::TempDir* dir_;
  static corpus::Dataset* dataset_;
};

testing::TempDir* PipelineTest::dir_ = nullptr;
corpus::Dataset* PipelineTest::dataset_ = nullptr;

// --- configuration ---------------------------------------------------------------

TEST(Config, DefaultsRoundTripAndValidate) {
  const PipelineConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(PipelineConfig::from_json(c.to_json()).to_json(), c.to_json());
  EXPECT_EQ(c.reducer.hidden, (std::vector<std::size_t>{4096, 1024}));
  EXPECT_EQ(c.head.gbdt.n_estimators, 500);
  EXPECT_EQ(c.context, 5u);
}

TEST(Config, FileThenEnvironment) {
  testing::TempDir dir;
  std::ofstream(dir / "c.json") << R"({"seed": 9, "head": {"threshold": 0.3}, "reducer": {"hidden": [16]}})";
  const auto c = load_config(dir / "c.json", {{"LOCQOR_HEAD__THRESHOLD", "0.7"},
                                              {"LOCQOR_PROVIDER__KIND", "file"},
                                              {"LOCQOR_PROVIDER__PATH", "/tmp/store.bin"},
                                              {"UNRELATED", "x"}});
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.head.threshold, 0.7);
  EXPECT_EQ(c.provider.kind, "file");
  EXPECT_EQ(c.provider.path, "/tmp/store.bin");
  EXPECT_EQ(c.reducer.hidden, std::vector<std::size_t>{16});
  EXPECT_EQ(c.context, 5u);  // untouched default
}

TEST(Config, UnknownKeysRejected) {
  testing::TempDir dir;
  std::ofstream(dir / "c.json") << R"({"head": {"treshold": 0.3}})";
  try {
    load_config(dir / "c.json", {});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("treshold"), std::string::npos);
  }
  EXPECT_THROW(load_config(std::nullopt, {{"LOCQOR_NOPE", "1"}}), ConfigError);
}

TEST(Config, OutOfRangeValuesRejected) {
  EXPECT_THROW(load_config(std::nullopt, {{"LOCQOR_TRAIN_FRACTION", "1.5"}}), ConfigError);
  EXPECT_THROW(load_config(std::nullopt, {{"LOCQOR_TASK", "slack"}}), ConfigError);
  EXPECT_THROW(load_config(std::nullopt, {{"LOCQOR_HEAD__TYPE", "svm"}}), ConfigError);
  EXPECT_THROW(load_config(std::nullopt, {{"LOCQOR_SEED", "\"abc\""}}), ConfigError);
  testing::TempDir dir;
  std::ofstream(dir / "bad.json") << "{not json";
  EXPECT_THROW(load_config(dir / "bad.json", {}), ConfigError);
  EXPECT_THROW(load_config(dir / "missing.json", {}), ConfigError);
}

TEST(Config, TaskAllExpands) {
  auto c = small_config("all");
  ASSERT_EQ(c.tasks().size(), 3u);
  EXPECT_EQ(c.tasks()[2], eval::Task::kWns);
}

TEST(Config, ProviderFactory) {
  ProviderSpec spec;
  spec.k = 32;
  spec.seed = 5;
  const auto p = make_provider(spec);
  EXPECT_EQ(p->kind(), "mock");
  EXPECT_EQ(p->k(), 32u);
  spec.kind = "file";
  spec.path = "/nonexistent/store.bin";
  EXPECT_THROW(make_provider(spec), ConfigError);
  spec.kind = "carrier-pigeon";
  EXPECT_THROW(make_provider(spec), ConfigError);
}

// --- bundles ---------------------------------------------------------------------

TEST_F(PipelineTest, TrainProducesOneBundlePerTask) {
  const auto cfg = small_config("all");
  const auto provider = make_provider(cfg.provider);
  const auto result = train_pipeline(cfg, *dataset_, *provider);
  ASSERT_EQ(result.bundles.size(), 3u);
  EXPECT_EQ(result.bundles[0].task(), eval::Task::kCongestion);
  EXPECT_EQ(result.bundles[2].task(), eval::Task::kWns);
  // one shared reducer
  const auto t0 = reducer::to_tensors(result.bundles[0].autoencoder);
  const auto t1 = reducer::to_tensors(result.bundles[1].autoencoder);
  for (std::size_t i = 0; i < t0.size(); ++i) EXPECT_EQ(t0[i].data, t1[i].data);
  const auto& m = result.bundles[0].manifest;
  EXPECT_EQ(m["k"], 16);
  EXPECT_EQ(m["d"], 8);
  EXPECT_EQ(m["context"], 1);
  EXPECT_EQ(m["provider"]["identity"], provider->identity());
  EXPECT_FALSE(m["config"].contains("paths"));
  EXPECT_EQ(result.reducer_log.train_mse.size(), 4u);
}

TEST_F(PipelineTest, BundleRoundTripGivesIdenticalPredictions) {
  const auto cfg = small_config();
  const auto provider = make_provider(cfg.provider);
  const auto bundle = train_pipeline(cfg, *dataset_, *provider).bundles.at(0);
  testing::TempDir dir;
  save_bundle(bundle, dir / "m.bundle");
  const auto loaded = load_bundle(dir / "m.bundle");
  EXPECT_EQ(predict_dataset(bundle, *dataset_, *provider),
            predict_dataset(loaded, *dataset_, *provider));
  EXPECT_EQ(serialize_bundle(loaded), serialize_bundle(bundle));
}

TEST_F(PipelineTest, SameSeedByteIdenticalBundles) {
  ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  const auto cfg = small_config();
  const auto provider = make_provider(cfg.provider);
  const auto a = serialize_bundle(train_pipeline(cfg, *dataset_, *provider).bundles.at(0));
  const auto b = serialize_bundle(train_pipeline(cfg, *dataset_, *provider).bundles.at(0));
  ::unsetenv("SOURCE_DATE_EPOCH");
  EXPECT_EQ(a, b);
  auto other = cfg;
  other.seed = 4;
  EXPECT_NE(serialize_bundle(train_pipeline(other, *dataset_, *provider).bundles.at(0)), a);
}

TEST_F(PipelineTest, CorruptedBundleRejected) {
  const auto cfg = small_config();
  const auto provider = make_provider(cfg.provider);
  std::string bytes = serialize_bundle(train_pipeline(cfg, *dataset_, *provider).bundles.at(0));
  EXPECT_NO_THROW(parse_bundle(bytes));
  std::string flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x01;
  try {
    parse_bundle(flipped);
    FAIL();
  } catch (const BundleError& e) {
    EXPECT_NE(std::string(e.what()).find("hash"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_bundle(bytes.substr(0, 20)), BundleError);
  EXPECT_THROW(parse_bundle("NOTABNDL" + bytes.substr(8)), BundleError);
}

TEST_F(PipelineTest, ProviderMismatchDetected) {
  const auto cfg = small_config();
  const auto provider = make_provider(cfg.provider);
  const auto bundle = train_pipeline(cfg, *dataset_, *provider).bundles.at(0);
  EXPECT_NO_THROW(check_provider(bundle, *provider, false));
  embed::MockProvider reseeded(16, 99);
  EXPECT_THROW(check_provider(bundle, reseeded, false), ConfigError);
  EXPECT_NO_THROW(check_provider(bundle, reseeded, true));
  embed::MockProvider wider(24, 0);
  EXPECT_THROW(check_provider(bundle, wider, true), ConfigError);
}

TEST_F(PipelineTest, EvaluateProducesReport) {
  const auto cfg = small_config();
  const auto provider = make_provider(cfg.provider);
  const auto bundle = train_pipeline(cfg, *dataset_, *provider).bundles.at(0);
  const auto report = evaluate_bundle(bundle, *dataset_, *provider);
  EXPECT_EQ(report.task, eval::Task::kCongestion);
  EXPECT_EQ(report.overall.counts->total(), dataset_->test_count());
  EXPECT_GT(report.overall.prf->f1, 0.5);
}

TEST_F(PipelineTest, LogisticHeadTrainsAndRejectsWns) {
  auto cfg = small_config();
  cfg.head.type = "logistic";
  cfg.head.logistic.epochs = 3;
  cfg.head.logistic.lr = 1e-2;
  const auto provider = make_provider(cfg.provider);
  const auto bundle = train_pipeline(cfg, *dataset_, *provider).bundles.at(0);
  EXPECT_EQ(bundle.head.type(), "logistic");
  const auto back = parse_bundle(serialize_bundle(bundle));
  EXPECT_EQ(predict_dataset(back, *dataset_, *provider), predict_dataset(bundle, *dataset_, *provider));
  cfg.task = "wns";
  EXPECT_THROW(train_pipeline(cfg, *dataset_, *provider), ConfigError);
}

TEST_F(PipelineTest, AnnotateFlagsPlantedLine) {
  const auto cfg = small_config();
  const auto provider = make_provider(cfg.provider);
  const auto bundle = train_pipeline(cfg, *dataset_, *provider).bundles.at(0);
  const std::string src =
      "// header\n\nmodule probe(input a, output y);\n  wire w0;\n  assign w0 = a CONGTAG ;\n"
      "  wire w1;\n  assign y = w0;\nendmodule\n";
  const auto diags = annotate_source({bundle}, src, "probe.v", *provider);
  bool flagged_line5 = false;
  for (const auto& d : diags) {
    EXPECT_EQ(d.path, "probe.v");
    EXPECT_EQ(d.module_id, "probe");
    EXPECT_GE(d.score, d.threshold);
    flagged_line5 |= d.line == 5;
    const auto j = d.to_json();
    EXPECT_EQ(j["task"], "congestion");
  }
  EXPECT_TRUE(flagged_line5);
  EXPECT_THROW(annotate_source({bundle}, "wire x;\n", "empty.v", *provider), SourceError);
  try {
    annotate_source({bundle}, "module a;\n/* open\n", "bad.v", *provider);
    FAIL();
  } catch (const SourceError& e) {
    EXPECT_EQ(e.line(), 2);
  }
}

TEST(ResolveBundles, FileOrDirectory) {
  testing::TempDir dir;
  std::filesystem::create_directories(dir / "b");
  for (const char* name : {"timing.bundle", "congestion.bundle", "notes.txt"}) {
    std::ofstream(dir / "b" / name) << "x";
  }
  const auto found = resolve_bundles(dir / "b");
  ASSERT_EQ(found.size(), 2u);
  EXPECT_EQ(found[0].filename(), "congestion.bundle");
  EXPECT_EQ(resolve_bundles(dir / "b" / "timing.bundle").size(), 1u);
  EXPECT_THROW(resolve_bundles(dir / "none"), ConfigError);
  std::filesystem::create_directories(dir / "empty");
  EXPECT_THROW(resolve_bundles(dir / "empty"), ConfigError);
}

TEST(CreationTimestamp, HonorsSourceDateEpoch) {
  ::setenv("SOURCE_DATE_EPOCH", "0", 1);
  EXPECT_EQ(creation_timestamp(), "1970-01-01T00:00:00Z");
  ::unsetenv("SOURCE_DATE_EPOCH");
  EXPECT_EQ(creation_timestamp().size(), 20u);
}

}  // namespace
}  // namespace locqor::pipeline
