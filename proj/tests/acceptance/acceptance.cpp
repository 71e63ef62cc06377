// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Each check compares against an independent oracle or a
// stated threshold and reports the measured values.
#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <unistd.h>

#include "locqor/embedding.hpp"
#include "locqor/eval.hpp"
#include "locqor/heads.hpp"
#include "locqor/pipeline.hpp"
#include "locqor/reducer.hpp"
#include "locqor/util.hpp"

namespace fs = std::filesystem;
using namespace locqor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// --- pooling ------------------------------------------------------------------------

Outcome pooling_oracle() {
  Rng rng(101);
  double worst = 0.0, worst_masked = 0.0;
  for (int c = 0; c < 1000; ++c) {
    embed::HiddenStates hs;
    const std::size_t n = 1 + rng.below(64), k = 1 + rng.below(96);
    hs.k = k;
    hs.matrix.resize(n * k);
    for (double& v : hs.matrix) v = rng.normal() * std::pow(10.0, rng.uniform() * 4 - 2);
    hs.mask.resize(n);
    for (auto& m : hs.mask) m = rng.uniform() < 0.6;
    hs.mask[rng.below(n)] = 1;

    const auto got = embed::masked_mean_pool(hs);
    // column-major accumulation, independent of the library's row loop
    for (std::size_t j = 0; j < k; ++j) {
      long double s = 0;
      std::size_t cnt = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (hs.mask[i] == 1) {
          s += hs.matrix[i * k + j];
          ++cnt;
        }
      }
      const double want = static_cast<double>(s / cnt);
      worst = std::max(worst, std::abs(got[j] - want) / std::max(1.0, std::abs(want)));
    }
    // masked rows rewritten with garbage must not move the result
    auto noisy = hs;
    for (std::size_t i = 0; i < n; ++i) {
      if (!noisy.mask[i]) {
        for (std::size_t j = 0; j < k; ++j) noisy.matrix[i * k + j] = rng.normal() * 1e9;
      }
    }
    const auto again = embed::masked_mean_pool(noisy);
    for (std::size_t j = 0; j < k; ++j) worst_masked = std::max(worst_masked, std::abs(again[j] - got[j]));
  }
  return {worst <= 1e-12 && worst_masked <= 1e-15,
          "1000 cases, max rel err " + fmt("%.2e", worst) + ", masked-row drift " + fmt("%.2e", worst_masked)};
}

// --- autoencoder --------------------------------------------------------------------

Eigen::MatrixXd gaussian(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.normal();
  return m;
}

Outcome ae_gradient_check() {
  reducer::AutoencoderConfig cfg;
  cfg.input_dim = 8;
  cfg.hidden = {8, 4};
  cfg.latent_dim = 2;
  const auto model = reducer::Autoencoder::create(cfg, 7);
  Rng rng(8);
  const Eigen::MatrixXd x = gaussian(8, 4, rng);
  reducer::GradientCheckOptions opts;
  opts.samples_per_tensor = 100000;  // all coordinates
  opts.step = 1e-5;
  opts.tolerance = 1e-4;
  const auto good = reducer::gradient_check(model, x, opts);

  auto grads = reducer::analytic_gradients(model, x);
  grads[2].gamma(0) *= 1.05;  // latent-layer BatchNorm scale
  grads[2].gamma(0) += 1e-3;
  const auto bad = reducer::check_gradients(model, x, grads, opts);
  return {good.passed && !bad.passed,
          std::to_string(good.checked) + " coords, max rel err " + fmt("%.2e", good.max_rel_error) +
              "; corrupted control max rel err " + fmt("%.2e", bad.max_rel_error) +
              (bad.passed ? " (control wrongly passed)" : " (control rejected)")};
}

struct Manifold {
  Eigen::MatrixXd x;  // N x 64
  double floor = 0.0;
  double mean_var = 0.0;
};

// 2000 samples x = U z + 0.01 e with U a random orthonormal 64x8 basis; the
// floor is the per-entry error of the best rank-8 affine reconstruction.
Manifold make_manifold(std::uint64_t seed) {
  Rng rng(seed);
  const int n = 2000, dim = 64, m = 8;
  const Eigen::MatrixXd a = gaussian(dim, m, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  const Eigen::MatrixXd u = qr.householderQ() * Eigen::MatrixXd::Identity(dim, m);
  Manifold out;
  out.x = gaussian(n, m, rng) * u.transpose() + 0.01 * gaussian(n, dim, rng);
  const Eigen::MatrixXd c = out.x.rowwise() - out.x.colwise().mean();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.transpose() * c / n);
  out.floor = es.eigenvalues().head(dim - m).sum() / dim;  // ascending order
  out.mean_var = es.eigenvalues().sum() / dim;
  return out;
}

double reconstruction_mse(const reducer::Autoencoder& ae, const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd xt = x.transpose();
  return (ae.reconstruct_batch(xt) - xt).squaredNorm() / static_cast<double>(xt.size());
}

Outcome ae_learning() {
  const auto data = make_manifold(2024);
  reducer::AutoencoderConfig cfg;
  cfg.input_dim = 64;
  cfg.latent_dim = 16;
  cfg.hidden = {};
  reducer::TrainConfig tc;
  tc.epochs = 200;
  tc.batch_size = 2000;
  tc.learning_rate = 3e-2;
  tc.validation_fraction = 0.0;
  tc.seed = 11;
  reducer::TrainLog log;
  const auto ae = reducer::train_autoencoder(data.x, cfg, tc, &log);
  const double mse = reconstruction_mse(ae, data.x);
  const double ratio = mse / data.floor;
  const bool pass = ratio <= 3.0 && log.train_mse.back() < log.train_mse.front() &&
                    mse < 0.1 * data.mean_var;
  return {pass, "floor " + fmt("%.3e", data.floor) + ", mse " + fmt("%.3e", mse) + " (" +
                    fmt("%.2f", ratio) + "x floor), train mse " + fmt("%.3e", log.train_mse.front()) +
                    " -> " + fmt("%.3e", log.train_mse.back())};
}

// Same data under the library's default widths and optimizer settings; for
// information only.
void ae_learning_defaults_info() {
  const auto data = make_manifold(2024);
  reducer::AutoencoderConfig cfg;
  cfg.input_dim = 64;
  cfg.latent_dim = 16;
  cfg.hidden = {128, 64};
  reducer::TrainConfig tc;
  tc.epochs = 200;
  tc.seed = 11;
  const auto ae = reducer::train_autoencoder(data.x, cfg, tc);
  std::printf("INFO  ae_learning_default_optimizer  mse %.3e = %.0fx floor (hidden 128/64, lr 1e-4, batch 128, dropout 0.3)\n",
              reconstruction_mse(ae, data.x), reconstruction_mse(ae, data.x) / data.floor);
}

// --- gbdt ---------------------------------------------------------------------------

Outcome gbdt_properties() {
  std::vector<std::string> notes;
  bool ok = true;
  Rng rng(5);

  // regression monotonicity
  const std::size_t n = 500, w = 6;
  std::vector<double> x(n * w), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double t = 0;
    for (std::size_t c = 0; c < w; ++c) {
      x[i * w + c] = rng.uniform() * 2 - 1;
      t += std::sin(3 * x[i * w + c]) * (c + 1);
    }
    y[i] = t + 0.2 * rng.normal();
  }
  heads::GbdtConfig reg;
  reg.task = heads::GbdtTask::kRegression;
  reg.n_estimators = 500;
  reg.learning_rate = 0.05;
  reg.max_depth = 4;
  heads::GbdtTrainLog log;
  heads::train_gbdt({x, n, w}, y, reg, &log);
  std::size_t increases = 0;
  for (std::size_t t = 1; t < log.loss.size(); ++t) increases += log.loss[t] > log.loss[t - 1];
  ok &= increases == 0 && log.loss.size() == 501;
  notes.push_back("mse " + fmt("%.3f", log.loss.front()) + " -> " + fmt("%.4f", log.loss.back()) +
                  " over " + std::to_string(log.loss.size() - 1) + " trees, " +
                  std::to_string(increases) + " increases");

  // memorization: one unrestricted tree at learning rate 1
  heads::GbdtConfig mem = reg;
  mem.n_estimators = 1;
  mem.learning_rate = 1.0;
  mem.max_depth = 30;
  const auto mm = heads::train_gbdt({x, n, w}, y, mem);
  double max_err = 0;
  for (std::size_t i = 0; i < n; ++i) {
    max_err = std::max(max_err, std::abs(heads::predict_gbdt(mm, std::span<const double>(x).subspan(i * w, w)) - y[i]));
  }
  ok &= max_err < 1e-12;
  notes.push_back("memorization max err " + fmt("%.1e", max_err));

  // 95/5 separable set
  std::vector<double> bx, by;
  for (int i = 0; i < 100; ++i) {
    const bool pos = i >= 95;
    bx.push_back(pos ? 1.0 + rng.uniform() : rng.uniform() * 0.9);
    bx.push_back(rng.normal());
    by.push_back(pos ? 1 : 0);
  }
  const double formula = 95.0 / 5.0;
  const double auto_w = heads::auto_pos_weight(by);
  auto bin = heads::GbdtConfig::depth_limited(heads::GbdtTask::kBinary);
  bin.n_estimators = 50;
  const auto bm = heads::train_gbdt({bx, 100, 2}, by, bin);
  int tp = 0;
  for (int i = 95; i < 100; ++i) tp += heads::classify(heads::predict_gbdt(bm, std::span<const double>(bx).subspan(i * 2, 2)));
  ok &= auto_w == formula && bm.pos_weight == 19.0 && tp == 5;
  notes.push_back("pos_weight " + fmt("%.1f", bm.pos_weight) + ", recall " + fmt("%.2f", tp / 5.0));

  std::string detail;
  for (const auto& s : notes) detail += (detail.empty() ? "" : "; ") + s;
  return {ok, detail};
}

// --- metrics ------------------------------------------------------------------------

Outcome metric_oracles() {
  Rng rng(77);
  std::size_t mismatches = 0, cases = 0;
  for (int c = 0; c < 2000; ++c, ++cases) {
    const std::size_t n = 1 + rng.below(50);
    std::vector<std::uint8_t> t(n), p(n);
    const double rate = rng.uniform();
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = rng.uniform() < rate;
      p[i] = rng.uniform() < rate;
    }
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (t[i] && p[i]) ++tp;
      if (!t[i] && p[i]) ++fp;
      if (t[i] && !p[i]) ++fn;
    }
    const double prec = tp + fp ? double(tp) / double(tp + fp) : 0.0;
    const double rec = tp + fn ? double(tp) / double(tp + fn) : 0.0;
    const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    const auto got = eval::precision_recall_f1(eval::confusion(t, p));
    mismatches += got.precision != prec || got.recall != rec || got.f1 != f1;

    std::vector<double> y(n + 1), h(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
      y[i] = -(0.01 + rng.uniform() * 3);
      h[i] = y[i] + 0.5 * rng.normal();
    }
    double mean = 0;
    for (double v : y) mean += v;
    mean /= double(y.size());
    double sse = 0, sst = 0, ape = 0, wmin = y[0];
    for (std::size_t i = 0; i < y.size(); ++i) {
      sse += (y[i] - h[i]) * (y[i] - h[i]);
      sst += (y[i] - mean) * (y[i] - mean);
      ape += std::abs(y[i] - h[i]) / std::abs(y[i]);
      if (y[i] < wmin) wmin = y[i];
    }
    mismatches += eval::r2(y, h) != 1.0 - sse / sst;
    mismatches += eval::mape(y, h) != ape / double(y.size());
    mismatches += eval::module_wns(y) != wmin;
  }
  // degenerate ratios
  const auto none = eval::precision_recall_f1({0, 0, 10, 0});
  const auto miss = eval::precision_recall_f1({0, 0, 3, 4});
  const bool degenerate = none.precision == 0 && none.recall == 0 && none.f1 == 0 &&
                          miss.precision == 0 && miss.f1 == 0;
  return {mismatches == 0 && degenerate,
          std::to_string(cases) + " fuzzed cases, " + std::to_string(mismatches) +
              " mismatches; 0/0 rule " + (degenerate ? "honored" : "violated")};
}

// --- end to end ---------------------------------------------------------------------

pipeline::PipelineConfig e2e_config(const std::string& task, std::size_t context) {
  pipeline::PipelineConfig c;
  c.task = task;
  c.seed = 1;
  c.context = context;
  c.provider.k = 64;
  c.reducer.latent_dim = 128;
  c.reducer.hidden = {256, 128};
  c.reducer_train.epochs = 50;
  c.head.gbdt.n_estimators = 100;
  c.head.gbdt.max_depth = 6;
  return c;
}

struct E2E {
  fs::path dir;
  corpus::Dataset dataset;
  std::unique_ptr<embed::EmbeddingProvider> provider;
  embed::EmbeddingCache cache;
  std::map<std::string, pipeline::ModelBundle> p0;  // task -> bundle at p = 0
  std::optional<pipeline::ModelBundle> timing_p5;

  E2E() {
    dir = fs::temp_directory_path() / ("locqor-acceptance-" + std::to_string(::getpid()));
    fs::create_directories(dir);
    const auto corpus = corpus::generate_synthetic_corpus({});
    corpus::write_synthetic_corpus(corpus, dir / "corpus", dir / "labels.csv");
    dataset = corpus::build_dataset(dir / "corpus", dir / "labels.csv", 1);
    provider = pipeline::make_provider(e2e_config("all", 0).provider);
  }
  ~E2E() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }

  void train_p0() {
    if (!p0.empty()) return;
    for (auto& b : pipeline::train_pipeline(e2e_config("all", 0), dataset, *provider, &cache).bundles) {
      p0.emplace(eval::to_string(b.task()), std::move(b));
    }
  }
  eval::MetricsReport report(const pipeline::ModelBundle& b) {
    return pipeline::evaluate_bundle(b, dataset, *provider, &cache);
  }
};

E2E* g_e2e = nullptr;

Outcome e2e_line_local() {
  g_e2e->train_p0();
  const auto r = g_e2e->report(g_e2e->p0.at("congestion"));
  const double f1 = r.overall.prf->f1;
  return {f1 >= 0.95, "congestion labels, p=0: test F1 " + fmt("%.4f", f1) + " (tp " +
                          std::to_string(r.overall.counts->tp) + ", fp " + std::to_string(r.overall.counts->fp) +
                          ", fn " + std::to_string(r.overall.counts->fn) + ")"};
}

Outcome e2e_neighbor() {
  g_e2e->train_p0();
  const double f0 = g_e2e->report(g_e2e->p0.at("timing")).overall.prf->f1;
  auto bundles = pipeline::train_pipeline(e2e_config("timing", 5), g_e2e->dataset, *g_e2e->provider,
                                          &g_e2e->cache)
                     .bundles;
  const double f5 = g_e2e->report(bundles.at(0)).overall.prf->f1;
  return {f5 - f0 >= 0.15, "timing labels: F1 p=0 " + fmt("%.4f", f0) + ", p=5 " + fmt("%.4f", f5) +
                               ", gain " + fmt("%.4f", f5 - f0)};
}

Outcome module_wns_aggregation() {
  g_e2e->train_p0();
  const auto r = g_e2e->report(g_e2e->p0.at("wns"));
  const auto& line = *r.overall.line;
  const auto& mod = *r.overall.module;
  const bool ok = line.r2 && mod.r2 && mod.mape && *line.r2 >= 0.9 && *mod.r2 >= 0.9 && *mod.mape <= 0.1;
  return {ok, std::to_string(line.n) + " lines: R2 " + fmt("%.4f", line.r2.value_or(NAN)) + ", MAPE " +
                  fmt("%.4f", line.mape.value_or(NAN)) + "; " + std::to_string(mod.n) + " modules: R2 " +
                  fmt("%.4f", mod.r2.value_or(NAN)) + ", MAPE " + fmt("%.4f", mod.mape.value_or(NAN))};
}

std::string without_timestamp(const pipeline::ModelBundle& b) {
  auto copy = b;
  copy.manifest.erase("created_at");
  return pipeline::serialize_bundle(copy);
}

Outcome determinism_round_trip() {
  const auto cfg = e2e_config("congestion", 1);
  const auto a = pipeline::train_pipeline(cfg, g_e2e->dataset, *g_e2e->provider, &g_e2e->cache).bundles.at(0);
  const auto b = pipeline::train_pipeline(cfg, g_e2e->dataset, *g_e2e->provider).bundles.at(0);
  const bool same = without_timestamp(a) == without_timestamp(b);

  bool identical = true;
  std::size_t n_pred = 0;
  g_e2e->train_p0();
  std::vector<const pipeline::ModelBundle*> all{&a};
  for (const auto& [task, bundle] : g_e2e->p0) all.push_back(&bundle);
  for (const auto* bundle : all) {
    const auto path = g_e2e->dir / "round_trip.bundle";
    pipeline::save_bundle(*bundle, path);
    const auto loaded = pipeline::load_bundle(path);
    const auto p = pipeline::predict_dataset(*bundle, g_e2e->dataset, *g_e2e->provider, &g_e2e->cache);
    const auto q = pipeline::predict_dataset(loaded, g_e2e->dataset, *g_e2e->provider, &g_e2e->cache);
    identical &= p.size() == q.size() && std::memcmp(p.data(), q.data(), p.size() * sizeof(double)) == 0;
    n_pred += p.size();
  }
  return {same && identical, std::string("retrained bundle ") + (same ? "byte-identical" : "DIFFERS") +
                                 "; " + std::to_string(all.size()) + " bundles save->load, " +
                                 std::to_string(n_pred) + " predictions " +
                                 (identical ? "bit-identical" : "DIFFER")};
}

struct Criterion {
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  E2E e2e;
  g_e2e = &e2e;
  const std::vector<Criterion> criteria{
      {"pooling_oracle", 5, pooling_oracle},
      {"ae_gradient_check", 30, ae_gradient_check},
      {"ae_learning", 120, ae_learning},
      {"gbdt_properties", 60, gbdt_properties},
      {"metric_oracles", 5, metric_oracles},
      {"e2e_line_local", 300, e2e_line_local},
      {"e2e_neighbor_context", 300, e2e_neighbor},
      {"module_wns_aggregation", 300, module_wns_aggregation},
      {"determinism_round_trip", 600, determinism_round_trip},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("%s  %-24s  %s  [%.1fs / %.0fs budget%s]\n", pass ? "PASS" : "FAIL", c.name,
                o.detail.c_str(), secs, c.budget_s, in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  ae_learning_defaults_info();
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
