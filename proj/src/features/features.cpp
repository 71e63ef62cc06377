// SPDX-License-Identifier: Apache-2.0
#include "locqor/features.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "locqor/error.hpp"

namespace locqor::features {

namespace {
constexpr std::string_view kTableMagic = "LOCQFTB1";
constexpr Eigen::Index kEncodeChunk = 1024;
}  // namespace

ConcatFeature concat_line_module(const embed::Embedding& line, const embed::Embedding& module) {
  if (line.kind != embed::UnitKind::kLine || module.kind != embed::UnitKind::kModule) {
    throw ShapeError("concat_line_module: expected a line embedding and a module embedding");
  }
  if (line.vector.size() != module.vector.size() || line.vector.empty()) {
    throw ShapeError("concat_line_module: width mismatch (" + std::to_string(line.vector.size()) +
                     " vs " + std::to_string(module.vector.size()) + ")");
  }
  if (line.ref.module_id != module.ref.module_id || line.ref.design_id != module.ref.design_id) {
    throw ShapeError("concat_line_module: line " + line.ref.to_string() +
                     " does not belong to module " + module.ref.to_string());
  }
  ConcatFeature out;
  out.vector.reserve(2 * line.vector.size());
  out.vector.insert(out.vector.end(), line.vector.begin(), line.vector.end());
  out.vector.insert(out.vector.end(), module.vector.begin(), module.vector.end());
  return out;
}

AugmentedFeature augment_context(std::span<const LatentEmbedding> z, std::size_t i, std::size_t p) {
  if (i >= z.size()) throw ShapeError("augment_context: index out of range");
  const std::size_t d = z[0].vector.size();
  for (const auto& e : z) {
    if (e.vector.size() != d) throw ShapeError("augment_context: inconsistent latent width");
  }
  AugmentedFeature out;
  out.p = p;
  out.center = z[i].ref;
  out.vector.assign((2 * p + 1) * d, 0.0);
  for (std::size_t slot = 0; slot < 2 * p + 1; ++slot) {
    // neighbor index i + slot - p, skipped when outside [0, |z|)
    if (i + slot < p || i + slot - p >= z.size()) continue;
    const auto& src = z[i + slot - p].vector;
    std::copy(src.begin(), src.end(), out.vector.begin() + static_cast<std::ptrdiff_t>(slot * d));
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> module_ranges(const corpus::Dataset& dataset) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const auto& ex = dataset.examples;
  std::size_t b = 0;
  for (std::size_t i = 1; i <= ex.size(); ++i) {
    if (i == ex.size() || ex[i].line.module_id != ex[b].line.module_id ||
        ex[i].line.design_id != ex[b].line.design_id) {
      out.emplace_back(b, i);
      b = i;
    }
  }
  return out;
}

Eigen::MatrixXd concat_features(const corpus::Dataset& dataset,
                                const embed::EmbeddingProvider& provider,
                                embed::EmbeddingCache* cache) {
  const auto k = static_cast<Eigen::Index>(provider.k());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(dataset.examples.size()), 2 * k);
  const auto ranges = module_ranges(dataset);
  if (ranges.size() != dataset.modules.size() && !dataset.examples.empty()) {
    throw DataError("concat_features: dataset modules and examples disagree");
  }
  for (std::size_t m = 0; m < ranges.size(); ++m) {
    const auto& span = dataset.modules[m];
    const embed::Embedding me = embed::embed_module(provider, span, cache);
    for (std::size_t r = ranges[m].first; r < ranges[m].second; ++r) {
      const embed::Embedding le = embed::embed_line(provider, dataset.examples[r].line, cache);
      const ConcatFeature x = concat_line_module(le, me);
      out.row(static_cast<Eigen::Index>(r)) =
          Eigen::Map<const Eigen::RowVectorXd>(x.vector.data(), 2 * k);
    }
  }
  return out;
}

FeatureTable build_feature_table(const corpus::Dataset& dataset, const Eigen::MatrixXd& concat,
                                 const reducer::Autoencoder& autoencoder, std::size_t p) {
  const auto n = static_cast<Eigen::Index>(dataset.examples.size());
  if (concat.rows() != n) throw ShapeError("build_feature_table: concat rows != dataset size");
  const std::size_t d = autoencoder.latent_dim();

  Eigen::MatrixXd latent(static_cast<Eigen::Index>(d), n);
  for (Eigen::Index b = 0; b < n; b += kEncodeChunk) {
    const Eigen::Index len = std::min(kEncodeChunk, n - b);
    latent.middleCols(b, len) = autoencoder.encode_batch(concat.middleRows(b, len).transpose());
  }

  FeatureTable t;
  t.width = (2 * p + 1) * d;
  t.values.assign(static_cast<std::size_t>(n) * t.width, 0.0);
  for (const auto& [b, e] : module_ranges(dataset)) {
    for (std::size_t i = b; i < e; ++i) {
      double* dst = t.values.data() + i * t.width;
      for (std::size_t slot = 0; slot < 2 * p + 1; ++slot) {
        const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(i + slot) - static_cast<std::ptrdiff_t>(p);
        if (j < static_cast<std::ptrdiff_t>(b) || j >= static_cast<std::ptrdiff_t>(e)) continue;
        std::memcpy(dst + slot * d, latent.col(j).data(), d * sizeof(double));
      }
    }
  }
  for (const auto& ex : dataset.examples) {
    t.refs.push_back({ex.line.design_id, ex.line.module_id, ex.line.line_no});
    t.congestion.push_back(ex.congestion ? 1 : 0);
    t.timing.push_back(ex.timing ? 1 : 0);
    t.wns.push_back(ex.wns_ns ? *ex.wns_ns : std::numeric_limits<double>::quiet_NaN());
    t.split.push_back(ex.split);
  }
  return t;
}

FeatureTable build_feature_table(const corpus::Dataset& dataset,
                                 const embed::EmbeddingProvider& provider,
                                 const reducer::Autoencoder& autoencoder, std::size_t p,
                                 embed::EmbeddingCache* cache) {
  if (2 * provider.k() != autoencoder.input_dim()) {
    throw ShapeError("build_feature_table: provider width 2*" + std::to_string(provider.k()) +
                     " != autoencoder input " + std::to_string(autoencoder.input_dim()));
  }
  return build_feature_table(dataset, concat_features(dataset, provider, cache), autoencoder, p);
}

void write_feature_table(const FeatureTable& table, const std::filesystem::path& path) {
  std::string out(kTableMagic);
  binio::put_u32(out, static_cast<std::uint32_t>(table.rows()));
  binio::put_u32(out, static_cast<std::uint32_t>(table.width));
  for (double v : table.values) binio::put_f32(out, static_cast<float>(v));
  for (auto c : table.congestion) out.push_back(static_cast<char>(c));
  for (auto c : table.timing) out.push_back(static_cast<char>(c));
  for (double w : table.wns) binio::put_f32(out, static_cast<float>(w));
  write_file(path.string(), out);
}

FeatureTable read_feature_table(const std::filesystem::path& path) {
  const std::string bytes = read_file(path.string());
  binio::Reader r(bytes);
  if (r.bytes(kTableMagic.size()) != kTableMagic) {
    throw DataError("not a feature table: " + path.string());
  }
  FeatureTable t;
  const std::uint32_t rows = r.u32();
  t.width = r.u32();
  t.values.resize(static_cast<std::size_t>(rows) * t.width);
  for (auto& v : t.values) v = r.f32();
  auto c = r.bytes(rows);
  t.congestion.assign(c.begin(), c.end());
  auto tm = r.bytes(rows);
  t.timing.assign(tm.begin(), tm.end());
  t.wns.resize(rows);
  for (auto& w : t.wns) w = r.f32();
  t.refs.resize(rows);
  t.split.assign(rows, corpus::Split::kTrain);
  return t;
}

}  // namespace locqor::features
