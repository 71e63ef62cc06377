// SPDX-License-Identifier: Apache-2.0
//
// Per-line model inputs: [line embedding; module embedding] -> encoder ->
// latent, then the +/-p context window of module-local neighbors.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "locqor/corpus.hpp"
#include "locqor/embedding.hpp"
#include "locqor/reducer.hpp"

namespace locqor::features {

struct ConcatFeature {
  std::vector<double> vector;  // 2k: line embedding, then module embedding
};

struct LatentEmbedding {
  std::vector<double> vector;  // d
  embed::UnitRef ref;
};

struct AugmentedFeature {
  std::vector<double> vector;  // (2p+1) * d
  std::size_t p = 0;
  embed::UnitRef center;
};

ConcatFeature concat_line_module(const embed::Embedding& line, const embed::Embedding& module);

/// [z_{i-p}; ...; z_i; ...; z_{i+p}] over one module's latents. Neighbors
/// outside the module are zero vectors.
AugmentedFeature augment_context(std::span<const LatentEmbedding> z, std::size_t i, std::size_t p);

/// Row-aligned features and labels, one row per dataset example, in the
/// dataset's (design, module, line_no) order.
struct FeatureTable {
  std::size_t width = 0;
  std::vector<double> values;  // rows * width, row-major
  std::vector<embed::UnitRef> refs;
  std::vector<std::uint8_t> congestion;
  std::vector<std::uint8_t> timing;
  std::vector<double> wns;  // NaN where absent
  std::vector<corpus::Split> split;

  std::size_t rows() const { return refs.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values).subspan(i * width, width);
  }
};

/// Half-open example ranges [begin, end) of each module in dataset order.
std::vector<std::pair<std::size_t, std::size_t>> module_ranges(const corpus::Dataset& dataset);

/// Concatenated line+module embeddings, N x 2k, aligned with dataset.examples.
Eigen::MatrixXd concat_features(const corpus::Dataset& dataset,
                                const embed::EmbeddingProvider& provider,
                                embed::EmbeddingCache* cache = nullptr);

/// Encodes `concat` (N x 2k) and applies the context window.
FeatureTable build_feature_table(const corpus::Dataset& dataset, const Eigen::MatrixXd& concat,
                                 const reducer::Autoencoder& autoencoder, std::size_t p);

FeatureTable build_feature_table(const corpus::Dataset& dataset,
                                 const embed::EmbeddingProvider& provider,
                                 const reducer::Autoencoder& autoencoder, std::size_t p,
                                 embed::EmbeddingCache* cache = nullptr);

/// Dump format: "LOCQFTB1" | u32 rows | u32 width | rows*width f32 |
/// rows u8 congestion | rows u8 timing | rows f32 wns (NaN when absent).
void write_feature_table(const FeatureTable& table, const std::filesystem::path& path);
FeatureTable read_feature_table(const std::filesystem::path& path);

}  // namespace locqor::features
