// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "locqor/embedding.hpp"
#include "locqor/error.hpp"

namespace locqor::embed {

void HiddenStates::validate() const {
  if (k == 0) throw ShapeError("hidden states: k must be positive");
  if (matrix.size() != mask.size() * k) {
    throw ShapeError("hidden states: matrix has " + std::to_string(matrix.size()) +
                     " values, expected " + std::to_string(mask.size()) + " x " +
                     std::to_string(k));
  }
  for (auto m : mask) {
    if (m > 1) throw ShapeError("hidden states: mask entries must be 0 or 1");
  }
  for (double v : matrix) {
    if (!std::isfinite(v)) throw ShapeError("hidden states: non-finite value");
  }
}

std::vector<double> masked_mean_pool(const HiddenStates& hs) {
  hs.validate();
  std::vector<double> acc(hs.k, 0.0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < hs.rows(); ++i) {
    if (!hs.mask[i]) continue;
    ++count;
    const double* r = hs.matrix.data() + i * hs.k;
    for (std::size_t j = 0; j < hs.k; ++j) acc[j] += r[j];
  }
  if (count == 0) throw ProviderError("empty attention");
  const double denom = static_cast<double>(count);
  for (double& v : acc) v /= denom;
  return acc;
}

std::string UnitRef::to_string() const {
  std::string s = design_id + "/" + module_id;
  if (line_no) s += ":" + std::to_string(*line_no);
  return s;
}

std::vector<double> embed_text(const EmbeddingProvider& provider, std::string_view text,
                               EmbeddingCache* cache) {
  const std::string identity = provider.identity();
  if (cache) {
    if (auto hit = cache->get(identity, text)) return *hit;
  }
  HiddenStates hs = provider.hidden_states(text);
  if (hs.k != provider.k()) {
    throw ProviderError("provider returned width " + std::to_string(hs.k) + ", declared " +
                        std::to_string(provider.k()));
  }
  std::vector<double> vec = masked_mean_pool(hs);
  for (double& v : vec) v = round_f32(v);
  if (cache) cache->put(identity, text, vec);
  return vec;
}

namespace {

Embedding embed_unit(const EmbeddingProvider& provider, std::string_view text, UnitKind kind,
                     UnitRef ref, EmbeddingCache* cache) {
  Embedding e;
  e.kind = kind;
  try {
    e.vector = embed_text(provider, text, cache);
  } catch (const Error& err) {
    throw ProviderError(ref.to_string() + ": " + err.what());
  }
  e.ref = std::move(ref);
  return e;
}

}  // namespace

Embedding embed_module(const EmbeddingProvider& provider, const corpus::ModuleSpan& module,
                       EmbeddingCache* cache) {
  return embed_unit(provider, module.text, UnitKind::kModule,
                    UnitRef{module.design_id, module.module_id, std::nullopt}, cache);
}

Embedding embed_line(const EmbeddingProvider& provider, const corpus::LineRecord& line,
                     EmbeddingCache* cache) {
  return embed_unit(provider, line.text, UnitKind::kLine,
                    UnitRef{line.design_id, line.module_id, line.line_no}, cache);
}

}  // namespace locqor::embed
