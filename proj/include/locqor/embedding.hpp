// SPDX-License-Identifier: Apache-2.0
//
// Token hidden states from a pluggable provider, pooled into fixed-width
// module and line embeddings.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "locqor/corpus.hpp"
#include "locqor/util.hpp"

namespace locqor::embed {

/// Token-level hidden states of one text unit: an n x k matrix (row i is the
/// hidden vector of token i) and the matching attention mask.
struct HiddenStates {
  std::size_t k = 0;
  std::vector<double> matrix;  // row-major, n * k
  std::vector<std::uint8_t> mask;

  std::size_t rows() const { return mask.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(matrix).subspan(i * k, k);
  }
  /// Throws ShapeError on inconsistent sizes, non-binary mask entries or
  /// non-finite values.
  void validate() const;
};

/// Coordinate-wise  sum_i(m_i * h_i) / sum_i(m_i), accumulated in double in
/// row order. Throws ProviderError("empty attention") for an all-zero mask.
std::vector<double> masked_mean_pool(const HiddenStates& hs);

enum class UnitKind : std::uint8_t { kModule, kLine };

struct UnitRef {
  std::string design_id;
  std::string module_id;
  std::optional<int> line_no;
  std::string to_string() const;
};

struct Embedding {
  std::vector<double> vector;  // float32-representable values
  UnitKind kind = UnitKind::kLine;
  UnitRef ref;
};

/// Source of hidden states. Implementations are deterministic (same text,
/// same output) and safe to call from several threads at once.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string kind() const = 0;
  virtual std::size_t k() const = 0;
  /// Model name/version; recorded in bundles so mismatches are detectable.
  virtual std::string identity() const = 0;
  virtual HiddenStates hidden_states(std::string_view text) const = 0;
};

// --- mock -------------------------------------------------------------------

/// Indicator coordinates of the mock embedder. Ordinary tokens carry 0 there.
inline constexpr std::size_t kIndicatorCoords = 8;
inline constexpr std::size_t kCongestionCoord = 0;
inline constexpr std::size_t kTimingCoord = 1;
inline constexpr std::size_t kMulCoord = 2;
inline constexpr std::size_t kAddCoord = 3;

/// Scale of the pseudo-random coordinates of mock token vectors.
inline constexpr double kMockNoiseScale = 0.03125;

/// Deterministic stand-in for an LLM. Tokens are maximal runs of non-blank
/// characters; a text with no tokens yields one padding token (the empty
/// string). Token t gets the vector
///
///   state = fnv1a64(t) ^ (seed * 0x9e3779b97f4a7c15)
///   v[j]  = kMockNoiseScale * ((splitmix64(state) >> 40) * 2^-23 - 1)   for j >= 8
///   v[j]  = 1 if t is the planted token of indicator j, else 0          for j < 8
///
/// (one splitmix64 step per coordinate j = 0..k-1, including the indicator
/// slots). Every value is exactly representable as float32. Mask is all ones.
HiddenStates mock_hidden_states(std::string_view text, std::size_t k, std::uint64_t seed);

/// Whitespace tokenization used by the mock.
std::vector<std::string_view> mock_tokens(std::string_view text);

class MockProvider final : public EmbeddingProvider {
 public:
  MockProvider(std::size_t k, std::uint64_t seed);
  std::string kind() const override { return "mock"; }
  std::size_t k() const override { return k_; }
  std::string identity() const override;
  HiddenStates hidden_states(std::string_view text) const override;

 private:
  std::size_t k_;
  std::uint64_t seed_;
};

// --- file store ----------------------------------------------------------------

/// 16-byte record magic of the file-store format.
inline constexpr std::string_view kStoreMagic{"LOCQEMB1\0\0\0\0\0\0\0\0", 16};

/// Appends records in the file-store format:
///   magic[16] | u32 k | u32 n | n*k f32 (row-major) | n u8 mask | sha256(text)[32]
/// Values are stored as float32.
class FileStoreWriter {
 public:
  void add(std::string_view text, const HiddenStates& hs);
  const std::string& bytes() const { return buffer_; }
  void write(const std::filesystem::path& path) const;

 private:
  std::string buffer_;
};

/// Read-only store of precomputed hidden states, looked up by SHA-256 of the
/// unit text.
class FileStoreProvider final : public EmbeddingProvider {
 public:
  explicit FileStoreProvider(const std::filesystem::path& path,
                             std::optional<std::string> identity = std::nullopt);
  static FileStoreProvider from_bytes(std::string_view bytes, std::string identity);

  std::string kind() const override { return "file"; }
  std::size_t k() const override { return k_; }
  std::string identity() const override { return identity_; }
  HiddenStates hidden_states(std::string_view text) const override;
  bool contains(std::string_view text) const;
  std::size_t size() const { return records_.size(); }

 private:
  FileStoreProvider() = default;
  void parse(std::string_view bytes);

  std::size_t k_ = 0;
  std::string identity_;
  std::map<Sha256Digest, HiddenStates> records_;
};

// --- remote -------------------------------------------------------------------

/// Client for the embedding HTTP service:
///   POST /v1/hidden_states {"text"} -> {"k", "hidden_states", "mask"}
///   POST /v1/embed         {"text"} -> {"k", "vector"}
///   GET  /v1/info                   -> {"k", "backend", "identity"}
class RemoteProvider final : public EmbeddingProvider {
 public:
  struct Options {
    std::size_t max_in_flight = 4;
    int timeout_seconds = 30;
  };

  explicit RemoteProvider(std::string endpoint);
  RemoteProvider(std::string endpoint, Options options);

  std::string kind() const override { return "remote"; }
  std::size_t k() const override { return k_; }
  std::string identity() const override { return identity_; }
  std::string backend() const { return backend_; }
  HiddenStates hidden_states(std::string_view text) const override;
  /// Server-side pooled vector (float32 values).
  std::vector<double> server_embed(std::string_view text) const;

 private:
  std::string post(const std::string& path, std::string_view text) const;

  std::string endpoint_;
  Options options_;
  std::size_t k_ = 0;
  std::string identity_;
  std::string backend_;
  mutable std::counting_semaphore<> in_flight_;
};

// --- caching and unit embedding ---------------------------------------------------

/// Content-addressed embedding cache keyed by (provider identity, SHA-256 of
/// the text). Thread-safe.
class EmbeddingCache {
 public:
  std::optional<std::vector<double>> get(const std::string& identity, std::string_view text) const;
  void put(const std::string& identity, std::string_view text, std::span<const double> vec);
  std::size_t size() const;
  std::size_t hits() const { return hits_; }

  void save(const std::filesystem::path& path) const;
  /// Merges entries from a file written by save().
  void load(const std::filesystem::path& path);

 private:
  static std::string key(const std::string& identity, std::string_view text);

  mutable std::mutex mu_;
  mutable std::size_t hits_ = 0;
  std::map<std::string, std::vector<float>> entries_;
};

/// Pools the provider's hidden states for `text` and rounds to float32.
std::vector<double> embed_text(const EmbeddingProvider& provider, std::string_view text,
                               EmbeddingCache* cache = nullptr);

Embedding embed_module(const EmbeddingProvider& provider, const corpus::ModuleSpan& module,
                       EmbeddingCache* cache = nullptr);
Embedding embed_line(const EmbeddingProvider& provider, const corpus::LineRecord& line,
                     EmbeddingCache* cache = nullptr);

}  // namespace locqor::embed
