// SPDX-License-Identifier: Apache-2.0
//
// Small shared helpers: content hashing, a portable deterministic RNG,
// little-endian binary I/O and round-trip float formatting.
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace locqor {

using Sha256Digest = std::array<std::uint8_t, 32>;

Sha256Digest sha256(std::string_view bytes);
Sha256Digest sha256(std::span<const std::uint8_t> bytes);
std::string to_hex(std::span<const std::uint8_t> bytes);

/// FNV-1a, 64-bit.
std::uint64_t fnv1a64(std::string_view bytes);

/// One SplitMix64 step: advances `state` and returns the mixed output.
std::uint64_t splitmix64(std::uint64_t& state);

/// Deterministic generator whose output sequence is fully specified
/// (mt19937_64 raw output), with helpers that avoid the
/// implementation-defined std:: distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller.
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_[312];
  int index_;
  void twist();
};

/// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);
std::string format_float(float v);

/// Rounds to the nearest float32 value, kept in double storage.
inline double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

namespace binio {

void put_u32(std::string& out, std::uint32_t v);
void put_u64(std::string& out, std::uint64_t v);
void put_f32(std::string& out, float v);

/// Bounds-checked little-endian reader over a byte buffer.
class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  std::string_view bytes(std::size_t n);
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace binio

/// Whole-file read/write helpers that raise locqor::Error with the path.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace locqor
