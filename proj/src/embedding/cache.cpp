// SPDX-License-Identifier: Apache-2.0
#include "locqor/embedding.hpp"
#include "locqor/error.hpp"

namespace locqor::embed {

namespace {
constexpr std::string_view kCacheMagic = "LOCQCCH1";
}

std::string EmbeddingCache::key(const std::string& identity, std::string_view text) {
  auto d = sha256(text);
  return identity + '\n' + to_hex(d);
}

std::optional<std::vector<double>> EmbeddingCache::get(const std::string& identity,
                                                       std::string_view text) const {
  const std::string k = key(identity, text);
  std::lock_guard lock(mu_);
  auto it = entries_.find(k);
  if (it == entries_.end()) return std::nullopt;
  ++hits_;
  return std::vector<double>(it->second.begin(), it->second.end());
}

void EmbeddingCache::put(const std::string& identity, std::string_view text,
                         std::span<const double> vec) {
  std::vector<float> stored(vec.begin(), vec.end());
  const std::string k = key(identity, text);
  std::lock_guard lock(mu_);
  entries_[k] = std::move(stored);
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

void EmbeddingCache::save(const std::filesystem::path& path) const {
  std::string out(kCacheMagic);
  std::lock_guard lock(mu_);
  binio::put_u64(out, entries_.size());
  for (const auto& [k, v] : entries_) {
    binio::put_u32(out, static_cast<std::uint32_t>(k.size()));
    out += k;
    binio::put_u32(out, static_cast<std::uint32_t>(v.size()));
    for (float f : v) binio::put_f32(out, f);
  }
  write_file(path.string(), out);
}

void EmbeddingCache::load(const std::filesystem::path& path) {
  std::string bytes = read_file(path.string());
  binio::Reader r(bytes);
  if (r.bytes(kCacheMagic.size()) != kCacheMagic) {
    throw Error("not an embedding cache file: " + path.string());
  }
  std::lock_guard lock(mu_);
  const std::uint64_t n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string k(r.bytes(r.u32()));
    std::vector<float> v(r.u32());
    for (auto& f : v) f = r.f32();
    entries_.insert_or_assign(std::move(k), std::move(v));
  }
}

}  // namespace locqor::embed
