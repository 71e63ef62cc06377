// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "locqor/embedding.hpp"
#include "locqor/error.hpp"

namespace locqor::embed {

void FileStoreWriter::add(std::string_view text, const HiddenStates& hs) {
  hs.validate();
  buffer_.append(kStoreMagic);
  binio::put_u32(buffer_, static_cast<std::uint32_t>(hs.k));
  binio::put_u32(buffer_, static_cast<std::uint32_t>(hs.rows()));
  for (double v : hs.matrix) binio::put_f32(buffer_, static_cast<float>(v));
  for (auto m : hs.mask) buffer_.push_back(static_cast<char>(m));
  auto digest = sha256(text);
  buffer_.append(reinterpret_cast<const char*>(digest.data()), digest.size());
}

void FileStoreWriter::write(const std::filesystem::path& path) const {
  write_file(path.string(), buffer_);
}

FileStoreProvider::FileStoreProvider(const std::filesystem::path& path,
                                     std::optional<std::string> identity) {
  std::string bytes;
  try {
    bytes = read_file(path.string());
  } catch (const Error&) {
    throw ProviderError("cannot read embedding store: " + path.string());
  }
  parse(bytes);
  if (identity) {
    identity_ = *identity;
  } else {
    auto d = sha256(bytes);
    identity_ = "file-store:" + to_hex(std::span(d).first(8));
  }
}

FileStoreProvider FileStoreProvider::from_bytes(std::string_view bytes, std::string identity) {
  FileStoreProvider p;
  p.parse(bytes);
  p.identity_ = std::move(identity);
  return p;
}

void FileStoreProvider::parse(std::string_view bytes) {
  binio::Reader r(bytes);
  try {
    while (!r.done()) {
      const std::size_t at = r.offset();
      if (r.bytes(kStoreMagic.size()) != kStoreMagic) {
        throw ProviderError("embedding store: bad record magic at offset " + std::to_string(at));
      }
      HiddenStates hs;
      hs.k = r.u32();
      const std::uint32_t n = r.u32();
      if (hs.k == 0) throw ProviderError("embedding store: zero width record");
      if (k_ == 0) k_ = hs.k;
      if (hs.k != k_) {
        throw ProviderError("embedding store: mixed widths (" + std::to_string(k_) + " and " +
                            std::to_string(hs.k) + ")");
      }
      hs.matrix.resize(static_cast<std::size_t>(n) * hs.k);
      for (auto& v : hs.matrix) v = static_cast<double>(r.f32());
      auto mask = r.bytes(n);
      hs.mask.assign(mask.begin(), mask.end());
      Sha256Digest key;
      auto kb = r.bytes(key.size());
      std::copy(kb.begin(), kb.end(), key.begin());
      records_[key] = std::move(hs);
    }
  } catch (const ProviderError&) {
    throw;
  } catch (const Error& e) {
    throw ProviderError(std::string("embedding store: ") + e.what());
  }
}

bool FileStoreProvider::contains(std::string_view text) const {
  return records_.count(sha256(text)) > 0;
}

HiddenStates FileStoreProvider::hidden_states(std::string_view text) const {
  auto d = sha256(text);
  auto it = records_.find(d);
  if (it == records_.end()) {
    throw ProviderError("embedding store has no record for text hash " + to_hex(d));
  }
  return it->second;
}

}  // namespace locqor::embed
