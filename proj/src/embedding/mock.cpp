// SPDX-License-Identifier: Apache-2.0
#include "locqor/embedding.hpp"
#include "locqor/error.hpp"

namespace locqor::embed {

namespace {

bool is_blank(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

int indicator_of(std::string_view token) {
  if (token == corpus::kCongestionToken) return static_cast<int>(kCongestionCoord);
  if (token == corpus::kTimingToken) return static_cast<int>(kTimingCoord);
  if (token == corpus::kMulToken) return static_cast<int>(kMulCoord);
  if (token == corpus::kAddToken) return static_cast<int>(kAddCoord);
  return -1;
}

}  // namespace

std::vector<std::string_view> mock_tokens(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_blank(text[i])) ++i;
    std::size_t b = i;
    while (i < text.size() && !is_blank(text[i])) ++i;
    if (i > b) out.push_back(text.substr(b, i - b));
  }
  return out;
}

HiddenStates mock_hidden_states(std::string_view text, std::size_t k, std::uint64_t seed) {
  if (k < kIndicatorCoords) throw ConfigError("mock provider needs k >= 8");
  auto tokens = mock_tokens(text);
  if (tokens.empty()) tokens.push_back(std::string_view{});  // padding token

  HiddenStates hs;
  hs.k = k;
  hs.matrix.resize(tokens.size() * k);
  hs.mask.assign(tokens.size(), 1);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    std::uint64_t state = fnv1a64(tokens[t]) ^ (seed * 0x9e3779b97f4a7c15ULL);
    const int indicator = indicator_of(tokens[t]);
    double* row = hs.matrix.data() + t * k;
    for (std::size_t j = 0; j < k; ++j) {
      const std::uint64_t bits = splitmix64(state) >> 40;
      if (j < kIndicatorCoords) {
        row[j] = static_cast<int>(j) == indicator ? 1.0 : 0.0;
      } else {
        row[j] = kMockNoiseScale * (static_cast<double>(bits) * 0x1.0p-23 - 1.0);
      }
    }
  }
  return hs;
}

MockProvider::MockProvider(std::size_t k, std::uint64_t seed) : k_(k), seed_(seed) {
  if (k < kIndicatorCoords) throw ConfigError("mock provider needs k >= 8");
}

std::string MockProvider::identity() const {
  return "mock-v1:k=" + std::to_string(k_) + ":seed=" + std::to_string(seed_);
}

HiddenStates MockProvider::hidden_states(std::string_view text) const {
  return mock_hidden_states(text, k_, seed_);
}

}  // namespace locqor::embed
