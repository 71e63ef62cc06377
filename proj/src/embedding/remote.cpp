// SPDX-License-Identifier: Apache-2.0
#include <httplib.h>

#include <json.hpp>

#include "locqor/embedding.hpp"
#include "locqor/error.hpp"

using json = nlohmann::json;

namespace locqor::embed {

namespace {

// Releases the in-flight slot on scope exit.
class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<>& sem) : sem_(sem) { sem_.acquire(); }
  ~SlotGuard() { sem_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<>& sem_;
};

json parse_body(const std::string& body, const std::string& what) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw ProviderError(what + ": invalid JSON response: " + e.what());
  }
}

// Values on the wire are float32; parse as double and round back.
double wire_value(const json& v) { return round_f32(v.get<double>()); }

}  // namespace

RemoteProvider::RemoteProvider(std::string endpoint) : RemoteProvider(std::move(endpoint), Options{}) {}

RemoteProvider::RemoteProvider(std::string endpoint, Options options)
    : endpoint_(std::move(endpoint)),
      options_(options),
      in_flight_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, options.max_in_flight))) {
  httplib::Client client(endpoint_);
  client.set_connection_timeout(options_.timeout_seconds);
  client.set_read_timeout(options_.timeout_seconds);
  auto res = client.Get("/v1/info");
  if (!res) {
    throw ProviderError("embedding service unreachable at " + endpoint_ + " (" +
                        httplib::to_string(res.error()) + ")");
  }
  if (res->status != 200) {
    throw ProviderError("GET /v1/info returned HTTP " + std::to_string(res->status));
  }
  json info = parse_body(res->body, "GET /v1/info");
  try {
    k_ = info.at("k").get<std::size_t>();
    identity_ = info.value("identity", std::string("remote"));
    backend_ = info.value("backend", std::string());
  } catch (const json::exception& e) {
    throw ProviderError(std::string("GET /v1/info: malformed response: ") + e.what());
  }
  if (k_ == 0) throw ProviderError("GET /v1/info: k must be positive");
}

std::string RemoteProvider::post(const std::string& path, std::string_view text) const {
  SlotGuard slot(in_flight_);
  httplib::Client client(endpoint_);
  client.set_connection_timeout(options_.timeout_seconds);
  client.set_read_timeout(options_.timeout_seconds);
  const std::string body = json{{"text", std::string(text)}}.dump();
  auto res = client.Post(path, body, "application/json");
  if (!res) {
    throw ProviderError("POST " + path + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw ProviderError("POST " + path + " returned HTTP " + std::to_string(res->status) + ": " +
                        res->body);
  }
  return res->body;
}

HiddenStates RemoteProvider::hidden_states(std::string_view text) const {
  json j = parse_body(post("/v1/hidden_states", text), "POST /v1/hidden_states");
  HiddenStates hs;
  try {
    hs.k = j.at("k").get<std::size_t>();
    const auto& rows = j.at("hidden_states");
    const auto& mask = j.at("mask");
    if (!rows.is_array() || !mask.is_array() || rows.size() != mask.size()) {
      throw ProviderError("POST /v1/hidden_states: hidden_states and mask lengths differ");
    }
    hs.matrix.reserve(rows.size() * hs.k);
    for (const auto& row : rows) {
      if (row.size() != hs.k) {
        throw ProviderError("POST /v1/hidden_states: row width " + std::to_string(row.size()) +
                            " != k " + std::to_string(hs.k));
      }
      for (const auto& v : row) hs.matrix.push_back(wire_value(v));
    }
    for (const auto& m : mask) hs.mask.push_back(static_cast<std::uint8_t>(m.get<int>()));
  } catch (const json::exception& e) {
    throw ProviderError(std::string("POST /v1/hidden_states: malformed response: ") + e.what());
  }
  hs.validate();
  return hs;
}

std::vector<double> RemoteProvider::server_embed(std::string_view text) const {
  json j = parse_body(post("/v1/embed", text), "POST /v1/embed");
  std::vector<double> out;
  try {
    for (const auto& v : j.at("vector")) out.push_back(wire_value(v));
  } catch (const json::exception& e) {
    throw ProviderError(std::string("POST /v1/embed: malformed response: ") + e.what());
  }
  if (out.size() != k_) throw ProviderError("POST /v1/embed: vector width mismatch");
  return out;
}

}  // namespace locqor::embed
