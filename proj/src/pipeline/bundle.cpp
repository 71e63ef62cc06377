// SPDX-License-Identifier: Apache-2.0
#include <chrono>
#include <cstdlib>
#include <ctime>

#include "locqor/error.hpp"
#include "locqor/pipeline.hpp"
#include "locqor/util.hpp"

namespace locqor::pipeline {

std::string HeadModel::type() const {
  return std::holds_alternative<heads::GbdtModel>(model) ? "gbdt" : "logistic";
}

double HeadModel::score(std::span<const double> f) const {
  if (const auto* g = std::get_if<heads::GbdtModel>(&model)) return heads::predict_gbdt(*g, f);
  return std::get<heads::LogisticModel>(model).predict(f);
}

nlohmann::json HeadModel::to_json() const {
  if (const auto* g = std::get_if<heads::GbdtModel>(&model)) return heads::gbdt_to_json(*g);
  return heads::logistic_to_json(std::get<heads::LogisticModel>(model));
}

HeadModel HeadModel::from_json(const nlohmann::json& j) {
  const std::string type = j.value("type", "");
  if (type == "gbdt") return {heads::gbdt_from_json(j)};
  if (type == "logistic") return {heads::logistic_from_json(j)};
  throw BundleError("unknown head type '" + type + "'");
}

eval::Task ModelBundle::task() const { return eval::parse_task(manifest.at("task")); }
std::size_t ModelBundle::context() const { return manifest.at("context"); }
std::string ModelBundle::provider_identity() const {
  return manifest.at("provider").at("identity");
}

std::string creation_timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* sde = std::getenv("SOURCE_DATE_EPOCH"); sde && *sde) {
    t = static_cast<std::time_t>(std::strtoll(sde, nullptr, 10));
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string serialize_bundle(const ModelBundle& bundle) {
  std::string body;
  const std::string manifest = bundle.manifest.dump();
  binio::put_u64(body, manifest.size());
  body += manifest;
  const auto tensors = reducer::to_tensors(bundle.autoencoder);
  binio::put_u32(body, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    binio::put_u32(body, static_cast<std::uint32_t>(t.name.size()));
    body += t.name;
    binio::put_u32(body, static_cast<std::uint32_t>(t.shape.size()));
    for (auto dim : t.shape) binio::put_u32(body, static_cast<std::uint32_t>(dim));
    for (float v : t.data) binio::put_f32(body, v);
  }
  const std::string head = bundle.head.to_json().dump();
  binio::put_u64(body, head.size());
  body += head;

  const auto digest = sha256(body);
  std::string out(kBundleMagic);
  out.append(reinterpret_cast<const char*>(digest.data()), digest.size());
  out += body;
  return out;
}

namespace {

reducer::AutoencoderConfig autoencoder_config(const nlohmann::json& r) {
  reducer::AutoencoderConfig c;
  c.input_dim = r.at("input_dim");
  c.latent_dim = r.at("latent_dim");
  c.hidden = r.at("hidden").get<std::vector<std::size_t>>();
  c.leaky_slope = r.at("leaky_slope");
  c.dropout = r.at("dropout");
  c.bn_eps = r.at("bn_eps");
  c.bn_momentum = r.at("bn_momentum");
  return c;
}

}  // namespace

ModelBundle parse_bundle(std::string_view bytes) {
  const std::size_t header = kBundleMagic.size() + 32;
  if (bytes.size() < header || bytes.substr(0, kBundleMagic.size()) != kBundleMagic) {
    throw BundleError("not a model bundle");
  }
  const std::string_view body = bytes.substr(header);
  const auto digest = sha256(body);
  if (std::string_view(reinterpret_cast<const char*>(digest.data()), digest.size()) !=
      bytes.substr(kBundleMagic.size(), 32)) {
    throw BundleError("bundle hash mismatch: file is corrupt or was modified");
  }
  try {
    binio::Reader r(body);
    ModelBundle b;
    b.manifest = nlohmann::json::parse(r.bytes(r.u64()));
    if (b.manifest.at("format") != kBundleFormat) {
      throw BundleError("unsupported bundle format " + b.manifest.at("format").dump());
    }
    std::vector<reducer::Tensor> tensors(r.u32());
    for (auto& t : tensors) {
      t.name = std::string(r.bytes(r.u32()));
      t.shape.resize(r.u32());
      std::size_t n = 1;
      for (auto& dim : t.shape) {
        dim = r.u32();
        n *= dim;
      }
      if (n * 4 > r.remaining()) throw BundleError("tensor " + t.name + " is truncated");
      t.data.resize(n);
      for (auto& v : t.data) v = r.f32();
    }
    b.autoencoder =
        reducer::from_tensors(autoencoder_config(b.manifest.at("reducer")), tensors);
    b.head = HeadModel::from_json(nlohmann::json::parse(r.bytes(r.u64())));
    if (!r.done()) throw BundleError("trailing bytes after head");
    b.task();
    b.context();
    return b;
  } catch (const BundleError&) {
    throw;
  } catch (const std::exception& e) {
    throw BundleError(std::string("malformed bundle: ") + e.what());
  }
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_file(path.string(), serialize_bundle(bundle));
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw BundleError("bundle not found: " + path.string());
  try {
    return parse_bundle(read_file(path.string()));
  } catch (const BundleError& e) {
    throw BundleError(path.string() + ": " + e.what());
  }
}

std::vector<std::filesystem::path> resolve_bundles(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("bundle not found: " + path.string());
  if (!std::filesystem::is_directory(path)) return {path};
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(path)) {
    if (e.is_regular_file() && e.path().extension() == ".bundle") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw ConfigError("no .bundle files in " + path.string());
  return out;
}

}  // namespace locqor::pipeline
