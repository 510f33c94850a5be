#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "uaopose/digest.hpp"
#include "uaopose/errors.hpp"
#include "uaopose/gumlp.hpp"

namespace uaopose {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

nlohmann::json config_to_json(const ModelConfig& cfg) {
  return {{"K", cfg.joints},          {"N", cfg.blocks},
          {"C", cfg.channels},        {"S_mid", cfg.spatial_mid},
          {"layer_norm_eps", cfg.layer_norm_eps}, {"seed", cfg.seed}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.joints = j.at("K").get<std::size_t>();
  cfg.blocks = j.at("N").get<std::size_t>();
  cfg.channels = j.at("C").get<std::size_t>();
  cfg.spatial_mid = j.at("S_mid").get<std::size_t>();
  cfg.layer_norm_eps = j.at("layer_norm_eps").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const ModelParams& params, const ModelConfig& cfg) {
  const auto manifest = parameter_manifest(cfg);
  nlohmann::json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["config"] = config_to_json(cfg);
  header["manifest"] = nlohmann::json::array();

  std::vector<const ad::Tensor*> tensors;
  for_each_parameter(params, [&](const std::string&, const ad::Tensor& t) { tensors.push_back(&t); });
  if (tensors.size() != manifest.size())
    throw ContractError("checkpoint: parameters do not match the config manifest");
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (tensors[i]->shape() != manifest[i].second)
      throw ContractError("checkpoint: tensor " + manifest[i].first + " has shape " +
                          ad::shape_str(tensors[i]->shape()) + ", config expects " +
                          ad::shape_str(manifest[i].second));
    header["manifest"].push_back({{"name", manifest[i].first}, {"shape", manifest[i].second}});
  }

  const std::string head = header.dump() + "\n";
  std::vector<std::uint8_t> bytes(head.begin(), head.end());
  for (const ad::Tensor* t : tensors) {
    for (double v : t->data()) {
      const float f = static_cast<float>(v);
      std::uint8_t raw[4];
      std::memcpy(raw, &f, 4);
      bytes.insert(bytes.end(), raw, raw + 4);
    }
  }
  const Sha256 digest = sha256(bytes);
  bytes.insert(bytes.end(), digest.begin(), digest.end());
  return bytes;
}

std::pair<ModelParams, ModelConfig> deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  using Kind = CheckpointErrorKind;
  if (bytes.size() < 32) throw CheckpointError(Kind::Digest, "checkpoint: file too short for a digest");
  const std::size_t body = bytes.size() - 32;
  const Sha256 expected = sha256(std::span(bytes.data(), body));
  if (!std::equal(expected.begin(), expected.end(), bytes.begin() + static_cast<std::ptrdiff_t>(body)))
    throw CheckpointError(Kind::Digest, "checkpoint: digest mismatch (corrupt or truncated file)");

  const auto newline = std::find(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(body), '\n');
  if (newline == bytes.begin() + static_cast<std::ptrdiff_t>(body))
    throw CheckpointError(Kind::Header, "checkpoint: missing header terminator");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin(), newline);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(Kind::Header, std::string("checkpoint: bad header: ") + e.what());
  }

  ModelConfig cfg;
  std::vector<std::pair<std::string, ad::Shape>> stored;
  try {
    const int version = header.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion)
      throw CheckpointError(Kind::Version, "checkpoint: format_version " + std::to_string(version) +
                                               " unsupported (expected " +
                                               std::to_string(kCheckpointFormatVersion) + ")");
    cfg = config_from_json(header.at("config"));
    for (const auto& entry : header.at("manifest"))
      stored.emplace_back(entry.at("name").get<std::string>(), entry.at("shape").get<ad::Shape>());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(Kind::Header, std::string("checkpoint: bad header: ") + e.what());
  }

  std::vector<std::pair<std::string, ad::Shape>> expected_manifest;
  try {
    expected_manifest = parameter_manifest(cfg);
  } catch (const ContractError& e) {
    throw CheckpointError(Kind::Shape, std::string("checkpoint: invalid config: ") + e.what());
  }
  if (stored != expected_manifest)
    throw CheckpointError(Kind::Shape, "checkpoint: tensor manifest inconsistent with config");

  std::size_t floats = 0;
  for (const auto& [name, shape] : stored) floats += ad::shape_size(shape);
  const std::size_t payload_begin = static_cast<std::size_t>(newline - bytes.begin()) + 1;
  if (body - payload_begin != floats * 4)
    throw CheckpointError(Kind::Shape, "checkpoint: payload holds " +
                                           std::to_string(body - payload_begin) + " bytes, manifest needs " +
                                           std::to_string(floats * 4));

  ModelParams params;
  params.blocks.resize(cfg.blocks);
  std::size_t offset = payload_begin;
  std::size_t index = 0;
  for_each_parameter(params, [&](const std::string&, ad::Tensor& t) {
    ad::Tensor loaded(stored[index++].second);
    for (double& v : loaded.data()) {
      float f;
      std::memcpy(&f, &bytes[offset], 4);
      offset += 4;
      v = static_cast<double>(f);
    }
    t = std::move(loaded);
  });
  return {std::move(params), cfg};
}

void save_checkpoint(const ModelParams& params, const ModelConfig& cfg, const std::string& path) {
  const auto bytes = serialize_checkpoint(params, cfg);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointErrorKind::Io, "cannot write checkpoint " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointErrorKind::Io, "short write to " + path);
}

std::pair<ModelParams, ModelConfig> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrorKind::Io, "cannot read checkpoint " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace uaopose
