#include <bit>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "dcae/config.hpp"
#include "dcae/data_io.hpp"
#include "dcae/error.hpp"

namespace fs = std::filesystem;

namespace dcae {
namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kBlob = "tensors.bin";

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "float32";
    case torch::kFloat64: return "float64";
    case torch::kInt64: return "int64";
    case torch::kInt32: return "int32";
    case torch::kUInt8: return "uint8";
    default: throw CheckpointError(std::string("unsupported tensor dtype ") + c10::toString(t));
  }
}

torch::ScalarType parse_dtype(const std::string& s) {
  if (s == "float32") return torch::kFloat32;
  if (s == "float64") return torch::kFloat64;
  if (s == "int64") return torch::kInt64;
  if (s == "int32") return torch::kInt32;
  if (s == "uint8") return torch::kUInt8;
  throw CorruptIndexError("unknown dtype '" + s + "' in checkpoint index");
}

// Byte image of a tensor in little-endian order.
std::vector<char> tensor_bytes(const torch::Tensor& t) {
  auto c = t.detach().cpu().contiguous();
  std::vector<char> out(c.nbytes());
  std::memcpy(out.data(), c.data_ptr(), out.size());
  if constexpr (std::endian::native == std::endian::big) {
    const auto es = c.element_size();
    for (size_t i = 0; i < out.size(); i += es) std::reverse(out.begin() + i, out.begin() + i + es);
  }
  return out;
}

uint32_t crc(const char* data, size_t n) {
  uLong v = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large blobs in chunks.
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<size_t>(n, 1u << 30));
    v = crc32(v, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<uint32_t>(v);
}

void write_file_atomic(const fs::path& path, const char* data, size_t n) {
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(data, static_cast<std::streamsize>(n));
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

nlohmann::json stats_to_json(const LatentStats& s) {
  if (s.empty()) return nullptr;
  return {{"shift", s.shift}, {"scale", s.scale}};
}

std::vector<NamedTensor> named_state(const torch::nn::Module& module, const std::string& prefix) {
  std::vector<NamedTensor> out;
  for (const auto& item : module.named_parameters()) out.push_back({prefix + item.key(), item.value()});
  for (const auto& item : module.named_buffers()) out.push_back({prefix + item.key(), item.value()});
  return out;
}

void restore(torch::nn::Module& module, const std::string& prefix,
             const std::map<std::string, torch::Tensor>& tensors, const fs::path& dir) {
  torch::NoGradGuard no_grad;
  for (const auto& entry : named_state(module, prefix)) {
    auto it = tensors.find(entry.name);
    if (it == tensors.end()) {
      throw CorruptIndexError("checkpoint " + dir.string() + " lacks tensor " + entry.name);
    }
    if (!it->second.sizes().equals(entry.tensor.sizes())) {
      throw CorruptIndexError("tensor " + entry.name + " has shape " + c10::str(it->second.sizes()) +
                              ", model expects " + c10::str(entry.tensor.sizes()));
    }
    auto target = entry.tensor;
    target.copy_(it->second);
  }
}

struct AutoencoderManifest {
  AutoencoderConfig config;
  std::vector<int> phase_history;
  uint64_t seed = 0;
  LatentStats stats;
  std::optional<DiscriminatorOptions> discriminator;
};

AutoencoderManifest parse_autoencoder_manifest(const nlohmann::json& m, const fs::path& dir) {
  if (m.value("kind", std::string()) != "autoencoder") {
    throw CorruptIndexError("checkpoint at " + dir.string() + " is not an autoencoder checkpoint");
  }
  AutoencoderManifest out;
  try {
    out.config = config::autoencoder_from_json(m.at("config"), "config");
    out.phase_history = m.at("phase_history").get<std::vector<int>>();
    out.seed = m.at("seed").get<uint64_t>();
    const auto& stats = m.at("latent_stats");
    if (!stats.is_null()) {
      out.stats.shift = stats.at("shift").get<std::vector<float>>();
      out.stats.scale = stats.at("scale").get<std::vector<float>>();
    }
    const auto& disc = m.at("discriminator");
    if (!disc.is_null()) out.discriminator = config::discriminator_from_json(disc, "discriminator");
  } catch (const nlohmann::json::exception& e) {
    throw CorruptIndexError("malformed autoencoder manifest in " + dir.string() + ": " + e.what());
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

void write_tensor_bundle(const fs::path& dir, nlohmann::json manifest,
                         const std::vector<NamedTensor>& tensors) {
  fs::create_directories(dir);
  std::vector<char> blob;
  nlohmann::json index = nlohmann::json::array();
  for (const auto& t : tensors) {
    const auto bytes = tensor_bytes(t.tensor);
    index.push_back({{"name", t.name},
                     {"dtype", dtype_name(t.tensor.scalar_type())},
                     {"shape", t.tensor.sizes().vec()},
                     {"offset", blob.size()},
                     {"bytes", bytes.size()},
                     {"crc32", crc(bytes.data(), bytes.size())}});
    blob.insert(blob.end(), bytes.begin(), bytes.end());
  }
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["blob"] = kBlob;
  manifest["blob_bytes"] = blob.size();
  manifest["tensors"] = std::move(index);

  // Blob first: a manifest on disk always refers to a complete blob.
  write_file_atomic(dir / kBlob, blob.data(), blob.size());
  const auto text = manifest.dump(2) + "\n";
  write_file_atomic(dir / kManifest, text.data(), text.size());
}

TensorBundle read_tensor_bundle(const fs::path& dir) {
  std::ifstream min(dir / kManifest);
  if (!min) throw CheckpointError("no checkpoint manifest at " + (dir / kManifest).string());
  TensorBundle bundle;
  try {
    bundle.manifest = nlohmann::json::parse(min);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptIndexError("checkpoint manifest " + (dir / kManifest).string() + " is not valid JSON");
  }
  const auto& m = bundle.manifest;
  if (!m.is_object() || !m.contains("format_version") || !m["format_version"].is_number_integer()) {
    throw CorruptIndexError("checkpoint manifest lacks an integer format_version");
  }
  const int version = m["format_version"].get<int>();
  if (version != kCheckpointFormatVersion) {
    throw VersionError("checkpoint format_version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kCheckpointFormatVersion) + ")");
  }

  std::vector<char> blob;
  try {
    const auto blob_path = dir / m.at("blob").get<std::string>();
    const auto declared = m.at("blob_bytes").get<uint64_t>();
    std::ifstream bin(blob_path, std::ios::binary);
    if (!bin) throw TruncatedBlobError("tensor blob " + blob_path.string() + " is missing");
    blob.assign(std::istreambuf_iterator<char>(bin), std::istreambuf_iterator<char>());
    if (blob.size() < declared) {
      throw TruncatedBlobError("tensor blob holds " + std::to_string(blob.size()) + " bytes, index declares " +
                               std::to_string(declared));
    }

    for (const auto& e : m.at("tensors")) {
      const auto name = e.at("name").get<std::string>();
      const auto dtype = parse_dtype(e.at("dtype").get<std::string>());
      const auto shape = e.at("shape").get<std::vector<int64_t>>();
      const auto offset = e.at("offset").get<uint64_t>();
      const auto bytes = e.at("bytes").get<uint64_t>();
      const auto expected_crc = e.at("crc32").get<uint32_t>();

      int64_t numel = 1;
      for (auto s : shape) {
        if (s < 0) throw CorruptIndexError("tensor " + name + " has a negative dimension");
        numel *= s;
      }
      const auto element = static_cast<uint64_t>(c10::elementSize(dtype));
      if (bytes != static_cast<uint64_t>(numel) * element) {
        throw CorruptIndexError("tensor " + name + ": byte length " + std::to_string(bytes) +
                                " does not match its shape");
      }
      if (offset + bytes > blob.size()) {
        throw TruncatedBlobError("tensor " + name + " extends past the end of the blob");
      }
      const char* data = blob.data() + offset;
      if (crc(data, bytes) != expected_crc) throw ChecksumError("checksum mismatch for tensor " + name);

      std::vector<char> copy(data, data + bytes);
      if constexpr (std::endian::native == std::endian::big) {
        for (size_t i = 0; i < copy.size(); i += element) std::reverse(copy.begin() + i, copy.begin() + i + element);
      }
      auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
      if (bytes > 0) std::memcpy(t.data_ptr(), copy.data(), bytes);
      if (!bundle.tensors.emplace(name, t).second) {
        throw CorruptIndexError("duplicate tensor name " + name + " in checkpoint index");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptIndexError(std::string("malformed checkpoint index: ") + e.what());
  }
  return bundle;
}

// ---------------------------------------------------------------------------

void save_checkpoint(const AutoencoderState& state, const fs::path& dir) {
  if (!state.model) throw CheckpointError("save_checkpoint: no model");
  nlohmann::json manifest;
  manifest["kind"] = "autoencoder";
  manifest["config"] = config::to_json(state.model->config());
  manifest["phase_history"] = state.phase_history;
  manifest["seed"] = state.seed;
  manifest["latent_stats"] = stats_to_json(state.model->latent_stats);
  manifest["discriminator"] =
      state.discriminator ? config::to_json(state.discriminator->options()) : nlohmann::json(nullptr);
  auto tensors = named_state(*state.model, "");
  if (state.discriminator) {
    for (auto& t : named_state(*state.discriminator, "discriminator.")) tensors.push_back(std::move(t));
  }
  write_tensor_bundle(dir, std::move(manifest), tensors);
}

AutoencoderState load_checkpoint(const fs::path& dir) {
  auto bundle = read_tensor_bundle(dir);
  const auto info = parse_autoencoder_manifest(bundle.manifest, dir);
  AutoencoderState state;
  state.model = Autoencoder(info.config);
  state.model->latent_stats = info.stats;
  if (info.discriminator) state.discriminator = Discriminator(*info.discriminator);
  state.phase_history = info.phase_history;
  state.seed = info.seed;
  restore(*state.model, "", bundle.tensors, dir);
  if (state.discriminator) restore(*state.discriminator, "discriminator.", bundle.tensors, dir);
  return state;
}

void load_checkpoint_into(AutoencoderState& state, const fs::path& dir) {
  auto bundle = read_tensor_bundle(dir);
  const auto info = parse_autoencoder_manifest(bundle.manifest, dir);
  if (!state.model) throw CheckpointError("load_checkpoint_into: state has no model");
  if (!(info.config == state.model->config())) {
    throw ConfigError("checkpoint " + dir.string() + " was written for a different autoencoder config: " +
                      config::to_json(info.config).dump() + " vs " +
                      config::to_json(state.model->config()).dump());
  }
  restore(*state.model, "", bundle.tensors, dir);
  state.model->latent_stats = info.stats;
  if (info.discriminator) {
    if (!state.discriminator) state.discriminator = Discriminator(*info.discriminator);
    restore(*state.discriminator, "discriminator.", bundle.tensors, dir);
  }
  state.phase_history = info.phase_history;
  state.seed = info.seed;
}

}  // namespace dcae
