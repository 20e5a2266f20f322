#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcae/autoencoder.hpp"
#include "dcae/diffusion.hpp"
#include "dcae/training.hpp"

// JSON (de)serialization of every configuration type, plus the run
// configuration consumed by the CLI. Parsing is strict: unknown keys and
// wrongly typed values raise ConfigError naming the full key path
// (e.g. "phases.phase2.learning_rate").
namespace dcae::config {

using nlohmann::json;

// Reads keys from one JSON object and remembers which ones were consumed;
// finish() rejects the rest.
class ObjectReader {
 public:
  ObjectReader(const json& object, std::string path);

  bool has(const std::string& key) const;
  const json& child(const std::string& key);
  std::string key_path(const std::string& key) const;

  template <typename T>
  T get(const std::string& key, const T& fallback) {
    if (!has(key)) return fallback;
    return require<T>(key);
  }

  template <typename T>
  T require(const std::string& key) {
    const auto& value = child(key);
    try {
      return value.get<T>();
    } catch (const json::exception&) {
      throw_type_error(key, value);
    }
  }

  void finish() const;

 private:
  [[noreturn]] void throw_type_error(const std::string& key, const json& value) const;

  const json& object_;
  std::string path_;
  std::set<std::string> seen_;
};

json to_json(const AutoencoderConfig& cfg);
// Accepts an optional "preset" key; explicit keys override the preset.
AutoencoderConfig autoencoder_from_json(const json& j, const std::string& path);

json to_json(const diffusion::DiffusionConfig& cfg);
diffusion::DiffusionConfig diffusion_from_json(const json& j, const std::string& path);

json to_json(const DiscriminatorOptions& opts);
DiscriminatorOptions discriminator_from_json(const json& j, const std::string& path);

json to_json(const PhaseSpec& spec);
// Starts from PhaseSpec::defaults(phase_id).
PhaseSpec phase_from_json(const json& j, int phase_id, const std::string& path);

struct DataConfig {
  std::string low = "synthetic:mixed:1024";
  std::string high = "synthetic:mixed:256";
  std::string validation = "synthetic:mixed:64";
  uint64_t validation_seed = 1000003;
};

struct DiffusionTrainConfig {
  diffusion::DiffusionConfig model;
  int64_t steps = 2000;
  int64_t batch_size = 32;
  double learning_rate = 1e-4;
  int64_t log_every = 50;
  int64_t eval_samples = 256;
};

struct AblationConfig {
  std::vector<uint64_t> seeds = {0, 1, 2};
  int64_t eval_every = 250;
  int64_t validation_images = 64;
  int64_t resolution_multiplier = 4;
};

struct EvalConfig {
  int64_t frechet_images = 1024;
  int64_t batch_size = 16;
  int64_t grid_images = 8;
};

struct ProfileConfig {
  int64_t timing_resolution = 64;
  int64_t timing_batch = 2;
  int64_t image_size = 512;
  std::vector<int64_t> patch_sizes = {1, 2, 4, 8};
};

struct RunConfig {
  uint64_t seed = 0;
  std::string output_dir = "runs/default";
  AutoencoderConfig autoencoder;
  DiscriminatorOptions discriminator;
  std::array<PhaseSpec, 3> phases = {PhaseSpec::defaults(1), PhaseSpec::defaults(2),
                                     PhaseSpec::defaults(3)};
  DataConfig data;
  DiffusionTrainConfig diffusion;
  AblationConfig ablation;
  EvalConfig eval;
  ProfileConfig profile;
  int64_t log_every = 10;
};

RunConfig run_config_from_json(const json& j);
RunConfig load_run_config(const std::filesystem::path& path);
json to_json(const RunConfig& cfg);

}  // namespace dcae::config
