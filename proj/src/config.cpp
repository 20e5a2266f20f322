#include "dcae/config.hpp"

#include <fstream>

#include "dcae/error.hpp"

namespace dcae::config {
namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::set<ParameterGroup> groups_from_json(ObjectReader& r, const std::string& key,
                                          const std::set<ParameterGroup>& fallback) {
  if (!r.has(key)) return fallback;
  std::set<ParameterGroup> out;
  for (const auto& name : r.require<std::vector<std::string>>(key)) {
    try {
      out.insert(parse_parameter_group(name));
    } catch (const ConfigError& e) {
      throw ConfigError(r.key_path(key) + ": " + e.what());
    }
  }
  return out;
}

std::set<LossTerm> losses_from_json(ObjectReader& r, const std::string& key,
                                    const std::set<LossTerm>& fallback) {
  if (!r.has(key)) return fallback;
  std::set<LossTerm> out;
  for (const auto& name : r.require<std::vector<std::string>>(key)) {
    if (name == "reconstruction") {
      out.insert(LossTerm::kReconstruction);
    } else if (name == "gan") {
      out.insert(LossTerm::kGan);
    } else {
      throw ConfigError(r.key_path(key) + ": unknown loss '" + name +
                        "' (expected reconstruction or gan)");
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// ObjectReader

ObjectReader::ObjectReader(const json& object, std::string path)
    : object_(object), path_(std::move(path)) {
  if (!object_.is_object()) {
    throw ConfigError((path_.empty() ? std::string("config") : path_) + ": expected an object");
  }
}

bool ObjectReader::has(const std::string& key) const { return object_.contains(key); }

const json& ObjectReader::child(const std::string& key) {
  if (!has(key)) throw ConfigError(key_path(key) + ": missing required key");
  seen_.insert(key);
  return object_.at(key);
}

std::string ObjectReader::key_path(const std::string& key) const { return join(path_, key); }

void ObjectReader::finish() const {
  for (const auto& item : object_.items()) {
    if (seen_.count(item.key()) == 0) {
      throw ConfigError(key_path(item.key()) + ": unknown key");
    }
  }
}

void ObjectReader::throw_type_error(const std::string& key, const json& value) const {
  throw ConfigError(key_path(key) + ": unexpected value " + value.dump());
}

// ---------------------------------------------------------------------------
// AutoencoderConfig

json to_json(const AutoencoderConfig& cfg) {
  return {{"spatial_compression", cfg.spatial_compression},
          {"latent_channels", cfg.latent_channels},
          {"stage_widths", cfg.stage_widths},
          {"blocks_per_stage", cfg.blocks_per_stage},
          {"in_channels", cfg.in_channels},
          {"residual_shortcuts", cfg.residual_shortcuts},
          {"attention", cfg.attention},
          {"encoder_head_stages", cfg.encoder_head_stages},
          {"decoder_input_stages", cfg.decoder_input_stages},
          {"decoder_head_stages", cfg.decoder_head_stages}};
}

AutoencoderConfig autoencoder_from_json(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  AutoencoderConfig cfg;
  if (r.has("preset")) {
    try {
      cfg = AutoencoderConfig::preset(r.require<std::string>("preset"));
    } catch (const ConfigError& e) {
      throw ConfigError(r.key_path("preset") + ": " + e.what());
    }
  }
  cfg.spatial_compression = r.get("spatial_compression", cfg.spatial_compression);
  cfg.latent_channels = r.get("latent_channels", cfg.latent_channels);
  cfg.stage_widths = r.get("stage_widths", cfg.stage_widths);
  cfg.blocks_per_stage = r.get("blocks_per_stage", cfg.blocks_per_stage);
  cfg.in_channels = r.get("in_channels", cfg.in_channels);
  cfg.residual_shortcuts = r.get("residual_shortcuts", cfg.residual_shortcuts);
  cfg.attention = r.get("attention", cfg.attention);
  cfg.encoder_head_stages = r.get("encoder_head_stages", cfg.encoder_head_stages);
  cfg.decoder_input_stages = r.get("decoder_input_stages", cfg.decoder_input_stages);
  cfg.decoder_head_stages = r.get("decoder_head_stages", cfg.decoder_head_stages);
  r.finish();
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError((path.empty() ? std::string("autoencoder") : path) + ": " + e.what());
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// DiffusionConfig

json to_json(const diffusion::DiffusionConfig& cfg) {
  return {{"patch_size", cfg.patch_size},       {"width", cfg.width},
          {"depth", cfg.depth},                 {"heads", cfg.heads},
          {"mlp_ratio", cfg.mlp_ratio},         {"timesteps", cfg.timesteps},
          {"beta_start", cfg.beta_start},       {"beta_end", cfg.beta_end},
          {"num_classes", cfg.num_classes},     {"cfg_scale", cfg.cfg_scale},
          {"sample_steps", cfg.sample_steps},   {"class_dropout", cfg.class_dropout},
          {"latent_channels", cfg.latent_channels}, {"latent_size", cfg.latent_size}};
}

diffusion::DiffusionConfig diffusion_from_json(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  diffusion::DiffusionConfig cfg;
  cfg.patch_size = r.get("patch_size", cfg.patch_size);
  cfg.width = r.get("width", cfg.width);
  cfg.depth = r.get("depth", cfg.depth);
  cfg.heads = r.get("heads", cfg.heads);
  cfg.mlp_ratio = r.get("mlp_ratio", cfg.mlp_ratio);
  cfg.timesteps = r.get("timesteps", cfg.timesteps);
  cfg.beta_start = r.get("beta_start", cfg.beta_start);
  cfg.beta_end = r.get("beta_end", cfg.beta_end);
  cfg.num_classes = r.get("num_classes", cfg.num_classes);
  cfg.cfg_scale = r.get("cfg_scale", cfg.cfg_scale);
  cfg.sample_steps = r.get("sample_steps", cfg.sample_steps);
  cfg.class_dropout = r.get("class_dropout", cfg.class_dropout);
  cfg.latent_channels = r.get("latent_channels", cfg.latent_channels);
  cfg.latent_size = r.get("latent_size", cfg.latent_size);
  r.finish();
  return cfg;
}

// ---------------------------------------------------------------------------
// Discriminator / phases

json to_json(const DiscriminatorOptions& opts) {
  return {{"in_channels", opts.in_channels}, {"base_channels", opts.base_channels},
          {"zero_init", opts.zero_init}};
}

DiscriminatorOptions discriminator_from_json(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  DiscriminatorOptions opts;
  opts.in_channels = r.get("in_channels", opts.in_channels);
  opts.base_channels = r.get("base_channels", opts.base_channels);
  opts.zero_init = r.get("zero_init", opts.zero_init);
  r.finish();
  return opts;
}

json to_json(const PhaseSpec& spec) {
  json groups = json::array();
  for (auto g : spec.trainable_groups) groups.push_back(std::string(to_string(g)));
  json losses = json::array();
  for (auto l : spec.losses) losses.push_back(l == LossTerm::kGan ? "gan" : "reconstruction");
  return {{"phase_id", spec.phase_id},         {"trainable_groups", groups},
          {"losses", losses},                  {"resolution", spec.resolution},
          {"steps", spec.steps},               {"batch_size", spec.batch_size},
          {"learning_rate", spec.learning_rate}, {"weight_decay", spec.weight_decay},
          {"beta1", spec.beta1},               {"beta2", spec.beta2},
          {"gan_weight", spec.gan_weight},     {"seed", spec.seed}};
}

PhaseSpec phase_from_json(const json& j, int phase_id, const std::string& path) {
  ObjectReader r(j, path);
  PhaseSpec spec = PhaseSpec::defaults(phase_id);
  if (r.has("phase_id") && r.require<int>("phase_id") != phase_id) {
    throw ConfigError(r.key_path("phase_id") + ": must be " + std::to_string(phase_id));
  }
  spec.trainable_groups = groups_from_json(r, "trainable_groups", spec.trainable_groups);
  spec.losses = losses_from_json(r, "losses", spec.losses);
  spec.resolution = r.get("resolution", spec.resolution);
  spec.steps = r.get("steps", spec.steps);
  spec.batch_size = r.get("batch_size", spec.batch_size);
  spec.learning_rate = r.get("learning_rate", spec.learning_rate);
  spec.weight_decay = r.get("weight_decay", spec.weight_decay);
  spec.beta1 = r.get("beta1", spec.beta1);
  spec.beta2 = r.get("beta2", spec.beta2);
  spec.gan_weight = r.get("gan_weight", spec.gan_weight);
  spec.seed = r.get("seed", spec.seed);
  r.finish();
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return spec;
}

// ---------------------------------------------------------------------------
// RunConfig

RunConfig run_config_from_json(const json& j) {
  ObjectReader r(j, "");
  RunConfig cfg;
  cfg.seed = r.get("seed", cfg.seed);
  cfg.output_dir = r.get("output_dir", cfg.output_dir);
  cfg.log_every = r.get("log_every", cfg.log_every);
  if (r.has("autoencoder")) cfg.autoencoder = autoencoder_from_json(r.child("autoencoder"), "autoencoder");
  if (r.has("discriminator")) {
    cfg.discriminator = discriminator_from_json(r.child("discriminator"), "discriminator");
  }

  for (int k = 0; k < 3; ++k) cfg.phases[static_cast<size_t>(k)].seed = cfg.seed + static_cast<uint64_t>(k) + 1;
  if (r.has("phases")) {
    ObjectReader pr(r.child("phases"), "phases");
    for (int k = 1; k <= 3; ++k) {
      const auto key = "phase" + std::to_string(k);
      if (!pr.has(key)) continue;
      json phase = pr.child(key);
      if (!phase.is_object()) throw ConfigError(pr.key_path(key) + ": expected an object");
      if (!phase.contains("seed")) phase["seed"] = cfg.seed + static_cast<uint64_t>(k);
      cfg.phases[static_cast<size_t>(k - 1)] = phase_from_json(phase, k, pr.key_path(key));
    }
    pr.finish();
  }

  if (r.has("data")) {
    ObjectReader dr(r.child("data"), "data");
    cfg.data.low = dr.get("low", cfg.data.low);
    cfg.data.high = dr.get("high", cfg.data.high);
    cfg.data.validation = dr.get("validation", cfg.data.validation);
    cfg.data.validation_seed = dr.get("validation_seed", cfg.data.validation_seed);
    dr.finish();
  }

  if (r.has("diffusion")) {
    ObjectReader dr(r.child("diffusion"), "diffusion");
    if (dr.has("model")) cfg.diffusion.model = diffusion_from_json(dr.child("model"), "diffusion.model");
    cfg.diffusion.steps = dr.get("steps", cfg.diffusion.steps);
    cfg.diffusion.batch_size = dr.get("batch_size", cfg.diffusion.batch_size);
    cfg.diffusion.learning_rate = dr.get("learning_rate", cfg.diffusion.learning_rate);
    cfg.diffusion.log_every = dr.get("log_every", cfg.diffusion.log_every);
    cfg.diffusion.eval_samples = dr.get("eval_samples", cfg.diffusion.eval_samples);
    dr.finish();
  }

  if (r.has("ablation")) {
    ObjectReader ar(r.child("ablation"), "ablation");
    cfg.ablation.seeds = ar.get("seeds", cfg.ablation.seeds);
    cfg.ablation.eval_every = ar.get("eval_every", cfg.ablation.eval_every);
    cfg.ablation.validation_images = ar.get("validation_images", cfg.ablation.validation_images);
    cfg.ablation.resolution_multiplier =
        ar.get("resolution_multiplier", cfg.ablation.resolution_multiplier);
    ar.finish();
    if (cfg.ablation.seeds.empty()) throw ConfigError("ablation.seeds: must not be empty");
    if (cfg.ablation.eval_every < 1) throw ConfigError("ablation.eval_every: must be positive");
  }

  if (r.has("eval")) {
    ObjectReader er(r.child("eval"), "eval");
    cfg.eval.frechet_images = er.get("frechet_images", cfg.eval.frechet_images);
    cfg.eval.batch_size = er.get("batch_size", cfg.eval.batch_size);
    cfg.eval.grid_images = er.get("grid_images", cfg.eval.grid_images);
    er.finish();
  }

  if (r.has("profile")) {
    ObjectReader pr(r.child("profile"), "profile");
    cfg.profile.timing_resolution = pr.get("timing_resolution", cfg.profile.timing_resolution);
    cfg.profile.timing_batch = pr.get("timing_batch", cfg.profile.timing_batch);
    cfg.profile.image_size = pr.get("image_size", cfg.profile.image_size);
    cfg.profile.patch_sizes = pr.get("patch_sizes", cfg.profile.patch_sizes);
    pr.finish();
  }

  r.finish();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

json to_json(const RunConfig& cfg) {
  json phases;
  for (int k = 0; k < 3; ++k) {
    phases["phase" + std::to_string(k + 1)] = to_json(cfg.phases[static_cast<size_t>(k)]);
  }
  return {
      {"seed", cfg.seed},
      {"output_dir", cfg.output_dir},
      {"log_every", cfg.log_every},
      {"autoencoder", to_json(cfg.autoencoder)},
      {"discriminator", to_json(cfg.discriminator)},
      {"phases", phases},
      {"data",
       {{"low", cfg.data.low},
        {"high", cfg.data.high},
        {"validation", cfg.data.validation},
        {"validation_seed", cfg.data.validation_seed}}},
      {"diffusion",
       {{"model", to_json(cfg.diffusion.model)},
        {"steps", cfg.diffusion.steps},
        {"batch_size", cfg.diffusion.batch_size},
        {"learning_rate", cfg.diffusion.learning_rate},
        {"log_every", cfg.diffusion.log_every},
        {"eval_samples", cfg.diffusion.eval_samples}}},
      {"ablation",
       {{"seeds", cfg.ablation.seeds},
        {"eval_every", cfg.ablation.eval_every},
        {"validation_images", cfg.ablation.validation_images},
        {"resolution_multiplier", cfg.ablation.resolution_multiplier}}},
      {"eval",
       {{"frechet_images", cfg.eval.frechet_images},
        {"batch_size", cfg.eval.batch_size},
        {"grid_images", cfg.eval.grid_images}}},
      {"profile",
       {{"timing_resolution", cfg.profile.timing_resolution},
        {"timing_batch", cfg.profile.timing_batch},
        {"image_size", cfg.profile.image_size},
        {"patch_sizes", cfg.profile.patch_sizes}}},
  };
}

}  // namespace dcae::config
