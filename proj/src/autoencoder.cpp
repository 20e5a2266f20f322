#include "dcae/autoencoder.hpp"

#include <algorithm>
#include <string>

#include "dcae/error.hpp"
#include "dcae/nn_util.hpp"

namespace dcae {
namespace {

std::string str(int64_t v) { return std::to_string(v); }

bool is_power_of_two(int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

// ---------------------------------------------------------------------------
// AutoencoderConfig

void AutoencoderConfig::validate() const {
  if (in_channels < 1) throw ConfigError("in_channels must be >= 1, got " + str(in_channels));
  if (latent_channels < 1) {
    throw ConfigError("latent_channels must be >= 1, got " + str(latent_channels));
  }
  if (!is_power_of_two(spatial_compression) || spatial_compression < 8 ||
      spatial_compression > 128) {
    throw ConfigError("spatial_compression must be a power of two in [8, 128], got " +
                      str(spatial_compression));
  }
  if (stage_widths.empty()) throw ConfigError("stage_widths must not be empty");
  if (blocks_per_stage.size() != stage_widths.size()) {
    throw ConfigError("blocks_per_stage has " + str(static_cast<int64_t>(blocks_per_stage.size())) +
                      " entries but stage_widths has " + str(num_stages()));
  }
  if ((int64_t{1} << (num_stages() - 1)) != spatial_compression) {
    throw ConfigError("spatial_compression " + str(spatial_compression) + " requires " +
                      "log2(f) + 1 stages, got " + str(num_stages()) + " stage widths");
  }
  for (size_t i = 0; i < stage_widths.size(); ++i) {
    if (stage_widths[i] < 1) {
      throw ConfigError("stage_widths[" + str(static_cast<int64_t>(i)) + "] must be positive");
    }
    if (blocks_per_stage[i] < 0) {
      throw ConfigError("blocks_per_stage[" + str(static_cast<int64_t>(i)) +
                        "] must be non-negative");
    }
  }
  for (size_t i = 0; i + 1 < stage_widths.size(); ++i) {
    const auto c = stage_widths[i], c_next = stage_widths[i + 1];
    const auto where = "stage_widths[" + str(static_cast<int64_t>(i)) + "] -> [" +
                       str(static_cast<int64_t>(i + 1)) + "] (" + str(c) + " -> " + str(c_next) +
                       ")";
    if ((4 * c) % c_next != 0) {
      throw ConfigError(where + ": downsample shortcut needs the next width to divide 4x this width");
    }
    if (c_next % 4 != 0 || c % (c_next / 4) != 0) {
      throw ConfigError(where + ": upsample shortcut needs the next width / 4 to divide this width");
    }
  }
  if (stage_widths.back() % latent_channels != 0) {
    throw ConfigError("latent_channels " + str(latent_channels) +
                      " must divide the final stage width " + str(stage_widths.back()));
  }
  if (encoder_head_stages < 1 || encoder_head_stages > num_stages()) {
    throw ConfigError("encoder_head_stages must be in [1, " + str(num_stages()) + "]");
  }
  if (decoder_input_stages < 1 || decoder_head_stages < 1 ||
      decoder_input_stages + decoder_head_stages > num_stages()) {
    throw ConfigError("decoder_input_stages + decoder_head_stages must be in [2, " +
                      str(num_stages()) + "] with both >= 1");
  }
}

AutoencoderConfig AutoencoderConfig::preset(std::string_view name) {
  AutoencoderConfig cfg;
  if (name == "f32c32") return cfg;
  if (name == "f64c128") {
    cfg.spatial_compression = 64;
    cfg.latent_channels = 128;
    cfg.stage_widths = {32, 64, 128, 256, 256, 512, 512};
    cfg.blocks_per_stage = std::vector<int64_t>(7, 1);
    return cfg;
  }
  if (name == "f128c512") {
    cfg.spatial_compression = 128;
    cfg.latent_channels = 512;
    cfg.stage_widths = {32, 64, 128, 256, 256, 512, 512, 1024};
    cfg.blocks_per_stage = std::vector<int64_t>(8, 1);
    return cfg;
  }
  throw ConfigError("unknown autoencoder preset '" + std::string(name) +
                    "' (expected f32c32, f64c128 or f128c512)");
}

// ---------------------------------------------------------------------------
// LatentStats

torch::Tensor LatentStats::normalize(const torch::Tensor& z) const {
  if (empty()) return z;
  auto opts = torch::TensorOptions().dtype(torch::kFloat32);
  auto shift_t = torch::tensor(shift, opts).to(z.dtype()).view({1, -1, 1, 1});
  auto scale_t = torch::tensor(scale, opts).to(z.dtype()).view({1, -1, 1, 1});
  return (z - shift_t) / scale_t;
}

torch::Tensor LatentStats::denormalize(const torch::Tensor& z) const {
  if (empty()) return z;
  auto opts = torch::TensorOptions().dtype(torch::kFloat32);
  auto shift_t = torch::tensor(shift, opts).to(z.dtype()).view({1, -1, 1, 1});
  auto scale_t = torch::tensor(scale, opts).to(z.dtype()).view({1, -1, 1, 1});
  return z * scale_t + shift_t;
}

// ---------------------------------------------------------------------------
// Stages

EncoderStageImpl::EncoderStageImpl(const AutoencoderConfig& config, int64_t index) {
  const auto& widths = config.stage_widths;
  const auto width = widths[static_cast<size_t>(index)];
  if (index > 0) {
    down = register_module(
        "down", ResidualDownsampleBlock(widths[static_cast<size_t>(index - 1)], width,
                                        config.residual_shortcuts));
  }
  auto list = register_module("blocks", torch::nn::ModuleList());
  for (int64_t b = 0; b < config.blocks_per_stage[static_cast<size_t>(index)]; ++b) {
    blocks.emplace_back(width);
    list->push_back(blocks.back());
  }
  if (config.attention && index == config.num_stages() - 1) {
    attention = register_module("attention", AttentionBlock(width));
  }
}

torch::Tensor EncoderStageImpl::forward(torch::Tensor x) {
  if (down) x = down(x);
  for (auto& block : blocks) x = block(x);
  if (attention) x = attention(x);
  return x;
}

DecoderStageImpl::DecoderStageImpl(const AutoencoderConfig& config, int64_t index) {
  const auto& widths = config.stage_widths;
  const auto k = static_cast<size_t>(config.num_stages() - 1 - index);
  if (index > 0) {
    up = register_module("up",
                         ResidualUpsampleBlock(widths[k + 1], widths[k], config.residual_shortcuts));
  }
  auto list = register_module("blocks", torch::nn::ModuleList());
  for (int64_t b = 0; b < config.blocks_per_stage[k]; ++b) {
    blocks.emplace_back(widths[k]);
    list->push_back(blocks.back());
  }
  if (config.attention && index == 0) {
    attention = register_module("attention", AttentionBlock(widths[k]));
  }
}

torch::Tensor DecoderStageImpl::forward(torch::Tensor x) {
  if (up) x = up(x);
  if (attention) x = attention(x);
  for (auto& block : blocks) x = block(x);
  return x;
}

EncoderImpl::EncoderImpl(const AutoencoderConfig& config) {
  stem = register_module("stem", make_conv(config.in_channels, config.stage_widths.front(), 3));
  auto list = register_module("stages", torch::nn::ModuleList());
  for (int64_t i = 0; i < config.num_stages(); ++i) {
    stages.emplace_back(config, i);
    list->push_back(stages.back());
  }
  project_in = register_module(
      "project_in",
      LatentProjectIn(config.stage_widths.back(), config.latent_channels, config.residual_shortcuts));
}

torch::Tensor EncoderImpl::forward(torch::Tensor x) {
  x = stem(x);
  for (auto& stage : stages) x = stage(x);
  return project_in(x);
}

DecoderImpl::DecoderImpl(const AutoencoderConfig& config) {
  project_out = register_module(
      "project_out", LatentProjectOut(config.latent_channels, config.stage_widths.back(),
                                      config.residual_shortcuts));
  auto list = register_module("stages", torch::nn::ModuleList());
  for (int64_t j = 0; j < config.num_stages(); ++j) {
    stages.emplace_back(config, j);
    list->push_back(stages.back());
  }
  const auto w0 = config.stage_widths.front();
  head = register_module("head", torch::nn::Sequential(make_group_norm(w0), torch::nn::SiLU(),
                                                       make_conv(w0, config.in_channels, 3)));
}

torch::Tensor DecoderImpl::forward(torch::Tensor z) {
  auto x = project_out(z);
  for (auto& stage : stages) x = stage(x);
  return head->forward(x);
}

// ---------------------------------------------------------------------------
// Autoencoder

AutoencoderImpl::AutoencoderImpl(AutoencoderConfig config) : config_(std::move(config)) {
  config_.validate();
  encoder = register_module("encoder", Encoder(config_));
  decoder = register_module("decoder", Decoder(config_));
}

torch::Tensor AutoencoderImpl::encode(const torch::Tensor& x) {
  if (x.dim() != 4) {
    throw ShapeError("encode: expected [N, C, H, W] input, got rank " + str(x.dim()));
  }
  if (x.size(1) != config_.in_channels) {
    throw ShapeError("encode: expected " + str(config_.in_channels) + " input channels, got " +
                     str(x.size(1)));
  }
  const auto f = config_.spatial_compression;
  if (x.size(2) % f != 0 || x.size(3) % f != 0) {
    throw ShapeError("encode: input resolution " + str(x.size(2)) + "x" + str(x.size(3)) +
                     " is not divisible by f=" + str(f));
  }
  require_finite(x, "encode input");
  return encoder(x);
}

torch::Tensor AutoencoderImpl::decode(const torch::Tensor& z) {
  if (z.dim() != 4 || z.size(1) != config_.latent_channels) {
    throw ShapeError("decode: expected [N, " + str(config_.latent_channels) +
                     ", h, w] latent, got " + c10::str(z.sizes()));
  }
  require_finite(z, "decode input");
  return decoder(z);
}

Autoencoder build(const AutoencoderConfig& config, uint64_t seed) {
  Autoencoder model(config);
  seeded_init(*model, seed);
  for (auto& stage : model->encoder->stages) {
    for (auto& block : stage->blocks) block->zero_init_output();
    if (stage->attention) stage->attention->zero_init_output();
    if (stage->down && config.residual_shortcuts) stage->down->zero_init_output();
  }
  for (auto& stage : model->decoder->stages) {
    for (auto& block : stage->blocks) block->zero_init_output();
    if (stage->attention) stage->attention->zero_init_output();
    if (stage->up && config.residual_shortcuts) stage->up->zero_init_output();
  }
  if (config.residual_shortcuts) {
    model->encoder->project_in->zero_init_output();
    model->decoder->project_out->zero_init_output();
  }
  return model;
}

torch::Tensor encode(Autoencoder& model, const torch::Tensor& x) { return model->encode(x); }

torch::Tensor decode(Autoencoder& model, const torch::Tensor& z) { return model->decode(z); }

// ---------------------------------------------------------------------------
// Parameter groups

std::string_view to_string(ParameterGroup group) {
  switch (group) {
    case ParameterGroup::kAll: return "all";
    case ParameterGroup::kEncoderHead: return "encoder_head";
    case ParameterGroup::kDecoderInput: return "decoder_input";
    case ParameterGroup::kDecoderHead: return "decoder_head";
    case ParameterGroup::kOther: return "other";
  }
  return "?";
}

ParameterGroup parse_parameter_group(std::string_view name) {
  for (auto g : {ParameterGroup::kAll, ParameterGroup::kEncoderHead, ParameterGroup::kDecoderInput,
                 ParameterGroup::kDecoderHead, ParameterGroup::kOther}) {
    if (to_string(g) == name) return g;
  }
  throw ConfigError("unknown parameter group '" + std::string(name) + "'");
}

std::map<ParameterGroup, std::vector<NamedParameter>> parameter_groups(const Autoencoder& model) {
  const auto& cfg = model->config();
  const auto stages = cfg.num_stages();

  auto in_stage_range = [](const std::string& name, const std::string& prefix, int64_t lo,
                           int64_t hi) {
    if (name.rfind(prefix, 0) != 0) return false;
    const auto rest = name.substr(prefix.size());
    const auto idx = std::stoll(rest.substr(0, rest.find('.')));
    return idx >= lo && idx < hi;
  };

  std::map<ParameterGroup, std::vector<NamedParameter>> groups;
  for (auto g : {ParameterGroup::kAll, ParameterGroup::kEncoderHead, ParameterGroup::kDecoderInput,
                 ParameterGroup::kDecoderHead, ParameterGroup::kOther}) {
    groups[g];
  }
  for (const auto& item : model->named_parameters(/*recurse=*/true)) {
    const auto& name = item.key();
    NamedParameter np{name, item.value()};
    groups[ParameterGroup::kAll].push_back(np);

    ParameterGroup g = ParameterGroup::kOther;
    if (name.rfind("encoder.project_in.", 0) == 0 ||
        in_stage_range(name, "encoder.stages.", stages - cfg.encoder_head_stages, stages)) {
      g = ParameterGroup::kEncoderHead;
    } else if (name.rfind("decoder.project_out.", 0) == 0 ||
               in_stage_range(name, "decoder.stages.", 0, cfg.decoder_input_stages)) {
      g = ParameterGroup::kDecoderInput;
    } else if (name.rfind("decoder.head.", 0) == 0 ||
               in_stage_range(name, "decoder.stages.", stages - cfg.decoder_head_stages, stages)) {
      g = ParameterGroup::kDecoderHead;
    }
    groups[g].push_back(std::move(np));
  }
  return groups;
}

std::vector<NamedParameter> select_parameters(const Autoencoder& model,
                                              const std::set<ParameterGroup>& groups) {
  if (groups.count(ParameterGroup::kAll) != 0) return parameter_groups(model)[ParameterGroup::kAll];
  auto all = parameter_groups(model);
  std::set<std::string> wanted;
  for (auto g : groups) {
    for (const auto& p : all[g]) wanted.insert(p.name);
  }
  std::vector<NamedParameter> out;
  for (const auto& p : all[ParameterGroup::kAll]) {
    if (wanted.count(p.name) != 0) out.push_back(p);
  }
  return out;
}

LatentStats calibrate_latent_stats(Autoencoder& model, const torch::Tensor& batch) {
  torch::NoGradGuard no_grad;
  auto z = model->encode(batch).to(torch::kFloat64);
  auto mean = z.mean({0, 2, 3});
  auto std = z.std({0, 2, 3}, /*unbiased=*/false).clamp_min(1e-6);
  LatentStats stats;
  for (int64_t c = 0; c < mean.size(0); ++c) {
    stats.shift.push_back(static_cast<float>(mean[c].item<double>()));
    stats.scale.push_back(static_cast<float>(std[c].item<double>()));
  }
  return stats;
}

}  // namespace dcae
