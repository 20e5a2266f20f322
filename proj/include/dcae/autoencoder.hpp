#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dcae/residual_blocks.hpp"

namespace dcae {

// Shape-determining description of a deterministic deep-compression
// autoencoder. One resolution stage per entry of stage_widths; consecutive
// stages are joined by a residual downsample (encoder) / upsample (decoder)
// block, so spatial_compression == 2^(stages - 1).
struct AutoencoderConfig {
  int64_t spatial_compression = 32;  // f
  int64_t latent_channels = 32;      // c
  std::vector<int64_t> stage_widths = {64, 128, 256, 256, 256, 512};
  std::vector<int64_t> blocks_per_stage = {1, 1, 1, 1, 1, 1};
  int64_t in_channels = 3;
  bool residual_shortcuts = true;
  bool attention = false;  // one attention block at the lowest resolution
  // Stage-boundary selectors for parameter_groups().
  int64_t encoder_head_stages = 1;
  int64_t decoder_input_stages = 1;
  int64_t decoder_head_stages = 1;

  int64_t num_stages() const { return static_cast<int64_t>(stage_widths.size()); }

  // Throws ConfigError naming the first violated constraint.
  void validate() const;

  // Named presets: "f32c32" (default desk config), "f64c128", "f128c512".
  static AutoencoderConfig preset(std::string_view name);

  bool operator==(const AutoencoderConfig&) const = default;
};

// Per-channel affine normalization of latents, z_norm = (z - shift) / scale,
// measured on a calibration batch. Empty until calibrated.
struct LatentStats {
  std::vector<float> shift;
  std::vector<float> scale;

  bool empty() const { return shift.empty(); }
  torch::Tensor normalize(const torch::Tensor& z) const;
  torch::Tensor denormalize(const torch::Tensor& z) const;
  bool operator==(const LatentStats&) const = default;
};

class EncoderStageImpl : public torch::nn::Module {
 public:
  EncoderStageImpl(const AutoencoderConfig& config, int64_t index);
  torch::Tensor forward(torch::Tensor x);

  ResidualDownsampleBlock down{nullptr};  // null for the first stage
  std::vector<ResBlock> blocks;
  AttentionBlock attention{nullptr};
};
TORCH_MODULE(EncoderStage);

class DecoderStageImpl : public torch::nn::Module {
 public:
  // `index` counts from the latent side: stage 0 has width stage_widths.back().
  DecoderStageImpl(const AutoencoderConfig& config, int64_t index);
  torch::Tensor forward(torch::Tensor x);

  ResidualUpsampleBlock up{nullptr};  // null for stage 0
  std::vector<ResBlock> blocks;
  AttentionBlock attention{nullptr};
};
TORCH_MODULE(DecoderStage);

class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const AutoencoderConfig& config);
  torch::Tensor forward(torch::Tensor x);

  torch::nn::Conv2d stem{nullptr};
  std::vector<EncoderStage> stages;
  LatentProjectIn project_in{nullptr};
};
TORCH_MODULE(Encoder);

class DecoderImpl : public torch::nn::Module {
 public:
  explicit DecoderImpl(const AutoencoderConfig& config);
  torch::Tensor forward(torch::Tensor z);

  LatentProjectOut project_out{nullptr};
  std::vector<DecoderStage> stages;
  torch::nn::Sequential head{nullptr};  // GroupNorm, SiLU, conv to image channels
};
TORCH_MODULE(Decoder);

class AutoencoderImpl : public torch::nn::Module {
 public:
  explicit AutoencoderImpl(AutoencoderConfig config);

  // [N, in_channels, H, W] -> [N, c, H/f, W/f]; ShapeError unless f | H and f | W.
  torch::Tensor encode(const torch::Tensor& x);
  // [N, c, h, w] -> [N, in_channels, f*h, f*w]; output is not clamped.
  torch::Tensor decode(const torch::Tensor& z);
  torch::Tensor forward(const torch::Tensor& x) { return decode(encode(x)); }

  const AutoencoderConfig& config() const { return config_; }

  Encoder encoder{nullptr};
  Decoder decoder{nullptr};
  LatentStats latent_stats;

 private:
  AutoencoderConfig config_;
};
TORCH_MODULE(Autoencoder);

// Deterministic construction: parameters depend only on (config, seed). With
// residual shortcuts enabled every learned branch starts with a zeroed final
// layer, so the fresh model computes its non-parametric shortcut cascade.
Autoencoder build(const AutoencoderConfig& config, uint64_t seed);

torch::Tensor encode(Autoencoder& model, const torch::Tensor& x);
torch::Tensor decode(Autoencoder& model, const torch::Tensor& z);

enum class ParameterGroup { kAll, kEncoderHead, kDecoderInput, kDecoderHead, kOther };

std::string_view to_string(ParameterGroup group);
ParameterGroup parse_parameter_group(std::string_view name);

struct NamedParameter {
  std::string name;
  torch::Tensor tensor;
};

// encoder_head  = last encoder_head_stages encoder stages + latent projection in
// decoder_input = latent projection out + first decoder_input_stages decoder stages
// decoder_head  = last decoder_head_stages decoder stages + output head
// other         = everything else; the four groups above partition kAll.
std::map<ParameterGroup, std::vector<NamedParameter>> parameter_groups(const Autoencoder& model);

// Union of the requested groups, in registration order, without duplicates.
std::vector<NamedParameter> select_parameters(const Autoencoder& model,
                                              const std::set<ParameterGroup>& groups);

// Per-channel mean/std of encode(batch).
LatentStats calibrate_latent_stats(Autoencoder& model, const torch::Tensor& batch);

}  // namespace dcae
