#pragma once

#include <torch/torch.h>

#include <cstdint>

// Learnable building blocks of the residual autoencoder. The resampling blocks
// and latent projections add a non-parametric shortcut (built from
// dcae::shuffle) to a learned branch:
//
//   down:         branch(x) + channel_average(space_to_channel(x, 2), 4C / C_out)
//   up:           branch(x) + channel_duplicate(channel_to_space(x, 2), C_out / (C/4))
//   project in:   head(x)   + channel_average(x, C_enc / c)
//   project out:  input(z)  + channel_duplicate(z, C_dec / c)
//
// With `shortcut` disabled a block computes its branch alone (the plain
// autoencoder used as the ablation baseline). zero_init_output() zeroes the
// final layer of the branch so the block starts out as its shortcut.
namespace dcae {

// Pre-activation residual conv block with an identity skip:
//   x + conv2(silu(norm2(conv1(silu(norm1(x))))))
class ResBlockImpl : public torch::nn::Module {
 public:
  explicit ResBlockImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);
  void zero_init_output();

 private:
  torch::nn::GroupNorm norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
};
TORCH_MODULE(ResBlock);

// Single-head spatial self-attention with an identity skip; output projection
// is zero-initialized by zero_init_output().
class AttentionBlockImpl : public torch::nn::Module {
 public:
  explicit AttentionBlockImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);
  void zero_init_output();

 private:
  int64_t channels_;
  torch::nn::GroupNorm norm_{nullptr};
  torch::nn::Conv2d qkv_{nullptr}, proj_{nullptr};
};
TORCH_MODULE(AttentionBlock);

// [N, C, H, W] -> [N, C_out, H/2, W/2]. Learned branch: ResBlock then a
// stride-2 3x3 convolution.
class ResidualDownsampleBlockImpl : public torch::nn::Module {
 public:
  ResidualDownsampleBlockImpl(int64_t in_channels, int64_t out_channels, bool shortcut = true);

  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor branch(const torch::Tensor& x);
  torch::Tensor shortcut(const torch::Tensor& x) const;

  void zero_init_output();
  bool has_shortcut() const { return use_shortcut_; }
  int64_t shortcut_group() const { return group_; }

 private:
  int64_t in_channels_, out_channels_, group_;
  bool use_shortcut_;
  ResBlock pre_{nullptr};
  torch::nn::Conv2d down_{nullptr};
};
TORCH_MODULE(ResidualDownsampleBlock);

// [N, C, H, W] -> [N, C_out, 2H, 2W]. Learned branch: ResBlock, nearest x2
// interpolation, 3x3 convolution.
class ResidualUpsampleBlockImpl : public torch::nn::Module {
 public:
  ResidualUpsampleBlockImpl(int64_t in_channels, int64_t out_channels, bool shortcut = true);

  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor branch(const torch::Tensor& x);
  torch::Tensor shortcut(const torch::Tensor& x) const;

  void zero_init_output();
  bool has_shortcut() const { return use_shortcut_; }
  int64_t shortcut_group() const { return group_; }

 private:
  int64_t in_channels_, out_channels_, group_;
  bool use_shortcut_;
  ResBlock pre_{nullptr};
  torch::nn::Conv2d conv_{nullptr};
};
TORCH_MODULE(ResidualUpsampleBlock);

// Encoder head: [N, C_enc, h, w] -> [N, c, h, w].
class LatentProjectInImpl : public torch::nn::Module {
 public:
  LatentProjectInImpl(int64_t encoder_channels, int64_t latent_channels, bool shortcut = true);

  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor branch(const torch::Tensor& x);
  torch::Tensor shortcut(const torch::Tensor& x) const;

  void zero_init_output();
  int64_t shortcut_group() const { return group_; }

 private:
  int64_t group_;
  bool use_shortcut_;
  torch::nn::GroupNorm norm_{nullptr};
  torch::nn::Conv2d conv_{nullptr};
};
TORCH_MODULE(LatentProjectIn);

// Decoder input: [N, c, h, w] -> [N, C_dec, h, w].
class LatentProjectOutImpl : public torch::nn::Module {
 public:
  LatentProjectOutImpl(int64_t latent_channels, int64_t decoder_channels, bool shortcut = true);

  torch::Tensor forward(const torch::Tensor& z);
  torch::Tensor branch(const torch::Tensor& z);
  torch::Tensor shortcut(const torch::Tensor& z) const;

  void zero_init_output();
  int64_t shortcut_group() const { return group_; }

 private:
  int64_t group_;
  bool use_shortcut_;
  torch::nn::Conv2d conv_{nullptr};
};
TORCH_MODULE(LatentProjectOut);

struct LatentProjectionPair {
  LatentProjectIn in{nullptr};
  LatentProjectOut out{nullptr};
};

// Validates c | C_enc and c | C_dec (ConfigError otherwise).
LatentProjectionPair make_latent_projection_pair(int64_t encoder_channels, int64_t latent_channels,
                                                 int64_t decoder_channels, bool shortcut = true);

}  // namespace dcae
