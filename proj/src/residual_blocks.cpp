#include "dcae/residual_blocks.hpp"

#include <cmath>
#include <string>

#include "dcae/error.hpp"
#include "dcae/nn_util.hpp"
#include "dcae/shuffle_ops.hpp"

namespace F = torch::nn::functional;

namespace dcae {
namespace {

void zero_conv(torch::nn::Conv2d& conv) {
  torch::NoGradGuard no_grad;
  conv->weight.zero_();
  if (conv->bias.defined()) conv->bias.zero_();
}

std::string dims(int64_t a, int64_t b) {
  return std::to_string(a) + " -> " + std::to_string(b);
}

}  // namespace

// ---------------------------------------------------------------------------
// ResBlock

ResBlockImpl::ResBlockImpl(int64_t channels) {
  norm1_ = register_module("norm1", make_group_norm(channels));
  conv1_ = register_module("conv1", make_conv(channels, channels, 3));
  norm2_ = register_module("norm2", make_group_norm(channels));
  conv2_ = register_module("conv2", make_conv(channels, channels, 3));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x) {
  auto h = conv1_(F::silu(norm1_(x)));
  h = conv2_(F::silu(norm2_(h)));
  return x + h;
}

void ResBlockImpl::zero_init_output() { zero_conv(conv2_); }

// ---------------------------------------------------------------------------
// AttentionBlock

AttentionBlockImpl::AttentionBlockImpl(int64_t channels) : channels_(channels) {
  norm_ = register_module("norm", make_group_norm(channels));
  qkv_ = register_module("qkv", make_conv(channels, 3 * channels, 1));
  proj_ = register_module("proj", make_conv(channels, channels, 1));
}

torch::Tensor AttentionBlockImpl::forward(const torch::Tensor& x) {
  const auto n = x.size(0), h = x.size(2), w = x.size(3);
  auto qkv = qkv_(norm_(x)).reshape({n, 3, channels_, h * w});
  auto q = qkv.select(1, 0).transpose(1, 2);  // [n, hw, c]
  auto k = qkv.select(1, 1);                  // [n, c, hw]
  auto v = qkv.select(1, 2).transpose(1, 2);  // [n, hw, c]
  auto attn = torch::softmax(torch::bmm(q, k) / std::sqrt(static_cast<double>(channels_)), -1);
  auto out = torch::bmm(attn, v).transpose(1, 2).reshape({n, channels_, h, w});
  return x + proj_(out);
}

void AttentionBlockImpl::zero_init_output() { zero_conv(proj_); }

// ---------------------------------------------------------------------------
// ResidualDownsampleBlock

ResidualDownsampleBlockImpl::ResidualDownsampleBlockImpl(int64_t in_channels, int64_t out_channels,
                                                         bool shortcut)
    : in_channels_(in_channels), out_channels_(out_channels), group_(0), use_shortcut_(shortcut) {
  if (in_channels < 1 || out_channels < 1) {
    throw ConfigError("downsample block: channel counts must be positive, got " +
                      dims(in_channels, out_channels));
  }
  if ((4 * in_channels) % out_channels != 0) {
    throw ConfigError("downsample block " + dims(in_channels, out_channels) +
                      ": output channels must divide 4 * input channels");
  }
  group_ = 4 * in_channels / out_channels;
  pre_ = register_module("pre", ResBlock(in_channels));
  down_ = register_module("down", make_conv(in_channels, out_channels, 3, 2, 1));
}

torch::Tensor ResidualDownsampleBlockImpl::branch(const torch::Tensor& x) {
  return down_(pre_(x));
}

torch::Tensor ResidualDownsampleBlockImpl::shortcut(const torch::Tensor& x) const {
  return shuffle::channel_average(shuffle::space_to_channel(x, 2), group_);
}

torch::Tensor ResidualDownsampleBlockImpl::forward(const torch::Tensor& x) {
  if (x.size(2) % 2 != 0 || x.size(3) % 2 != 0) {
    throw ShapeError("downsample block: spatial size " + std::to_string(x.size(2)) + "x" +
                     std::to_string(x.size(3)) + " is not even");
  }
  auto out = branch(x);
  return use_shortcut_ ? out + shortcut(x) : out;
}

void ResidualDownsampleBlockImpl::zero_init_output() { zero_conv(down_); }

// ---------------------------------------------------------------------------
// ResidualUpsampleBlock

ResidualUpsampleBlockImpl::ResidualUpsampleBlockImpl(int64_t in_channels, int64_t out_channels,
                                                     bool shortcut)
    : in_channels_(in_channels), out_channels_(out_channels), group_(0), use_shortcut_(shortcut) {
  if (in_channels < 1 || out_channels < 1) {
    throw ConfigError("upsample block: channel counts must be positive, got " +
                      dims(in_channels, out_channels));
  }
  if (in_channels % 4 != 0) {
    throw ConfigError("upsample block " + dims(in_channels, out_channels) +
                      ": input channels must be divisible by 4");
  }
  if (out_channels % (in_channels / 4) != 0) {
    throw ConfigError("upsample block " + dims(in_channels, out_channels) +
                      ": input channels / 4 must divide output channels");
  }
  group_ = out_channels / (in_channels / 4);
  pre_ = register_module("pre", ResBlock(in_channels));
  conv_ = register_module("conv", make_conv(in_channels, out_channels, 3));
}

torch::Tensor ResidualUpsampleBlockImpl::branch(const torch::Tensor& x) {
  auto h = pre_(x);
  h = F::interpolate(h, F::InterpolateFuncOptions()
                            .scale_factor(std::vector<double>{2.0, 2.0})
                            .mode(torch::kNearest));
  return conv_(h);
}

torch::Tensor ResidualUpsampleBlockImpl::shortcut(const torch::Tensor& x) const {
  return shuffle::channel_duplicate(shuffle::channel_to_space(x, 2), group_);
}

torch::Tensor ResidualUpsampleBlockImpl::forward(const torch::Tensor& x) {
  auto out = branch(x);
  return use_shortcut_ ? out + shortcut(x) : out;
}

void ResidualUpsampleBlockImpl::zero_init_output() { zero_conv(conv_); }

// ---------------------------------------------------------------------------
// Latent projections

LatentProjectInImpl::LatentProjectInImpl(int64_t encoder_channels, int64_t latent_channels,
                                         bool shortcut)
    : group_(0), use_shortcut_(shortcut) {
  if (encoder_channels < 1 || latent_channels < 1 || encoder_channels % latent_channels != 0) {
    throw ConfigError("latent projection in " + dims(encoder_channels, latent_channels) +
                      ": latent channels must divide encoder channels");
  }
  group_ = encoder_channels / latent_channels;
  norm_ = register_module("norm", make_group_norm(encoder_channels));
  conv_ = register_module("conv", make_conv(encoder_channels, latent_channels, 3));
}

torch::Tensor LatentProjectInImpl::branch(const torch::Tensor& x) {
  return conv_(F::silu(norm_(x)));
}

torch::Tensor LatentProjectInImpl::shortcut(const torch::Tensor& x) const {
  return shuffle::channel_average(x, group_);
}

torch::Tensor LatentProjectInImpl::forward(const torch::Tensor& x) {
  auto out = branch(x);
  return use_shortcut_ ? out + shortcut(x) : out;
}

void LatentProjectInImpl::zero_init_output() { zero_conv(conv_); }

LatentProjectOutImpl::LatentProjectOutImpl(int64_t latent_channels, int64_t decoder_channels,
                                           bool shortcut)
    : group_(0), use_shortcut_(shortcut) {
  if (decoder_channels < 1 || latent_channels < 1 || decoder_channels % latent_channels != 0) {
    throw ConfigError("latent projection out " + dims(latent_channels, decoder_channels) +
                      ": latent channels must divide decoder channels");
  }
  group_ = decoder_channels / latent_channels;
  conv_ = register_module("conv", make_conv(latent_channels, decoder_channels, 3));
}

torch::Tensor LatentProjectOutImpl::branch(const torch::Tensor& z) { return conv_(z); }

torch::Tensor LatentProjectOutImpl::shortcut(const torch::Tensor& z) const {
  return shuffle::channel_duplicate(z, group_);
}

torch::Tensor LatentProjectOutImpl::forward(const torch::Tensor& z) {
  auto out = branch(z);
  return use_shortcut_ ? out + shortcut(z) : out;
}

void LatentProjectOutImpl::zero_init_output() { zero_conv(conv_); }

LatentProjectionPair make_latent_projection_pair(int64_t encoder_channels, int64_t latent_channels,
                                                 int64_t decoder_channels, bool shortcut) {
  return {LatentProjectIn(encoder_channels, latent_channels, shortcut),
          LatentProjectOut(latent_channels, decoder_channels, shortcut)};
}

}  // namespace dcae
