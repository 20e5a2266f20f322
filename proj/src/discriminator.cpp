#include <string>

#include "dcae/error.hpp"
#include "dcae/nn_util.hpp"
#include "dcae/training.hpp"

namespace dcae {

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorOptions options) : options_(options) {
  const auto c = options.base_channels;
  if (options.in_channels < 1 || c < 1) {
    throw ConfigError("discriminator: channel counts must be positive");
  }
  auto lrelu = [] { return torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)); };
  net_ = register_module(
      "net", torch::nn::Sequential(make_conv(options.in_channels, c, 4, 2, 1), lrelu(),
                                   make_conv(c, 2 * c, 4, 2, 1), make_group_norm(2 * c), lrelu(),
                                   make_conv(2 * c, 4 * c, 4, 1, 1), make_group_norm(4 * c),
                                   lrelu(), make_conv(4 * c, 1, 4, 1, 1)));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != options_.in_channels) {
    throw ShapeError("discriminator: expected [N, " + std::to_string(options_.in_channels) +
                     ", H, W] input, got " + c10::str(x.sizes()));
  }
  if (x.size(2) < 12 || x.size(3) < 12) {
    throw ShapeError("discriminator: input must be at least 12x12, got " +
                     std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)));
  }
  return net_->forward(x);
}

Discriminator build_discriminator(const DiscriminatorOptions& options, uint64_t seed) {
  Discriminator disc(options);
  seeded_init(*disc, seed);
  if (options.zero_init) zero_parameters(*disc);
  return disc;
}

}  // namespace dcae
