#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

namespace dcae {

// Largest divisor of `channels` that is <= 32, used as the GroupNorm group count.
int64_t norm_groups(int64_t channels);

torch::nn::GroupNorm make_group_norm(int64_t channels);

torch::nn::Conv2d make_conv(int64_t in, int64_t out, int64_t kernel, int64_t stride = 1,
                            int64_t padding = -1);

// Re-initializes every parameter of `module` from a generator seeded with `seed`,
// independent of torch's global RNG state:
//   weights with rank >= 2   ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in))
//   rank-1 "weight" (norms)  = 1
//   biases                   = 0
void seeded_init(torch::nn::Module& module, uint64_t seed);

// Fills every parameter with N(0, scale^2) noise. Used to move freshly built
// (zero-initialized) blocks to a generic point before gradient checks.
void randomize_parameters(torch::nn::Module& module, uint64_t seed, double scale = 0.2);

void zero_parameters(torch::nn::Module& module);

int64_t count_elements(const std::vector<torch::Tensor>& tensors);

// Throws NumericError if `t` contains NaN or Inf.
void require_finite(const torch::Tensor& t, const std::string& what);

torch::Generator make_generator(uint64_t seed);

}  // namespace dcae
