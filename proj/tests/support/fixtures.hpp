#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "dcae/autoencoder.hpp"
#include "dcae/training.hpp"

// Narrow model variants shared by unit and acceptance tests. Each keeps the
// preset's f, c and stage count (hence its shape algebra) with far fewer
// parameters.
namespace dcae::testing {

inline AutoencoderConfig narrow_f32c32() {
  AutoencoderConfig c;
  c.stage_widths = {8, 16, 32, 32, 32, 64};
  return c;
}

inline AutoencoderConfig narrow_f64c128() {
  AutoencoderConfig c;
  c.spatial_compression = 64;
  c.latent_channels = 128;
  c.stage_widths = {4, 8, 16, 32, 64, 128, 128};
  c.blocks_per_stage = std::vector<int64_t>(7, 1);
  return c;
}

inline AutoencoderConfig narrow_f128c512() {
  AutoencoderConfig c;
  c.spatial_compression = 128;
  c.latent_channels = 512;
  c.stage_widths = {4, 8, 16, 32, 64, 128, 256, 512};
  c.blocks_per_stage = std::vector<int64_t>(8, 0);
  return c;
}

// Short phase schedule for the narrow f32c32 model: 32 px low, 64 px high.
inline std::array<PhaseSpec, 3> short_phases(int64_t steps, uint64_t seed = 0) {
  std::array<PhaseSpec, 3> phases = {PhaseSpec::defaults(1), PhaseSpec::defaults(2),
                                     PhaseSpec::defaults(3)};
  const int64_t res[3] = {32, 64, 32};
  for (size_t k = 0; k < 3; ++k) {
    phases[k].resolution = res[k];
    phases[k].steps = steps;
    phases[k].batch_size = 4;
    phases[k].learning_rate = 1e-3;
    phases[k].seed = seed + k + 1;
  }
  return phases;
}

}  // namespace dcae::testing
