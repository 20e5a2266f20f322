#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "dcae/autoencoder.hpp"
#include "dcae/diffusion.hpp"
#include "dcae/metrics.hpp"
#include "dcae/training.hpp"

// Desk-scale experiment drivers shared by the CLI and the acceptance suite.
namespace dcae::experiments {

// ---------------------------------------------------------------------------
// Shortcut vs no-shortcut twins, phase 1 only.

struct ResidualAblationOptions {
  AutoencoderConfig config;  // residual_shortcuts is overridden per twin
  PhaseSpec phase1 = PhaseSpec::defaults(1);
  std::vector<uint64_t> seeds = {0, 1, 2};
  int64_t eval_every = 250;  // validation every k steps, plus step 0 and the final step
  int64_t validation_images = 64;
  std::ostream* log = nullptr;
};

struct TwinCurve {
  bool shortcuts = true;
  std::vector<int64_t> steps;                // shared step grid
  std::vector<std::vector<double>> losses;   // [seed][grid point]
  std::vector<double> median;                // over seeds, per grid point
  std::vector<AutoencoderState> states;      // trained models, one per seed
};

struct ResidualAblationResult {
  TwinCurve with_shortcuts;
  TwinCurve without_shortcuts;
};

ResidualAblationResult residual_ablation(const ResidualAblationOptions& options,
                                         const Dataset& train, const Dataset& validation);

double median(std::vector<double> values);

// ---------------------------------------------------------------------------
// Resolution generalization with and without phase 2.

struct GeneralizationRow {
  double loss_low = 0.0;   // at the training resolution
  double loss_high = 0.0;  // at the adaptation resolution
};

struct GeneralizationResult {
  GeneralizationRow without_phase2;
  GeneralizationRow with_phase2;
};

// `state` must hold a phase-1 model; a copy is adapted with `phase2` on
// `train_high`. Validation losses use the first `validation_images` images.
GeneralizationResult generalization_check(const AutoencoderState& state, const PhaseSpec& phase2,
                                          const Dataset& train_high, const Dataset& validation_low,
                                          const Dataset& validation_high,
                                          int64_t validation_images,
                                          std::ostream* log = nullptr);

// Deep copy of model + discriminator + history.
AutoencoderState clone_state(const AutoencoderState& state);

// ---------------------------------------------------------------------------
// Latent diffusion on top of a trained autoencoder.

struct LatentSet {
  torch::Tensor latents;  // normalized by the model's latent stats
  torch::Tensor labels;   // [N] int64
};

// Encodes the first `count` images; the model must carry calibrated stats.
LatentSet encode_dataset(Autoencoder& model, const Dataset& data, int64_t count,
                         int64_t batch_size = 16);

// Samples `n` latents (unconditional / null class), decodes them and scores
// the images against `reference` with the embedder.
double sample_score(diffusion::DiffusionTransformer& model, Autoencoder& autoencoder,
                    const torch::Tensor& reference, const metrics::FeatureEmbedder& embedder,
                    int64_t n, int64_t sample_steps, uint64_t seed);

// Decodes normalized latents into images clamped to [-1, 1].
torch::Tensor decode_latents(Autoencoder& autoencoder, const torch::Tensor& normalized,
                             int64_t batch_size = 16);

struct DiffusionTrainOptions {
  int64_t steps = 2000;
  int64_t batch_size = 32;
  double learning_rate = 1e-4;
  uint64_t seed = 0;
  int64_t log_every = 50;
  std::ostream* log = nullptr;
};

// Trains on the latent set with uniformly drawn minibatches; returns per-step losses.
std::vector<double> train_diffusion(diffusion::DiffusionTrainer& trainer, const LatentSet& latents,
                                    const DiffusionTrainOptions& options);

}  // namespace dcae::experiments
