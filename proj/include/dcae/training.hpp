#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "dcae/autoencoder.hpp"

namespace dcae {

class Dataset;

// ---------------------------------------------------------------------------
// Discriminator

struct DiscriminatorOptions {
  int64_t in_channels = 3;
  int64_t base_channels = 32;
  bool zero_init = false;  // D == 0 everywhere
};

// Four-layer fully convolutional patch discriminator producing [N, 1, h, w]
// real/fake logits. Inputs must be at least 12x12 so the logit map is non-empty.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(DiscriminatorOptions options = {});
  torch::Tensor forward(const torch::Tensor& x);
  const DiscriminatorOptions& options() const { return options_; }

 private:
  DiscriminatorOptions options_;
  torch::nn::Sequential net_{nullptr};
};
TORCH_MODULE(Discriminator);

Discriminator build_discriminator(const DiscriminatorOptions& options, uint64_t seed);

// ---------------------------------------------------------------------------
// Losses

// Mean absolute error over all elements.
torch::Tensor reconstruction_loss(const torch::Tensor& x, const torch::Tensor& reconstruction);

struct GanLosses {
  torch::Tensor d_loss;  // mean(relu(1 - D(real))) + mean(relu(1 + D(fake.detach())))
  torch::Tensor g_loss;  // -mean(D(fake))
};

// Hinge terms on raw logits.
torch::Tensor hinge_d_loss(const torch::Tensor& logits_real, const torch::Tensor& logits_fake);
torch::Tensor hinge_g_loss(const torch::Tensor& logits_fake);

// Hinge GAN losses. Generator gradients reach `fake` through g_loss only.
GanLosses gan_losses(Discriminator& disc, const torch::Tensor& real, const torch::Tensor& fake);

// Optional perceptual term: (input, reconstruction) -> scalar.
using PerceptualLoss = std::function<torch::Tensor(const torch::Tensor&, const torch::Tensor&)>;

// ---------------------------------------------------------------------------
// Phases

enum class LossTerm { kReconstruction, kGan };

// One phase of the decoupled high-resolution adaptation schedule:
//   1: all parameters, reconstruction loss, low resolution
//   2: encoder_head + decoder_input, reconstruction loss, high resolution
//   3: decoder_head, reconstruction + GAN loss, low resolution
struct PhaseSpec {
  int phase_id = 1;
  std::set<ParameterGroup> trainable_groups = {ParameterGroup::kAll};
  std::set<LossTerm> losses = {LossTerm::kReconstruction};
  int64_t resolution = 64;
  int64_t steps = 1000;
  int64_t batch_size = 8;
  double learning_rate = 1e-4;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double gan_weight = 0.1;
  uint64_t seed = 0;

  // Defaults for phase 1, 2 or 3 (groups, losses, resolutions 64/256/64).
  static PhaseSpec defaults(int phase_id);

  // Throws ConfigError if the groups/losses contract for phase_id is violated.
  void validate() const;
};

struct StepRecord {
  int64_t step = 0;
  double reconstruction = 0.0;
  double g_loss = 0.0;  // 0 unless the phase has a GAN term
  double d_loss = 0.0;
  double total = 0.0;
  double wall_ms = 0.0;
};

struct PhaseReport {
  int phase_id = 0;
  std::vector<StepRecord> steps;
  double wall_ms = 0.0;
  int64_t trainable_parameters = 0;  // elements
  int64_t total_parameters = 0;
  int64_t trainable_tensors = 0;
  int64_t total_tensors = 0;
  int64_t optimizer_state_tensors = 0;  // parameters holding optimizer state after the phase
};

// Model + discriminator + phase history: everything a checkpoint persists.
struct AutoencoderState {
  Autoencoder model{nullptr};
  Discriminator discriminator{nullptr};
  std::vector<int> phase_history;
  uint64_t seed = 0;
};

struct RunOptions {
  bool allow_out_of_order = false;  // permits ablation schedules such as 1 -> 3
  std::ostream* log = nullptr;      // line-delimited JSON, one record per step
  int64_t log_every = 1;
  std::optional<PerceptualLoss> perceptual;
  double perceptual_weight = 1.0;
  // Called after every optimizer step (e.g. for periodic validation).
  std::function<void(const StepRecord&)> on_step;
};

// Runs one phase. Only parameters in spec.trainable_groups (and, for GAN
// phases, the discriminator) are updated; everything else stays bitwise
// unchanged. Appends spec.phase_id to state.phase_history on success.
// Throws PipelineError for out-of-order phases or a missing discriminator,
// NumericError (with the step index) on a non-finite loss.
PhaseReport run_phase(AutoencoderState& state, const PhaseSpec& spec, const Dataset& data,
                      const RunOptions& options = {});

struct PipelineOptions {
  RunOptions run;
  DiscriminatorOptions discriminator;
  // When set, a checkpoint is written to <dir>/phase<k> after each phase.
  std::optional<std::filesystem::path> checkpoint_dir;
  int64_t calibration_images = 64;
};

struct PipelineResult {
  AutoencoderState state;
  std::vector<PhaseReport> reports;
};

// Phases 1 -> 2 -> 3 on a freshly built model; phases 1 and 3 use data_low,
// phase 2 data_high. Latent stats are calibrated on data_low at the end.
PipelineResult run_pipeline(const AutoencoderConfig& config, uint64_t seed,
                            const std::array<PhaseSpec, 3>& phases, const Dataset& data_low,
                            const Dataset& data_high, const PipelineOptions& options = {});

// Mean reconstruction loss of the model over the first `max_images` of `data`.
double evaluate_reconstruction(Autoencoder& model, const Dataset& data, int64_t max_images,
                               int64_t batch_size = 16);

}  // namespace dcae
