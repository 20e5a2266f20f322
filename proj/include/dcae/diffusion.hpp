#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "dcae/autoencoder.hpp"

// Toy latent diffusion transformer used to study where token compression
// happens: in the autoencoder (large f, patch size 1) or in the diffusion
// model's patch embedding (small f, patch size p).
namespace dcae::diffusion {

// Number of transformer tokens for a square image: (image_hw / (f * p))^2.
// ShapeError unless f * p divides image_hw.
int64_t token_count(int64_t image_hw, int64_t f, int64_t p);

struct DiffusionConfig {
  int64_t patch_size = 1;
  int64_t width = 256;
  int64_t depth = 6;
  int64_t heads = 4;
  int64_t mlp_ratio = 4;
  int64_t timesteps = 1000;
  double beta_start = 1e-4;
  double beta_end = 2e-2;
  int64_t num_classes = 0;  // 0 = unconditional
  double cfg_scale = 1.5;
  int64_t sample_steps = 50;
  double class_dropout = 0.1;  // label -> null class rate during training
  int64_t latent_channels = 32;
  int64_t latent_size = 8;  // latent height == width

  void validate() const;
  bool operator==(const DiffusionConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Patchify
//
// Tokens are laid out row-major over the (h/p) x (w/p) patch grid. The
// feature vector of a patch is ordered (dy, dx, c): index (dy*p + dx)*C + c.
// This differs from the space_to_channel order (c*p*p + dy*p + dx), so
// patchify(z, p, W) == patchify(space_to_channel(z, p), 1, W') holds with W'
// = channel_order_weight(W, C, p), a column permutation of W.

// [N, C, h, w] -> [N, (h/p)*(w/p), p*p*C].
torch::Tensor patch_tokens(const torch::Tensor& z, int64_t p);

// Inverse of patch_tokens.
torch::Tensor unpatch_tokens(const torch::Tensor& tokens, int64_t p, int64_t channels, int64_t h,
                             int64_t w);

// Linear patch embedding: projection(patch_tokens(z, p)).
torch::Tensor patchify(const torch::Tensor& z, int64_t p, torch::nn::Linear& projection);

// Permutes the input columns of a [D, p*p*C] patch-embedding weight from the
// (dy, dx, c) order into the space_to_channel order.
torch::Tensor channel_order_weight(const torch::Tensor& weight, int64_t channels, int64_t p);

// ---------------------------------------------------------------------------
// Noise schedule

struct NoiseSchedule {
  torch::Tensor betas;           // [T] float64
  torch::Tensor alphas_cumprod;  // [T] float64

  static NoiseSchedule linear(int64_t timesteps, double beta_start, double beta_end);
  int64_t timesteps() const { return betas.size(0); }
};

// ---------------------------------------------------------------------------
// Model

class DiTBlockImpl : public torch::nn::Module {
 public:
  DiTBlockImpl(int64_t width, int64_t heads, int64_t mlp_ratio);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& cond);
  void zero_init_modulation();

 private:
  int64_t width_, heads_;
  torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Linear qkv_{nullptr}, proj_{nullptr}, fc1_{nullptr}, fc2_{nullptr};
  torch::nn::Linear modulation_{nullptr};
};
TORCH_MODULE(DiTBlock);

// Predicts the noise added to a latent: forward(noisy [N, C, h, w],
// timesteps [N] int64, labels [N] int64) -> [N, C, h, w]. Label value
// num_classes is the null (unconditional) class.
class DiffusionTransformerImpl : public torch::nn::Module {
 public:
  explicit DiffusionTransformerImpl(DiffusionConfig config);
  torch::Tensor forward(const torch::Tensor& noisy, const torch::Tensor& timesteps,
                        const torch::Tensor& labels);
  const DiffusionConfig& config() const { return config_; }

  torch::nn::Linear patch_embed{nullptr};

 private:
  DiffusionConfig config_;
  torch::Tensor pos_embed_;  // [L, D] fixed 2-D sin-cos
  torch::nn::Sequential time_mlp_{nullptr};
  torch::nn::Embedding class_embed_{nullptr};
  std::vector<DiTBlock> blocks_;
  torch::nn::LayerNorm final_norm_{nullptr};
  torch::nn::Linear final_modulation_{nullptr}, final_proj_{nullptr};
};
TORCH_MODULE(DiffusionTransformer);

// Seeded parameters; modulation and output layers start at zero.
DiffusionTransformer build_diffusion(const DiffusionConfig& config, uint64_t seed);

// ---------------------------------------------------------------------------
// Training

using NoisePredictor = std::function<torch::Tensor(const torch::Tensor& noisy,
                                                   const torch::Tensor& timesteps,
                                                   const torch::Tensor& labels)>;

struct NoisedBatch {
  torch::Tensor clean;
  torch::Tensor noise;
  torch::Tensor noisy;      // sqrt(abar_t) * clean + sqrt(1 - abar_t) * noise
  torch::Tensor timesteps;  // [N] int64, uniform in [0, T)
  torch::Tensor labels;     // [N] int64 after class dropout
};

// Draws timesteps, noise and class dropout from `gen` (in that order).
NoisedBatch add_noise(const NoiseSchedule& schedule, const torch::Tensor& clean,
                      const torch::Tensor& labels, torch::Generator& gen, int64_t num_classes,
                      double class_dropout);

// MSE between predicted and true noise.
torch::Tensor denoising_loss(const NoisePredictor& predictor, const NoisedBatch& batch);

class DiffusionTrainer {
 public:
  DiffusionTrainer(DiffusionTransformer model, double learning_rate);

  // One optimizer step on normalized latents z0; returns the loss.
  // NumericError on a non-finite loss.
  double train_step(const torch::Tensor& z0, const torch::Tensor& labels, torch::Generator& gen);

  // The loss train_step would minimize, without updating anything.
  torch::Tensor loss(const torch::Tensor& z0, const torch::Tensor& labels, torch::Generator& gen);

  DiffusionTransformer& model() { return model_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  int64_t steps_taken() const { return steps_; }

 private:
  DiffusionTransformer model_;
  NoiseSchedule schedule_;
  torch::optim::AdamW optimizer_;
  int64_t steps_ = 0;
};

// ---------------------------------------------------------------------------
// Sampling

struct SampleOptions {
  int64_t n = 16;
  std::optional<int64_t> class_label;  // none = unconditional (null class)
  double cfg_scale = 1.5;
  int64_t steps = 50;
  uint64_t seed = 0;
  // eps = eps_c + (cfg_scale - 1) * (eps_c - eps_u) when a class is given;
  // false uses eps_c alone.
  bool guidance = true;
};

// Deterministic DDIM (eta = 0) over `steps` evenly spaced timesteps. Returns
// normalized latents [n, C, h, w]. ConfigError for steps > T or an invalid class.
torch::Tensor sample(DiffusionTransformer& model, const SampleOptions& options);

// ---------------------------------------------------------------------------
// Checkpoints (same bundle layout as autoencoder checkpoints, kind "diffusion")

struct DiffusionCheckpoint {
  DiffusionTransformer model{nullptr};
  DiffusionConfig config;
  std::string autoencoder_checkpoint;  // path of the autoencoder the latents came from
  int64_t steps_trained = 0;
};

void save_diffusion_checkpoint(const DiffusionCheckpoint& ckpt, const std::filesystem::path& dir);
DiffusionCheckpoint load_diffusion_checkpoint(const std::filesystem::path& dir);

}  // namespace dcae::diffusion
