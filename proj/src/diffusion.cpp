#include "dcae/diffusion.hpp"

#include <cmath>
#include <string>

#include "dcae/config.hpp"
#include "dcae/data_io.hpp"
#include "dcae/error.hpp"
#include "dcae/nn_util.hpp"

namespace F = torch::nn::functional;

namespace dcae::diffusion {
namespace {

std::string str(int64_t v) { return std::to_string(v); }

// [L, D] fixed 2-D sin-cos position table for a gh x gw grid; D % 4 == 0.
torch::Tensor sincos_position_table(int64_t gh, int64_t gw, int64_t dim) {
  const auto quarter = dim / 4;
  auto omega = torch::arange(quarter, torch::kFloat64) / static_cast<double>(quarter);
  omega = 1.0 / torch::pow(10000.0, omega);
  auto ys = torch::arange(gh, torch::kFloat64).repeat_interleave(gw);
  auto xs = torch::arange(gw, torch::kFloat64).repeat({gh});
  auto ya = torch::outer(ys, omega), xa = torch::outer(xs, omega);
  return torch::cat({torch::sin(ya), torch::cos(ya), torch::sin(xa), torch::cos(xa)}, 1);
}

torch::Tensor timestep_embedding(const torch::Tensor& t, int64_t dim, torch::Dtype dtype) {
  const auto half = dim / 2;
  auto freqs = torch::exp(-std::log(10000.0) * torch::arange(half, torch::kFloat64) /
                          static_cast<double>(half));
  auto args = t.to(torch::kFloat64).unsqueeze(1) * freqs.unsqueeze(0);
  return torch::cat({torch::cos(args), torch::sin(args)}, 1).to(dtype);
}

torch::Tensor modulate(const torch::Tensor& x, const torch::Tensor& shift, const torch::Tensor& scale) {
  return x * (1.0 + scale) + shift;
}

void zero_linear(torch::nn::Linear& layer) {
  torch::NoGradGuard no_grad;
  layer->weight.zero_();
  if (layer->bias.defined()) layer->bias.zero_();
}

constexpr int64_t kTimeFeatures = 256;

}  // namespace

int64_t token_count(int64_t image_hw, int64_t f, int64_t p) {
  if (image_hw < 1 || f < 1 || p < 1) {
    throw ShapeError("token_count: image size, f and p must be positive");
  }
  if (image_hw % (f * p) != 0) {
    throw ShapeError("token_count: f*p=" + str(f * p) + " does not divide image size " +
                     str(image_hw));
  }
  const auto side = image_hw / (f * p);
  return side * side;
}

void DiffusionConfig::validate() const {
  if (patch_size < 1) throw ConfigError("diffusion.patch_size must be positive");
  if (width < 4 || width % 4 != 0) throw ConfigError("diffusion.width must be a positive multiple of 4");
  if (heads < 1 || width % heads != 0) throw ConfigError("diffusion.heads must divide width");
  if (depth < 0) throw ConfigError("diffusion.depth must be non-negative");
  if (mlp_ratio < 1) throw ConfigError("diffusion.mlp_ratio must be positive");
  if (timesteps < 1) throw ConfigError("diffusion.timesteps must be >= 1");
  if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end) {
    throw ConfigError("diffusion: need 0 < beta_start <= beta_end < 1");
  }
  if (num_classes < 0) throw ConfigError("diffusion.num_classes must be non-negative");
  if (!(cfg_scale >= 1.0)) throw ConfigError("diffusion.cfg_scale must be >= 1");
  if (sample_steps < 1 || sample_steps > timesteps) {
    throw ConfigError("diffusion.sample_steps must be in [1, timesteps]");
  }
  if (class_dropout < 0.0 || class_dropout > 1.0) {
    throw ConfigError("diffusion.class_dropout must be in [0, 1]");
  }
  if (latent_channels < 1 || latent_size < 1) {
    throw ConfigError("diffusion: latent_channels and latent_size must be positive");
  }
  if (latent_size % patch_size != 0) {
    throw ConfigError("diffusion.patch_size " + str(patch_size) + " does not divide latent size " +
                      str(latent_size));
  }
}

// ---------------------------------------------------------------------------
// Patchify

torch::Tensor patch_tokens(const torch::Tensor& z, int64_t p) {
  if (z.dim() != 4) throw ShapeError("patch_tokens: expected [N, C, h, w] latent");
  if (p < 1) throw ShapeError("patch_tokens: p must be positive");
  const auto n = z.size(0), c = z.size(1), h = z.size(2), w = z.size(3);
  if (h % p != 0 || w % p != 0) {
    throw ShapeError("patch_tokens: p=" + str(p) + " does not divide latent size " + str(h) + "x" +
                     str(w));
  }
  // [n, c, gh, dy, gw, dx] -> [n, gh, gw, dy, dx, c]
  return z.reshape({n, c, h / p, p, w / p, p})
      .permute({0, 2, 4, 3, 5, 1})
      .reshape({n, (h / p) * (w / p), p * p * c});
}

torch::Tensor unpatch_tokens(const torch::Tensor& tokens, int64_t p, int64_t channels, int64_t h,
                             int64_t w) {
  if (tokens.dim() != 3 || h % p != 0 || w % p != 0 ||
      tokens.size(1) != (h / p) * (w / p) || tokens.size(2) != p * p * channels) {
    throw ShapeError("unpatch_tokens: tokens " + c10::str(tokens.sizes()) +
                     " do not match a " + str(channels) + "x" + str(h) + "x" + str(w) +
                     " latent with p=" + str(p));
  }
  const auto n = tokens.size(0);
  return tokens.reshape({n, h / p, w / p, p, p, channels})
      .permute({0, 5, 1, 3, 2, 4})
      .reshape({n, channels, h, w});
}

torch::Tensor patchify(const torch::Tensor& z, int64_t p, torch::nn::Linear& projection) {
  return projection(patch_tokens(z, p));
}

torch::Tensor channel_order_weight(const torch::Tensor& weight, int64_t channels, int64_t p) {
  if (weight.dim() != 2 || weight.size(1) != p * p * channels) {
    throw ShapeError("channel_order_weight: expected a [D, " + str(p * p * channels) +
                     "] weight, got " + c10::str(weight.sizes()));
  }
  const auto d = weight.size(0);
  // columns (dy, dx, c) -> (c, dy, dx)
  return weight.reshape({d, p, p, channels}).permute({0, 3, 1, 2}).reshape({d, channels * p * p});
}

// ---------------------------------------------------------------------------
// Schedule

NoiseSchedule NoiseSchedule::linear(int64_t timesteps, double beta_start, double beta_end) {
  if (timesteps < 1) throw ConfigError("noise schedule: timesteps must be >= 1");
  NoiseSchedule s;
  s.betas = torch::linspace(beta_start, beta_end, timesteps, torch::kFloat64);
  s.alphas_cumprod = torch::cumprod(1.0 - s.betas, 0);
  return s;
}

// ---------------------------------------------------------------------------
// Model

DiTBlockImpl::DiTBlockImpl(int64_t width, int64_t heads, int64_t mlp_ratio)
    : width_(width), heads_(heads) {
  auto ln = [&] {
    return torch::nn::LayerNorm(
        torch::nn::LayerNormOptions({width}).elementwise_affine(false).eps(1e-6));
  };
  norm1_ = register_module("norm1", ln());
  qkv_ = register_module("qkv", torch::nn::Linear(width, 3 * width));
  proj_ = register_module("proj", torch::nn::Linear(width, width));
  norm2_ = register_module("norm2", ln());
  fc1_ = register_module("fc1", torch::nn::Linear(width, mlp_ratio * width));
  fc2_ = register_module("fc2", torch::nn::Linear(mlp_ratio * width, width));
  modulation_ = register_module("modulation", torch::nn::Linear(width, 6 * width));
}

torch::Tensor DiTBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& cond) {
  const auto n = x.size(0), len = x.size(1), dh = width_ / heads_;
  auto mod = modulation_(F::silu(cond)).unsqueeze(1).chunk(6, -1);

  auto h = modulate(norm1_(x), mod[0], mod[1]);
  auto qkv = qkv_(h).reshape({n, len, 3, heads_, dh}).permute({2, 0, 3, 1, 4});
  auto q = qkv[0], k = qkv[1], v = qkv[2];
  auto attn = torch::softmax(torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(dh)), -1);
  auto a = torch::matmul(attn, v).transpose(1, 2).reshape({n, len, width_});
  auto out = x + mod[2] * proj_(a);

  h = modulate(norm2_(out), mod[3], mod[4]);
  return out + mod[5] * fc2_(F::gelu(fc1_(h)));
}

void DiTBlockImpl::zero_init_modulation() { zero_linear(modulation_); }

DiffusionTransformerImpl::DiffusionTransformerImpl(DiffusionConfig config)
    : config_(std::move(config)) {
  config_.validate();
  const auto p = config_.patch_size, c = config_.latent_channels, d = config_.width;
  patch_embed = register_module("patch_embed", torch::nn::Linear(p * p * c, d));
  const auto grid = config_.latent_size / p;
  pos_embed_ = register_buffer("pos_embed", sincos_position_table(grid, grid, d).to(torch::kFloat32));
  time_mlp_ = register_module("time_mlp",
                              torch::nn::Sequential(torch::nn::Linear(kTimeFeatures, d),
                                                    torch::nn::SiLU(), torch::nn::Linear(d, d)));
  if (config_.num_classes > 0) {
    class_embed_ = register_module("class_embed", torch::nn::Embedding(config_.num_classes + 1, d));
  }
  auto list = register_module("blocks", torch::nn::ModuleList());
  for (int64_t i = 0; i < config_.depth; ++i) {
    blocks_.emplace_back(d, config_.heads, config_.mlp_ratio);
    list->push_back(blocks_.back());
  }
  final_norm_ = register_module(
      "final_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d}).elementwise_affine(false).eps(1e-6)));
  final_modulation_ = register_module("final_modulation", torch::nn::Linear(d, 2 * d));
  final_proj_ = register_module("final_proj", torch::nn::Linear(d, p * p * c));
}

torch::Tensor DiffusionTransformerImpl::forward(const torch::Tensor& noisy,
                                                const torch::Tensor& timesteps,
                                                const torch::Tensor& labels) {
  const auto c = config_.latent_channels, s = config_.latent_size, p = config_.patch_size;
  if (noisy.dim() != 4 || noisy.size(1) != c || noisy.size(2) != s || noisy.size(3) != s) {
    throw ShapeError("diffusion model: expected [N, " + str(c) + ", " + str(s) + ", " + str(s) +
                     "] latents, got " + c10::str(noisy.sizes()));
  }
  const auto dtype = patch_embed->weight.scalar_type();
  auto x = patchify(noisy, p, patch_embed) + pos_embed_.to(dtype).unsqueeze(0);
  auto cond = time_mlp_->forward(timestep_embedding(timesteps, kTimeFeatures, dtype));
  if (class_embed_) cond = cond + class_embed_(labels);
  for (auto& block : blocks_) x = block(x, cond);
  auto mod = final_modulation_(F::silu(cond)).unsqueeze(1).chunk(2, -1);
  x = final_proj_(modulate(final_norm_(x), mod[0], mod[1]));
  return unpatch_tokens(x, p, c, s, s);
}

DiffusionTransformer build_diffusion(const DiffusionConfig& config, uint64_t seed) {
  DiffusionTransformer model(config);
  seeded_init(*model, seed);
  for (const auto& child : model->modules(/*include_self=*/false)) {
    if (auto* block = child->as<DiTBlockImpl>()) block->zero_init_modulation();
  }
  for (auto& item : model->named_parameters()) {
    if (item.key().rfind("final_modulation.", 0) == 0 || item.key().rfind("final_proj.", 0) == 0) {
      torch::NoGradGuard no_grad;
      item.value().zero_();
    }
  }
  return model;
}

// ---------------------------------------------------------------------------
// Training

NoisedBatch add_noise(const NoiseSchedule& schedule, const torch::Tensor& clean,
                      const torch::Tensor& labels, torch::Generator& gen, int64_t num_classes,
                      double class_dropout) {
  const auto n = clean.size(0);
  NoisedBatch b;
  b.clean = clean;
  b.timesteps = torch::randint(0, schedule.timesteps(), {n}, gen, torch::kLong);
  b.noise = torch::randn(clean.sizes(), gen, clean.options());
  auto abar = schedule.alphas_cumprod.index_select(0, b.timesteps).to(clean.scalar_type()).view({n, 1, 1, 1});
  b.noisy = torch::sqrt(abar) * clean + torch::sqrt(1.0 - abar) * b.noise;
  if (num_classes > 0) {
    auto drop = torch::rand({n}, gen, torch::kFloat64) < class_dropout;
    b.labels = labels.to(torch::kLong).masked_fill(drop, num_classes);
  } else {
    b.labels = torch::zeros({n}, torch::kLong);
  }
  return b;
}

torch::Tensor denoising_loss(const NoisePredictor& predictor, const NoisedBatch& batch) {
  auto predicted = predictor(batch.noisy, batch.timesteps, batch.labels);
  return (predicted - batch.noise).pow(2).mean();
}

DiffusionTrainer::DiffusionTrainer(DiffusionTransformer model, double learning_rate)
    : model_(std::move(model)),
      schedule_(NoiseSchedule::linear(model_->config().timesteps, model_->config().beta_start,
                                      model_->config().beta_end)),
      optimizer_(model_->parameters(),
                 torch::optim::AdamWOptions(learning_rate).weight_decay(0.0)) {}

torch::Tensor DiffusionTrainer::loss(const torch::Tensor& z0, const torch::Tensor& labels,
                                     torch::Generator& gen) {
  const auto& cfg = model_->config();
  auto batch = add_noise(schedule_, z0, labels, gen, cfg.num_classes, cfg.class_dropout);
  auto& model = model_;
  return denoising_loss(
      [&model](const torch::Tensor& x, const torch::Tensor& t, const torch::Tensor& y) {
        return model(x, t, y);
      },
      batch);
}

double DiffusionTrainer::train_step(const torch::Tensor& z0, const torch::Tensor& labels,
                                    torch::Generator& gen) {
  model_->train();
  auto l = loss(z0, labels, gen);
  const double value = l.item<double>();
  if (!std::isfinite(value)) {
    throw NumericError("diffusion: non-finite loss at step " + str(steps_), steps_);
  }
  optimizer_.zero_grad();
  l.backward();
  optimizer_.step();
  ++steps_;
  return value;
}

// ---------------------------------------------------------------------------
// Sampling

torch::Tensor sample(DiffusionTransformer& model, const SampleOptions& options) {
  const auto& cfg = model->config();
  const auto T = cfg.timesteps;
  if (options.steps < 1 || options.steps > T) {
    throw ConfigError("sample: steps must be in [1, " + str(T) + "], got " + str(options.steps));
  }
  if (options.n < 1) throw ConfigError("sample: n must be positive");
  if (!(options.cfg_scale >= 1.0)) throw ConfigError("sample: cfg scale must be >= 1");
  if (options.class_label) {
    if (cfg.num_classes == 0) throw ConfigError("sample: model is unconditional, no class id allowed");
    if (*options.class_label < 0 || *options.class_label >= cfg.num_classes) {
      throw ConfigError("sample: invalid class id " + str(*options.class_label) + " (model has " +
                        str(cfg.num_classes) + " classes)");
    }
  }

  torch::NoGradGuard no_grad;
  model->eval();
  const auto schedule = NoiseSchedule::linear(T, cfg.beta_start, cfg.beta_end);
  const auto dtype = model->patch_embed->weight.scalar_type();
  auto gen = make_generator(options.seed);
  const auto n = options.n;
  auto x = torch::randn({n, cfg.latent_channels, cfg.latent_size, cfg.latent_size}, gen,
                        torch::TensorOptions().dtype(dtype));

  const auto null_label = cfg.num_classes;  // 0 for unconditional models
  auto uncond = torch::full({n}, null_label, torch::kLong);
  auto cond = options.class_label ? torch::full({n}, *options.class_label, torch::kLong) : uncond;
  const bool guided = options.class_label.has_value() && options.guidance;

  std::vector<int64_t> ts;
  for (int64_t i = 0; i < options.steps; ++i) {
    ts.push_back(options.steps == 1
                     ? T - 1
                     : static_cast<int64_t>(std::llround(static_cast<double>(i) * (T - 1) /
                                                         static_cast<double>(options.steps - 1))));
  }
  const auto abar = schedule.alphas_cumprod;
  for (int64_t i = options.steps - 1; i >= 0; --i) {
    const auto t = ts[static_cast<size_t>(i)];
    auto tt = torch::full({n}, t, torch::kLong);
    auto eps = model(x, tt, cond);
    if (guided) {
      auto eps_u = model(x, tt, uncond);
      eps = eps + (options.cfg_scale - 1.0) * (eps - eps_u);
    }
    const double a_t = abar[t].item<double>();
    const double a_prev = i > 0 ? abar[ts[static_cast<size_t>(i - 1)]].item<double>() : 1.0;
    auto x0 = (x - std::sqrt(1.0 - a_t) * eps) / std::sqrt(a_t);
    x = std::sqrt(a_prev) * x0 + std::sqrt(1.0 - a_prev) * eps;
  }
  return x;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_diffusion_checkpoint(const DiffusionCheckpoint& ckpt, const std::filesystem::path& dir) {
  nlohmann::json manifest;
  manifest["kind"] = "diffusion";
  manifest["config"] = config::to_json(ckpt.config);
  manifest["autoencoder_checkpoint"] = ckpt.autoencoder_checkpoint;
  manifest["steps_trained"] = ckpt.steps_trained;
  std::vector<NamedTensor> tensors;
  for (const auto& item : ckpt.model->named_parameters()) tensors.push_back({item.key(), item.value()});
  write_tensor_bundle(dir, std::move(manifest), tensors);
}

DiffusionCheckpoint load_diffusion_checkpoint(const std::filesystem::path& dir) {
  auto bundle = read_tensor_bundle(dir);
  const auto& m = bundle.manifest;
  if (m.value("kind", std::string()) != "diffusion") {
    throw CorruptIndexError("checkpoint at " + dir.string() + " is not a diffusion checkpoint");
  }
  DiffusionCheckpoint ckpt;
  ckpt.config = config::diffusion_from_json(m.at("config"), "config");
  ckpt.autoencoder_checkpoint = m.value("autoencoder_checkpoint", std::string());
  ckpt.steps_trained = m.value("steps_trained", int64_t{0});
  ckpt.model = DiffusionTransformer(ckpt.config);
  torch::NoGradGuard no_grad;
  const auto params = ckpt.model->named_parameters();
  if (params.size() != bundle.tensors.size()) {
    throw CorruptIndexError("diffusion checkpoint holds " + str(static_cast<int64_t>(bundle.tensors.size())) +
                            " tensors, model has " + str(static_cast<int64_t>(params.size())));
  }
  for (const auto& item : params) {
    auto it = bundle.tensors.find(item.key());
    if (it == bundle.tensors.end()) throw CorruptIndexError("missing tensor " + item.key());
    if (!it->second.sizes().equals(item.value().sizes())) {
      throw ConfigError("tensor " + item.key() + " has shape " + c10::str(it->second.sizes()) +
                        ", model expects " + c10::str(item.value().sizes()));
    }
    item.value().copy_(it->second);
  }
  return ckpt;
}

}  // namespace dcae::diffusion
