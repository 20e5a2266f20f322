#include "dcae/training.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "dcae/data_io.hpp"
#include "dcae/error.hpp"
#include "dcae/nn_util.hpp"

namespace dcae {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::string history_string(const std::vector<int>& history) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < history.size(); ++i) os << (i ? ", " : "") << history[i];
  os << "]";
  return os.str();
}

// Restores requires_grad flags on scope exit.
class RequiresGradScope {
 public:
  explicit RequiresGradScope(std::vector<torch::Tensor> params) : params_(std::move(params)) {
    for (auto& p : params_) flags_.push_back(p.requires_grad());
  }
  ~RequiresGradScope() {
    for (size_t i = 0; i < params_.size(); ++i) params_[i].requires_grad_(flags_[i]);
  }
  RequiresGradScope(const RequiresGradScope&) = delete;
  RequiresGradScope& operator=(const RequiresGradScope&) = delete;

 private:
  std::vector<torch::Tensor> params_;
  std::vector<bool> flags_;
};

torch::optim::AdamW make_optimizer(const std::vector<torch::Tensor>& params, const PhaseSpec& spec) {
  return torch::optim::AdamW(params, torch::optim::AdamWOptions(spec.learning_rate)
                                         .betas({spec.beta1, spec.beta2})
                                         .weight_decay(spec.weight_decay));
}

}  // namespace

// ---------------------------------------------------------------------------
// Losses

torch::Tensor reconstruction_loss(const torch::Tensor& x, const torch::Tensor& reconstruction) {
  if (!x.sizes().equals(reconstruction.sizes())) {
    throw ShapeError("reconstruction_loss: shape mismatch " + c10::str(x.sizes()) + " vs " +
                     c10::str(reconstruction.sizes()));
  }
  return (x - reconstruction).abs().mean();
}

torch::Tensor hinge_d_loss(const torch::Tensor& logits_real, const torch::Tensor& logits_fake) {
  return torch::relu(1.0 - logits_real).mean() + torch::relu(1.0 + logits_fake).mean();
}

torch::Tensor hinge_g_loss(const torch::Tensor& logits_fake) { return -logits_fake.mean(); }

GanLosses gan_losses(Discriminator& disc, const torch::Tensor& real, const torch::Tensor& fake) {
  if (!real.sizes().equals(fake.sizes())) {
    throw ShapeError("gan_losses: shape mismatch " + c10::str(real.sizes()) + " vs " +
                     c10::str(fake.sizes()));
  }
  GanLosses out;
  out.d_loss = hinge_d_loss(disc(real), disc(fake.detach()));
  out.g_loss = hinge_g_loss(disc(fake));
  return out;
}

// ---------------------------------------------------------------------------
// PhaseSpec

PhaseSpec PhaseSpec::defaults(int phase_id) {
  PhaseSpec spec;
  spec.phase_id = phase_id;
  switch (phase_id) {
    case 1:
      break;
    case 2:
      spec.trainable_groups = {ParameterGroup::kEncoderHead, ParameterGroup::kDecoderInput};
      spec.resolution = 256;
      spec.batch_size = 2;
      break;
    case 3:
      spec.trainable_groups = {ParameterGroup::kDecoderHead};
      spec.losses = {LossTerm::kReconstruction, LossTerm::kGan};
      break;
    default:
      throw ConfigError("phase_id must be 1, 2 or 3, got " + std::to_string(phase_id));
  }
  return spec;
}

void PhaseSpec::validate() const {
  const auto where = "phase " + std::to_string(phase_id) + ": ";
  switch (phase_id) {
    case 1:
      if (trainable_groups != std::set<ParameterGroup>{ParameterGroup::kAll}) {
        throw ConfigError(where + "trainable_groups must be {all}");
      }
      if (losses != std::set<LossTerm>{LossTerm::kReconstruction}) {
        throw ConfigError(where + "losses must be {reconstruction}");
      }
      break;
    case 2:
      if (trainable_groups !=
          std::set<ParameterGroup>{ParameterGroup::kEncoderHead, ParameterGroup::kDecoderInput}) {
        throw ConfigError(where + "trainable_groups must be {encoder_head, decoder_input}");
      }
      if (losses != std::set<LossTerm>{LossTerm::kReconstruction}) {
        throw ConfigError(where + "losses must be {reconstruction}");
      }
      break;
    case 3:
      if (trainable_groups != std::set<ParameterGroup>{ParameterGroup::kDecoderHead}) {
        throw ConfigError(where + "trainable_groups must be {decoder_head}");
      }
      if (losses.count(LossTerm::kGan) == 0) throw ConfigError(where + "losses must include gan");
      break;
    default:
      throw ConfigError("phase_id must be 1, 2 or 3, got " + std::to_string(phase_id));
  }
  if (resolution < 1) throw ConfigError(where + "resolution must be positive");
  if (steps < 0) throw ConfigError(where + "steps must be non-negative");
  if (batch_size < 1) throw ConfigError(where + "batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError(where + "learning_rate must be positive");
  if (weight_decay < 0.0) throw ConfigError(where + "weight_decay must be non-negative");
  if (gan_weight < 0.0) throw ConfigError(where + "gan_weight must be non-negative");
}

// ---------------------------------------------------------------------------
// run_phase

PhaseReport run_phase(AutoencoderState& state, const PhaseSpec& spec, const Dataset& data,
                      const RunOptions& options) {
  spec.validate();
  if (!state.model) throw PipelineError("run_phase: state has no model");
  auto& model = state.model;

  if (!options.allow_out_of_order) {
    std::vector<int> expected;
    for (int k = 1; k < spec.phase_id; ++k) expected.push_back(k);
    if (state.phase_history != expected) {
      throw PipelineError("phase " + std::to_string(spec.phase_id) + " requires phase history " +
                          history_string(expected) + ", found " +
                          history_string(state.phase_history));
    }
  }
  const bool use_gan = spec.losses.count(LossTerm::kGan) != 0;
  if (use_gan && !state.discriminator) {
    throw PipelineError("phase " + std::to_string(spec.phase_id) + " requires a discriminator");
  }
  if (data.resolution() != spec.resolution) {
    throw DataError("phase " + std::to_string(spec.phase_id) + " expects " +
                    std::to_string(spec.resolution) + "px data, dataset yields " +
                    std::to_string(data.resolution()) + "px");
  }

  const auto all_params = model->parameters();
  const auto selected = select_parameters(model, spec.trainable_groups);
  std::vector<torch::Tensor> trainable;
  for (const auto& p : selected) trainable.push_back(p.tensor);

  RequiresGradScope grad_scope(all_params);
  for (auto p : all_params) p.requires_grad_(false);
  for (auto& p : trainable) p.requires_grad_(true);

  PhaseReport report;
  report.phase_id = spec.phase_id;
  report.total_parameters = count_elements(all_params);
  report.total_tensors = static_cast<int64_t>(all_params.size());
  report.trainable_parameters = count_elements(trainable);
  report.trainable_tensors = static_cast<int64_t>(trainable.size());

  auto optimizer = make_optimizer(trainable, spec);
  std::optional<torch::optim::AdamW> disc_optimizer;
  if (use_gan) disc_optimizer.emplace(make_optimizer(state.discriminator->parameters(), spec));

  const auto dtype = all_params.front().scalar_type();
  BatchLoader loader(data, spec.batch_size, spec.seed);
  model->train();
  const auto phase_start = Clock::now();

  for (int64_t step = 0; step < spec.steps; ++step) {
    const auto step_start = Clock::now();
    auto x = loader.next().images.to(dtype);
    auto recon = model->decode(model->encode(x));

    StepRecord record;
    record.step = step;
    auto rec = reconstruction_loss(x, recon);
    auto total = rec;
    if (options.perceptual) total = total + options.perceptual_weight * (*options.perceptual)(x, recon);

    GanLosses gan;
    if (use_gan) {
      gan = gan_losses(state.discriminator, x, recon);
      total = total + spec.gan_weight * gan.g_loss;
    }

    record.reconstruction = rec.item<double>();
    record.total = total.item<double>();
    if (!std::isfinite(record.total)) {
      throw NumericError("phase " + std::to_string(spec.phase_id) + ": non-finite loss at step " +
                             std::to_string(step),
                         step);
    }

    optimizer.zero_grad();
    total.backward();
    optimizer.step();

    if (use_gan) {
      record.g_loss = gan.g_loss.item<double>();
      record.d_loss = gan.d_loss.item<double>();
      if (!std::isfinite(record.d_loss)) {
        throw NumericError("phase " + std::to_string(spec.phase_id) +
                               ": non-finite discriminator loss at step " + std::to_string(step),
                           step);
      }
      disc_optimizer->zero_grad();
      gan.d_loss.backward();
      disc_optimizer->step();
    }

    record.wall_ms = elapsed_ms(step_start);
    if (options.log != nullptr && options.log_every > 0 &&
        (step % options.log_every == 0 || step + 1 == spec.steps)) {
      nlohmann::json line = {{"phase", spec.phase_id},         {"step", step},
                             {"reconstruction", record.reconstruction},
                             {"g_loss", record.g_loss},         {"d_loss", record.d_loss},
                             {"total", record.total},           {"wall_ms", record.wall_ms}};
      *options.log << line.dump() << "\n";
    }
    report.steps.push_back(record);
    if (options.on_step) options.on_step(record);
  }

  report.wall_ms = elapsed_ms(phase_start);
  report.optimizer_state_tensors = static_cast<int64_t>(optimizer.state().size());
  state.phase_history.push_back(spec.phase_id);
  return report;
}

// ---------------------------------------------------------------------------
// run_pipeline

PipelineResult run_pipeline(const AutoencoderConfig& config, uint64_t seed,
                            const std::array<PhaseSpec, 3>& phases, const Dataset& data_low,
                            const Dataset& data_high, const PipelineOptions& options) {
  for (int k = 0; k < 3; ++k) {
    if (phases[static_cast<size_t>(k)].phase_id != k + 1) {
      throw PipelineError("run_pipeline: phase specs must be phases 1, 2, 3 in order");
    }
  }
  if (phases[1].resolution <= phases[0].resolution || phases[2].resolution >= phases[1].resolution) {
    throw ConfigError(
        "run_pipeline: phase 2 must run at a higher resolution than phases 1 and 3");
  }

  PipelineResult result;
  auto& state = result.state;
  state.seed = seed;
  state.model = build(config, seed);
  state.discriminator = build_discriminator(options.discriminator, seed + 1);

  const Dataset* sources[3] = {&data_low, &data_high, &data_low};
  for (size_t k = 0; k < 3; ++k) {
    result.reports.push_back(run_phase(state, phases[k], *sources[k], options.run));
    state.model->latent_stats =
        calibrate_latent_stats(state.model, data_low.head(options.calibration_images));
    if (options.checkpoint_dir) {
      save_checkpoint(state, *options.checkpoint_dir / ("phase" + std::to_string(k + 1)));
    }
  }
  return result;
}

double evaluate_reconstruction(Autoencoder& model, const Dataset& data, int64_t max_images,
                               int64_t batch_size) {
  torch::NoGradGuard no_grad;
  const auto n = std::min(max_images, data.size());
  if (n < 1) throw DataError("evaluate_reconstruction: dataset is empty");
  const auto dtype = model->parameters().front().scalar_type();
  double sum = 0.0;
  for (int64_t start = 0; start < n; start += batch_size) {
    std::vector<int64_t> idx;
    for (int64_t i = start; i < std::min(n, start + batch_size); ++i) idx.push_back(i);
    auto x = data.images(idx).to(dtype);
    auto recon = model->decode(model->encode(x));
    sum += reconstruction_loss(x, recon).item<double>() * static_cast<double>(idx.size());
  }
  return sum / static_cast<double>(n);
}

}  // namespace dcae
