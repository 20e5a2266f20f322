#include "dcae/experiments.hpp"

#include <algorithm>

#include <json.hpp>

#include "dcae/data_io.hpp"
#include "dcae/error.hpp"
#include "dcae/nn_util.hpp"

namespace dcae::experiments {
namespace {

void copy_parameters(torch::nn::Module& dst, const torch::nn::Module& src) {
  torch::NoGradGuard no_grad;
  auto d = dst.named_parameters();
  const auto s = src.named_parameters();
  for (const auto& item : s) d[item.key()].copy_(item.value());
}

TwinCurve run_twin(const ResidualAblationOptions& options, bool shortcuts, const Dataset& train,
                   const Dataset& validation) {
  TwinCurve curve;
  curve.shortcuts = shortcuts;
  auto config = options.config;
  config.residual_shortcuts = shortcuts;
  const auto steps = options.phase1.steps;

  for (auto seed : options.seeds) {
    AutoencoderState state;
    state.seed = seed;
    state.model = build(config, seed);

    auto spec = options.phase1;
    spec.seed = options.phase1.seed + seed;

    std::vector<int64_t> grid{0};
    std::vector<double> losses{
        evaluate_reconstruction(state.model, validation, options.validation_images)};
    RunOptions run;
    run.on_step = [&](const StepRecord& r) {
      const auto done = r.step + 1;
      if (done % options.eval_every == 0 || done == steps) {
        grid.push_back(done);
        losses.push_back(evaluate_reconstruction(state.model, validation, options.validation_images));
        if (options.log != nullptr) {
          nlohmann::json line = {{"shortcuts", shortcuts}, {"seed", seed}, {"step", done},
                                 {"train_loss", r.reconstruction},
                                 {"validation_loss", losses.back()}};
          *options.log << line.dump() << "\n" << std::flush;
        }
      }
    };
    run_phase(state, spec, train, run);

    if (curve.steps.empty()) curve.steps = grid;
    curve.losses.push_back(std::move(losses));
    curve.states.push_back(std::move(state));
  }

  for (size_t k = 0; k < curve.steps.size(); ++k) {
    std::vector<double> column;
    for (const auto& l : curve.losses) column.push_back(l[k]);
    curve.median.push_back(median(column));
  }
  return curve;
}

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) throw DataError("median of an empty set");
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

ResidualAblationResult residual_ablation(const ResidualAblationOptions& options,
                                         const Dataset& train, const Dataset& validation) {
  if (options.seeds.empty()) throw ConfigError("ablation.seeds: must not be empty");
  if (options.eval_every < 1) throw ConfigError("ablation.eval_every: must be positive");
  ResidualAblationResult result;
  result.with_shortcuts = run_twin(options, true, train, validation);
  result.without_shortcuts = run_twin(options, false, train, validation);
  return result;
}

AutoencoderState clone_state(const AutoencoderState& state) {
  AutoencoderState copy;
  copy.seed = state.seed;
  copy.phase_history = state.phase_history;
  copy.model = Autoencoder(state.model->config());
  copy_parameters(*copy.model, *state.model);
  copy.model->latent_stats = state.model->latent_stats;
  if (state.discriminator) {
    copy.discriminator = Discriminator(state.discriminator->options());
    copy_parameters(*copy.discriminator, *state.discriminator);
  }
  return copy;
}

GeneralizationResult generalization_check(const AutoencoderState& state, const PhaseSpec& phase2,
                                          const Dataset& train_high, const Dataset& validation_low,
                                          const Dataset& validation_high,
                                          int64_t validation_images, std::ostream* log) {
  if (state.phase_history != std::vector<int>{1}) {
    throw PipelineError("generalization check needs a phase-1 model (phase history [1])");
  }
  GeneralizationResult result;
  auto base = clone_state(state);
  result.without_phase2.loss_low = evaluate_reconstruction(base.model, validation_low, validation_images);
  result.without_phase2.loss_high =
      evaluate_reconstruction(base.model, validation_high, validation_images);

  RunOptions run;
  run.log = log;
  run.log_every = 50;
  run_phase(base, phase2, train_high, run);
  result.with_phase2.loss_low = evaluate_reconstruction(base.model, validation_low, validation_images);
  result.with_phase2.loss_high =
      evaluate_reconstruction(base.model, validation_high, validation_images);
  return result;
}

// ---------------------------------------------------------------------------

LatentSet encode_dataset(Autoencoder& model, const Dataset& data, int64_t count,
                         int64_t batch_size) {
  if (model->latent_stats.empty()) {
    throw PipelineError("encode_dataset: autoencoder has no calibrated latent stats");
  }
  torch::NoGradGuard no_grad;
  model->eval();
  const auto n = std::min(count, data.size());
  const auto dtype = model->parameters().front().scalar_type();
  std::vector<torch::Tensor> latents;
  std::vector<int64_t> labels;
  for (int64_t start = 0; start < n; start += batch_size) {
    std::vector<int64_t> idx;
    for (int64_t i = start; i < std::min(n, start + batch_size); ++i) {
      idx.push_back(i);
      labels.push_back(data.label(i));
    }
    latents.push_back(model->latent_stats.normalize(model->encode(data.images(idx).to(dtype))));
  }
  return {torch::cat(latents, 0), torch::tensor(labels, torch::kInt64)};
}

torch::Tensor decode_latents(Autoencoder& autoencoder, const torch::Tensor& normalized,
                             int64_t batch_size) {
  torch::NoGradGuard no_grad;
  autoencoder->eval();
  const auto dtype = autoencoder->parameters().front().scalar_type();
  std::vector<torch::Tensor> out;
  for (int64_t i = 0; i < normalized.size(0); i += batch_size) {
    auto z = normalized.narrow(0, i, std::min(batch_size, normalized.size(0) - i)).to(dtype);
    out.push_back(autoencoder->decode(autoencoder->latent_stats.denormalize(z)).clamp(-1.0, 1.0));
  }
  return torch::cat(out, 0);
}

double sample_score(diffusion::DiffusionTransformer& model, Autoencoder& autoencoder,
                    const torch::Tensor& reference, const metrics::FeatureEmbedder& embedder,
                    int64_t n, int64_t sample_steps, uint64_t seed) {
  diffusion::SampleOptions opts;
  opts.n = n;
  opts.steps = sample_steps;
  opts.seed = seed;
  auto images = decode_latents(autoencoder, diffusion::sample(model, opts));
  return metrics::embed_and_score(reference, images, embedder);
}

std::vector<double> train_diffusion(diffusion::DiffusionTrainer& trainer, const LatentSet& latents,
                                    const DiffusionTrainOptions& options) {
  if (options.batch_size < 1) throw ConfigError("diffusion.batch_size must be positive");
  const auto n = latents.latents.size(0);
  if (n < 1) throw DataError("train_diffusion: no latents");
  const auto dtype = trainer.model()->patch_embed->weight.scalar_type();
  auto gen = make_generator(options.seed);
  std::vector<double> losses;
  for (int64_t step = 0; step < options.steps; ++step) {
    auto idx = torch::randint(0, n, {options.batch_size}, gen, torch::kLong);
    auto z0 = latents.latents.index_select(0, idx).to(dtype);
    auto y = latents.labels.index_select(0, idx);
    losses.push_back(trainer.train_step(z0, y, gen));
    if (options.log != nullptr && options.log_every > 0 &&
        (step % options.log_every == 0 || step + 1 == options.steps)) {
      nlohmann::json line = {{"step", trainer.steps_taken() - 1}, {"loss", losses.back()}};
      *options.log << line.dump() << "\n";
    }
  }
  return losses;
}

}  // namespace dcae::experiments
