#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dcae/config.hpp"
#include "dcae/data_io.hpp"
#include "dcae/diffusion.hpp"
#include "dcae/error.hpp"
#include "dcae/experiments.hpp"
#include "dcae/metrics.hpp"
#include "dcae/nn_util.hpp"
#include "dcae/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dcae::cli {
namespace {

using Clock = std::chrono::steady_clock;

// Relative output paths live under $DCAE_OUTPUT_ROOT when it is set.
fs::path resolve_output(const std::string& path) {
  fs::path p(path);
  if (p.is_relative()) {
    if (const char* root = std::getenv("DCAE_OUTPUT_ROOT"); root != nullptr && *root != '\0') {
      p = fs::path(root) / p;
    }
  }
  fs::create_directories(p);
  return p;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

// Fully-resolved config (loadable with --config) plus the invocation.
void write_run_files(const fs::path& dir, const json& resolved, const std::vector<std::string>& args) {
  write_json(dir / "resolved_config.json", resolved);
  write_json(dir / "invocation.json", {{"args", args}});
}

std::ofstream open_log(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::string config_id(const AutoencoderConfig& c) {
  return "f" + std::to_string(c.spatial_compression) + "c" + std::to_string(c.latent_channels);
}

json number_or_marker(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

void emit(std::ostream& out, std::ofstream* file, const json& record) {
  out << record.dump() << "\n";
  if (file != nullptr) *file << record.dump() << "\n";
}

json phase_report_json(const PhaseReport& r) {
  json j = {{"phase", r.phase_id},
            {"steps", r.steps.size()},
            {"wall_ms", r.wall_ms},
            {"trainable_parameters", r.trainable_parameters},
            {"total_parameters", r.total_parameters},
            {"trainable_tensors", r.trainable_tensors},
            {"total_tensors", r.total_tensors},
            {"optimizer_state_tensors", r.optimizer_state_tensors}};
  if (!r.steps.empty()) j["final_reconstruction"] = r.steps.back().reconstruction;
  return j;
}

// Low-res data uses the run seed, high-res data the run seed + 1.
std::unique_ptr<Dataset> open_low(const config::RunConfig& cfg, int64_t resolution) {
  return open_dataset(cfg.data.low, resolution, cfg.seed);
}
std::unique_ptr<Dataset> open_high(const config::RunConfig& cfg, int64_t resolution) {
  return open_dataset(cfg.data.high, resolution, cfg.seed + 1);
}
std::unique_ptr<Dataset> open_validation(const config::RunConfig& cfg, int64_t resolution) {
  return open_dataset(cfg.data.validation, resolution, cfg.data.validation_seed);
}

void calibrate(AutoencoderState& state, const Dataset& data, int64_t images) {
  state.model->latent_stats = calibrate_latent_stats(state.model, data.head(images));
}

// ---------------------------------------------------------------------------
// Commands

struct Context {
  const std::vector<std::string>& args;
  std::ostream& out;
  std::ostream& err;
};

int cmd_init_ae(const Context& ctx, const std::string& config_path, const std::string& output) {
  const auto cfg = config::load_run_config(config_path);
  const auto dir = resolve_output(output.empty() ? cfg.output_dir : output);
  write_run_files(dir, config::to_json(cfg), ctx.args);
  AutoencoderState state;
  state.seed = cfg.seed;
  state.model = build(cfg.autoencoder, cfg.seed);
  state.discriminator = build_discriminator(cfg.discriminator, cfg.seed + 1);
  auto data = open_low(cfg, cfg.phases[0].resolution);
  calibrate(state, *data, 64);
  save_checkpoint(state, dir / "init");
  emit(ctx.out, nullptr, {{"checkpoint", (dir / "init").string()}, {"phase_history", json::array()}});
  return 0;
}

int cmd_train_ae(const Context& ctx, const std::string& config_path, const std::string& phase,
                 const std::string& checkpoint, bool allow_out_of_order, const std::string& output) {
  const auto cfg = config::load_run_config(config_path);
  const auto dir = resolve_output(output.empty() ? cfg.output_dir : output);
  write_run_files(dir, config::to_json(cfg), ctx.args);

  RunOptions run;
  run.allow_out_of_order = allow_out_of_order;
  run.log_every = cfg.log_every;

  if (phase == "all") {
    if (!checkpoint.empty()) throw ConfigError("--checkpoint cannot be combined with --phase all");
    auto low = open_low(cfg, cfg.phases[0].resolution);
    auto high = open_high(cfg, cfg.phases[1].resolution);
    if (cfg.phases[2].resolution != cfg.phases[0].resolution) {
      throw ConfigError("phases.phase3.resolution: must equal phases.phase1.resolution");
    }
    auto log = open_log(dir / "train_log.jsonl");
    PipelineOptions opts;
    opts.run = run;
    opts.run.log = &log;
    opts.discriminator = cfg.discriminator;
    opts.checkpoint_dir = dir;
    auto result = run_pipeline(cfg.autoencoder, cfg.seed, cfg.phases, *low, *high, opts);
    json reports = json::array();
    for (const auto& r : result.reports) {
      reports.push_back(phase_report_json(r));
      emit(ctx.out, nullptr, reports.back());
    }
    write_json(dir / "phase_reports.json", reports);
    return 0;
  }

  int k = 0;
  if (phase == "1" || phase == "2" || phase == "3") {
    k = phase[0] - '0';
  } else {
    throw ConfigError("--phase: expected 1, 2, 3 or all, got '" + phase + "'");
  }
  const auto& spec = cfg.phases[static_cast<size_t>(k - 1)];

  AutoencoderState state;
  if (checkpoint.empty()) {
    if (k != 1 && !allow_out_of_order) {
      throw PipelineError("phase " + std::to_string(k) + " needs --checkpoint from phase " +
                          std::to_string(k - 1));
    }
    state.seed = cfg.seed;
    state.model = build(cfg.autoencoder, cfg.seed);
    state.discriminator = build_discriminator(cfg.discriminator, cfg.seed + 1);
  } else {
    state = load_checkpoint(checkpoint);
    if (!(state.model->config() == cfg.autoencoder)) {
      throw ConfigError("checkpoint " + checkpoint + " was trained with a different autoencoder config");
    }
    if (!state.discriminator) state.discriminator = build_discriminator(cfg.discriminator, state.seed + 1);
  }

  auto data = k == 2 ? open_high(cfg, spec.resolution) : open_low(cfg, spec.resolution);
  auto log = open_log(dir / ("phase" + std::to_string(k) + "_log.jsonl"));
  run.log = &log;
  const auto report = run_phase(state, spec, *data, run);
  auto calibration = open_low(cfg, cfg.phases[0].resolution);
  calibrate(state, *calibration, 64);
  const auto ckpt = dir / ("phase" + std::to_string(k));
  save_checkpoint(state, ckpt);
  auto summary = phase_report_json(report);
  summary["checkpoint"] = ckpt.string();
  summary["phase_history"] = state.phase_history;
  write_json(dir / ("phase" + std::to_string(k) + "_report.json"), summary);
  emit(ctx.out, nullptr, summary);
  return 0;
}

int cmd_eval_recon(const Context& ctx, const std::string& checkpoint, const std::string& data_spec,
                   int64_t resolution, int64_t images, uint64_t seed, int64_t grid,
                   const std::string& output) {
  auto state = load_checkpoint(checkpoint);
  const auto dir = resolve_output(output.empty() ? "runs/eval-recon" : output);
  write_run_files(dir,
                  {{"checkpoint", checkpoint}, {"data", data_spec}, {"resolution", resolution},
                   {"images", images}, {"seed", seed}, {"grid", grid},
                   {"autoencoder", config::to_json(state.model->config())}},
                  ctx.args);
  auto data = open_dataset(data_spec, resolution, seed);
  const auto n = std::min(images, data->size());
  if (n < 2) throw DataError("eval-recon needs at least 2 images, dataset has " + std::to_string(n));

  torch::NoGradGuard no_grad;
  auto& model = state.model;
  model->eval();
  const auto dtype = model->parameters().front().scalar_type();
  auto originals = data->head(n);
  std::vector<torch::Tensor> recon_chunks;
  for (int64_t i = 0; i < n; i += 16) {
    auto x = originals.narrow(0, i, std::min<int64_t>(16, n - i)).to(dtype);
    recon_chunks.push_back(model->decode(model->encode(x)).clamp(-1.0, 1.0).to(torch::kFloat32));
  }
  auto recon = torch::cat(recon_chunks, 0);

  const double psnr = metrics::psnr(originals, recon, 2.0);
  const double ssim = metrics::ssim(originals, recon, 2.0);
  metrics::RandomConvEmbedder embedder(0);
  const double frechet = metrics::embed_and_score(originals, recon, embedder);

  auto records = open_log(dir / "metrics.jsonl");
  const json base = {{"config_id", config_id(model->config())},
                     {"resolution", resolution},
                     {"images", n},
                     {"checkpoint", checkpoint}};
  for (const auto& [name, value] :
       std::vector<std::pair<std::string, double>>{{"psnr", psnr}, {"ssim", ssim}, {"frechet", frechet}}) {
    auto r = base;
    r["metric"] = name;
    r["value"] = number_or_marker(value);
    emit(ctx.out, &records, r);
  }

  const auto k = std::min(grid, n);
  if (k > 0) {
    auto tiles = torch::cat({originals.narrow(0, 0, k), recon.narrow(0, 0, k)}, 0);
    write_image_grid(dir / "reconstructions.png", tiles, k);
  }
  return 0;
}

std::string csv_row(const std::string& label, const std::vector<double>& values) {
  std::ostringstream os;
  os << label << std::setprecision(8);
  for (auto v : values) os << "," << v;
  return os.str();
}

int cmd_ablate_residual(const Context& ctx, const std::string& config_path, const std::string& output) {
  const auto cfg = config::load_run_config(config_path);
  const auto dir = resolve_output(output.empty() ? cfg.output_dir + "/ablate-residual" : output);
  write_run_files(dir, config::to_json(cfg), ctx.args);

  const auto res = cfg.phases[0].resolution;
  auto train = open_low(cfg, res);
  auto validation = open_validation(cfg, res);
  auto log = open_log(dir / "ablate_residual_log.jsonl");

  experiments::ResidualAblationOptions opts;
  opts.config = cfg.autoencoder;
  opts.phase1 = cfg.phases[0];
  opts.seeds = cfg.ablation.seeds;
  opts.eval_every = cfg.ablation.eval_every;
  opts.validation_images = cfg.ablation.validation_images;
  opts.log = &log;
  const auto result = experiments::residual_ablation(opts, *train, *validation);

  std::ostringstream table;
  table << "variant";
  for (auto s : result.with_shortcuts.steps) table << ",step_" << s;
  table << "\n" << csv_row("shortcuts", result.with_shortcuts.median) << "\n"
        << csv_row("no_shortcuts", result.without_shortcuts.median) << "\n";
  std::ofstream(dir / "ablate_residual.csv") << table.str();
  ctx.out << table.str();
  return 0;
}

int cmd_ablate_generalization(const Context& ctx, const std::string& checkpoint,
                              const std::string& config_path, const std::string& output) {
  const auto cfg = config_path.empty() ? config::RunConfig{} : config::load_run_config(config_path);
  const auto dir = resolve_output(output.empty() ? cfg.output_dir + "/ablate-generalization" : output);
  write_run_files(dir, config::to_json(cfg), ctx.args);

  auto state = load_checkpoint(checkpoint);
  const auto low_res = cfg.phases[0].resolution;
  const auto high_res = low_res * cfg.ablation.resolution_multiplier;
  auto phase2 = cfg.phases[1];
  if (phase2.resolution != high_res) {
    throw ConfigError("phases.phase2.resolution: must be " + std::to_string(high_res) +
                      " (phase1 resolution x ablation.resolution_multiplier)");
  }
  auto train_high = open_high(cfg, high_res);
  auto val_low = open_validation(cfg, low_res);
  auto val_high = open_validation(cfg, high_res);
  auto log = open_log(dir / "ablate_generalization_log.jsonl");
  const auto r = experiments::generalization_check(state, phase2, *train_high, *val_low, *val_high,
                                                   cfg.ablation.validation_images, &log);

  std::ostringstream table;
  table << "variant,loss_" << low_res << ",loss_" << high_res << "\n"
        << csv_row("without_phase2", {r.without_phase2.loss_low, r.without_phase2.loss_high}) << "\n"
        << csv_row("with_phase2", {r.with_phase2.loss_low, r.with_phase2.loss_high}) << "\n";
  std::ofstream(dir / "ablate_generalization.csv") << table.str();
  ctx.out << table.str();
  return 0;
}

int cmd_train_diffusion(const Context& ctx, const std::string& ae_checkpoint,
                        const std::string& config_path, const std::string& output) {
  auto cfg = config::load_run_config(config_path);
  const auto dir = resolve_output(output.empty() ? cfg.output_dir + "/diffusion" : output);

  auto ae = load_checkpoint(ae_checkpoint);
  auto& model_cfg = cfg.diffusion.model;
  const auto res = cfg.phases[0].resolution;
  const auto f = ae.model->config().spatial_compression;
  if (res % f != 0) throw ShapeError("phase1 resolution " + std::to_string(res) + " is not divisible by f");
  model_cfg.latent_channels = ae.model->config().latent_channels;
  model_cfg.latent_size = res / f;
  model_cfg.validate();
  write_run_files(dir, config::to_json(cfg), ctx.args);

  auto data = open_low(cfg, res);
  if (model_cfg.num_classes > 0 && data->num_classes() > model_cfg.num_classes) {
    throw DataError("dataset has " + std::to_string(data->num_classes()) + " classes, diffusion.model.num_classes is " +
                    std::to_string(model_cfg.num_classes));
  }
  auto latents = experiments::encode_dataset(ae.model, *data, data->size());
  auto reference = open_validation(cfg, res)->head(cfg.diffusion.eval_samples);
  metrics::RandomConvEmbedder embedder(0);

  auto model = diffusion::build_diffusion(model_cfg, cfg.seed);
  const auto n_eval = reference.size(0);
  const double before = experiments::sample_score(model, ae.model, reference, embedder, n_eval,
                                                  model_cfg.sample_steps, cfg.seed);
  diffusion::DiffusionTrainer trainer(model, cfg.diffusion.learning_rate);
  auto log = open_log(dir / "diffusion_log.jsonl");
  experiments::DiffusionTrainOptions opts;
  opts.steps = cfg.diffusion.steps;
  opts.batch_size = cfg.diffusion.batch_size;
  opts.learning_rate = cfg.diffusion.learning_rate;
  opts.seed = cfg.seed;
  opts.log_every = cfg.diffusion.log_every;
  opts.log = &log;
  experiments::train_diffusion(trainer, latents, opts);
  const double after = experiments::sample_score(model, ae.model, reference, embedder, n_eval,
                                                 model_cfg.sample_steps, cfg.seed);

  diffusion::DiffusionCheckpoint ckpt{model, model_cfg, fs::absolute(ae_checkpoint).string(),
                                      trainer.steps_taken()};
  diffusion::save_diffusion_checkpoint(ckpt, dir / "checkpoint");
  auto records = open_log(dir / "metrics.jsonl");
  emit(ctx.out, &records, {{"metric", "sample_frechet"}, {"step", 0}, {"value", before}});
  emit(ctx.out, &records,
       {{"metric", "sample_frechet"}, {"step", trainer.steps_taken()}, {"value", after}});
  emit(ctx.out, nullptr, {{"checkpoint", (dir / "checkpoint").string()}});
  return 0;
}

int cmd_sample(const Context& ctx, const std::string& checkpoint, int64_t n, std::optional<double> cfg_scale,
               std::optional<int64_t> class_label, uint64_t seed, std::optional<int64_t> steps,
               const std::string& output) {
  auto ckpt = diffusion::load_diffusion_checkpoint(checkpoint);
  auto ae = load_checkpoint(ckpt.autoencoder_checkpoint);
  const auto dir = resolve_output(output.empty() ? "runs/sample" : output);
  diffusion::SampleOptions opts;
  opts.n = n;
  opts.class_label = class_label;
  opts.cfg_scale = cfg_scale.value_or(ckpt.config.cfg_scale);
  opts.steps = steps.value_or(ckpt.config.sample_steps);
  opts.seed = seed;
  write_run_files(dir,
                  {{"checkpoint", checkpoint}, {"n", n}, {"cfg_scale", opts.cfg_scale},
                   {"class_label", class_label ? json(*class_label) : json(nullptr)},
                   {"steps", opts.steps}, {"seed", seed}, {"diffusion", config::to_json(ckpt.config)}},
                  ctx.args);
  auto latents = diffusion::sample(ckpt.model, opts);
  auto images = experiments::decode_latents(ae.model, latents);
  write_image_grid(dir / "samples.png", images, std::min<int64_t>(n, 8));
  emit(ctx.out, nullptr, {{"samples", (dir / "samples.png").string()}, {"n", n}, {"cfg_scale", opts.cfg_scale}});
  return 0;
}

int cmd_profile(const Context& ctx, const std::string& config_path, const std::string& output) {
  const auto cfg = config::load_run_config(config_path);
  const auto dir = resolve_output(output.empty() ? cfg.output_dir + "/profile" : output);
  write_run_files(dir, config::to_json(cfg), ctx.args);
  auto records = open_log(dir / "profile.jsonl");

  auto model = build(cfg.autoencoder, cfg.seed);
  const auto groups = parameter_groups(model);
  json counts;
  for (const auto& [group, params] : groups) {
    int64_t elements = 0;
    for (const auto& p : params) elements += p.tensor.numel();
    counts[std::string(to_string(group))] = {{"tensors", params.size()}, {"elements", elements}};
  }
  emit(ctx.out, &records, {{"record", "parameters"}, {"config_id", config_id(cfg.autoencoder)}, {"groups", counts}});

  for (const auto& spec : cfg.phases) {
    const auto trainable = select_parameters(model, spec.trainable_groups);
    int64_t elements = 0;
    for (const auto& p : trainable) elements += p.tensor.numel();
    emit(ctx.out, &records,
         {{"record", "phase_trainable"}, {"phase", spec.phase_id}, {"tensors", trainable.size()},
          {"elements", elements}});
  }

  // Timing at the smallest multiple of f that is >= the configured resolution.
  const auto f = cfg.autoencoder.spatial_compression;
  const auto res = ((std::max(cfg.profile.timing_resolution, f) + f - 1) / f) * f;
  auto x = torch::rand({cfg.profile.timing_batch, cfg.autoencoder.in_channels, res, res},
                       make_generator(cfg.seed)) * 2.0 - 1.0;
  double fwd_ms = 0.0, bwd_ms = 0.0;
  constexpr int kReps = 3;
  for (int rep = 0; rep <= kReps; ++rep) {  // rep 0 warms up
    model->zero_grad();
    const auto t0 = Clock::now();
    auto loss = reconstruction_loss(x, model->forward(x));
    const auto t1 = Clock::now();
    loss.backward();
    const auto t2 = Clock::now();
    if (rep > 0) {
      fwd_ms += std::chrono::duration<double, std::milli>(t1 - t0).count() / kReps;
      bwd_ms += std::chrono::duration<double, std::milli>(t2 - t1).count() / kReps;
    }
  }
  emit(ctx.out, &records,
       {{"record", "timing"}, {"resolution", res}, {"batch", cfg.profile.timing_batch},
        {"forward_ms", fwd_ms}, {"backward_ms", bwd_ms}});

  const auto image = cfg.profile.image_size;
  std::vector<int64_t> fs_list = {8, 16, 32, 64, 128};
  if (std::find(fs_list.begin(), fs_list.end(), f) == fs_list.end()) fs_list.push_back(f);
  for (auto ff : fs_list) {
    for (auto p : cfg.profile.patch_sizes) {
      if (p < 1 || image % (ff * p) != 0) continue;
      emit(ctx.out, &records,
           {{"record", "tokens"}, {"image_size", image}, {"f", ff}, {"p", p},
            {"tokens", diffusion::token_count(image, ff, p)}, {"configured", ff == f}});
    }
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deep-compression autoencoder toolkit"};
  app.require_subcommand(1);
  std::string config_path, checkpoint, output, phase = "all", data_spec, ae_checkpoint;
  bool allow_out_of_order = false;
  int64_t resolution = 64, images = 1024, grid = 8, n = 16;
  uint64_t seed = 1000003, sample_seed = 0;
  std::optional<double> cfg_scale;
  std::optional<int64_t> class_label, steps;

  auto add_output = [&](CLI::App* c) {
    c->add_option("--output", output, "Output directory (relative paths go under $DCAE_OUTPUT_ROOT)");
  };

  auto* init = app.add_subcommand("init-ae", "Write a checkpoint of a freshly built autoencoder");
  init->add_option("--config", config_path)->required();
  add_output(init);

  auto* train = app.add_subcommand("train-ae", "Run one training phase or the full pipeline");
  train->add_option("--config", config_path)->required();
  train->add_option("--phase", phase, "1, 2, 3 or all")->check(CLI::IsMember({"1", "2", "3", "all"}));
  train->add_option("--checkpoint", checkpoint, "Checkpoint of the previous phase");
  train->add_flag("--allow-out-of-order", allow_out_of_order);
  add_output(train);

  auto* eval = app.add_subcommand("eval-recon", "Reconstruction metrics and image grid");
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--data", data_spec, "synthetic:<generator>[:<count>] or folder:<path>")->required();
  eval->add_option("--resolution", resolution)->required();
  eval->add_option("--images", images, "Images to evaluate (default 1024)");
  eval->add_option("--seed", seed, "Synthetic data seed");
  eval->add_option("--grid", grid, "Image pairs in the grid");
  add_output(eval);

  auto* ablate = app.add_subcommand("ablate", "Ablation studies");
  ablate->require_subcommand(1);
  auto* residual = ablate->add_subcommand("residual", "Shortcut vs no-shortcut twins");
  residual->add_option("--config", config_path)->required();
  add_output(residual);
  auto* general = ablate->add_subcommand("generalization", "Low vs high resolution, with/without phase 2");
  general->add_option("--checkpoint", checkpoint, "Phase-1 checkpoint")->required();
  general->add_option("--config", config_path);
  add_output(general);

  auto* tdiff = app.add_subcommand("train-diffusion", "Train the latent diffusion transformer");
  tdiff->add_option("--ae-checkpoint", ae_checkpoint)->required();
  tdiff->add_option("--config", config_path)->required();
  add_output(tdiff);

  auto* samp = app.add_subcommand("sample", "Sample images from a diffusion checkpoint");
  samp->add_option("--checkpoint", checkpoint)->required();
  samp->add_option("--n", n);
  samp->add_option("--cfg", cfg_scale, "Guidance scale (default from checkpoint)");
  samp->add_option("--class", class_label);
  samp->add_option("--seed", sample_seed);
  samp->add_option("--steps", steps);
  add_output(samp);

  auto* prof = app.add_subcommand("profile", "Parameter counts, timings and token counts");
  prof->add_option("--config", config_path)->required();
  add_output(prof);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kConfig);
  }

  const Context ctx{args, out, err};
  try {
    if (init->parsed()) return cmd_init_ae(ctx, config_path, output);
    if (train->parsed()) return cmd_train_ae(ctx, config_path, phase, checkpoint, allow_out_of_order, output);
    if (eval->parsed()) {
      return cmd_eval_recon(ctx, checkpoint, data_spec, resolution, images, seed, grid, output);
    }
    if (residual->parsed()) return cmd_ablate_residual(ctx, config_path, output);
    if (general->parsed()) return cmd_ablate_generalization(ctx, checkpoint, config_path, output);
    if (tdiff->parsed()) return cmd_train_diffusion(ctx, ae_checkpoint, config_path, output);
    if (samp->parsed()) {
      return cmd_sample(ctx, checkpoint, n, cfg_scale, class_label, sample_seed, steps, output);
    }
    if (prof->parsed()) return cmd_profile(ctx, config_path, output);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kConfig);
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kNumeric);
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kCheckpoint);
  } catch (const PipelineError& e) {
    err << "pipeline error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kPipeline);
  } catch (const ShapeError& e) {
    err << "shape error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kShape);
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kUnknown);
  }
  return static_cast<int>(ExitCode::kUnknown);
}

}  // namespace dcae::cli
