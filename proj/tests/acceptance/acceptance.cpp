// Acceptance suite: one [PASS]/[FAIL] line per criterion.
//
//   acceptance [--only 1,2,5] [--list] [--artifacts <dir>]
//
// Exit status is non-zero if any selected criterion fails.

#include <torch/torch.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dcae/autoencoder.hpp"
#include "dcae/data_io.hpp"
#include "dcae/diffusion.hpp"
#include "dcae/error.hpp"
#include "dcae/experiments.hpp"
#include "dcae/metrics.hpp"
#include "dcae/nn_util.hpp"
#include "dcae/residual_blocks.hpp"
#include "dcae/shuffle_ops.hpp"
#include "dcae/training.hpp"
#include "support/cascade.hpp"
#include "support/fixtures.hpp"
#include "support/grad_check.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

namespace fs = std::filesystem;
using namespace dcae;
using dcae::testing::bitwise_equal;
using dcae::testing::max_abs_diff;
using dcae::testing::randn;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  std::function<Outcome()> run;
};

fs::path g_artifacts = "acceptance_artifacts";

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

// Keeps the first failure reason while accumulating a verdict.
struct Verdict {
  bool pass = true;
  std::string reason;
  void require(bool ok, const std::string& what) {
    if (!ok && pass) reason = what;
    pass = pass && ok;
  }
};

// ---------------------------------------------------------------------------
// 1. Shuffle round trip

Outcome shuffle_round_trip() {
  const auto t0 = Clock::now();
  auto gen = make_generator(1);
  int64_t checked = 0, failures = 0;
  for (int64_t p : {1, 2, 4, 8}) {
    for (int rep = 0; rep < 100; ++rep) {
      auto dims = torch::randint(1, 5, {4}, gen, torch::kLong);
      const auto n = dims[0].item<int64_t>(), c = dims[1].item<int64_t>();
      const auto h = p * dims[2].item<int64_t>(), w = p * dims[3].item<int64_t>();
      auto x = torch::randn({n, c, h, w}, gen);
      if (!bitwise_equal(shuffle::channel_to_space(shuffle::space_to_channel(x, p), p), x)) ++failures;
      ++checked;
    }
  }
  const double secs = seconds_since(t0);
  return {failures == 0 && secs < 5.0, std::to_string(checked) + " tensors, " +
                                           std::to_string(failures) + " mismatches, " + fmt(secs, 3) +
                                           " s (limit 5 s)"};
}

// ---------------------------------------------------------------------------
// 2. Retraction and adjointness

Outcome retraction_and_adjointness() {
  Verdict v;
  uint64_t seed = 10;
  for (int64_t g : {1, 2, 4}) {
    for (auto dtype : {torch::kFloat32, torch::kFloat64}) {
      for (int rep = 0; rep < 10; ++rep) {
        auto x = randn({2, 3 + rep, 5, 4}, seed++, dtype) * 100.0;
        v.require(bitwise_equal(shuffle::channel_average(shuffle::channel_duplicate(x, g), g), x),
                  "retraction not exact for g=" + std::to_string(g));
      }
    }
  }
  double worst = 0.0;
  for (int64_t p : {1, 2, 4, 8}) {
    for (int rep = 0; rep < 10; ++rep) {
      auto x = randn({2, 3, 16, 16}, seed++, torch::kFloat64);
      auto y = randn({2, 3 * p * p, 16 / p, 16 / p}, seed++, torch::kFloat64);
      const double lhs = (shuffle::space_to_channel(x, p) * y).sum().item<double>();
      const double rhs = (x * shuffle::channel_to_space(y, p)).sum().item<double>();
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  }
  v.require(worst <= 1e-12, "adjointness gap " + fmt(worst));
  return {v.pass, "retraction exact for g in {1,2,4} (f32, f64); max adjointness gap " + fmt(worst) +
                      " (limit 1e-12)" + (v.pass ? "" : "; " + v.reason)};
}

// ---------------------------------------------------------------------------
// 3. Zero-init transparency

Outcome zero_init_transparency() {
  auto model = build(AutoencoderConfig::preset("f32c32"), 0);
  torch::NoGradGuard no_grad;
  Verdict v;
  for (uint64_t seed : {1, 2, 3}) {
    auto x = randn({2, 3, 64, 64}, seed);
    auto z = model->encode(x);
    v.require(bitwise_equal(z, dcae::testing::shortcut_encode(model, x)), "encode differs");
    v.require(bitwise_equal(model->decode(z), dcae::testing::shortcut_decode(model, z)),
              "decode differs");
    auto zr = randn({2, 32, 2, 2}, seed + 100);
    v.require(bitwise_equal(model->decode(zr), dcae::testing::shortcut_decode(model, zr)),
              "decode of random latent differs");
  }
  return {v.pass, v.pass ? "encode/decode bit-identical to the shortcut cascade on 3 random 64x64 batches"
                         : v.reason};
}

// ---------------------------------------------------------------------------
// 4. Gradient oracle

template <typename Module>
dcae::testing::GradCheckResult module_grad_error(Module& block, const std::vector<int64_t>& input_shape,
                                                 uint64_t seed) {
  block->to(torch::kFloat64);
  randomize_parameters(*block, seed, 0.3);
  auto x = randn(input_shape, seed + 1, torch::kFloat64).requires_grad_(true);
  auto leaves = dcae::testing::named_leaves(*block);
  leaves.emplace_back("input", x);
  return dcae::testing::grad_check([&] { return block->forward(x).pow(2).sum(); }, leaves);
}

Outcome gradient_oracle() {
  std::vector<std::pair<std::string, dcae::testing::GradCheckResult>> errors;
  {
    ResidualDownsampleBlock b(4, 8);
    errors.emplace_back("down", module_grad_error(b, {1, 4, 4, 4}, 1));
  }
  {
    ResidualUpsampleBlock b(8, 4);
    errors.emplace_back("up", module_grad_error(b, {1, 8, 4, 4}, 2));
  }
  {
    LatentProjectIn b(8, 2);
    errors.emplace_back("project_in", module_grad_error(b, {1, 8, 4, 4}, 3));
    LatentProjectOut o(2, 8);
    errors.emplace_back("project_out", module_grad_error(o, {1, 2, 4, 4}, 4));
  }
  {
    DiscriminatorOptions opts;
    opts.base_channels = 4;
    auto disc = build_discriminator(opts, 5);
    disc->to(torch::kFloat64);
    randomize_parameters(*disc, 6, 0.3);
    auto real = randn({2, 3, 12, 12}, 7, torch::kFloat64);
    auto fake = randn({2, 3, 12, 12}, 8, torch::kFloat64).requires_grad_(true);
    auto leaves = dcae::testing::named_leaves(*disc);
    leaves.emplace_back("fake", fake);
    errors.emplace_back("discriminator", dcae::testing::grad_check(
                                             [&] {
                                               auto lf = disc->forward(fake);
                                               // Unequal weights: with equal ones the fake
                                               // terms cancel wherever relu(1 + f) is active.
                                               return hinge_d_loss(disc->forward(real), lf) +
                                                      0.5 * hinge_g_loss(lf);
                                             },
                                             leaves));
  }
  {
    diffusion::DiffusionConfig cfg;
    cfg.patch_size = 2;
    cfg.width = 16;
    cfg.depth = 1;
    cfg.heads = 2;
    cfg.mlp_ratio = 2;
    cfg.timesteps = 50;
    cfg.sample_steps = 10;
    cfg.num_classes = 3;
    cfg.latent_channels = 2;
    cfg.latent_size = 4;
    auto model = diffusion::build_diffusion(cfg, 9);
    model->to(torch::kFloat64);
    randomize_parameters(*model, 10, 0.3);
    diffusion::DiffusionTrainer trainer(model, 1e-3);
    auto z0 = randn({2, 2, 4, 4}, 11, torch::kFloat64);
    auto labels = torch::tensor({0, 2}, torch::kLong);
    errors.emplace_back("diffusion_train_step",
                        dcae::testing::grad_check(
                            [&] {
                              auto gen = make_generator(12);
                              return trainer.loss(z0, labels, gen);
                            },
                            dcae::testing::named_leaves(*model)));
  }
  bool pass = true;
  std::string detail = "max rel err:";
  for (const auto& [name, r] : errors) {
    // A check where every gradient vanishes exercises nothing.
    pass = pass && r.max_rel_error < 1e-4 && r.informative > 0;
    detail += " " + name + "=" + fmt(r.max_rel_error, 2) + "(" + std::to_string(r.informative) + " live)";
  }
  return {pass, detail + " (limit 1e-4)"};
}

// ---------------------------------------------------------------------------
// 5. Freezing soundness

Outcome freezing_soundness() {
  AutoencoderState state;
  state.model = build(dcae::testing::narrow_f32c32(), 0);
  state.discriminator = build_discriminator({}, 1);
  const auto phases = dcae::testing::short_phases(10);
  SyntheticDataset low({"mixed", 64, 0}, 32, 3), high({"mixed", 16, 0}, 64, 4);
  const Dataset* data[3] = {&low, &high, &low};
  auto probe = randn({4, 3, 32, 32}, 5);
  Verdict v;
  int64_t frozen_checked = 0;
  double encode_delta = -1.0;
  for (size_t k = 0; k < 3; ++k) {
    std::map<std::string, torch::Tensor> before;
    for (const auto& item : state.model->named_parameters()) before[item.key()] = item.value().detach().clone();
    std::set<std::string> trainable;
    for (const auto& p : select_parameters(state.model, phases[k].trainable_groups)) trainable.insert(p.name);
    torch::Tensor z_before;
    {
      torch::NoGradGuard ng;
      z_before = state.model->encode(probe);
    }
    const auto report = run_phase(state, phases[k], *data[k]);
    v.require(report.steps.size() == 10, "phase did not run 10 steps");
    for (const auto& item : state.model->named_parameters()) {
      if (trainable.count(item.key()) == 0) {
        ++frozen_checked;
        v.require(bitwise_equal(item.value(), before[item.key()]),
                  "phase " + std::to_string(k + 1) + " changed frozen " + item.key());
      }
    }
    if (k == 2) {
      torch::NoGradGuard ng;
      encode_delta = max_abs_diff(state.model->encode(probe), z_before);
      v.require(encode_delta == 0.0, "phase 3 changed encode(probe)");
    }
  }
  return {v.pass, std::to_string(frozen_checked) + " frozen tensor checks over phases 1-3; encode(probe) max |delta| after phase 3 = " +
                      fmt(encode_delta) + (v.pass ? "" : "; " + v.reason)};
}

// ---------------------------------------------------------------------------
// 6. Residual-autoencoding trend

// Desk settings shared by the trend criteria: narrow f32c32 widths, 64 px
// phase-1 training on synthetic mixed images.
constexpr int64_t kLowRes = 64;
constexpr int64_t kHighRes = 256;

PhaseSpec trend_phase1(int64_t steps) {
  auto spec = PhaseSpec::defaults(1);
  spec.resolution = kLowRes;
  spec.steps = steps;
  spec.batch_size = 4;
  spec.learning_rate = 1e-3;
  return spec;
}

Outcome residual_trend() {
  const auto t0 = Clock::now();
  fs::create_directories(g_artifacts);
  std::ofstream log(g_artifacts / "residual_trend_log.jsonl");
  SyntheticDataset train({"mixed", 1024, 0}, kLowRes, 0);
  SyntheticDataset validation({"mixed", 64, 0}, kLowRes, 1000003);

  experiments::ResidualAblationOptions opts;
  opts.config = dcae::testing::narrow_f32c32();
  opts.phase1 = trend_phase1(2000);
  opts.seeds = {0, 1, 2};
  opts.eval_every = 250;
  opts.validation_images = 64;
  opts.log = &log;
  const auto r = experiments::residual_ablation(opts, train, validation);

  std::ofstream csv(g_artifacts / "residual_trend.csv");
  csv << "variant";
  for (auto s : r.with_shortcuts.steps) csv << ",step_" << s;
  csv << "\n";
  for (const auto* curve : {&r.with_shortcuts, &r.without_shortcuts}) {
    csv << (curve->shortcuts ? "shortcuts" : "no_shortcuts");
    for (auto v : curve->median) csv << "," << v;
    csv << "\n";
  }

  const double with = r.with_shortcuts.median.back();
  const double without = r.without_shortcuts.median.back();
  int seeds_better = 0;
  for (size_t s = 0; s < opts.seeds.size(); ++s) {
    if (r.with_shortcuts.losses[s].back() < r.without_shortcuts.losses[s].back()) ++seeds_better;
  }
  const double secs = seconds_since(t0);
  const bool pass = with < without && secs < 30 * 60;
  return {pass, "median final validation L1: shortcuts " + fmt(with) + " vs no shortcuts " + fmt(without) +
                    " (margin " + fmt(without - with) + "; better on " + std::to_string(seeds_better) +
                    "/3 seeds); " + fmt(secs / 60, 3) + " min (limit 30)"};
}

// ---------------------------------------------------------------------------
// 7. Generalization-penalty trend

Outcome generalization_trend() {
  fs::create_directories(g_artifacts);
  std::ofstream log(g_artifacts / "generalization_trend_log.jsonl");
  std::ofstream csv(g_artifacts / "generalization_trend.csv");
  csv << "seed,loss64_phase1,loss256_phase1,loss64_phase2,loss256_phase2\n";
  SyntheticDataset train_low({"mixed", 1024, 0}, kLowRes, 0);
  SyntheticDataset train_high({"mixed", 256, 0}, kHighRes, 1);
  SyntheticDataset val_low({"mixed", 32, 0}, kLowRes, 1000003);
  SyntheticDataset val_high({"mixed", 32, 0}, kHighRes, 1000003);

  int majority = 0;
  std::string detail;
  for (uint64_t seed : {0, 1, 2}) {
    AutoencoderState state;
    state.seed = seed;
    state.model = build(dcae::testing::narrow_f32c32(), seed);
    auto p1 = trend_phase1(2000);
    p1.seed = seed + 1;
    RunOptions run;
    run.log = &log;
    run.log_every = 100;
    run_phase(state, p1, train_low, run);

    auto p2 = PhaseSpec::defaults(2);
    p2.resolution = kHighRes;
    p2.steps = 500;
    p2.batch_size = 2;
    p2.learning_rate = 1e-3;
    p2.seed = seed + 2;
    const auto r = experiments::generalization_check(state, p2, train_high, val_low, val_high, 32, &log);
    const bool degrades = r.without_phase2.loss_high > r.without_phase2.loss_low;
    const bool improves = r.with_phase2.loss_high < r.without_phase2.loss_high;
    if (degrades && improves) ++majority;
    csv << seed << "," << r.without_phase2.loss_low << "," << r.without_phase2.loss_high << ","
        << r.with_phase2.loss_low << "," << r.with_phase2.loss_high << "\n";
    detail += " seed" + std::to_string(seed) + ": L64 " + fmt(r.without_phase2.loss_low) + ", L256 " +
              fmt(r.without_phase2.loss_high) + " -> " + fmt(r.with_phase2.loss_high) + ";";
  }
  return {majority >= 2, std::to_string(majority) + "/3 seeds show L256 > L64 before and lower L256 after phase 2;" +
                             detail};
}

// ---------------------------------------------------------------------------
// 8. Patchify equivalence

Outcome patchify_equivalence() {
  double worst = 0.0;
  for (int64_t p : {2, 4}) {
    const int64_t c = 32, d = 64;
    torch::nn::Linear proj(p * p * c, d), proj1(p * p * c, d);
    seeded_init(*proj, static_cast<uint64_t>(p));
    {
      torch::NoGradGuard ng;
      proj1->weight.copy_(diffusion::channel_order_weight(proj->weight, c, p));
      proj1->bias.copy_(proj->bias);
    }
    auto z = randn({4, c, 8, 8}, 20 + static_cast<uint64_t>(p));
    torch::NoGradGuard ng;
    worst = std::max(worst, max_abs_diff(diffusion::patchify(z, p, proj),
                                         diffusion::patchify(shuffle::space_to_channel(z, p), 1, proj1)));
  }
  return {worst <= 1e-6, "max |delta| over p in {2,4}: " + fmt(worst) + " (limit 1e-6)"};
}

// ---------------------------------------------------------------------------
// 9. Token accounting

Outcome token_accounting() {
  struct Row {
    int64_t f, p, expected;
  };
  // Reference token counts at 512 px.
  const std::vector<Row> rows = {{8, 4, 256}, {16, 4, 64}, {32, 2, 64}, {64, 1, 64},
                                 {16, 2, 256}, {32, 1, 256}, {8, 8, 64}};
  bool pass = true;
  std::string detail;
  for (const auto& r : rows) {
    const auto got = diffusion::token_count(512, r.f, r.p);
    pass = pass && got == r.expected;
    detail += "(512,f" + std::to_string(r.f) + ",p" + std::to_string(r.p) + ")->" + std::to_string(got) + " ";
  }
  return {pass, detail};
}

// ---------------------------------------------------------------------------
// 10. Latent-budget invariance

Outcome latent_budget() {
  std::set<int64_t> formula, measured;
  std::string detail;
  for (const auto* name : {"f32c32", "f64c128", "f128c512"}) {
    const auto c = AutoencoderConfig::preset(name);
    const int64_t side = 1024 / c.spatial_compression;
    formula.insert(side * side * c.latent_channels);
  }
  // Encoded shapes from narrow models with the same f, c and stage count.
  torch::NoGradGuard ng;
  for (const auto& cfg : {dcae::testing::narrow_f32c32(), dcae::testing::narrow_f64c128(),
                          dcae::testing::narrow_f128c512()}) {
    auto z = build(cfg, 0)->encode(torch::zeros({1, 3, 256, 256}));
    measured.insert(z.numel());
    detail += "f" + std::to_string(cfg.spatial_compression) + "c" + std::to_string(cfg.latent_channels) +
              "@256 -> " + c10::str(z.sizes()) + " ";
  }
  return {formula.size() == 1 && measured.size() == 1,
          "presets at 1024: " + std::to_string(*formula.begin()) + " elements; " + detail};
}

// ---------------------------------------------------------------------------
// 11. Metric oracles

Outcome metric_oracles() {
  using metrics::GaussianStats;
  Verdict v;
  const auto cov = dcae::testing::random_spd(16, 3);
  const Eigen::VectorXd mu = Eigen::VectorXd::LinSpaced(16, -1, 1);
  const double same = metrics::frechet_distance({mu, cov}, {mu, cov});
  v.require(std::abs(same) <= 1e-8, "identical stats distance " + fmt(same));
  const double one_d = metrics::frechet_distance({Eigen::VectorXd::Constant(1, 0.0), Eigen::MatrixXd::Identity(1, 1)},
                                                 {Eigen::VectorXd::Constant(1, 2.0), Eigen::MatrixXd::Identity(1, 1)});
  v.require(one_d == 4.0, "1-D case " + fmt(one_d, 17));
  auto x = randn({2, 3, 32, 32}, 4).clamp(-0.8, 0.8).to(torch::kFloat64);
  const double psnr = metrics::psnr(x, x + 0.2);
  v.require(std::abs(psnr - 20.0) <= 1e-9, "PSNR offset " + fmt(psnr, 12));
  const double ssim = metrics::ssim(x, x);
  v.require(std::abs(ssim - 1.0) <= 1e-12, "ssim(x,x) " + fmt(ssim, 17));
  return {v.pass, "frechet(identical)=" + fmt(same) + ", frechet(1-D)=" + fmt(one_d, 17) + ", psnr(offset)=" +
                      fmt(psnr, 12) + " dB, ssim(x,x)=" + fmt(ssim, 17) + (v.pass ? "" : "; " + v.reason)};
}

// ---------------------------------------------------------------------------
// 12. Checkpoint round trip and tamper detection

Outcome checkpoint_round_trip() {
  const auto dir = fs::temp_directory_path() / "dcae_acceptance_ckpt";
  fs::remove_all(dir);
  AutoencoderState state;
  state.model = build(dcae::testing::narrow_f32c32(), 3);
  randomize_parameters(*state.model, 4);
  state.discriminator = build_discriminator({}, 5);
  state.phase_history = {1, 2, 3};
  state.seed = 3;
  SyntheticDataset data({"mixed", 16, 0}, 32, 6);
  state.model->latent_stats = calibrate_latent_stats(state.model, data.head(16));
  save_checkpoint(state, dir / "ck");

  Verdict v;
  auto back = load_checkpoint(dir / "ck");
  auto pb = back.model->named_parameters();
  int64_t tensors = 0;
  for (const auto& item : state.model->named_parameters()) {
    v.require(bitwise_equal(item.value(), pb[item.key()]), "parameter " + item.key() + " differs");
    ++tensors;
  }
  auto db = back.discriminator->named_parameters();
  for (const auto& item : state.discriminator->named_parameters()) {
    v.require(bitwise_equal(item.value(), db[item.key()]), "discriminator " + item.key() + " differs");
    ++tensors;
  }
  v.require(back.model->latent_stats == state.model->latent_stats, "latent stats differ");
  v.require(back.phase_history == state.phase_history, "phase history differs");

  auto expect_throw = [&](const std::string& what, auto&& mutate, auto&& is_expected) {
    fs::remove_all(dir / "t");
    fs::copy(dir / "ck", dir / "t");
    mutate(dir / "t");
    try {
      load_checkpoint(dir / "t");
      v.require(false, what + " not detected");
    } catch (const CheckpointError& e) {
      v.require(is_expected(e), what + " raised the wrong error: " + e.what());
    }
  };
  expect_throw(
      "flipped blob byte",
      [](const fs::path& d) {
        std::fstream f(d / "tensors.bin", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(static_cast<std::streamoff>(fs::file_size(d / "tensors.bin") / 3));
        f.put('\x7f');
      },
      [](const CheckpointError& e) { return dynamic_cast<const ChecksumError*>(&e) != nullptr; });
  expect_throw(
      "truncated blob",
      [](const fs::path& d) { fs::resize_file(d / "tensors.bin", fs::file_size(d / "tensors.bin") - 1); },
      [](const CheckpointError& e) { return dynamic_cast<const TruncatedBlobError*>(&e) != nullptr; });
  fs::remove_all(dir);
  return {v.pass, std::to_string(tensors) + " tensors bit-identical; blob tamper -> ChecksumError, truncation -> TruncatedBlobError" +
                      (v.pass ? "" : "; " + v.reason)};
}

// ---------------------------------------------------------------------------
// 13. End-to-end smoke

Outcome end_to_end() {
  const auto t0 = Clock::now();
  fs::create_directories(g_artifacts);
  std::ofstream log(g_artifacts / "end_to_end_log.jsonl");
  std::ofstream csv(g_artifacts / "end_to_end.csv");
  csv << "seed,frechet_init,frechet_trained,frechet_reconstruction\n";
  int majority = 0;
  std::string detail;
  for (uint64_t seed : {0, 1, 2}) {
    SyntheticDataset low({"mixed", 512, 0}, kLowRes, seed * 10);
    SyntheticDataset high({"mixed", 64, 0}, 2 * kLowRes, seed * 10 + 1);
    SyntheticDataset reference({"mixed", 64, 0}, kLowRes, 1000003);

    auto phases = dcae::testing::short_phases(0, seed);
    const int64_t steps[3] = {2000, 150, 150};
    const int64_t res[3] = {kLowRes, 2 * kLowRes, kLowRes};
    const int64_t batch[3] = {4, 2, 4};
    for (size_t k = 0; k < 3; ++k) {
      phases[k].steps = steps[k];
      phases[k].resolution = res[k];
      phases[k].batch_size = batch[k];
    }
    PipelineOptions popts;
    popts.run.log = &log;
    popts.run.log_every = 100;
    auto pipeline = run_pipeline(dcae::testing::narrow_f32c32(), seed, phases, low, high, popts);
    auto& ae = pipeline.state.model;

    diffusion::DiffusionConfig dcfg;
    dcfg.width = 64;
    dcfg.depth = 2;
    dcfg.heads = 4;
    dcfg.timesteps = 1000;
    dcfg.sample_steps = 20;
    dcfg.latent_channels = ae->config().latent_channels;
    dcfg.latent_size = kLowRes / ae->config().spatial_compression;
    auto latents = experiments::encode_dataset(ae, low, low.size());
    auto model = diffusion::build_diffusion(dcfg, seed);
    metrics::RandomConvEmbedder embedder(0);
    auto ref = reference.head(64);
    const double before = experiments::sample_score(model, ae, ref, embedder, 64, dcfg.sample_steps, seed);
    diffusion::DiffusionTrainer trainer(model, 1e-3);
    experiments::DiffusionTrainOptions topts;
    topts.steps = 1500;
    topts.batch_size = 32;
    topts.learning_rate = 1e-3;
    topts.seed = seed;
    topts.log = &log;
    topts.log_every = 100;
    experiments::train_diffusion(trainer, latents, topts);
    const double after = experiments::sample_score(model, ae, ref, embedder, 64, dcfg.sample_steps, seed);
    if (after < before) ++majority;
    // Reference point, not part of the verdict: the autoencoder's own
    // reconstructions, the best a perfect latent model could reach.
    const double recon = metrics::embed_and_score(
        ref, experiments::decode_latents(ae, experiments::encode_dataset(ae, reference, 64).latents), embedder);
    csv << seed << "," << before << "," << after << "," << recon << "\n";
    detail += " seed" + std::to_string(seed) + ": " + fmt(before) + " -> " + fmt(after) + " (recon " + fmt(recon) + ");";
    auto samples = experiments::decode_latents(
        ae, diffusion::sample(model, {16, std::nullopt, 1.0, dcfg.sample_steps, seed, true}));
    write_image_grid(g_artifacts / ("end_to_end_samples_seed" + std::to_string(seed) + ".png"), samples, 8);
  }
  const double secs = seconds_since(t0);
  return {majority >= 2 && secs < 60 * 60,
          std::to_string(majority) + "/3 seeds lower sample Frechet after training;" + detail + " " +
              fmt(secs / 60, 3) + " min (limit 60)"};
}

std::vector<Criterion> criteria() {
  return {
      {1, "shuffle round trip", shuffle_round_trip},
      {2, "retraction and adjointness", retraction_and_adjointness},
      {3, "zero-init transparency", zero_init_transparency},
      {4, "gradient oracle", gradient_oracle},
      {5, "freezing soundness", freezing_soundness},
      {6, "residual-autoencoding trend", residual_trend},
      {7, "generalization-penalty trend", generalization_trend},
      {8, "patchify equivalence", patchify_equivalence},
      {9, "token accounting", token_accounting},
      {10, "latent-budget invariance", latent_budget},
      {11, "metric oracles", metric_oracles},
      {12, "checkpoint round trip and tamper detection", checkpoint_round_trip},
      {13, "end-to-end smoke", end_to_end},
  };
}

std::set<int> parse_ids(const std::string& list) {
  std::set<int> ids;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) ids.insert(std::stoi(item));
  }
  return ids;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      only = parse_ids(argv[++i]);
    } else if (arg == "--artifacts" && i + 1 < argc) {
      g_artifacts = argv[++i];
    } else if (arg == "--list") {
      for (const auto& c : criteria()) std::cout << c.id << " " << c.name << "\n";
      return 0;
    } else {
      std::cerr << "usage: acceptance [--only 1,2,...] [--artifacts dir] [--list]\n";
      return 2;
    }
  }
  torch::manual_seed(0);
  int failed = 0, ran = 0;
  for (const auto& c : criteria()) {
    if (!only.empty() && only.count(c.id) == 0) continue;
    ++ran;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << std::setw(2) << c.id << " " << c.name << ": " << o.detail
              << " [" << fmt(seconds_since(t0), 3) << " s]" << std::endl;
  }
  std::cout << ran - failed << "/" << ran << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
