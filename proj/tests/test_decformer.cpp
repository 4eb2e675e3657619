#include <cstdio>
#include <string>
#include <tuple>
#include <vector>

#include "pelc/dataset.hpp"
#include "pelc/common.hpp"
#include "pelc/decformer.hpp"

#include <doctest.h>

using namespace pelc;

namespace {

DecformerConfig tiny_config() {
  DecformerConfig cfg;
  cfg.width = 32;
  cfg.token_dim = 16;
  cfg.film_hidden = 16;
  cfg.trunk_out = 8;
  cfg.seed = 5;
  return cfg;
}

FrozenAutoencoder untrained_ae(int factor) {
  AutoencoderConfig cfg;
  cfg.factor = factor;
  cfg.base_width = 16;
  cfg.attention_midblock = false;
  cfg.seed = 3;
  auto model = build_autoencoder(cfg);
  int c = cfg.identity() ? cfg.image_channels : cfg.latent_channels;
  LatentStats stats{torch::zeros({c}), torch::ones({c}), -torch::ones({c}), torch::ones({c})};
  return FrozenAutoencoder(model, stats);
}

FrozenAutoencoder identity_ae() {
  AutoencoderConfig cfg;
  cfg.factor = 1;
  cfg.latent_channels = 3;
  LatentStats stats{torch::zeros({3}), torch::ones({3}), torch::zeros({3}), torch::ones({3})};
  return FrozenAutoencoder(build_autoencoder(cfg), stats);
}

std::tuple<torch::Tensor, torch::Tensor, torch::Tensor, torch::Tensor> random_inputs(
    const DecformerConfig& cfg, int n, int latent_hw, std::uint64_t seed) {
  auto gen = make_generator(seed);
  auto opts = torch::TensorOptions().dtype(torch::kFloat32);
  auto z_a = at::randn({n, cfg.latent_channels, latent_hw, latent_hw}, gen, opts);
  auto z_b = at::randn({n, cfg.latent_channels, latent_hw, latent_hw}, gen, opts);
  auto mask =
      at::rand({n, 1, latent_hw * cfg.factor, latent_hw * cfg.factor}, gen, opts).round();
  auto halo = at::rand({n, 1, latent_hw, latent_hw}, gen, opts);
  return {z_a, z_b, mask, halo};
}

}  // namespace

TEST_CASE("constrained alpha stays in the unit interval") {
  auto cfg = tiny_config();
  auto model = build_decformer(cfg);
  model->eval();
  auto [z_a, z_b, mask, halo] = random_inputs(cfg, 2, 12, 21);
  torch::NoGradGuard ng;
  auto field = model->forward(4.0 * z_a, -3.0 * z_b, mask, halo);
  CHECK(field.alpha.min().item<double>() >= 0.0);
  CHECK(field.alpha.max().item<double>() <= 1.0);
  CHECK(field.alpha.sizes() == torch::IntArrayRef({2, 4, 12, 12}));
  CHECK(field.shift.sizes() == field.alpha.sizes());
}

TEST_CASE("zero shift gate produces a bit-exact zero shift") {
  auto cfg = tiny_config();
  auto model = build_decformer(cfg);
  model->eval();
  auto [z_a, z_b, mask, halo] = random_inputs(cfg, 1, 12, 22);
  torch::NoGradGuard ng;
  auto field = model->forward(z_a, z_b, mask, halo, 0.0);
  CHECK(field.shift.abs().max().item<double>() == 0.0);
  auto again = model->forward(z_a, z_b, mask, halo, 0.0);
  CHECK(torch::equal(field.alpha, again.alpha));
  CHECK(again.shift.abs().max().item<double>() == 0.0);
}

TEST_CASE("eval forward is deterministic") {
  auto cfg = tiny_config();
  auto model = build_decformer(cfg);
  model->eval();
  auto [z_a, z_b, mask, halo] = random_inputs(cfg, 1, 12, 23);
  torch::NoGradGuard ng;
  auto f1 = model->forward(z_a, z_b, mask, halo);
  auto f2 = model->forward(z_a, z_b, mask, halo);
  CHECK(torch::equal(f1.alpha, f2.alpha));
  CHECK(torch::equal(f1.shift, f2.shift));
}

TEST_CASE("shift and alpha-path parameters partition the model") {
  auto cfg = tiny_config();
  auto model = build_decformer(cfg);
  auto total = model->parameters().size();
  CHECK(model->shift_parameters().size() + model->alpha_path_parameters().size() == total);
  CHECK_FALSE(model->shift_parameters().empty());
}

TEST_CASE("composite loss vanishes at the target and is linear in the weights") {
  auto ae = identity_ae();
  PerceptualSurrogate perceptual(3);
  auto gen = make_generator(31);
  auto opts = torch::TensorOptions().dtype(torch::kFloat32);
  auto z_t = at::rand({2, 3, 8, 8}, gen, opts);
  auto halo = at::rand({2, 8, 8}, gen, opts);

  auto at_target = pelc_loss(z_t.clone(), z_t, halo, 1.0, 2.0, ae, perceptual);
  CHECK(at_target.total.item<double>() == doctest::Approx(0.0));
  CHECK(at_target.latent_mse.item<double>() == doctest::Approx(0.0));
  CHECK(at_target.halo.item<double>() == doctest::Approx(0.0));

  auto zhat = (z_t + 0.1 * at::randn({2, 3, 8, 8}, gen, opts)).clamp(0.0, 1.0);
  auto l00 = pelc_loss(zhat, z_t, halo, 0.0, 0.0, ae, perceptual);
  auto l10 = pelc_loss(zhat, z_t, halo, 1.0, 0.0, ae, perceptual);
  auto l20 = pelc_loss(zhat, z_t, halo, 2.0, 0.0, ae, perceptual);
  auto l01 = pelc_loss(zhat, z_t, halo, 0.0, 1.0, ae, perceptual);
  auto l02 = pelc_loss(zhat, z_t, halo, 0.0, 2.0, ae, perceptual);
  CHECK(l00.total.item<double>() == doctest::Approx(l00.perceptual.item<double>()));
  CHECK(l20.total.item<double>() - l10.total.item<double>() ==
        doctest::Approx(l10.total.item<double>() - l00.total.item<double>()).epsilon(1e-6));
  CHECK(l02.total.item<double>() - l01.total.item<double>() ==
        doctest::Approx(l01.total.item<double>() - l00.total.item<double>()).epsilon(1e-6));
  CHECK(l01.total.item<double>() > l00.total.item<double>());
}

TEST_CASE("composite loss gradient matches finite differences") {
  auto ae = identity_ae();
  PerceptualSurrogate perceptual(3);
  perceptual.to(torch::kFloat64);
  auto gen = make_generator(37);
  auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  auto z_t = at::rand({1, 3, 4, 4}, gen, opts);
  auto halo = at::rand({1, 4, 4}, gen, opts);
  auto zhat = (z_t + 0.2 * at::randn({1, 3, 4, 4}, gen, opts)).clamp(0.05, 0.95);
  zhat.requires_grad_(true);

  auto parts = pelc_loss(zhat, z_t, halo, 1.0, 2.0, ae, perceptual);
  parts.total.backward();
  auto grad = zhat.grad().clone();

  const double h = 1e-5;
  auto gen2 = make_generator(41);
  for (int probe = 0; probe < 6; ++probe) {
    auto idx = at::randint(48, {1}, gen2, torch::TensorOptions().dtype(at::kLong))
                   .item<std::int64_t>();
    auto zp = zhat.detach().clone();
    auto zm = zhat.detach().clone();
    zp.view(-1)[idx] += h;
    zm.view(-1)[idx] -= h;
    double lp = pelc_loss(zp, z_t, halo, 1.0, 2.0, ae, perceptual).total.item<double>();
    double lm = pelc_loss(zm, z_t, halo, 1.0, 2.0, ae, perceptual).total.item<double>();
    double fd = (lp - lm) / (2.0 * h);
    double an = grad.view(-1)[idx].item<double>();
    double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
    CHECK(std::abs(fd - an) / denom < 1e-3);
  }
  perceptual.to(torch::kFloat32);
}

TEST_CASE("training walks the stage sequence forward only") {
  auto ae = untrained_ae(4);
  auto cfg = tiny_config();
  DecformerTrainOptions opts;
  opts.max_steps = 14;
  opts.batch = 2;
  opts.image_size = 32;
  opts.alpha_stage_cap = 4;
  opts.shift_warmup_steps = 4;
  opts.val_every = 2;
  opts.val_size = 2;
  opts.log_every = 1;
  auto trained = train_decformer(cfg, opts, ae);
  REQUIRE_FALSE(trained.log.empty());
  int rank = 0;
  bool saw_joint = false;
  for (const auto& entry : trained.log) {
    std::string stage = entry.at("stage");
    int r = stage == "alpha_only" ? 0 : stage == "shift_warmup" ? 1 : 2;
    CHECK(r >= rank);
    rank = std::max(rank, r);
    if (r == 2) saw_joint = true;
  }
  CHECK(saw_joint);
}

TEST_CASE("checkpoint round-trip preserves the forward pass") {
  auto cfg = tiny_config();
  TrainedDecformer trained;
  trained.model = build_decformer(cfg);
  trained.model->eval();
  save_decformer(trained, "test_decformer_tmp.ckpt");
  auto loaded = load_decformer("test_decformer_tmp.ckpt");

  auto [z_a, z_b, mask, halo] = random_inputs(cfg, 1, 12, 29);
  torch::NoGradGuard ng;
  auto f1 = trained.model->forward(z_a, z_b, mask, halo);
  auto f2 = loaded->forward(z_a, z_b, mask, halo);
  CHECK(torch::equal(f1.alpha, f2.alpha));
  CHECK(torch::equal(f1.shift, f2.shift));
}

TEST_CASE("evaluation adapter matches a direct forward pass") {
  auto ae = untrained_ae(4);
  auto cfg = tiny_config();
  auto model = build_decformer(cfg);
  model->eval();
  auto compositor = make_decformer_compositor(model, ae);
  auto sample = make_composite(3, 48, MaskKind::Binary);
  auto z_a = ae.encode(sample.x_a);
  auto z_b = ae.encode(sample.x_b);
  auto z_t = ae.encode(compose_pixels(sample.x_a, sample.x_b, sample.mask));
  auto zhat = compositor(z_a, z_b, z_t, sample);
  CHECK(zhat.sizes() == z_a.sizes());
  CHECK(torch::isfinite(zhat).all().item<bool>());
  CHECK(torch::equal(compositor(z_a, z_b, z_t, sample), zhat));
}
