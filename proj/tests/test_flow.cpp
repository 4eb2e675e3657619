#include <cmath>
#include <tuple>

#include "pelc/common.hpp"
#include "pelc/flow.hpp"
#include "pelc/image.hpp"

#include <doctest.h>

using namespace pelc;

namespace {

FrozenAutoencoder identity_ae() {
  AutoencoderConfig cfg;
  cfg.factor = 1;
  cfg.latent_channels = 3;
  LatentStats stats{torch::zeros({3}), torch::ones({3}), torch::zeros({3}), torch::ones({3})};
  return FrozenAutoencoder(build_autoencoder(cfg), stats);
}

FlowState make_state(std::uint64_t seed, double t) {
  FlowState s;
  s.z_t = torch::randn({1, 3, 8, 8}, make_generator(seed));
  s.t = t;
  return s;
}

}  // namespace

TEST_CASE("euler step identities") {
  auto s = make_state(1, 0.8);
  auto v = torch::randn({1, 3, 8, 8}, make_generator(2));

  SUBCASE("stepping to the same time is a no-op") {
    auto next = flow_step(s, v, 0.8);
    CHECK(torch::equal(next.z_t, s.z_t));
    CHECK(next.t == doctest::Approx(0.8));
  }
  SUBCASE("zero velocity leaves the state unchanged") {
    auto next = flow_step(s, torch::zeros_like(v), 0.3);
    CHECK(torch::equal(next.z_t, s.z_t));
  }
  SUBCASE("constant velocity composes: two half steps equal one full step") {
    auto one = flow_step(s, v, 0.4);
    auto half = flow_step(flow_step(s, v, 0.6), v, 0.4);
    CHECK(torch::allclose(one.z_t, half.z_t, 1e-6, 1e-7));
  }
  SUBCASE("stepping backward in noise level is rejected") {
    CHECK_THROWS(flow_step(s, v, 0.9));
  }
}

TEST_CASE("retargeting with a null field reproduces the euler step bit-exactly") {
  auto s = make_state(3, 0.7);
  auto v = torch::randn({1, 3, 8, 8}, make_generator(4));
  auto z0_ref = torch::randn({1, 3, 8, 8}, make_generator(5));
  BlendField field{torch::zeros({3, 8, 8}), torch::zeros({3, 8, 8})};
  auto plain = flow_step(s, v, 0.35);
  auto retargeted = retargeted_step(s, v, z0_ref, field, 0.35);
  CHECK(torch::equal(plain.z_t, retargeted.z_t));
}

TEST_CASE("full retargeting to t=0 lands exactly on the reference") {
  auto s = make_state(6, 0.6);
  auto v = torch::randn({1, 3, 8, 8}, make_generator(7));
  auto z0_ref = torch::randn({1, 3, 8, 8}, make_generator(8));
  BlendField field{torch::ones({3, 8, 8}), torch::zeros({3, 8, 8})};
  auto out = retargeted_step(s, v, z0_ref, field, 0.0);
  CHECK((out.z_t - z0_ref).abs().max().item<double>() < 1e-6);
}

TEST_CASE("retargeting shift moves the implied endpoint") {
  auto s = make_state(9, 0.5);
  auto v = torch::randn({1, 3, 8, 8}, make_generator(10));
  auto z0_ref = torch::zeros({1, 3, 8, 8});
  auto shift = 0.25 * torch::ones({3, 8, 8});
  BlendField field{torch::ones({3, 8, 8}), shift};
  auto out = retargeted_step(s, v, z0_ref, field, 0.0);
  CHECK(torch::allclose(out.z_t, z0_ref + shift.unsqueeze(0), 1e-5, 1e-6));
}

TEST_CASE("an oracle velocity transports noise to the data point in one step") {
  auto z0 = torch::randn({1, 3, 8, 8}, make_generator(11));
  auto eps = torch::randn({1, 3, 8, 8}, make_generator(12));
  FlowState s;
  s.z_t = eps;
  s.t = 1.0;
  auto v = eps - z0;
  auto out = flow_step(s, v, 0.0);
  CHECK(torch::allclose(out.z_t, z0, 1e-6, 1e-6));
}

TEST_CASE("regionwise corruption keeps the outside cleaner than the inside") {
  auto z0 = torch::randn({4, 6, 6}, make_generator(13));
  LatentMask m;
  m.data = torch::zeros({6, 6});
  m.data.slice(0, 0, 3) = 1.0;
  const double u = 0.8, lambda = 0.75;
  auto s = dual_sigma_corrupt(z0, m, u, lambda, 99);

  CHECK(s.sigma_in == doctest::Approx(u));
  CHECK(s.sigma_out == doctest::Approx(lambda * u));
  CHECK(s.sigma_out < s.sigma_in);
  auto snr = [](double sigma) { return std::pow((1.0 - sigma) / sigma, 2.0); };
  CHECK(snr(s.sigma_out) > snr(s.sigma_in));

  auto field = m.data * s.sigma_in + (1.0 - m.data) * s.sigma_out;
  CHECK(torch::allclose(s.sigma_field, field, 1e-6, 1e-7));
  auto expected = (1.0 - field).unsqueeze(0) * z0 + field.unsqueeze(0) * s.eps;
  CHECK(torch::allclose(s.z, expected, 1e-6, 1e-7));

  auto again = dual_sigma_corrupt(z0, m, u, lambda, 99);
  CHECK(torch::equal(s.z, again.z));
  CHECK_THROWS(dual_sigma_corrupt(z0, m, 0.0, lambda, 1));
  CHECK_THROWS(dual_sigma_corrupt(z0, m, 0.5, 1.5, 1));
}

TEST_CASE("zero finetune steps copies the base weights verbatim") {
  FlowConfig cfg;
  cfg.latent_channels = 3;
  cfg.width = 16;
  cfg.blocks = 2;
  cfg.time_dim = 16;
  cfg.seed = 17;
  auto base = build_flow(cfg);
  base->eval();
  DualSigmaFinetuneOptions opts;
  opts.steps = 0;
  auto tuned = finetune_dual_sigma(base, opts, identity_ae());
  tuned.model->eval();
  auto z = torch::randn({2, 3, 8, 8}, make_generator(18));
  auto t = torch::tensor({0.4f, 0.9f});
  torch::NoGradGuard ng;
  CHECK(torch::equal(base->forward(z, t), tuned.model->forward(z, t)));
}

TEST_CASE("inpainting is deterministic and respects the output contract") {
  auto ae = identity_ae();
  FlowConfig cfg;
  cfg.latent_channels = 3;
  cfg.width = 16;
  cfg.blocks = 2;
  cfg.time_dim = 16;
  cfg.seed = 19;
  auto flow = build_flow(cfg);
  flow->eval();

  auto image = generate_image(20, 24, 24);
  PixelMask mask{torch::zeros({24, 24}), MaskKind::Binary};
  mask.data.slice(0, 6, 18).slice(1, 6, 18) = 1.0;

  InpaintOptions opts;
  opts.steps = 6;
  opts.noise_seed = 4;
  auto y1 = inpaint(ae, flow, image, mask, InpaintVariant::HeuristicPerStep,
                    DecformerCompositor{nullptr}, opts);
  auto y2 = inpaint(ae, flow, image, mask, InpaintVariant::HeuristicPerStep,
                    DecformerCompositor{nullptr}, opts);
  CHECK(y1.sizes() == torch::IntArrayRef({3, 24, 24}));
  CHECK(torch::equal(y1, y2));
  CHECK(y1.min().item<double>() >= 0.0);
  CHECK(y1.max().item<double>() <= 1.0);
  CHECK(torch::isfinite(y1).all().item<bool>());
}

TEST_CASE("flow checkpoint round-trip preserves the velocity field") {
  FlowConfig cfg;
  cfg.latent_channels = 3;
  cfg.width = 16;
  cfg.blocks = 2;
  cfg.time_dim = 16;
  cfg.seed = 23;
  TrainedFlow trained;
  trained.model = build_flow(cfg);
  trained.model->eval();
  save_flow(trained, "test_flow_tmp.ckpt");
  auto loaded = load_flow("test_flow_tmp.ckpt");
  auto z = torch::randn({1, 3, 8, 8}, make_generator(24));
  auto t = torch::tensor({0.5f});
  torch::NoGradGuard ng;
  CHECK(torch::equal(trained.model->forward(z, t), loaded->forward(z, t)));
}
