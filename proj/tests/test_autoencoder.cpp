#include "pelc/autoencoder.hpp"
#include "pelc/checkpoint.hpp"
#include "pelc/image.hpp"
#include "pelc/metrics.hpp"

#include <cstdio>
#include <doctest.h>

using namespace pelc;

TEST_CASE("autoencoder shape arithmetic") {
  AutoencoderConfig cfg;
  cfg.factor = 4;
  cfg.latent_channels = 4;
  cfg.base_width = 16;
  auto model = build_autoencoder(cfg);
  model->eval();
  torch::NoGradGuard ng;
  auto x = torch::rand({2, 3, 32, 32});
  auto z = model->encode(x);
  CHECK(z.sizes() == torch::IntArrayRef({2, 4, 8, 8}));
  auto recon = model->decode(z);
  CHECK(recon.sizes() == x.sizes());
  CHECK(recon.min().item<double>() >= 0.0);
  CHECK(recon.max().item<double>() <= 1.0);

  cfg.factor = 2;
  auto m2 = build_autoencoder(cfg);
  m2->eval();
  CHECK(m2->encode(x).sizes() == torch::IntArrayRef({2, 4, 16, 16}));
}

TEST_CASE("non-power-of-two factor is rejected") {
  AutoencoderConfig cfg;
  cfg.factor = 3;
  CHECK_THROWS(build_autoencoder(cfg));
}

TEST_CASE("identity mode passes tensors through exactly") {
  AutoencoderConfig cfg;
  cfg.factor = 1;
  auto model = build_autoencoder(cfg);
  CHECK(model->parameters().empty());
  auto x = torch::rand({1, 3, 16, 16});
  CHECK(torch::equal(model->encode(x), x));
  CHECK(torch::equal(model->decode(x), x));

  AutoencoderTrainOptions opts;
  opts.steps = 0;
  opts.image_size = 16;
  opts.dataset_size = 8;
  auto trained = train_autoencoder(cfg, opts);
  FrozenAutoencoder frozen(trained.model, trained.stats);
  auto img = generate_image(5, 16, 16);
  CHECK(torch::equal(frozen.encode(img), img));
}

TEST_CASE("fixed seed gives identical initialization") {
  AutoencoderConfig cfg;
  cfg.factor = 2;
  cfg.base_width = 8;
  cfg.seed = 42;
  auto a = build_autoencoder(cfg);
  auto b = build_autoencoder(cfg);
  auto pa = a->parameters();
  auto pb = b->parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(torch::equal(pa[i], pb[i]));
}

TEST_CASE("short training run improves reconstruction and logs") {
  AutoencoderConfig cfg;
  cfg.factor = 2;
  cfg.latent_channels = 4;
  cfg.base_width = 8;
  cfg.attention_midblock = false;
  cfg.seed = 3;
  AutoencoderTrainOptions opts;
  opts.steps = 60;
  opts.batch_size = 8;
  opts.image_size = 16;
  opts.dataset_size = 32;
  opts.log_every = 20;
  auto trained = train_autoencoder(cfg, opts);
  REQUIRE(trained.log.size() >= 2);
  CHECK(trained.log.back().psnr > trained.log.front().psnr);
  CHECK(trained.stats.mean.numel() == 4);
  CHECK((trained.stats.std > 0).all().item<bool>());
  CHECK((trained.stats.max >= trained.stats.min).all().item<bool>());

  FrozenAutoencoder frozen(trained.model, trained.stats);
  auto z = frozen.encode(generate_image(9, 16, 16));
  auto zn = frozen.normalize(z);
  CHECK((frozen.denormalize(zn) - z).abs().max().item<double>() < 1e-5);
  for (auto& p : frozen.module()->parameters()) CHECK_FALSE(p.requires_grad());
}

TEST_CASE("checkpoint round trip reproduces the model bitwise") {
  AutoencoderConfig cfg;
  cfg.factor = 2;
  cfg.base_width = 8;
  cfg.seed = 11;
  AutoencoderTrainOptions opts;
  opts.steps = 10;
  opts.batch_size = 4;
  opts.image_size = 16;
  opts.dataset_size = 16;
  auto trained = train_autoencoder(cfg, opts);
  std::string path = "ae_roundtrip.ckpt";
  save_autoencoder(trained, path);
  auto frozen = load_autoencoder(path);
  std::remove(path.c_str());

  CHECK(frozen.config().factor == 2);
  CHECK(torch::equal(frozen.stats().mean, trained.stats.mean));
  auto x = generate_image(21, 16, 16).unsqueeze(0);
  trained.model->eval();
  torch::NoGradGuard ng;
  CHECK(torch::equal(frozen.encode(x), trained.model->encode(x)));
  CHECK(torch::equal(frozen.decode(frozen.encode(x)),
                     trained.model->decode(trained.model->encode(x))));
}

TEST_CASE("variational bottleneck trains and stays deterministic in eval") {
  AutoencoderConfig cfg;
  cfg.factor = 2;
  cfg.base_width = 8;
  cfg.attention_midblock = false;
  cfg.variational = true;
  AutoencoderTrainOptions opts;
  opts.steps = 5;
  opts.batch_size = 4;
  opts.image_size = 16;
  opts.dataset_size = 16;
  auto trained = train_autoencoder(cfg, opts);
  trained.model->eval();
  torch::NoGradGuard ng;
  auto x = torch::rand({1, 3, 16, 16});
  CHECK(torch::equal(trained.model->encode(x), trained.model->encode(x)));
  auto [mu, logvar] = trained.model->encode_moments(x);
  CHECK(mu.sizes() == logvar.sizes());
}
