#include <cmath>
#include <tuple>

#include "pelc/colorop.hpp"
#include "pelc/common.hpp"
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

}  // namespace

TEST_CASE("identity parameters leave pixels unchanged") {
  auto x = generate_image(1, 16, 16);
  auto y = apply_color_pixels(x, ColorParams{1.0, 1.0, 0.0});
  CHECK(torch::allclose(x, y, 1e-6, 1e-7));
}

TEST_CASE("pixel transform matches hand arithmetic") {
  auto x = torch::full({1, 1, 1}, 0.25);
  // gamma 2: 0.25^{1/2} = 0.5; centered contrast 1 and no brightness keep it.
  auto y = apply_color_pixels(x, ColorParams{2.0, 1.0, 0.0});
  CHECK(y.item<double>() == doctest::Approx(0.5));
  // contrast 2 about 0.5 is inert at 0.5; brightness shifts additively.
  auto z = apply_color_pixels(torch::full({1, 1, 1}, 0.5), ColorParams{1.0, 2.0, 0.1});
  CHECK(z.item<double>() == doctest::Approx(0.6));
  // clamping caps the result at 1.
  auto w = apply_color_pixels(torch::full({1, 1, 1}, 0.9), ColorParams{1.0, 3.0, 0.5});
  CHECK(w.item<double>() == doctest::Approx(1.0));
}

TEST_CASE("brightness is monotone before clamping") {
  auto x = generate_image(2, 12, 12) * 0.5 + 0.2;
  double prev = -1.0;
  for (double b : {-0.2, -0.1, 0.0, 0.1, 0.2}) {
    double m = apply_color_pixels(x, ColorParams{1.0, 1.0, b}).mean().item<double>();
    CHECK(m > prev);
    prev = m;
  }
}

TEST_CASE("invalid parameters are rejected") {
  auto x = generate_image(3, 8, 8);
  CHECK_THROWS(apply_color_pixels(x, ColorParams{0.0, 1.0, 0.0}));
  CHECK_THROWS(ColorParams{-1.0, 1.0, 0.0}.conditioning());
  CHECK_THROWS(ColorParams{1.0, 0.0, 0.0}.conditioning());
}

TEST_CASE("naive latent transfer is the identity for identity parameters") {
  LatentStats stats{torch::zeros({3}), torch::ones({3}), torch::zeros({3}), torch::ones({3})};
  auto z = generate_image(4, 10, 10);  // already in [0,1] = [min,max]
  auto y = apply_color_latents_naive(z, ColorParams{1.0, 1.0, 0.0}, stats);
  CHECK(torch::allclose(z, y, 1e-5, 1e-6));
}

TEST_CASE("conditioning vector encodes log-scale parameters") {
  auto c = ColorParams{3.0, 0.5, -0.1}.conditioning();
  CHECK(c.sizes() == torch::IntArrayRef({3}));
  CHECK(c[0].item<double>() == doctest::Approx(std::log(3.0)));
  CHECK(c[1].item<double>() == doctest::Approx(std::log(0.5)));
  CHECK(c[2].item<double>() == doctest::Approx(-0.1));
}

TEST_CASE("sampled parameters stay inside the training ranges") {
  auto gen = make_generator(77);
  for (int i = 0; i < 200; ++i) {
    auto p = sample_color_params(gen);
    CHECK(p.gamma >= 1.0 / 3.0 - 1e-9);
    CHECK(p.gamma <= 3.0 + 1e-9);
    CHECK(p.contrast >= 0.5 - 1e-9);
    CHECK(p.contrast <= 2.0 + 1e-9);
    CHECK(std::abs(p.brightness) <= 0.2 + 1e-9);
  }
}

TEST_CASE("operator checkpoint round-trips") {
  ColorOpConfig cfg;
  cfg.latent_channels = 3;
  cfg.width = 16;
  cfg.blocks = 2;
  cfg.cond_dim = 8;
  cfg.seed = 9;
  TrainedColorOp trained;
  trained.model = build_color_operator(cfg);
  trained.model->eval();
  save_color_operator(trained, "test_colorop_tmp.ckpt");
  auto loaded = load_color_operator("test_colorop_tmp.ckpt");
  auto z = torch::randn({2, 3, 8, 8}, make_generator(10));
  auto cond = torch::stack({ColorParams{2.0, 1.2, 0.05}.conditioning(),
                            ColorParams{0.7, 0.8, -0.1}.conditioning()});
  torch::NoGradGuard ng;
  CHECK(torch::equal(trained.model->forward(z, cond), loaded->forward(z, cond)));
}

TEST_CASE("evaluation emits paired model and naive rows with ordered intervals") {
  auto ae = identity_ae();
  ColorOpConfig cfg;
  cfg.latent_channels = 3;
  cfg.width = 16;
  cfg.blocks = 2;
  cfg.cond_dim = 8;
  cfg.seed = 12;
  auto model = build_color_operator(cfg);
  ColorEvalOptions opts;
  opts.num_images = 6;
  opts.image_size = 24;
  auto rows = evaluate_color(model, ae, opts);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].method == "model");
  CHECK(rows[1].method == "naive");
  for (const auto& r : rows) {
    CHECK(r.n == 6);
    CHECK(r.psnr_lo <= r.psnr_db);
    CHECK(r.psnr_db <= r.psnr_hi);
    CHECK(r.ssim_lo <= r.ssim);
    CHECK(r.ssim <= r.ssim_hi);
  }
  auto csv = color_to_csv(rows);
  CHECK(csv.find("method,psnr_db") == 0);
}
