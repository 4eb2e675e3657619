#include <string>
#include <tuple>

#include "pelc/equivalence.hpp"
#include "pelc/metrics.hpp"

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

EvalSet small_set() {
  EvalSetConfig cfg;
  cfg.size = 32;
  cfg.per_kind = 2;
  cfg.seed = 321;
  return build_eval_set(cfg);
}

}  // namespace

TEST_CASE("ground-truth compositor scores perfectly") {
  auto ae = identity_ae();
  auto set = small_set();
  auto r = evaluate_equivalence(ae, set, "ground_truth", make_ground_truth_compositor(), 6);
  CHECK(r.method == "ground_truth");
  CHECK(r.overall.n == int(set.samples.size()));
  CHECK(r.overall.mse == doctest::Approx(0.0));
  CHECK(r.overall.halo_l1 == doctest::Approx(0.0));
  CHECK(r.overall.ssim == doctest::Approx(1.0));
  CHECK(r.overall.psnr_db == doctest::Approx(kPsnrSentinel));
  CHECK(r.per_kind.size() == 4);
}

TEST_CASE("pixel-space blending is exact when the latent space is pixels") {
  auto ae = identity_ae();
  auto set = small_set();
  auto r = evaluate_equivalence(ae, set, "heuristic", make_heuristic_compositor(1), 6);
  CHECK(r.overall.mse == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(r.overall.psnr_db > 80.0);
  auto oracle = evaluate_equivalence(ae, set, "oracle", make_oracle_compositor(false), 6);
  CHECK(oracle.overall.mse < 1e-10);
}

TEST_CASE("alpha-only oracle zeroes the shift") {
  auto z_a = torch::zeros({2, 4, 4});
  auto z_b = torch::ones({2, 4, 4});
  auto z_t = torch::full({2, 4, 4}, 0.55);
  CompositeSample dummy = make_composite(1, 16);
  auto alpha_only = make_oracle_compositor(true);
  auto full = make_oracle_compositor(false);
  auto zo = alpha_only(z_a, z_b, z_t, dummy);
  auto zf = full(z_a, z_b, z_t, dummy);
  // Elementwise projection is exact when z_t lies between z_a and z_b.
  CHECK(torch::allclose(zf, z_t, 1e-5, 1e-6));
  CHECK(torch::allclose(zo, z_t, 1e-5, 1e-6));
  // Out-of-segment target: alpha clamps, only the full oracle recovers it.
  auto z_far = torch::full({2, 4, 4}, 2.0);
  auto zo_far = alpha_only(z_a, z_b, z_far, dummy);
  auto zf_far = full(z_a, z_b, z_far, dummy);
  CHECK(torch::allclose(zo_far, torch::ones({2, 4, 4}), 1e-5, 1e-6));
  CHECK(torch::allclose(zf_far, z_far, 1e-5, 1e-6));
}

TEST_CASE("report serialization carries the per-kind breakdown") {
  auto ae = identity_ae();
  EvalSetConfig cfg;
  cfg.size = 32;
  cfg.per_kind = 1;
  cfg.seed = 55;
  auto set = build_eval_set(cfg);
  auto r = evaluate_equivalence(ae, set, "heuristic", make_heuristic_compositor(1), 6);
  auto j = report_to_json(r);
  CHECK(j.at("method") == "heuristic");
  CHECK(j.at("overall").at("n") == 4);
  CHECK(j.at("per_kind").size() == 4);
  CHECK(j.contains("out_of_range_fraction"));

  auto csv = report_to_csv({r});
  CHECK(csv.find("method,") == 0);
  CHECK(csv.find("heuristic") != std::string::npos);
}

TEST_CASE("empty evaluation set is rejected") {
  auto ae = identity_ae();
  EvalSet empty;
  CHECK_THROWS(evaluate_equivalence(ae, empty, "x", make_ground_truth_compositor(), 6));
}

TEST_CASE("sdf profile of a perfect compositor is zero everywhere") {
  auto ae = identity_ae();
  auto set = small_set();
  auto p = sdf_error_profile(ae, set, make_ground_truth_compositor(), false);
  CHECK_FALSE(p.bins.empty());
  for (double e : p.mean_mse) CHECK(e == doctest::Approx(0.0));
  CHECK_FALSE(p.latent_scale);

  auto csv = profile_to_csv(p);
  CHECK(csv.find("bin,") == 0);
}

TEST_CASE("sdf profile lookup helpers") {
  SdfProfile p;
  p.bins = {-2, -1, 0, 1, 2};
  p.mean_mse = {0.1, 0.4, 0.9, 0.3, 0.05};
  p.counts = {100, 100, 100, 100, 100};
  p.low_sample = {false, false, false, false, false};
  CHECK(profile_at(p, 0) == doctest::Approx(0.9));
  CHECK(profile_at(p, -2) == doctest::Approx(0.1));
  CHECK_THROWS(profile_at(p, 7));
  CHECK(profile_peak_bin(p) == 0);
}

TEST_CASE("latent-scale profile bins against the downsampled mask") {
  auto ae = identity_ae();
  auto set = small_set();
  auto p = sdf_error_profile(ae, set, make_heuristic_compositor(1), true);
  CHECK(p.latent_scale);
  CHECK_FALSE(p.bins.empty());
  CHECK(p.bins.size() == p.mean_mse.size());
  CHECK(p.bins.size() == p.counts.size());
}
