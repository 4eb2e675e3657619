#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "pelc/autoencoder.hpp"

namespace pelc {

// Empirical receptive-field probes on a frozen autoencoder. Energy maps are
// nonnegative [H,W] (decoder probes) or [h,w] (encoder/gradient probes).

// Perturb one latent site by eps in all channels; per-pixel L2 of the decode
// difference.
torch::Tensor erf_probe_decoder(const FrozenAutoencoder& ae, const torch::Tensor& z_chw,
                                std::pair<int, int> site, double eps = 1e-3);

// Inject a 1-px impulse of height delta at a pixel; per-latent-site L2 of the
// encoding difference.
torch::Tensor erf_probe_encoder(const FrozenAutoencoder& ae, const torch::Tensor& x_chw,
                                std::pair<int, int> pixel, double delta = 0.05);

// Saliency of a 5x5 decoded window: backprop s = sum(y^2) over the window to
// z, channelwise L2 per latent site.
torch::Tensor erf_probe_gradient(const FrozenAutoencoder& ae, const torch::Tensor& z_chw,
                                 std::pair<int, int> window_corner, int window = 5);

// Smallest radius (fraction of the map diagonal) around `center` holding
// fraction p of the total energy. Throws on an all-zero map.
double cumulative_energy_radius(const torch::Tensor& energy_hw, std::pair<int, int> center,
                                double p);

struct RadiusSummary {
  double mean = 0.0;
  double ci_lo = 0.0;  // percentile bootstrap, 95%
  double ci_hi = 0.0;
};

RadiusSummary bootstrap_radius(const std::vector<double>& radii, int resamples = 1000,
                               std::uint64_t seed = 0);

struct ErfReport {
  double analytic_r0 = 0.0;         // latents (decoder) or pixels (encoder)
  double analytic_influence = 0.0;  // pixels
  RadiusSummary r50;
  RadiusSummary r90;
  int probes = 0;
};

// Probes `probes` random interior sites over images seeded from data_seed.
ErfReport erf_report_decoder(const FrozenAutoencoder& ae, int image_size, int probes,
                             std::uint64_t data_seed, double eps = 1e-3);
ErfReport erf_report_encoder(const FrozenAutoencoder& ae, int image_size, int probes,
                             std::uint64_t data_seed, double delta = 0.05);

}  // namespace pelc
