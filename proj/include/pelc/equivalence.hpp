#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "pelc/autoencoder.hpp"
#include "pelc/dataset.hpp"
#include "pelc/masks.hpp"

namespace pelc {

// A latent compositor maps (z_A, z_B, z_T, sample) to a composed latent.
// z_T = E(pixel composite) is passed so oracle methods can project onto it;
// honest methods must ignore it.
using LatentCompositor = std::function<torch::Tensor(
    const torch::Tensor& z_a, const torch::Tensor& z_b, const torch::Tensor& z_t,
    const CompositeSample& sample)>;

LatentCompositor make_heuristic_compositor(int factor,
                                           DownsampleMethod method = DownsampleMethod::Area);
// Closed-form projection onto the z_A<->z_B segment; alpha_only suppresses
// the shift term.
LatentCompositor make_oracle_compositor(bool alpha_only);
LatentCompositor make_ground_truth_compositor();

struct MethodMetrics {
  double ssim = 0.0;
  double psnr_db = 0.0;
  double perceptual = 0.0;
  double halo_l1 = 0.0;
  double mse = 0.0;
  int n = 0;
};

struct EquivalenceReport {
  std::string method;
  MethodMetrics overall;
  std::map<std::string, MethodMetrics> per_kind;
  double out_of_range_fraction = 0.0;  // unclamped alpha outside [0,1]
};

// Metrics of decode(zhat) against decode(E(pixel composite)) — the
// encode-decode target, so autoencoder reconstruction error cancels.
EquivalenceReport evaluate_equivalence(const FrozenAutoencoder& ae, const EvalSet& set,
                                       const std::string& method_name,
                                       const LatentCompositor& compositor,
                                       int halo_radius_px);

nlohmann::json report_to_json(const EquivalenceReport& r);
std::string report_to_csv(const std::vector<EquivalenceReport>& rs);

struct SdfProfile {
  std::vector<int> bins;  // signed distance at 1-px (or 1-latent) granularity
  std::vector<double> mean_mse;
  std::vector<std::int64_t> counts;
  std::vector<bool> low_sample;  // fewer than 30 samples in the bin
  bool latent_scale = false;
};

// Mean squared error binned by signed distance to the mask boundary.
// Pixel scale bins decode error; latent scale bins latent error against z_T
// using the area-downsampled mask's own SDF.
SdfProfile sdf_error_profile(const FrozenAutoencoder& ae, const EvalSet& set,
                             const LatentCompositor& compositor, bool latent_scale);

std::string profile_to_csv(const SdfProfile& p);

// Mean error of the profile at signed-distance bin d (throws if absent).
double profile_at(const SdfProfile& p, int bin);
// Bin index of the maximum mean error.
int profile_peak_bin(const SdfProfile& p);

}  // namespace pelc
