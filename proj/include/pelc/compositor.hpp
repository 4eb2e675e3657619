#pragma once

#include <torch/torch.h>

#include "pelc/masks.hpp"

namespace pelc {

// Per-channel, per-site blend weights in [0,1] plus residual shift.
struct BlendField {
  torch::Tensor alpha;  // [C, h, w]
  torch::Tensor shift;  // [C, h, w]
};

// (1-M) * x_A + M * x_B, mask broadcast over channels.
torch::Tensor compose_pixels(const torch::Tensor& x_a, const torch::Tensor& x_b,
                             const PixelMask& mask);

// Downsample the pixel mask, broadcast across latent channels and mix.
torch::Tensor heuristic_blend(const torch::Tensor& z_a, const torch::Tensor& z_b,
                              const PixelMask& mask, int factor,
                              DownsampleMethod method = DownsampleMethod::Area);

// Closed-form least-squares decomposition of z_T onto the z_A<->z_B segment:
//   alpha* = clamp01((z_T - z_A)(z_B - z_A) / ((z_B - z_A)^2 + eps))
//   s*     = z_T - [(1 - alpha*) z_A + alpha* z_B]
BlendField project_alpha_shift(const torch::Tensor& z_a, const torch::Tensor& z_b,
                               const torch::Tensor& z_t, double eps = 1e-8);

torch::Tensor apply_blend(const torch::Tensor& z_a, const torch::Tensor& z_b,
                          const BlendField& field);

// Fraction of non-degenerate elements whose unclamped alpha falls outside
// [0,1]. Elements with |z_A - z_B| < degenerate_tol are excluded.
struct OutOfRangeStats {
  double fraction = 0.0;
  std::int64_t degenerate = 0;
  std::int64_t total = 0;
};
OutOfRangeStats out_of_range_fraction(const torch::Tensor& z_a, const torch::Tensor& z_b,
                                      const torch::Tensor& z_t,
                                      double degenerate_tol = 1e-6);

// sum(w |x-y|) / sum(w), weights broadcast over channels.
double halo_l1(const torch::Tensor& x_chw, const torch::Tensor& y_chw,
               const torch::Tensor& weights_hw);
torch::Tensor halo_l1_t(const torch::Tensor& x_chw, const torch::Tensor& y_chw,
                        const torch::Tensor& weights_hw);

}  // namespace pelc
