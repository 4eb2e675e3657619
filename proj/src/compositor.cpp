#include "pelc/compositor.hpp"

#include <stdexcept>

namespace pelc {

torch::Tensor compose_pixels(const torch::Tensor& x_a, const torch::Tensor& x_b,
                             const PixelMask& mask) {
  if (!x_a.sizes().equals(x_b.sizes()))
    throw std::invalid_argument("compose_pixels: image shape mismatch");
  if (x_a.size(1) != mask.data.size(0) || x_a.size(2) != mask.data.size(1))
    throw std::invalid_argument("compose_pixels: mask shape mismatch");
  auto m = mask.data.unsqueeze(0);
  return (1.0 - m) * x_a + m * x_b;
}

torch::Tensor heuristic_blend(const torch::Tensor& z_a, const torch::Tensor& z_b,
                              const PixelMask& mask, int factor, DownsampleMethod method) {
  if (!z_a.sizes().equals(z_b.sizes()))
    throw std::invalid_argument("heuristic_blend: latent shape mismatch");
  auto m = downsample_mask(mask, factor, method);
  if (m.data.size(0) != z_a.size(1) || m.data.size(1) != z_a.size(2))
    throw std::invalid_argument("heuristic_blend: downsample factor inconsistent with latents");
  auto ml = m.data.unsqueeze(0);
  return (1.0 - ml) * z_a + ml * z_b;
}

BlendField project_alpha_shift(const torch::Tensor& z_a, const torch::Tensor& z_b,
                               const torch::Tensor& z_t, double eps) {
  if (eps < 0) throw std::invalid_argument("project_alpha_shift: eps must be >= 0");
  auto d = z_b - z_a;
  // With eps == 0 the projection is exact away from degenerate sites, where
  // the denominator is floored to keep alpha finite (shift absorbs the rest).
  auto denom = d * d + eps;
  if (eps == 0.0) denom = torch::clamp_min(denom, 1e-300);
  auto alpha_raw = (z_t - z_a) * d / denom;
  auto alpha = torch::clamp(alpha_raw, 0.0, 1.0);
  auto shift = z_t - ((1.0 - alpha) * z_a + alpha * z_b);
  return {alpha, shift};
}

torch::Tensor apply_blend(const torch::Tensor& z_a, const torch::Tensor& z_b,
                          const BlendField& field) {
  return (1.0 - field.alpha) * z_a + field.alpha * z_b + field.shift;
}

OutOfRangeStats out_of_range_fraction(const torch::Tensor& z_a, const torch::Tensor& z_b,
                                      const torch::Tensor& z_t, double degenerate_tol) {
  auto d = z_a - z_b;
  auto valid = d.abs() >= degenerate_tol;
  OutOfRangeStats stats;
  stats.total = z_a.numel();
  stats.degenerate = stats.total - valid.sum().item<std::int64_t>();
  if (stats.degenerate == stats.total)
    throw std::invalid_argument("out_of_range_fraction: all elements degenerate");
  auto alpha = (z_t - z_b) / d;
  auto oor = ((alpha < 0.0) | (alpha > 1.0)) & valid;
  stats.fraction =
      double(oor.sum().item<std::int64_t>()) / double(stats.total - stats.degenerate);
  return stats;
}

torch::Tensor halo_l1_t(const torch::Tensor& x, const torch::Tensor& y,
                        const torch::Tensor& w_hw) {
  if (!x.sizes().equals(y.sizes()))
    throw std::invalid_argument("halo_l1: shape mismatch");
  auto wsum = w_hw.sum() * double(x.size(0));
  if (wsum.item<double>() <= 0.0)
    throw std::invalid_argument("halo_l1: all-zero weights");
  auto w = w_hw.unsqueeze(0).to(x.dtype());
  return (w * (x - y).abs()).sum() / wsum.to(x.dtype());
}

double halo_l1(const torch::Tensor& x, const torch::Tensor& y, const torch::Tensor& w_hw) {
  return halo_l1_t(x, y, w_hw).item<double>();
}

}  // namespace pelc
