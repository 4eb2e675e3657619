#pragma once

#include <torch/torch.h>

namespace pelc {

// PSNR of identical images is reported as this finite sentinel (dB).
inline constexpr double kPsnrSentinel = 99.0;

// Standard SSIM: uniform 7x7 window over valid positions, C1=(0.01)^2,
// C2=(0.03)^2, data range 1, averaged over channels.
double ssim(const torch::Tensor& x_chw, const torch::Tensor& y_chw, int window = 7);

double psnr(const torch::Tensor& x_chw, const torch::Tensor& y_chw);

double mse(const torch::Tensor& x, const torch::Tensor& y);

// Perceptual-style distance from a fixed, seed-pinned random multi-scale
// convolutional feature extractor. Deterministic and dependency-free; not
// comparable to pretrained-LPIPS absolute values.
class PerceptualSurrogate {
 public:
  explicit PerceptualSurrogate(int in_channels = 3, std::uint64_t seed = 0x5045'4c43);

  // scalar distance; differentiable w.r.t. both inputs
  torch::Tensor operator()(const torch::Tensor& x_chw, const torch::Tensor& y_chw) const;
  torch::Tensor batched(const torch::Tensor& x_nchw, const torch::Tensor& y_nchw) const;

  void to(torch::Dtype dtype);

 private:
  std::vector<torch::Tensor> weights_;  // one conv bank per scale
  int scales_ = 3;
};

}  // namespace pelc
