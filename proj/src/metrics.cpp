#include "pelc/metrics.hpp"

#include <stdexcept>

#include "pelc/common.hpp"

namespace F = torch::nn::functional;

namespace pelc {

namespace {

void check_pair(const torch::Tensor& x, const torch::Tensor& y) {
  if (!x.sizes().equals(y.sizes()))
    throw std::invalid_argument("metric: shape mismatch");
}

}  // namespace

double mse(const torch::Tensor& x, const torch::Tensor& y) {
  check_pair(x, y);
  return (x - y).pow(2).mean().item<double>();
}

double psnr(const torch::Tensor& x, const torch::Tensor& y) {
  double m = mse(x, y);
  if (m <= 0.0) return kPsnrSentinel;
  return std::min(kPsnrSentinel, 10.0 * std::log10(1.0 / m));
}

double ssim(const torch::Tensor& x_chw, const torch::Tensor& y_chw, int window) {
  check_pair(x_chw, y_chw);
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  auto x = x_chw.unsqueeze(1).to(torch::kDouble);  // [C,1,H,W]
  auto y = y_chw.unsqueeze(1).to(torch::kDouble);
  auto k = torch::full({1, 1, window, window}, 1.0 / double(window * window),
                       torch::kDouble);
  auto mu_x = F::conv2d(x, k);
  auto mu_y = F::conv2d(y, k);
  auto xx = F::conv2d(x * x, k) - mu_x * mu_x;
  auto yy = F::conv2d(y * y, k) - mu_y * mu_y;
  auto xy = F::conv2d(x * y, k) - mu_x * mu_y;
  auto num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2);
  auto den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2);
  return (num / den).mean().item<double>();
}

PerceptualSurrogate::PerceptualSurrogate(int in_channels, std::uint64_t seed) {
  auto gen = make_generator(seed);
  torch::NoGradGuard ng;
  int c_in = in_channels;
  for (int s = 0; s < scales_; ++s) {
    int c_out = 16;
    auto w = at::randn({c_out, c_in, 3, 3}, gen, at::TensorOptions().dtype(at::kFloat));
    w = w / std::sqrt(double(c_in * 9));
    weights_.push_back(w);
  }
}

void PerceptualSurrogate::to(torch::Dtype dtype) {
  for (auto& w : weights_) w = w.to(dtype);
}

torch::Tensor PerceptualSurrogate::batched(const torch::Tensor& x_in,
                                           const torch::Tensor& y_in) const {
  check_pair(x_in, y_in);
  auto x = x_in, y = y_in;
  torch::Tensor total = torch::zeros({x.size(0)}, x.options());
  for (int s = 0; s < scales_; ++s) {
    auto w = weights_[std::size_t(s)].to(x.dtype());
    auto fx = torch::tanh(F::conv2d(x, w, F::Conv2dFuncOptions().padding(1)));
    auto fy = torch::tanh(F::conv2d(y, w, F::Conv2dFuncOptions().padding(1)));
    total = total + (fx - fy).pow(2).mean({1, 2, 3});
    if (s + 1 < scales_ && x.size(2) >= 2 && x.size(3) >= 2) {
      x = F::avg_pool2d(x, F::AvgPool2dFuncOptions(2));
      y = F::avg_pool2d(y, F::AvgPool2dFuncOptions(2));
    }
  }
  return total / double(scales_);
}

torch::Tensor PerceptualSurrogate::operator()(const torch::Tensor& x_chw,
                                              const torch::Tensor& y_chw) const {
  return batched(x_chw.unsqueeze(0), y_chw.unsqueeze(0)).squeeze(0);
}

}  // namespace pelc
