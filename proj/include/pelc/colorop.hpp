#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "pelc/autoencoder.hpp"

namespace pelc {

struct ColorParams {
  double gamma = 1.0;
  double contrast = 1.0;
  double brightness = 0.0;

  // (log gamma, log contrast, brightness) conditioning vector
  torch::Tensor conditioning() const;
};

// F(x; gamma, c, b) = (x^{1/gamma} - 0.5) * c + 0.5 + b, clamped to [0,1].
torch::Tensor apply_color_pixels(const torch::Tensor& x_chw, const ColorParams& p);

// Intentionally unsound baseline: the pixel formula applied elementwise to
// latents after min/max normalization from the frozen latent stats (keeps the
// fractional power real-valued).
torch::Tensor apply_color_latents_naive(const torch::Tensor& z_chw, const ColorParams& p,
                                        const LatentStats& stats);

struct ColorOpConfig {
  int latent_channels = 4;
  int width = 64;
  int blocks = 3;
  int cond_dim = 32;
  std::uint64_t seed = 0;
};

// FiLM-conditioned residual network: zhat = z + residual(z | log gamma,
// log c, b).
class ColorOperatorImpl : public torch::nn::Module {
 public:
  explicit ColorOperatorImpl(const ColorOpConfig& config);
  torch::Tensor forward(torch::Tensor z, torch::Tensor cond_n3);

  const ColorOpConfig& config() const { return cfg_; }

 private:
  ColorOpConfig cfg_;
  torch::nn::Conv2d conv_in_{nullptr}, conv_out_{nullptr};
  torch::nn::Sequential cond_mlp_{nullptr};
  std::vector<torch::nn::Conv2d> convs_;
  std::vector<torch::nn::Linear> films_;
};
TORCH_MODULE(ColorOperator);

ColorOperator build_color_operator(const ColorOpConfig& config);

// Training parameter distribution: log gamma ~ U(-log 3, log 3),
// log c ~ U(-log 2, log 2), b ~ U(-0.2, 0.2).
ColorParams sample_color_params(at::Generator& gen);

struct ColorTrainOptions {
  int steps = 1200;
  int batch = 16;
  double lr = 1e-3;
  int image_size = 48;
  std::uint64_t data_seed = 6100;
  int dataset_size = 2048;
  int log_every = 100;
  double perceptual_weight = 1.0;
};

struct TrainedColorOp {
  ColorOperator model{nullptr};
  std::vector<TrainLogEntry> log;
};

TrainedColorOp train_color_operator(const ColorOpConfig& config, const ColorTrainOptions& opts,
                                    const FrozenAutoencoder& ae);

void save_color_operator(const TrainedColorOp& trained, const std::string& path);
ColorOperator load_color_operator(const std::string& path);

struct ColorEvalRow {
  std::string method;  // "model" or "naive"
  double psnr_db = 0.0, psnr_lo = 0.0, psnr_hi = 0.0;
  double ssim = 0.0, ssim_lo = 0.0, ssim_hi = 0.0;
  double perceptual = 0.0, perceptual_lo = 0.0, perceptual_hi = 0.0;
  int n = 0;
};

struct ColorEvalOptions {
  int num_images = 24;
  int image_size = 48;
  std::uint64_t seed = 6200;
};

// Decoded outputs are scored against decode(E(clamp(F(x; p)))) over a sweep
// of sampled parameters; CI by percentile bootstrap over samples.
std::vector<ColorEvalRow> evaluate_color(ColorOperator model, const FrozenAutoencoder& ae,
                                         const ColorEvalOptions& opts);
std::string color_to_csv(const std::vector<ColorEvalRow>& rows);

}  // namespace pelc
