#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "pelc/autoencoder.hpp"
#include "pelc/compositor.hpp"
#include "pelc/decformer.hpp"
#include "pelc/masks.hpp"

namespace pelc {

// Rectified flow on the frozen (normalized) latent space:
//   z_t = (1 - t) z_0 + t eps,  v(z_t, t) = eps - z_0,  z_0 = z_t - t v.
struct FlowConfig {
  int latent_channels = 4;
  int width = 64;
  int blocks = 4;
  int time_dim = 64;
  std::uint64_t seed = 0;
};

class FlowResBlockImpl : public torch::nn::Module {
 public:
  FlowResBlockImpl(int channels, int time_dim);
  torch::Tensor forward(torch::Tensor x, torch::Tensor temb);

 private:
  torch::nn::GroupNorm n1_{nullptr}, n2_{nullptr};
  torch::nn::Conv2d c1_{nullptr}, c2_{nullptr};
  torch::nn::Linear film_{nullptr};  // time embedding -> per-channel scale/bias
};
TORCH_MODULE(FlowResBlock);

class FlowModelImpl : public torch::nn::Module {
 public:
  explicit FlowModelImpl(const FlowConfig& config);
  // z [N,C,h,w], t [N] in (0,1] -> velocity [N,C,h,w]
  torch::Tensor forward(torch::Tensor z, torch::Tensor t);

  const FlowConfig& config() const { return cfg_; }

 private:
  FlowConfig cfg_;
  torch::nn::Conv2d conv_in_{nullptr}, conv_out_{nullptr};
  torch::nn::Sequential time_mlp_{nullptr};
  std::vector<FlowResBlock> blocks_;
};
TORCH_MODULE(FlowModel);

FlowModel build_flow(const FlowConfig& config);

struct FlowTrainOptions {
  int steps = 3000;
  int batch = 32;
  double lr = 1e-3;
  int image_size = 48;
  std::uint64_t data_seed = 7000;
  int dataset_size = 2048;
  int log_every = 200;
};

struct TrainedFlow {
  FlowModel model{nullptr};
  std::vector<TrainLogEntry> log;  // psnr field unused; loss logged
};

TrainedFlow train_flow(const FlowConfig& config, const FlowTrainOptions& opts,
                       const FrozenAutoencoder& ae);

void save_flow(const TrainedFlow& trained, const std::string& path);
FlowModel load_flow(const std::string& path);

struct FlowState {
  torch::Tensor z_t;
  double t = 1.0;
  std::vector<double> schedule;  // strictly decreasing toward 0
  int step_index = 0;
};

// Euler update z_{t'} = z_t + (t' - t) v. t' must not exceed t.
FlowState flow_step(const FlowState& state, const torch::Tensor& v, double t_next);

// Decode-composite-retarget update: z0_theta = z_t - t v;
// z0_star = (1 - alpha) z0_theta + alpha z0_ref + s; v* = v - delta / t with
// delta = alpha (z0_ref - z0_theta) + s, so alpha == 0, s == 0 reproduces the
// plain Euler step bit-exactly.
FlowState retargeted_step(const FlowState& state, const torch::Tensor& v,
                          const torch::Tensor& z0_ref, const BlendField& field,
                          double t_next);

enum class InpaintVariant { HeuristicPerStep, DecformerRetarget };
std::string to_string(InpaintVariant v);

struct InpaintOptions {
  int steps = 30;
  std::uint64_t noise_seed = 0;
  // Noise-level multiplier for the preserved region's reference trajectory.
  // 1 keeps both regions at the sampler's sigma; a dual-sigma finetuned model
  // expects the preserved region at lambda * sigma.
  double keep_lambda = 1.0;
  // The learned compositor field is used once t drops to this value; above it
  // the implied endpoint is still noise-dominated and the exact field
  // (alpha = keep mask, zero shift) retargets instead.
  double learned_field_max_t = 0.1;
  // Gate on the learned shift head (0 disables it, alpha still learned). The
  // shift is trained against encoded-composite targets and overcorrects on
  // flow endpoints, so the sampler keeps the alpha field only by default.
  double learned_shift_gate = 0.0;
  nlohmann::json* diagnostics = nullptr;  // optional per-step sidecar
};

// Fills the masked region of `image` (mask == 1 is generated, mask == 0 is
// preserved from the image) and decodes the result.
torch::Tensor inpaint(const FrozenAutoencoder& ae, FlowModel flow, const torch::Tensor& image,
                      const PixelMask& mask, InpaintVariant variant,
                      DecformerCompositor decformer, const InpaintOptions& opts);

// Regionwise noising: sigma_in = g(u) inside the mask, sigma_out = g(lambda u)
// outside; both regions share one eps draw. g = identity by default.
struct DualSigmaSample {
  torch::Tensor z;            // [C,h,w]
  torch::Tensor sigma_field;  // [h,w]
  torch::Tensor eps;
  double sigma_in = 0.0;
  double sigma_out = 0.0;
};

DualSigmaSample dual_sigma_corrupt(const torch::Tensor& z0_chw, const LatentMask& m, double u,
                                   double lambda, std::uint64_t noise_seed);

struct DualSigmaFinetuneOptions {
  int steps = 1200;
  int batch = 16;
  double lr = 5e-5;  // small-LR full finetune standing in for a low-rank adapter
  double lambda = 0.75;
  // Fraction of batches trained at uniform sigma (lambda = 1); replay that
  // keeps the base denoising competence from drifting during the finetune.
  double uniform_mix = 0.6;
  int image_size = 48;
  std::uint64_t data_seed = 7700;
  int log_every = 100;
};

TrainedFlow finetune_dual_sigma(FlowModel base, const DualSigmaFinetuneOptions& opts,
                                const FrozenAutoencoder& ae);

struct InpaintRow {
  std::string variant;
  double ssim = 0.0;
  double psnr_db = 0.0;
  double perceptual = 0.0;
  double seam_halo_l1 = 0.0;  // halo-weighted L1 within 8 px of the boundary
  int n = 0;
};

struct InpaintEvalOptions {
  int num_images = 12;
  int image_size = 48;
  std::uint64_t seed = 8800;
  double min_masked_area = 0.15;
  int steps = 30;
  // keep_lambda used when sampling the dual-sigma finetuned variants; should
  // match the lambda the model was finetuned with.
  double dual_sigma_lambda = 0.75;
  double learned_field_max_t = 0.1;   // forwarded to InpaintOptions
  double learned_shift_gate = 0.0;    // forwarded to InpaintOptions
};

// Variants: heuristic / decformer on the base flow, dual_sigma_only /
// decformer+dual_sigma on the finetuned flow; identical noise seeds across
// variants; ground truth is the uncorrupted source image.
std::vector<InpaintRow> evaluate_inpainting(const FrozenAutoencoder& ae, FlowModel base,
                                            FlowModel finetuned, DecformerCompositor decformer,
                                            const InpaintEvalOptions& opts);
std::string inpaint_to_csv(const std::vector<InpaintRow>& rows);

}  // namespace pelc
