#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "pelc/autoencoder.hpp"
#include "pelc/compositor.hpp"
#include "pelc/equivalence.hpp"
#include "pelc/masks.hpp"
#include "pelc/metrics.hpp"

namespace pelc {

// Content-agnostic per-mask prior: a per-channel initial alpha plus token
// embeddings for cross-attention. Computed once per mask.
struct MaskPrior {
  torch::Tensor alpha0;  // [N, C, h, w] in [0,1]
  torch::Tensor tokens;  // [N, h*w, d_tok]
};

struct DecformerConfig {
  int latent_channels = 4;
  int factor = 4;
  std::vector<int> patch_sizes = {4, 2, 1, 1};  // last must be 1
  int width = 96;
  int token_dim = 32;
  int film_hidden = 32;
  int trunk_out = 16;
  bool shift_head = true;       // off: alpha-only model
  bool constrain_alpha = true;  // off: raw (unbounded) alpha ablation
  int halo_radius_px = 6;
  std::uint64_t seed = 0;
};

// Lightweight CNN from the pixel mask (augmented with Fourier positional
// features) to the latent grid, with gated heads for alpha0 and tokens.
class MaskPriorNetImpl : public torch::nn::Module {
 public:
  explicit MaskPriorNetImpl(const DecformerConfig& config);
  MaskPrior forward(torch::Tensor mask_n1hw);

 private:
  DecformerConfig cfg_;
  torch::nn::Sequential trunk_{nullptr};
  torch::nn::Conv2d alpha_head_{nullptr}, alpha_gate_{nullptr};
  torch::nn::Conv2d token_head_{nullptr}, token_gate_{nullptr};
};
TORCH_MODULE(MaskPriorNet);

class DecformerBlockImpl : public torch::nn::Module {
 public:
  DecformerBlockImpl(const DecformerConfig& config, int patch, int feature_channels,
                     bool cross_attention);
  // features [N,F,h,w], film condition [N,2,h,w] (halo + latent mask),
  // tokens [N,hw,d_tok] -> trunk output [N,trunk_out,h,w]
  torch::Tensor forward(torch::Tensor features, torch::Tensor cond, torch::Tensor tokens);

  bool cross_attention() const { return cross_; }

 private:
  int patch_;
  bool cross_;
  torch::nn::Conv2d proj_in_{nullptr};
  torch::nn::Sequential film_{nullptr};
  torch::nn::LayerNorm ln1_{nullptr}, ln2_{nullptr}, ln3_{nullptr};
  torch::nn::MultiheadAttention self_attn_{nullptr}, cross_attn_{nullptr};
  torch::nn::Linear token_proj_{nullptr};
  torch::nn::Sequential mlp_{nullptr};
  torch::nn::Conv2d proj_out_{nullptr};
  torch::nn::Conv2d local_{nullptr};  // post-unpatch local conv
};
TORCH_MODULE(DecformerBlock);

// Compositor predicting a per-channel BlendField from two latents and the
// pixel mask, refined across multi-scale blocks with a running (alpha, s)
// estimate and error cues re-injected at every block.
class DecformerCompositorImpl : public torch::nn::Module {
 public:
  explicit DecformerCompositorImpl(const DecformerConfig& config);

  // shift_gate in [0,1] scales the shift head; 0 skips it entirely so s == 0
  // bit-exactly and no gradient reaches the shift parameters.
  BlendField forward(torch::Tensor z_a, torch::Tensor z_b, torch::Tensor mask_n1hw,
                     torch::Tensor halo_latent_n1hw, double shift_gate = 1.0);

  const DecformerConfig& config() const { return cfg_; }
  std::vector<torch::Tensor> shift_parameters();
  std::vector<torch::Tensor> alpha_path_parameters();

 private:
  DecformerConfig cfg_;
  MaskPriorNet prior_{nullptr};
  std::vector<DecformerBlock> blocks_;
  std::vector<torch::nn::Conv2d> alpha_heads_, shift_heads_;
};
TORCH_MODULE(DecformerCompositor);

DecformerCompositor build_decformer(const DecformerConfig& config);

struct PelcLossParts {
  torch::Tensor total;
  torch::Tensor latent_mse;
  torch::Tensor perceptual;
  torch::Tensor halo;
};

// lambda_e * MSE(zhat, z_t) + perceptual(D(zhat), D(z_t))
//   + lambda_h * halo_l1(D(zhat), D(z_t)); batched over N.
PelcLossParts pelc_loss(const torch::Tensor& zhat, const torch::Tensor& z_t,
                        const torch::Tensor& halo_pixel_nhw, double lambda_e,
                        double lambda_h, const FrozenAutoencoder& ae,
                        const PerceptualSurrogate& perceptual);

enum class TrainStage { AlphaOnly, ShiftWarmup, Joint };
std::string to_string(TrainStage s);

struct DecformerTrainOptions {
  int max_steps = 2600;
  int batch = 8;
  double lr = 3e-4;
  double weight_decay = 1e-4;
  double alpha_lr_scale_warmup = 0.2;  // alpha-path LR reduction in warmup
  int shift_warmup_steps = 300;        // desk-scale analogue of the 2k warmup
  int alpha_stage_cap = 1000;          // hard cap on the alpha-only stage
  int val_every = 50;
  int val_window = 4;                  // stabilization: checks spanning window
  double val_rel_improvement = 0.01;   // < 1% relative improvement => stable
  double lambda_e = 1.0;
  double lambda_h = 2.0;
  int image_size = 48;
  std::uint64_t data_seed = 9000;
  int val_size = 16;
  int log_every = 50;
  std::string log_path;  // JSON-lines training log; empty disables the file
};

struct TrainedDecformer {
  DecformerCompositor model{nullptr};
  std::vector<nlohmann::json> log;
};

TrainedDecformer train_decformer(const DecformerConfig& config,
                                 const DecformerTrainOptions& opts,
                                 const FrozenAutoencoder& ae);

void save_decformer(const TrainedDecformer& trained, const std::string& path);
DecformerCompositor load_decformer(const std::string& path);

// Adapter into the evaluation harness (batch of one, eval mode, no grad).
LatentCompositor make_decformer_compositor(DecformerCompositor model,
                                           const FrozenAutoencoder& ae);

struct AblationRow {
  std::string name;
  double halo_l1_mean = 0.0, halo_l1_lo = 0.0, halo_l1_hi = 0.0;
  double perceptual_mean = 0.0, perceptual_lo = 0.0, perceptual_hi = 0.0;
  double mse_mean = 0.0, mse_lo = 0.0, mse_hi = 0.0;
};

// Trains {baseline, no-halo-loss, unconstrained-alpha-no-shift} over the
// given seeds and evaluates each on the eval set; CI from the seed spread.
std::vector<AblationRow> ablation_suite(const DecformerConfig& base,
                                        const DecformerTrainOptions& opts,
                                        const FrozenAutoencoder& ae, const EvalSet& eval_set,
                                        const std::vector<std::uint64_t>& seeds);
std::string ablation_to_csv(const std::vector<AblationRow>& rows);

// Side-by-side alpha / shift maps against the closed-form oracle
// decomposition, written as image grids under out_dir.
void internals_visualization(DecformerCompositor model, const FrozenAutoencoder& ae,
                             const CompositeSample& sample, const std::string& out_dir);

}  // namespace pelc
