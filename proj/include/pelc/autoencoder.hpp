#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace pelc {

struct AutoencoderConfig {
  int factor = 4;            // spatial downsampling; power of two, 1 = identity mode
  int latent_channels = 4;
  int image_channels = 3;
  int base_width = 32;
  bool attention_midblock = true;
  bool variational = false;  // KL-regularized bottleneck behind a flag
  double kl_weight = 1e-6;
  std::uint64_t seed = 0;

  bool identity() const { return factor == 1; }
};

struct LatentStats {
  torch::Tensor mean;  // [C]
  torch::Tensor std;   // [C]
  torch::Tensor min;   // [C]
  torch::Tensor max;   // [C]
};

class ResBlockImpl : public torch::nn::Module {
 public:
  explicit ResBlockImpl(int channels);
  torch::Tensor forward(torch::Tensor x);

 private:
  torch::nn::GroupNorm n1_{nullptr}, n2_{nullptr};
  torch::nn::Conv2d c1_{nullptr}, c2_{nullptr};
};
TORCH_MODULE(ResBlock);

// Single-head global self-attention, the toy analogue of the VAE mid-block
// attention that couples distant latent sites.
class AttnBlockImpl : public torch::nn::Module {
 public:
  explicit AttnBlockImpl(int channels);
  torch::Tensor forward(torch::Tensor x);

 private:
  torch::nn::GroupNorm norm_{nullptr};
  torch::nn::Conv2d q_{nullptr}, k_{nullptr}, v_{nullptr}, proj_{nullptr};
};
TORCH_MODULE(AttnBlock);

class ToyAutoencoderImpl : public torch::nn::Module {
 public:
  explicit ToyAutoencoderImpl(const AutoencoderConfig& config);

  // Deterministic in eval mode; variational bottleneck samples only in train.
  torch::Tensor encode(torch::Tensor x);
  torch::Tensor decode(torch::Tensor z);
  // mu/logvar pair for the variational flag; mu == encoding otherwise
  std::pair<torch::Tensor, torch::Tensor> encode_moments(torch::Tensor x);

  const AutoencoderConfig& config() const { return config_; }

 private:
  AutoencoderConfig config_;
  torch::nn::ModuleList enc_{nullptr}, dec_{nullptr};
  torch::nn::Conv2d enc_in_{nullptr}, enc_out_{nullptr}, dec_in_{nullptr}, dec_out_{nullptr};
};
TORCH_MODULE(ToyAutoencoder);

ToyAutoencoder build_autoencoder(const AutoencoderConfig& config);

// Frozen encoder/decoder with pinned latent statistics. Immutable after
// construction; safe for concurrent read-only inference.
class FrozenAutoencoder {
 public:
  FrozenAutoencoder(ToyAutoencoder model, LatentStats stats);

  torch::Tensor encode(const torch::Tensor& x_chw_or_nchw) const;   // no grad
  torch::Tensor decode(const torch::Tensor& z) const;               // grad-capable
  torch::Tensor normalize(const torch::Tensor& z) const;
  torch::Tensor denormalize(const torch::Tensor& z) const;

  const LatentStats& stats() const { return stats_; }
  const AutoencoderConfig& config() const { return model_->config(); }
  ToyAutoencoder module() const { return model_; }

 private:
  mutable ToyAutoencoder model_;
  LatentStats stats_;
};

struct AutoencoderTrainOptions {
  int steps = 6000;
  int batch_size = 32;
  double lr = 1.5e-3;
  double lr_final = 5e-5;  // cosine-annealed towards this; equal to lr = constant
  int image_size = 48;
  std::uint64_t data_seed = 100;
  int dataset_size = 2048;
  int log_every = 200;
  double perceptual_weight = 0.1;
};

struct TrainLogEntry {
  int step;
  double loss;
  double psnr;
};

struct TrainedAutoencoder {
  ToyAutoencoder model{nullptr};
  LatentStats stats;
  std::vector<TrainLogEntry> log;
};

// Trains and freezes; aborts with a diagnostic if the loss goes non-finite.
TrainedAutoencoder train_autoencoder(const AutoencoderConfig& config,
                                     const AutoencoderTrainOptions& opts);

void save_autoencoder(const TrainedAutoencoder& trained, const std::string& path);
FrozenAutoencoder load_autoencoder(const std::string& path);

}  // namespace pelc
