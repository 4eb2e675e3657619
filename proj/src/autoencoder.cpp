#include "pelc/autoencoder.hpp"

#include <cmath>
#include <stdexcept>

#include "pelc/checkpoint.hpp"
#include "pelc/common.hpp"
#include "pelc/image.hpp"
#include "pelc/metrics.hpp"

namespace F = torch::nn::functional;

namespace pelc {

namespace {

int num_groups(int channels) { return channels % 8 == 0 ? 8 : (channels % 4 == 0 ? 4 : 1); }

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

ResBlockImpl::ResBlockImpl(int channels) {
  n1_ = register_module("n1", torch::nn::GroupNorm(
                                  torch::nn::GroupNormOptions(num_groups(channels), channels)));
  n2_ = register_module("n2", torch::nn::GroupNorm(
                                  torch::nn::GroupNormOptions(num_groups(channels), channels)));
  c1_ = register_module("c1", torch::nn::Conv2d(
                                  torch::nn::Conv2dOptions(channels, channels, 3).padding(1)));
  c2_ = register_module("c2", torch::nn::Conv2d(
                                  torch::nn::Conv2dOptions(channels, channels, 3).padding(1)));
}

torch::Tensor ResBlockImpl::forward(torch::Tensor x) {
  auto h = c1_(torch::silu(n1_(x)));
  h = c2_(torch::silu(n2_(h)));
  return x + h;
}

AttnBlockImpl::AttnBlockImpl(int channels) {
  norm_ = register_module("norm", torch::nn::GroupNorm(
                                      torch::nn::GroupNormOptions(num_groups(channels), channels)));
  auto opt1 = torch::nn::Conv2dOptions(channels, channels, 1);
  q_ = register_module("q", torch::nn::Conv2d(opt1));
  k_ = register_module("k", torch::nn::Conv2d(opt1));
  v_ = register_module("v", torch::nn::Conv2d(opt1));
  proj_ = register_module("proj", torch::nn::Conv2d(opt1));
}

torch::Tensor AttnBlockImpl::forward(torch::Tensor x) {
  auto h = norm_(x);
  const auto n = x.size(0), c = x.size(1), hh = x.size(2), ww = x.size(3);
  auto q = q_(h).view({n, c, hh * ww}).transpose(1, 2);  // [N, HW, C]
  auto k = k_(h).view({n, c, hh * ww});                  // [N, C, HW]
  auto v = v_(h).view({n, c, hh * ww}).transpose(1, 2);
  auto attn = torch::softmax(torch::bmm(q, k) / std::sqrt(double(c)), -1);
  auto out = torch::bmm(attn, v).transpose(1, 2).reshape({n, c, hh, ww});
  return x + proj_(out);
}

ToyAutoencoderImpl::ToyAutoencoderImpl(const AutoencoderConfig& config) : config_(config) {
  if (!is_power_of_two(config.factor))
    throw std::invalid_argument("autoencoder factor must be a power of two");
  if (config.identity()) return;  // linear pass-through, no parameters

  int stages = int(std::round(std::log2(double(config.factor))));
  int w = config.base_width;
  enc_in_ = register_module(
      "enc_in", torch::nn::Conv2d(
                    torch::nn::Conv2dOptions(config.image_channels, w, 3).padding(1)));
  enc_ = register_module("enc", torch::nn::ModuleList());
  std::vector<int> widths{w};
  for (int s = 0; s < stages; ++s) {
    int w2 = std::min(2 * w, 4 * config.base_width);
    enc_->push_back(ResBlock(w));
    enc_->push_back(torch::nn::Conv2d(
        torch::nn::Conv2dOptions(w, w2, 3).stride(2).padding(1)));
    w = w2;
    widths.push_back(w);
  }
  enc_->push_back(ResBlock(w));
  if (config.attention_midblock) enc_->push_back(AttnBlock(w));
  int out_ch = config.variational ? 2 * config.latent_channels : config.latent_channels;
  enc_out_ = register_module(
      "enc_out", torch::nn::Conv2d(torch::nn::Conv2dOptions(w, out_ch, 3).padding(1)));

  dec_in_ = register_module(
      "dec_in", torch::nn::Conv2d(
                    torch::nn::Conv2dOptions(config.latent_channels, w, 3).padding(1)));
  dec_ = register_module("dec", torch::nn::ModuleList());
  dec_->push_back(ResBlock(w));
  if (config.attention_midblock) dec_->push_back(AttnBlock(w));
  for (int s = stages - 1; s >= 0; --s) {
    int w2 = widths[std::size_t(s)];
    dec_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(w, w2, 3).padding(1)));
    dec_->push_back(ResBlock(w2));
    w = w2;
  }
  dec_out_ = register_module(
      "dec_out", torch::nn::Conv2d(
                     torch::nn::Conv2dOptions(w, config.image_channels, 3).padding(1)));
}

std::pair<torch::Tensor, torch::Tensor> ToyAutoencoderImpl::encode_moments(torch::Tensor x) {
  if (config_.identity()) return {x, torch::zeros_like(x)};
  auto h = enc_in_(x);
  for (auto& m : *enc_) {
    if (auto* r = m->as<ResBlockImpl>()) h = r->forward(h);
    else if (auto* a = m->as<AttnBlockImpl>()) h = a->forward(h);
    else h = m->as<torch::nn::Conv2dImpl>()->forward(torch::silu(h));
  }
  auto out = enc_out_(torch::silu(h));
  if (!config_.variational) return {out, torch::zeros_like(out)};
  auto chunks = out.chunk(2, 1);
  return {chunks[0], chunks[1]};
}

torch::Tensor ToyAutoencoderImpl::encode(torch::Tensor x) {
  auto [mu, logvar] = encode_moments(x);
  if (config_.variational && is_training()) {
    return mu + torch::randn_like(mu) * torch::exp(0.5 * logvar);
  }
  return mu;
}

torch::Tensor ToyAutoencoderImpl::decode(torch::Tensor z) {
  if (config_.identity()) return z;
  auto h = dec_in_(z);
  for (auto& m : *dec_) {
    if (auto* r = m->as<ResBlockImpl>()) h = r->forward(h);
    else if (auto* a = m->as<AttnBlockImpl>()) h = a->forward(h);
    else {
      h = F::interpolate(h, F::InterpolateFuncOptions()
                                .scale_factor(std::vector<double>{2.0, 2.0})
                                .mode(torch::kNearest));
      h = m->as<torch::nn::Conv2dImpl>()->forward(h);
    }
  }
  return torch::sigmoid(dec_out_(torch::silu(h)));
}

ToyAutoencoder build_autoencoder(const AutoencoderConfig& config) {
  torch::manual_seed(config.seed);
  return ToyAutoencoder(config);
}

FrozenAutoencoder::FrozenAutoencoder(ToyAutoencoder model, LatentStats stats)
    : model_(model), stats_(std::move(stats)) {
  model_->eval();
  for (auto& p : model_->parameters()) p.set_requires_grad(false);
}

torch::Tensor FrozenAutoencoder::encode(const torch::Tensor& x) const {
  torch::NoGradGuard ng;
  bool single = x.dim() == 3;
  auto batch = single ? x.unsqueeze(0) : x;
  auto z = model_->encode(batch);
  return single ? z.squeeze(0) : z;
}

torch::Tensor FrozenAutoencoder::decode(const torch::Tensor& z) const {
  bool single = z.dim() == 3;
  auto batch = single ? z.unsqueeze(0) : z;
  auto x = model_->decode(batch);
  return single ? x.squeeze(0) : x;
}

torch::Tensor FrozenAutoencoder::normalize(const torch::Tensor& z) const {
  auto view = z.dim() == 4 ? std::vector<std::int64_t>{1, -1, 1, 1}
                           : std::vector<std::int64_t>{-1, 1, 1};
  return (z - stats_.mean.view(view)) / stats_.std.view(view);
}

torch::Tensor FrozenAutoencoder::denormalize(const torch::Tensor& z) const {
  auto view = z.dim() == 4 ? std::vector<std::int64_t>{1, -1, 1, 1}
                           : std::vector<std::int64_t>{-1, 1, 1};
  return z * stats_.std.view(view) + stats_.mean.view(view);
}

namespace {

LatentStats compute_latent_stats(ToyAutoencoder model, const AutoencoderTrainOptions& opts) {
  torch::NoGradGuard ng;
  model->eval();
  const int c = model->config().latent_channels;
  std::vector<torch::Tensor> zs;
  int n = std::min(opts.dataset_size, 256);
  for (int i = 0; i < n; i += 32) {
    std::vector<torch::Tensor> batch;
    for (int j = i; j < std::min(i + 32, n); ++j)
      batch.push_back(generate_image(opts.data_seed + std::uint64_t(j), opts.image_size,
                                     opts.image_size, model->config().image_channels));
    zs.push_back(model->encode(torch::stack(batch)));
  }
  auto z = torch::cat(zs).transpose(0, 1).reshape({c, -1});
  LatentStats stats;
  stats.mean = z.mean(1);
  stats.std = z.std(1) + 1e-6;
  stats.min = std::get<0>(z.min(1));
  stats.max = std::get<0>(z.max(1));
  return stats;
}

}  // namespace

TrainedAutoencoder train_autoencoder(const AutoencoderConfig& config,
                                     const AutoencoderTrainOptions& opts) {
  torch::manual_seed(config.seed);
  auto model = ToyAutoencoder(config);
  TrainedAutoencoder trained;
  trained.model = model;

  if (config.identity() || opts.steps == 0) {
    trained.stats = compute_latent_stats(model, opts);
    return trained;
  }

  PerceptualSurrogate perceptual(config.image_channels);
  torch::optim::Adam optim(model->parameters(), torch::optim::AdamOptions(opts.lr));
  auto data_gen = make_generator(opts.data_seed * 7919 + 17);

  // fixed validation batch for the training curve
  std::vector<torch::Tensor> val;
  for (int i = 0; i < 16; ++i)
    val.push_back(generate_image(opts.data_seed + 1000000 + std::uint64_t(i),
                                 opts.image_size, opts.image_size, config.image_channels));
  auto val_batch = torch::stack(val);

  model->train();
  for (int step = 0; step < opts.steps; ++step) {
    if (opts.lr_final != opts.lr && opts.steps > 1) {
      double frac = double(step) / double(opts.steps - 1);
      double lr_t = opts.lr_final +
                    0.5 * (opts.lr - opts.lr_final) * (1.0 + std::cos(M_PI * frac));
      for (auto& group : optim.param_groups())
        static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr_t);
    }
    std::vector<torch::Tensor> batch;
    for (int b = 0; b < opts.batch_size; ++b) {
      auto idx = at::randint(opts.dataset_size, {1}, data_gen,
                             at::TensorOptions().dtype(at::kLong))
                     .item<std::int64_t>();
      batch.push_back(generate_image(opts.data_seed + std::uint64_t(idx), opts.image_size,
                                     opts.image_size, config.image_channels));
    }
    auto x = torch::stack(batch);
    auto [mu, logvar] = model->encode_moments(x);
    auto z = config.variational
                 ? mu + torch::randn_like(mu) * torch::exp(0.5 * logvar)
                 : mu;
    auto recon = model->decode(z);
    auto loss = (recon - x).pow(2).mean() +
                opts.perceptual_weight * perceptual.batched(recon, x).mean();
    if (config.variational) {
      auto kl = 0.5 * (mu.pow(2) + logvar.exp() - 1.0 - logvar).mean();
      loss = loss + config.kl_weight * kl;
    }
    if (!std::isfinite(loss.item<double>()))
      throw std::runtime_error("train_autoencoder: loss diverged (non-finite) at step " +
                               std::to_string(step));
    optim.zero_grad();
    loss.backward();
    optim.step();

    if (step % opts.log_every == 0 || step + 1 == opts.steps) {
      torch::NoGradGuard ng;
      model->eval();
      auto recon_val = model->decode(model->encode(val_batch));
      double p = psnr(recon_val, val_batch);
      trained.log.push_back({step, loss.item<double>(), p});
      model->train();
    }
  }
  model->eval();
  trained.stats = compute_latent_stats(model, opts);
  return trained;
}

void save_autoencoder(const TrainedAutoencoder& trained, const std::string& path) {
  const auto& cfg = trained.model->config();
  Checkpoint ckpt;
  ckpt.meta["kind"] = "autoencoder";
  ckpt.meta["config"] = {
      {"factor", cfg.factor},
      {"latent_channels", cfg.latent_channels},
      {"image_channels", cfg.image_channels},
      {"base_width", cfg.base_width},
      {"attention_midblock", cfg.attention_midblock},
      {"variational", cfg.variational},
      {"kl_weight", cfg.kl_weight},
      {"seed", cfg.seed},
  };
  ckpt.tensors = snapshot_module(*trained.model);
  ckpt.tensors.emplace_back("stats/mean", trained.stats.mean);
  ckpt.tensors.emplace_back("stats/std", trained.stats.std);
  ckpt.tensors.emplace_back("stats/min", trained.stats.min);
  ckpt.tensors.emplace_back("stats/max", trained.stats.max);
  save_checkpoint(ckpt, path);
}

FrozenAutoencoder load_autoencoder(const std::string& path) {
  auto ckpt = load_checkpoint(path);
  if (ckpt.meta.value("kind", "") != "autoencoder")
    throw std::runtime_error("not an autoencoder checkpoint: " + path);
  const auto& c = ckpt.meta.at("config");
  AutoencoderConfig cfg;
  cfg.factor = c.at("factor");
  cfg.latent_channels = c.at("latent_channels");
  cfg.image_channels = c.at("image_channels");
  cfg.base_width = c.at("base_width");
  cfg.attention_midblock = c.at("attention_midblock");
  cfg.variational = c.at("variational");
  cfg.kl_weight = c.at("kl_weight");
  cfg.seed = c.at("seed");
  auto model = ToyAutoencoder(cfg);
  LatentStats stats;
  std::vector<std::pair<std::string, torch::Tensor>> module_tensors;
  for (auto& [name, t] : ckpt.tensors) {
    if (name == "stats/mean") stats.mean = t;
    else if (name == "stats/std") stats.std = t;
    else if (name == "stats/min") stats.min = t;
    else if (name == "stats/max") stats.max = t;
    else module_tensors.emplace_back(name, t);
  }
  restore_module(*model, module_tensors);
  return FrozenAutoencoder(model, stats);
}

}  // namespace pelc
