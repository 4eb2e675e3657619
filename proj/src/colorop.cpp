#include "pelc/colorop.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "pelc/checkpoint.hpp"
#include "pelc/common.hpp"
#include "pelc/image.hpp"
#include "pelc/metrics.hpp"

namespace pelc {

torch::Tensor ColorParams::conditioning() const {
  if (gamma <= 0 || contrast <= 0)
    throw std::invalid_argument("ColorParams: gamma and contrast must be positive");
  return torch::tensor({float(std::log(gamma)), float(std::log(contrast)), float(brightness)});
}

torch::Tensor apply_color_pixels(const torch::Tensor& x_chw, const ColorParams& p) {
  if (p.gamma <= 0) throw std::invalid_argument("apply_color_pixels: gamma must be positive");
  auto y = (x_chw.clamp(0.0, 1.0).pow(1.0 / p.gamma) - 0.5) * p.contrast + 0.5 + p.brightness;
  return y.clamp(0.0, 1.0);
}

torch::Tensor apply_color_latents_naive(const torch::Tensor& z_chw, const ColorParams& p,
                                        const LatentStats& stats) {
  auto view = std::vector<std::int64_t>{-1, 1, 1};
  auto lo = stats.min.view(view);
  auto hi = stats.max.view(view);
  auto range = (hi - lo).clamp_min(1e-6);
  auto zn = ((z_chw - lo) / range).clamp(0.0, 1.0);
  auto yn = (zn.pow(1.0 / p.gamma) - 0.5) * p.contrast + 0.5 + p.brightness;
  return yn.clamp(0.0, 1.0) * range + lo;
}

ColorOperatorImpl::ColorOperatorImpl(const ColorOpConfig& config) : cfg_(config) {
  conv_in_ = register_module(
      "conv_in", torch::nn::Conv2d(
                     torch::nn::Conv2dOptions(config.latent_channels, config.width, 3)
                         .padding(1)));
  conv_out_ = register_module(
      "conv_out", torch::nn::Conv2d(
                      torch::nn::Conv2dOptions(config.width, config.latent_channels, 3)
                          .padding(1)));
  cond_mlp_ = register_module(
      "cond_mlp", torch::nn::Sequential(torch::nn::Linear(3, config.cond_dim),
                                        torch::nn::SiLU(),
                                        torch::nn::Linear(config.cond_dim, config.cond_dim)));
  for (int b = 0; b < config.blocks; ++b) {
    convs_.push_back(register_module(
        "conv" + std::to_string(b),
        torch::nn::Conv2d(torch::nn::Conv2dOptions(config.width, config.width, 3).padding(1))));
    films_.push_back(register_module("film" + std::to_string(b),
                                     torch::nn::Linear(config.cond_dim, 2 * config.width)));
  }
}

torch::Tensor ColorOperatorImpl::forward(torch::Tensor z, torch::Tensor cond_n3) {
  auto c = cond_mlp_->forward(cond_n3);
  auto h = conv_in_(z);
  for (std::size_t b = 0; b < convs_.size(); ++b) {
    auto sb = films_[b](c).unsqueeze(-1).unsqueeze(-1);
    auto chunks = sb.chunk(2, 1);
    h = h + convs_[b](torch::silu(h * (1.0 + chunks[0]) + chunks[1]));
  }
  return z + conv_out_(torch::silu(h));
}

ColorOperator build_color_operator(const ColorOpConfig& config) {
  torch::manual_seed(config.seed);
  return ColorOperator(config);
}

ColorParams sample_color_params(at::Generator& gen) {
  auto u = at::rand({3}, gen, at::TensorOptions().dtype(torch::kFloat32));
  ColorParams p;
  p.gamma = std::exp((u[0].item<double>() * 2.0 - 1.0) * std::log(3.0));
  p.contrast = std::exp((u[1].item<double>() * 2.0 - 1.0) * std::log(2.0));
  p.brightness = (u[2].item<double>() * 2.0 - 1.0) * 0.2;
  return p;
}

TrainedColorOp train_color_operator(const ColorOpConfig& config, const ColorTrainOptions& opts,
                                    const FrozenAutoencoder& ae) {
  auto model = build_color_operator(config);
  TrainedColorOp trained;
  trained.model = model;
  if (opts.steps == 0) {
    model->eval();
    return trained;
  }
  PerceptualSurrogate perceptual(ae.config().image_channels);
  torch::optim::Adam optim(model->parameters(), torch::optim::AdamOptions(opts.lr));
  auto gen = make_generator(opts.data_seed ^ 0xc0704ull);
  model->train();
  for (int step = 0; step < opts.steps; ++step) {
    std::vector<torch::Tensor> xs, xts, conds;
    for (int b = 0; b < opts.batch; ++b) {
      auto idx = at::randint(opts.dataset_size, {1}, gen,
                             at::TensorOptions().dtype(at::kLong))
                     .item<std::int64_t>();
      auto x = generate_image(opts.data_seed + std::uint64_t(idx), opts.image_size,
                              opts.image_size);
      auto p = sample_color_params(gen);
      xs.push_back(x);
      xts.push_back(apply_color_pixels(x, p));
      conds.push_back(p.conditioning());
    }
    auto z = ae.encode(torch::stack(xs));
    auto z_t = ae.encode(torch::stack(xts));
    auto cond = torch::stack(conds);
    auto zhat = model->forward(z, cond);
    auto y = ae.decode(zhat);
    torch::Tensor y_t;
    {
      torch::NoGradGuard ng;
      y_t = ae.decode(z_t);
    }
    auto loss = (zhat - z_t).pow(2).mean() +
                opts.perceptual_weight * perceptual.batched(y, y_t).mean();
    if (!std::isfinite(loss.item<double>()))
      throw std::runtime_error("train_color_operator: non-finite loss at step " +
                               std::to_string(step));
    optim.zero_grad();
    loss.backward();
    optim.step();
    if (step % opts.log_every == 0 || step + 1 == opts.steps)
      trained.log.push_back({step, loss.item<double>(), 0.0});
  }
  model->eval();
  return trained;
}

void save_color_operator(const TrainedColorOp& trained, const std::string& path) {
  const auto& cfg = trained.model->config();
  Checkpoint ckpt;
  ckpt.meta["kind"] = "colorop";
  ckpt.meta["config"] = {{"latent_channels", cfg.latent_channels},
                         {"width", cfg.width},
                         {"blocks", cfg.blocks},
                         {"cond_dim", cfg.cond_dim},
                         {"seed", cfg.seed}};
  ckpt.tensors = snapshot_module(*trained.model);
  save_checkpoint(ckpt, path);
}

ColorOperator load_color_operator(const std::string& path) {
  auto ckpt = load_checkpoint(path);
  if (ckpt.meta.value("kind", "") != "colorop")
    throw std::runtime_error("not a colorop checkpoint: " + path);
  const auto& c = ckpt.meta.at("config");
  ColorOpConfig cfg;
  cfg.latent_channels = c.at("latent_channels");
  cfg.width = c.at("width");
  cfg.blocks = c.at("blocks");
  cfg.cond_dim = c.at("cond_dim");
  cfg.seed = c.at("seed");
  auto model = build_color_operator(cfg);
  restore_module(*model, ckpt.tensors);
  model->eval();
  return model;
}

namespace {

void bootstrap_ci(std::vector<double> xs, double& mean, double& lo, double& hi,
                  std::uint64_t seed) {
  mean = 0;
  for (double x : xs) mean += x;
  mean /= double(xs.size());
  auto gen = make_generator(seed ^ 0xc1c1ull);
  const auto n = std::int64_t(xs.size());
  std::vector<double> means(1000, 0.0);
  for (int r = 0; r < 1000; ++r) {
    auto idx = at::randint(n, {n}, gen, at::TensorOptions().dtype(at::kLong));
    double m = 0;
    auto* ip = idx.data_ptr<std::int64_t>();
    for (std::int64_t k = 0; k < n; ++k) m += xs[std::size_t(ip[k])];
    means[std::size_t(r)] = m / double(n);
  }
  std::sort(means.begin(), means.end());
  lo = means[24];
  hi = means[974];
}

}  // namespace

std::vector<ColorEvalRow> evaluate_color(ColorOperator model, const FrozenAutoencoder& ae,
                                         const ColorEvalOptions& opts) {
  if (opts.num_images <= 0) throw std::invalid_argument("evaluate_color: empty set");
  torch::NoGradGuard ng;
  model->eval();
  PerceptualSurrogate perceptual(ae.config().image_channels);
  auto gen = make_generator(opts.seed ^ 0xc01044ull);
  std::vector<double> m_psnr, m_ssim, m_perc, n_psnr, n_ssim, n_perc;
  for (int i = 0; i < opts.num_images; ++i) {
    auto x = generate_image(opts.seed + std::uint64_t(i), opts.image_size, opts.image_size);
    auto p = sample_color_params(gen);
    auto x_t = apply_color_pixels(x, p);
    auto z = ae.encode(x);
    auto z_t = ae.encode(x_t);
    auto y_ref = ae.decode(z_t);

    auto y_model = ae.decode(model->forward(z.unsqueeze(0), p.conditioning().unsqueeze(0))
                                 .squeeze(0));
    auto y_naive = ae.decode(apply_color_latents_naive(z, p, ae.stats()));
    m_psnr.push_back(psnr(y_model, y_ref));
    m_ssim.push_back(ssim(y_model, y_ref));
    m_perc.push_back(perceptual(y_model, y_ref).item<double>());
    n_psnr.push_back(psnr(y_naive, y_ref));
    n_ssim.push_back(ssim(y_naive, y_ref));
    n_perc.push_back(perceptual(y_naive, y_ref).item<double>());
  }
  std::vector<ColorEvalRow> rows(2);
  rows[0].method = "model";
  rows[1].method = "naive";
  rows[0].n = rows[1].n = opts.num_images;
  bootstrap_ci(m_psnr, rows[0].psnr_db, rows[0].psnr_lo, rows[0].psnr_hi, opts.seed);
  bootstrap_ci(m_ssim, rows[0].ssim, rows[0].ssim_lo, rows[0].ssim_hi, opts.seed + 1);
  bootstrap_ci(m_perc, rows[0].perceptual, rows[0].perceptual_lo, rows[0].perceptual_hi,
               opts.seed + 2);
  bootstrap_ci(n_psnr, rows[1].psnr_db, rows[1].psnr_lo, rows[1].psnr_hi, opts.seed + 3);
  bootstrap_ci(n_ssim, rows[1].ssim, rows[1].ssim_lo, rows[1].ssim_hi, opts.seed + 4);
  bootstrap_ci(n_perc, rows[1].perceptual, rows[1].perceptual_lo, rows[1].perceptual_hi,
               opts.seed + 5);
  return rows;
}

std::string color_to_csv(const std::vector<ColorEvalRow>& rows) {
  std::ostringstream out;
  out << "method,psnr_db,psnr_lo,psnr_hi,ssim,ssim_lo,ssim_hi,perceptual,perceptual_lo,"
         "perceptual_hi,n\n";
  for (const auto& r : rows)
    out << r.method << "," << format_double(r.psnr_db) << "," << format_double(r.psnr_lo)
        << "," << format_double(r.psnr_hi) << "," << format_double(r.ssim) << ","
        << format_double(r.ssim_lo) << "," << format_double(r.ssim_hi) << ","
        << format_double(r.perceptual) << "," << format_double(r.perceptual_lo) << ","
        << format_double(r.perceptual_hi) << "," << r.n << "\n";
  return out.str();
}

}  // namespace pelc
