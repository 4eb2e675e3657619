#include "pelc/decformer.hpp"

#include <cmath>
#include <deque>
#include <sstream>
#include <stdexcept>

#include "pelc/checkpoint.hpp"
#include "pelc/common.hpp"
#include "pelc/image.hpp"

namespace F = torch::nn::functional;

namespace pelc {

namespace {

// sin/cos positional features at dyadic frequencies, [N,16,H,W]
torch::Tensor fourier_features(std::int64_t n, std::int64_t h, std::int64_t w) {
  auto yy = torch::linspace(-1.0, 1.0, h).view({1, 1, h, 1}).expand({1, 1, h, w});
  auto xx = torch::linspace(-1.0, 1.0, w).view({1, 1, 1, w}).expand({1, 1, h, w});
  std::vector<torch::Tensor> feats;
  for (double f : {1.0, 2.0, 4.0, 8.0}) {
    for (const auto& c : {yy, xx}) {
      feats.push_back(torch::sin(M_PI * f * c));
      feats.push_back(torch::cos(M_PI * f * c));
    }
  }
  return torch::cat(feats, 1).expand({n, -1, -1, -1}).to(torch::kFloat32);
}

torch::Tensor glu(const torch::Tensor& value, const torch::Tensor& gate) {
  return value * torch::sigmoid(gate);
}

}  // namespace

MaskPriorNetImpl::MaskPriorNetImpl(const DecformerConfig& config) : cfg_(config) {
  int stages = int(std::round(std::log2(double(config.factor))));
  torch::nn::Sequential trunk;
  int in_ch = 1 + 16;
  int w = 32;
  for (int s = 0; s < stages; ++s) {
    trunk->push_back(torch::nn::Conv2d(
        torch::nn::Conv2dOptions(in_ch, w, 3).stride(2).padding(1)));
    trunk->push_back(torch::nn::SiLU());
    in_ch = w;
    w = std::min(2 * w, 64);
  }
  trunk->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, 64, 3).padding(1)));
  trunk->push_back(torch::nn::SiLU());
  trunk_ = register_module("trunk", trunk);
  auto head1 = torch::nn::Conv2dOptions(64, config.latent_channels, 1);
  alpha_head_ = register_module("alpha_head", torch::nn::Conv2d(head1));
  alpha_gate_ = register_module("alpha_gate", torch::nn::Conv2d(head1));
  auto head2 = torch::nn::Conv2dOptions(64, config.token_dim, 1);
  token_head_ = register_module("token_head", torch::nn::Conv2d(head2));
  token_gate_ = register_module("token_gate", torch::nn::Conv2d(head2));
}

MaskPrior MaskPriorNetImpl::forward(torch::Tensor mask_n1hw) {
  auto n = mask_n1hw.size(0), h = mask_n1hw.size(2), w = mask_n1hw.size(3);
  auto x = torch::cat({mask_n1hw, fourier_features(n, h, w)}, 1);
  auto feats = trunk_->forward(x);
  MaskPrior prior;
  prior.alpha0 = torch::sigmoid(glu(alpha_head_(feats), alpha_gate_(feats)));
  auto tok = glu(token_head_(feats), token_gate_(feats));  // [N,d,hl,wl]
  prior.tokens = tok.flatten(2).transpose(1, 2);           // [N,hl*wl,d]
  return prior;
}

DecformerBlockImpl::DecformerBlockImpl(const DecformerConfig& config, int patch,
                                       int feature_channels, bool cross_attention)
    : patch_(patch), cross_(cross_attention) {
  const int w = config.width;
  proj_in_ = register_module(
      "proj_in", torch::nn::Conv2d(
                     torch::nn::Conv2dOptions(feature_channels * patch * patch, w, 1)));
  film_ = register_module(
      "film", torch::nn::Sequential(
                  torch::nn::Conv2d(torch::nn::Conv2dOptions(2, config.film_hidden, 3).padding(1)),
                  torch::nn::SiLU(),
                  torch::nn::Conv2d(
                      torch::nn::Conv2dOptions(config.film_hidden, 2 * w, 3).padding(1))));
  ln1_ = register_module("ln1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({w})));
  ln3_ = register_module("ln3", torch::nn::LayerNorm(torch::nn::LayerNormOptions({w})));
  self_attn_ = register_module(
      "self_attn", torch::nn::MultiheadAttention(torch::nn::MultiheadAttentionOptions(w, 4)));
  if (cross_) {
    ln2_ = register_module("ln2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({w})));
    cross_attn_ = register_module(
        "cross_attn", torch::nn::MultiheadAttention(torch::nn::MultiheadAttentionOptions(w, 4)));
    token_proj_ = register_module("token_proj", torch::nn::Linear(config.token_dim, w));
  }
  mlp_ = register_module("mlp", torch::nn::Sequential(torch::nn::Linear(w, 2 * w),
                                                      torch::nn::GELU(),
                                                      torch::nn::Linear(2 * w, w)));
  proj_out_ = register_module(
      "proj_out", torch::nn::Conv2d(
                      torch::nn::Conv2dOptions(w, config.trunk_out * patch * patch, 1)));
  local_ = register_module(
      "local", torch::nn::Conv2d(
                   torch::nn::Conv2dOptions(config.trunk_out, config.trunk_out, 3).padding(1)));
}

torch::Tensor DecformerBlockImpl::forward(torch::Tensor features, torch::Tensor cond,
                                          torch::Tensor tokens) {
  const auto h = features.size(2), w = features.size(3);
  if (h % patch_ != 0 || w % patch_ != 0)
    throw std::invalid_argument("decformer block: patch size does not divide latent dims");
  auto x = proj_in_(torch::pixel_unshuffle(features, patch_));
  auto film = film_->forward(F::avg_pool2d(cond, F::AvgPool2dFuncOptions(patch_)));
  auto chunks = film.chunk(2, 1);
  x = x * (1.0 + chunks[0]) + chunks[1];

  const auto n = x.size(0), c = x.size(1), hp = x.size(2), wp = x.size(3);
  auto seq = x.flatten(2).permute({2, 0, 1});  // [L, N, E]
  auto q = ln1_(seq);
  seq = seq + std::get<0>(self_attn_(q, q, q));
  if (cross_) {
    auto kv = token_proj_(tokens).transpose(0, 1);  // [T, N, E]
    seq = seq + std::get<0>(cross_attn_(ln2_(seq), kv, kv));
  }
  seq = seq + mlp_->forward(ln3_(seq));
  x = seq.permute({1, 2, 0}).reshape({n, c, hp, wp});
  auto u = torch::pixel_shuffle(proj_out_(x), patch_);
  return u + local_(torch::silu(u));
}

DecformerCompositorImpl::DecformerCompositorImpl(const DecformerConfig& config)
    : cfg_(config) {
  if (config.patch_sizes.empty() || config.patch_sizes.back() != 1)
    throw std::invalid_argument("decformer: last patch size must be 1");
  prior_ = register_module("prior", MaskPriorNet(config));
  const int C = config.latent_channels;
  const int feature_channels = 7 * C + 2;
  for (std::size_t i = 0; i < config.patch_sizes.size(); ++i) {
    int p = config.patch_sizes[i];
    bool cross = p == 1;
    auto block = DecformerBlock(config, p, feature_channels, cross);
    blocks_.push_back(register_module("block" + std::to_string(i), block));
    auto head = torch::nn::Conv2dOptions(config.trunk_out, C, 3).padding(1);
    alpha_heads_.push_back(
        register_module("alpha_head" + std::to_string(i), torch::nn::Conv2d(head)));
    shift_heads_.push_back(
        register_module("shift_head" + std::to_string(i), torch::nn::Conv2d(head)));
  }
  // heads start as small perturbations around the prior
  torch::NoGradGuard ng;
  for (auto& hd : alpha_heads_) {
    hd->weight.mul_(0.1);
    hd->bias.zero_();
  }
  for (auto& hd : shift_heads_) {
    hd->weight.mul_(0.1);
    hd->bias.zero_();
  }
}

BlendField DecformerCompositorImpl::forward(torch::Tensor z_a, torch::Tensor z_b,
                                            torch::Tensor mask_n1hw,
                                            torch::Tensor halo_latent_n1hw,
                                            double shift_gate) {
  if (z_a.sizes() != z_b.sizes())
    throw std::invalid_argument("decformer: latent shape mismatch");
  auto m_lat = F::avg_pool2d(mask_n1hw, F::AvgPool2dFuncOptions(cfg_.factor));
  auto prior = prior_->forward(mask_n1hw);
  auto cond = torch::cat({halo_latent_n1hw, m_lat}, 1);

  torch::Tensor logits, alpha;
  if (cfg_.constrain_alpha) {
    logits = torch::logit(prior.alpha0.clamp(1e-4, 1.0 - 1e-4));
    alpha = torch::sigmoid(logits);
  } else {
    logits = prior.alpha0.clone();
    alpha = logits;
  }
  auto s = torch::zeros_like(z_a);
  const bool use_shift = cfg_.shift_head && shift_gate > 0.0;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    auto zhat = (1.0 - alpha) * z_a + alpha * z_b + s;
    auto feats = torch::cat({z_a, z_b, alpha, s, (zhat - z_a).abs(), (zhat - z_b).abs(),
                             prior.alpha0, m_lat, halo_latent_n1hw},
                            1);
    auto u = blocks_[i]->forward(feats, cond, prior.tokens);
    logits = logits + alpha_heads_[i](u);
    alpha = cfg_.constrain_alpha ? torch::sigmoid(logits) : logits;
    if (use_shift) s = s + shift_gate * shift_heads_[i](u);
  }
  return {alpha, s};
}

std::vector<torch::Tensor> DecformerCompositorImpl::shift_parameters() {
  std::vector<torch::Tensor> out;
  for (auto& hd : shift_heads_)
    for (auto& p : hd->parameters()) out.push_back(p);
  return out;
}

std::vector<torch::Tensor> DecformerCompositorImpl::alpha_path_parameters() {
  std::vector<torch::Tensor> out;
  for (auto& p : named_parameters())
    if (p.key().rfind("shift_head", 0) != 0) out.push_back(p.value());
  return out;
}

DecformerCompositor build_decformer(const DecformerConfig& config) {
  torch::manual_seed(config.seed);
  return DecformerCompositor(config);
}

PelcLossParts pelc_loss(const torch::Tensor& zhat, const torch::Tensor& z_t,
                        const torch::Tensor& halo_pixel_nhw, double lambda_e,
                        double lambda_h, const FrozenAutoencoder& ae,
                        const PerceptualSurrogate& perceptual) {
  auto y = ae.decode(zhat);
  torch::Tensor y_t;
  {
    torch::NoGradGuard ng;
    y_t = ae.decode(z_t);
  }
  PelcLossParts parts;
  parts.latent_mse = (zhat - z_t).pow(2).mean();
  parts.perceptual = perceptual.batched(y, y_t).mean();
  auto w = halo_pixel_nhw.unsqueeze(1);
  auto num = (w * (y - y_t).abs()).sum({1, 2, 3});
  auto den = (w.sum({1, 2, 3}) * double(y.size(1))).clamp_min(1e-12);
  parts.halo = (num / den).mean();
  parts.total = lambda_e * parts.latent_mse + parts.perceptual + lambda_h * parts.halo;
  if (!std::isfinite(parts.total.item<double>()))
    throw std::runtime_error("pelc_loss: non-finite loss");
  return parts;
}

std::string to_string(TrainStage s) {
  switch (s) {
    case TrainStage::AlphaOnly: return "alpha_only";
    case TrainStage::ShiftWarmup: return "shift_warmup";
    case TrainStage::Joint: return "joint";
  }
  return "?";
}

namespace {

struct Batch {
  torch::Tensor z_a, z_b, z_t;   // [N,C,h,w]
  torch::Tensor mask;            // [N,1,H,W]
  torch::Tensor halo_latent;     // [N,1,h,w]
  torch::Tensor halo_pixel;      // [N,H,W]
};

Batch make_batch(const FrozenAutoencoder& ae, const DecformerConfig& cfg, int image_size,
                 const std::vector<std::uint64_t>& seeds) {
  std::vector<torch::Tensor> xa, xb, masks, hl, hp, xc;
  for (auto seed : seeds) {
    auto s = make_composite(seed, image_size);
    xa.push_back(s.x_a);
    xb.push_back(s.x_b);
    xc.push_back(compose_pixels(s.x_a, s.x_b, s.mask));
    masks.push_back(s.mask.data.unsqueeze(0));
    auto halo = compute_halo(s.mask, cfg.halo_radius_px, cfg.factor);
    hl.push_back(halo.latent.unsqueeze(0));
    hp.push_back(halo.pixel);
  }
  Batch b;
  b.z_a = ae.encode(torch::stack(xa));
  b.z_b = ae.encode(torch::stack(xb));
  b.z_t = ae.encode(torch::stack(xc));
  b.mask = torch::stack(masks);
  b.halo_latent = torch::stack(hl);
  b.halo_pixel = torch::stack(hp);
  return b;
}

}  // namespace

TrainedDecformer train_decformer(const DecformerConfig& config,
                                 const DecformerTrainOptions& opts,
                                 const FrozenAutoencoder& ae) {
  auto model = build_decformer(config);
  PerceptualSurrogate perceptual(ae.config().image_channels);
  TrainedDecformer trained;
  trained.model = model;

  auto shift_params = model->shift_parameters();
  auto alpha_params = model->alpha_path_parameters();
  torch::optim::AdamW optim(
      {torch::optim::OptimizerParamGroup(alpha_params),
       torch::optim::OptimizerParamGroup(shift_params)},
      torch::optim::AdamWOptions(opts.lr).weight_decay(opts.weight_decay));

  auto gen = make_generator(opts.data_seed ^ 0xdecf00ull);
  std::vector<std::uint64_t> val_seeds;
  for (int i = 0; i < opts.val_size; ++i)
    val_seeds.push_back(opts.data_seed + 5000000 + std::uint64_t(i));
  auto val_batch = make_batch(ae, config, opts.image_size, val_seeds);

  auto val_perceptual = [&]() {
    torch::NoGradGuard ng;
    model->eval();
    auto field = model->forward(val_batch.z_a, val_batch.z_b, val_batch.mask,
                                val_batch.halo_latent, 1.0);
    auto zhat = (1.0 - field.alpha) * val_batch.z_a + field.alpha * val_batch.z_b + field.shift;
    auto y = ae.decode(zhat);
    auto y_t = ae.decode(val_batch.z_t);
    double v = perceptual.batched(y, y_t).mean().item<double>();
    model->train();
    return v;
  };

  TrainStage stage = TrainStage::AlphaOnly;
  int warmup_start = -1;
  std::deque<double> val_history;

  model->train();
  for (int step = 0; step < opts.max_steps; ++step) {
    // stage transitions (monotone by construction)
    if (stage == TrainStage::AlphaOnly) {
      bool stable = false;
      if (int(val_history.size()) >= opts.val_window) {
        double oldest = val_history.front(), newest = val_history.back();
        stable = oldest > 0 && (oldest - newest) / oldest < opts.val_rel_improvement;
      }
      if ((stable && step > 0) || step >= opts.alpha_stage_cap) {
        stage = TrainStage::ShiftWarmup;
        warmup_start = step;
        val_history.clear();
      }
    }
    if (stage == TrainStage::ShiftWarmup && step - warmup_start >= opts.shift_warmup_steps)
      stage = TrainStage::Joint;

    double ramp = stage == TrainStage::AlphaOnly
                      ? 0.0
                      : (stage == TrainStage::Joint
                             ? 1.0
                             : double(step - warmup_start + 1) / opts.shift_warmup_steps);
    double gate = config.shift_head ? ramp : 0.0;
    double lambda_h = opts.lambda_h * ramp;

    double cos_lr = opts.lr * 0.5 * (1.0 + std::cos(M_PI * double(step) / opts.max_steps));
    double alpha_lr = stage == TrainStage::ShiftWarmup
                          ? cos_lr * opts.alpha_lr_scale_warmup
                          : cos_lr;
    static_cast<torch::optim::AdamWOptions&>(optim.param_groups()[0].options())
        .lr(alpha_lr);
    static_cast<torch::optim::AdamWOptions&>(optim.param_groups()[1].options()).lr(cos_lr);

    std::vector<std::uint64_t> seeds;
    for (int b = 0; b < opts.batch; ++b) {
      auto idx = at::randint(1 << 22, {1}, gen, at::TensorOptions().dtype(at::kLong))
                     .item<std::int64_t>();
      seeds.push_back(opts.data_seed + std::uint64_t(idx));
    }
    auto batch = make_batch(ae, config, opts.image_size, seeds);
    auto field = model->forward(batch.z_a, batch.z_b, batch.mask, batch.halo_latent, gate);
    auto zhat = (1.0 - field.alpha) * batch.z_a + field.alpha * batch.z_b + field.shift;
    auto parts = pelc_loss(zhat, batch.z_t, batch.halo_pixel, opts.lambda_e, lambda_h, ae,
                           perceptual);
    optim.zero_grad();
    parts.total.backward();
    optim.step();

    if (step % opts.val_every == 0) {
      double v = val_perceptual();
      val_history.push_back(v);
      while (int(val_history.size()) > opts.val_window) val_history.pop_front();
      trained.log.push_back({{"step", step},
                             {"stage", to_string(stage)},
                             {"val_perceptual", v}});
    }
    if (step % opts.log_every == 0 || step + 1 == opts.max_steps) {
      trained.log.push_back({{"step", step},
                             {"stage", to_string(stage)},
                             {"total", parts.total.item<double>()},
                             {"latent_mse", parts.latent_mse.item<double>()},
                             {"perceptual", parts.perceptual.item<double>()},
                             {"halo", parts.halo.item<double>()},
                             {"shift_gate", gate},
                             {"lambda_h", lambda_h}});
    }
  }
  model->eval();
  if (!opts.log_path.empty()) {
    std::ostringstream out;
    for (const auto& e : trained.log) out << e.dump() << "\n";
    write_file_atomic(opts.log_path, out.str());
  }
  return trained;
}

void save_decformer(const TrainedDecformer& trained, const std::string& path) {
  const auto& cfg = trained.model->config();
  Checkpoint ckpt;
  ckpt.meta["kind"] = "decformer";
  ckpt.meta["config"] = {{"latent_channels", cfg.latent_channels},
                         {"factor", cfg.factor},
                         {"patch_sizes", cfg.patch_sizes},
                         {"width", cfg.width},
                         {"token_dim", cfg.token_dim},
                         {"film_hidden", cfg.film_hidden},
                         {"trunk_out", cfg.trunk_out},
                         {"shift_head", cfg.shift_head},
                         {"constrain_alpha", cfg.constrain_alpha},
                         {"halo_radius_px", cfg.halo_radius_px},
                         {"seed", cfg.seed}};
  ckpt.tensors = snapshot_module(*trained.model);
  save_checkpoint(ckpt, path);
}

DecformerCompositor load_decformer(const std::string& path) {
  auto ckpt = load_checkpoint(path);
  if (ckpt.meta.value("kind", "") != "decformer")
    throw std::runtime_error("not a decformer checkpoint: " + path);
  const auto& c = ckpt.meta.at("config");
  DecformerConfig cfg;
  cfg.latent_channels = c.at("latent_channels");
  cfg.factor = c.at("factor");
  cfg.patch_sizes = c.at("patch_sizes").get<std::vector<int>>();
  cfg.width = c.at("width");
  cfg.token_dim = c.at("token_dim");
  cfg.film_hidden = c.at("film_hidden");
  cfg.trunk_out = c.at("trunk_out");
  cfg.shift_head = c.at("shift_head");
  cfg.constrain_alpha = c.at("constrain_alpha");
  cfg.halo_radius_px = c.at("halo_radius_px");
  cfg.seed = c.at("seed");
  auto model = build_decformer(cfg);
  restore_module(*model, ckpt.tensors);
  model->eval();
  return model;
}

LatentCompositor make_decformer_compositor(DecformerCompositor model,
                                           const FrozenAutoencoder& ae) {
  model->eval();
  return [model, &ae](const torch::Tensor& z_a, const torch::Tensor& z_b,
                      const torch::Tensor&, const CompositeSample& s) mutable {
    torch::NoGradGuard ng;
    const auto& cfg = model->config();
    auto halo = compute_halo(s.mask, cfg.halo_radius_px, cfg.factor);
    auto field = model->forward(z_a.unsqueeze(0), z_b.unsqueeze(0),
                                s.mask.data.unsqueeze(0).unsqueeze(0),
                                halo.latent.unsqueeze(0).unsqueeze(0), 1.0);
    auto zhat = (1.0 - field.alpha) * z_a.unsqueeze(0) + field.alpha * z_b.unsqueeze(0) +
                field.shift;
    return zhat.squeeze(0);
  };
}

std::vector<AblationRow> ablation_suite(const DecformerConfig& base,
                                        const DecformerTrainOptions& opts,
                                        const FrozenAutoencoder& ae, const EvalSet& eval_set,
                                        const std::vector<std::uint64_t>& seeds) {
  struct Variant {
    std::string name;
    DecformerConfig cfg;
    DecformerTrainOptions opt;
  };
  std::vector<Variant> variants;
  variants.push_back({"baseline", base, opts});
  {
    auto o = opts;
    o.lambda_h = 0.0;
    variants.push_back({"no_halo_loss", base, o});
  }
  {
    auto c = base;
    c.constrain_alpha = false;
    c.shift_head = false;
    variants.push_back({"unconstrained_alpha_no_shift", base, opts});
    variants.back().cfg = c;
  }

  std::vector<AblationRow> rows;
  for (auto& v : variants) {
    std::vector<double> halos, percs, mses;
    for (auto seed : seeds) {
      auto cfg = v.cfg;
      cfg.seed = seed;
      auto o = v.opt;
      o.data_seed = v.opt.data_seed + seed;
      auto trained = train_decformer(cfg, o, ae);
      auto rep = evaluate_equivalence(ae, eval_set, v.name,
                                      make_decformer_compositor(trained.model, ae),
                                      base.halo_radius_px);
      halos.push_back(rep.overall.halo_l1);
      percs.push_back(rep.overall.perceptual);
      mses.push_back(rep.overall.mse);
    }
    auto summarize = [](const std::vector<double>& xs, double& mean, double& lo, double& hi) {
      mean = 0;
      lo = xs[0];
      hi = xs[0];
      for (double x : xs) {
        mean += x;
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
      mean /= double(xs.size());
    };
    AblationRow row;
    row.name = v.name;
    summarize(halos, row.halo_l1_mean, row.halo_l1_lo, row.halo_l1_hi);
    summarize(percs, row.perceptual_mean, row.perceptual_lo, row.perceptual_hi);
    summarize(mses, row.mse_mean, row.mse_lo, row.mse_hi);
    rows.push_back(row);
  }
  return rows;
}

std::string ablation_to_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "ablation,halo_l1,halo_l1_lo,halo_l1_hi,perceptual,perceptual_lo,perceptual_hi,"
         "mse,mse_lo,mse_hi\n";
  for (const auto& r : rows)
    out << r.name << "," << format_double(r.halo_l1_mean) << "," << format_double(r.halo_l1_lo)
        << "," << format_double(r.halo_l1_hi) << "," << format_double(r.perceptual_mean) << ","
        << format_double(r.perceptual_lo) << "," << format_double(r.perceptual_hi) << ","
        << format_double(r.mse_mean) << "," << format_double(r.mse_lo) << ","
        << format_double(r.mse_hi) << "\n";
  return out.str();
}

void internals_visualization(DecformerCompositor model, const FrozenAutoencoder& ae,
                             const CompositeSample& sample, const std::string& out_dir) {
  ensure_dir(out_dir);
  torch::NoGradGuard ng;
  model->eval();
  const auto& cfg = model->config();
  auto z_a = ae.encode(sample.x_a);
  auto z_b = ae.encode(sample.x_b);
  auto z_t = ae.encode(compose_pixels(sample.x_a, sample.x_b, sample.mask));
  auto halo = compute_halo(sample.mask, cfg.halo_radius_px, cfg.factor);
  auto field = model->forward(z_a.unsqueeze(0), z_b.unsqueeze(0),
                              sample.mask.data.unsqueeze(0).unsqueeze(0),
                              halo.latent.unsqueeze(0).unsqueeze(0), 1.0);
  auto oracle = project_alpha_shift(z_a, z_b, z_t);
  auto m_lat = downsample_mask(sample.mask, cfg.factor, DownsampleMethod::Area);

  auto save_map = [&](const torch::Tensor& map_hw, const std::string& name) {
    auto norm = map_hw - map_hw.min();
    auto peak = norm.max().item<double>();
    if (peak > 0) norm = norm / peak;
    auto big = F::interpolate(norm.unsqueeze(0).unsqueeze(0),
                              F::InterpolateFuncOptions()
                                  .scale_factor(std::vector<double>{8.0, 8.0})
                                  .mode(torch::kNearest))
                   .squeeze();
    save_mask_png(big, out_dir + "/" + name + ".png", false);
  };
  save_map(field.alpha.squeeze(0).mean(0), "alpha_pred");
  save_map(field.shift.squeeze(0).abs().mean(0), "shift_pred");
  save_map(oracle.alpha.mean(0), "alpha_oracle");
  save_map(oracle.shift.abs().mean(0), "shift_oracle");
  save_map(m_lat.data, "heuristic_alpha");
}

}  // namespace pelc
