#include "pelc/flow.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "pelc/checkpoint.hpp"
#include "pelc/common.hpp"
#include "pelc/dataset.hpp"
#include "pelc/image.hpp"
#include "pelc/metrics.hpp"

namespace pelc {

namespace {

torch::Tensor time_embedding(torch::Tensor t, int dim) {
  auto half = dim / 2;
  auto freqs = torch::exp(torch::arange(half, torch::kFloat32) *
                          (-std::log(10000.0) / double(half - 1)));
  auto args = t.unsqueeze(1) * freqs.unsqueeze(0);  // [N, half]
  return torch::cat({torch::sin(args), torch::cos(args)}, 1);
}

}  // namespace

FlowResBlockImpl::FlowResBlockImpl(int channels, int time_dim) {
  n1_ = register_module("n1",
                        torch::nn::GroupNorm(torch::nn::GroupNormOptions(8, channels)));
  n2_ = register_module("n2",
                        torch::nn::GroupNorm(torch::nn::GroupNormOptions(8, channels)));
  c1_ = register_module(
      "c1", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 3).padding(1)));
  c2_ = register_module(
      "c2", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 3).padding(1)));
  film_ = register_module("film", torch::nn::Linear(time_dim, 2 * channels));
}

torch::Tensor FlowResBlockImpl::forward(torch::Tensor x, torch::Tensor temb) {
  auto sb = film_(temb).unsqueeze(-1).unsqueeze(-1);  // [N,2C,1,1]
  auto chunks = sb.chunk(2, 1);
  auto h = n1_(x) * (1.0 + chunks[0]) + chunks[1];
  h = c1_(torch::silu(h));
  h = c2_(torch::silu(n2_(h)));
  return x + h;
}

FlowModelImpl::FlowModelImpl(const FlowConfig& config) : cfg_(config) {
  conv_in_ = register_module(
      "conv_in", torch::nn::Conv2d(
                     torch::nn::Conv2dOptions(config.latent_channels, config.width, 3)
                         .padding(1)));
  conv_out_ = register_module(
      "conv_out", torch::nn::Conv2d(
                      torch::nn::Conv2dOptions(config.width, config.latent_channels, 3)
                          .padding(1)));
  time_mlp_ = register_module(
      "time_mlp", torch::nn::Sequential(torch::nn::Linear(config.time_dim, config.time_dim),
                                        torch::nn::SiLU(),
                                        torch::nn::Linear(config.time_dim, config.time_dim)));
  for (int b = 0; b < config.blocks; ++b)
    blocks_.push_back(register_module("block" + std::to_string(b),
                                      FlowResBlock(config.width, config.time_dim)));
}

torch::Tensor FlowModelImpl::forward(torch::Tensor z, torch::Tensor t) {
  auto temb = time_mlp_->forward(time_embedding(t, cfg_.time_dim));
  auto h = conv_in_(z);
  for (auto& b : blocks_) h = b->forward(h, temb);
  return conv_out_(torch::silu(h));
}

FlowModel build_flow(const FlowConfig& config) {
  torch::manual_seed(config.seed);
  return FlowModel(config);
}

TrainedFlow train_flow(const FlowConfig& config, const FlowTrainOptions& opts,
                       const FrozenAutoencoder& ae) {
  auto model = build_flow(config);
  TrainedFlow trained;
  trained.model = model;
  torch::optim::Adam optim(model->parameters(), torch::optim::AdamOptions(opts.lr));
  auto gen = make_generator(opts.data_seed ^ 0xf10f10ull);
  model->train();
  for (int step = 0; step < opts.steps; ++step) {
    std::vector<torch::Tensor> xs;
    for (int b = 0; b < opts.batch; ++b) {
      auto idx = at::randint(opts.dataset_size, {1}, gen,
                             at::TensorOptions().dtype(at::kLong))
                     .item<std::int64_t>();
      xs.push_back(generate_image(opts.data_seed + std::uint64_t(idx), opts.image_size,
                                  opts.image_size));
    }
    auto z0 = ae.normalize(ae.encode(torch::stack(xs)));
    auto t = at::rand({opts.batch}, gen, at::TensorOptions().dtype(torch::kFloat32))
                 .clamp(1e-3, 1.0);
    auto eps = at::randn(z0.sizes(), gen, at::TensorOptions().dtype(torch::kFloat32));
    auto tb = t.view({opts.batch, 1, 1, 1});
    auto z_t = (1.0 - tb) * z0 + tb * eps;
    auto v_target = eps - z0;
    auto loss = (model->forward(z_t, t) - v_target).pow(2).mean();
    if (!std::isfinite(loss.item<double>()))
      throw std::runtime_error("train_flow: non-finite loss at step " + std::to_string(step));
    optim.zero_grad();
    loss.backward();
    optim.step();
    if (step % opts.log_every == 0 || step + 1 == opts.steps)
      trained.log.push_back({step, loss.item<double>(), 0.0});
  }
  model->eval();
  return trained;
}

void save_flow(const TrainedFlow& trained, const std::string& path) {
  const auto& cfg = trained.model->config();
  Checkpoint ckpt;
  ckpt.meta["kind"] = "flow";
  ckpt.meta["config"] = {{"latent_channels", cfg.latent_channels},
                         {"width", cfg.width},
                         {"blocks", cfg.blocks},
                         {"time_dim", cfg.time_dim},
                         {"seed", cfg.seed}};
  ckpt.tensors = snapshot_module(*trained.model);
  save_checkpoint(ckpt, path);
}

FlowModel load_flow(const std::string& path) {
  auto ckpt = load_checkpoint(path);
  if (ckpt.meta.value("kind", "") != "flow")
    throw std::runtime_error("not a flow checkpoint: " + path);
  const auto& c = ckpt.meta.at("config");
  FlowConfig cfg;
  cfg.latent_channels = c.at("latent_channels");
  cfg.width = c.at("width");
  cfg.blocks = c.at("blocks");
  cfg.time_dim = c.at("time_dim");
  cfg.seed = c.at("seed");
  auto model = build_flow(cfg);
  restore_module(*model, ckpt.tensors);
  model->eval();
  return model;
}

FlowState flow_step(const FlowState& state, const torch::Tensor& v, double t_next) {
  if (t_next > state.t)
    throw std::invalid_argument("flow_step: t' must not exceed t");
  FlowState out = state;
  out.z_t = state.z_t + (t_next - state.t) * v;
  out.t = t_next;
  out.step_index = state.step_index + 1;
  return out;
}

FlowState retargeted_step(const FlowState& state, const torch::Tensor& v,
                          const torch::Tensor& z0_ref, const BlendField& field,
                          double t_next) {
  if (state.t <= 0) throw std::invalid_argument("retargeted_step: t must be positive");
  if (t_next > state.t)
    throw std::invalid_argument("retargeted_step: t' must not exceed t");
  auto z0_theta = state.z_t - state.t * v;
  auto delta = field.alpha * (z0_ref - z0_theta) + field.shift;
  auto v_star = v - delta / state.t;
  FlowState out = state;
  out.z_t = state.z_t + (t_next - state.t) * v_star;
  out.t = t_next;
  out.step_index = state.step_index + 1;
  return out;
}

std::string to_string(InpaintVariant v) {
  return v == InpaintVariant::HeuristicPerStep ? "heuristic_per_step" : "decformer_retarget";
}

torch::Tensor inpaint(const FrozenAutoencoder& ae, FlowModel flow, const torch::Tensor& image,
                      const PixelMask& mask, InpaintVariant variant,
                      DecformerCompositor decformer, const InpaintOptions& opts) {
  torch::NoGradGuard ng;
  flow->eval();
  const int f = ae.config().factor;
  auto z0_ref = ae.normalize(ae.encode(image));
  auto m_edit = downsample_mask(mask, f, DownsampleMethod::Area).data;  // [h,w]

  // keep-mask compositing: mask == 1 selects the reference, so the
  // compositor target collapses to z0_ref where context must survive
  PixelMask keep{1.0 - mask.data, mask.kind};
  HaloWeights keep_halo;
  torch::Tensor keep_m1hw, band, keep_lat, anchor;
  if (variant == InpaintVariant::DecformerRetarget) {
    keep_halo = compute_halo(keep, decformer->config().halo_radius_px, f);
    keep_m1hw = keep.data.unsqueeze(0).unsqueeze(0);
    // The learned field is trusted on the immediate boundary cells only;
    // outside them the exact field (alpha = keep mask, zero shift) anchors
    // both regions. A wide gate would bleed generated content into the
    // preserved side of the seam.
    auto gate_halo = compute_halo(keep, 2, f);
    band = gate_halo.degenerate ? torch::zeros({m_edit.size(0), m_edit.size(1)})
                                : gate_halo.latent;
    keep_lat = 1.0 - m_edit;
    anchor = torch::clamp(keep_lat - band, 0.0, 1.0);
    decformer->eval();
  }

  auto gen = make_generator(opts.noise_seed ^ 0x19a1417ull);
  auto eps = at::randn(z0_ref.sizes(), gen, at::TensorOptions().dtype(torch::kFloat32));
  FlowState state;
  state.z_t = eps;
  state.t = 1.0;
  for (int k = 0; k <= opts.steps; ++k)
    state.schedule.push_back(1.0 - double(k) / opts.steps);

  for (int k = 0; k < opts.steps; ++k) {
    double t = state.schedule[std::size_t(k)];
    double t_next = state.schedule[std::size_t(k) + 1];
    auto v = flow->forward(state.z_t.unsqueeze(0), torch::full({1}, t)).squeeze(0);
    if (opts.diagnostics) {
      opts.diagnostics->push_back(
          {{"t", t}, {"t_next", t_next}, {"mean_abs_v", v.abs().mean().item<double>()}});
    }
    double sigma_keep = opts.keep_lambda * t_next;
    auto z_ref_t = (1.0 - sigma_keep) * z0_ref + sigma_keep * eps;
    if (variant == InpaintVariant::HeuristicPerStep) {
      state = flow_step(state, v, t_next);
      state.z_t = (1.0 - m_edit) * z_ref_t + m_edit * state.z_t;
    } else {
      auto z0_theta_n = state.z_t - t * v;
      BlendField nf{keep_lat.expand_as(z0_ref).clone(), torch::zeros_like(z0_ref)};
      if (t <= opts.learned_field_max_t) {
        auto z0_theta = ae.denormalize(z0_theta_n);
        auto z0_ref_raw = ae.denormalize(z0_ref);
        auto field = decformer->forward(z0_theta.unsqueeze(0), z0_ref_raw.unsqueeze(0),
                                        keep_m1hw, keep_halo.latent.unsqueeze(0).unsqueeze(0),
                                        opts.learned_shift_gate);
        // re-express the blend in the normalized space the sampler runs in,
        // gated to the seam band; outside it the exact field takes over
        auto view = std::vector<std::int64_t>{-1, 1, 1};
        nf = BlendField{band * field.alpha.squeeze(0) + (1.0 - band) * keep_lat,
                        band * field.shift.squeeze(0) / ae.stats().std.view(view)};
      }
      bool learned = t <= opts.learned_field_max_t;
      if (opts.diagnostics)
        opts.diagnostics->back()["mean_alpha"] = nf.alpha.mean().item<double>();
      state = retargeted_step(state, v, z0_ref, nf, t_next);
      // Re-anchor the preserved region on the reference trajectory so the
      // velocity model keeps seeing it at its expected noise level. While the
      // exact field drives the retargeting this covers the seam band too;
      // once the learned field is active the band is left to it.
      auto w_reset = learned ? anchor : keep_lat;
      state.z_t = (1.0 - w_reset) * state.z_t + w_reset * z_ref_t;
    }
  }
  return ae.decode(ae.denormalize(state.z_t)).clamp(0.0, 1.0);
}

DualSigmaSample dual_sigma_corrupt(const torch::Tensor& z0_chw, const LatentMask& m, double u,
                                   double lambda, std::uint64_t noise_seed) {
  if (!(u > 0.0 && u < 1.0)) throw std::invalid_argument("dual_sigma_corrupt: u in (0,1)");
  if (!(lambda > 0.0 && lambda < 1.0))
    throw std::invalid_argument("dual_sigma_corrupt: lambda in (0,1)");
  DualSigmaSample out;
  out.sigma_in = u;            // g = identity
  out.sigma_out = lambda * u;  // monotone g keeps sigma_out <= sigma_in
  auto gen = make_generator(noise_seed ^ 0xd5a15ull);
  out.eps = at::randn(z0_chw.sizes(), gen, at::TensorOptions().dtype(torch::kFloat32));
  auto z_in = (1.0 - out.sigma_in) * z0_chw + out.sigma_in * out.eps;
  auto z_out = (1.0 - out.sigma_out) * z0_chw + out.sigma_out * out.eps;
  out.z = m.data * z_in + (1.0 - m.data) * z_out;
  out.sigma_field = m.data * out.sigma_in + (1.0 - m.data) * out.sigma_out;
  return out;
}

TrainedFlow finetune_dual_sigma(FlowModel base, const DualSigmaFinetuneOptions& opts,
                                const FrozenAutoencoder& ae) {
  auto model = build_flow(base->config());
  restore_module(*model, snapshot_module(*base));
  TrainedFlow trained;
  trained.model = model;
  if (opts.steps == 0) {
    model->eval();
    return trained;
  }
  const int f = ae.config().factor;
  torch::optim::Adam optim(model->parameters(), torch::optim::AdamOptions(opts.lr));
  auto gen = make_generator(opts.data_seed ^ 0xf17e7ull);
  model->train();
  for (int step = 0; step < opts.steps; ++step) {
    std::vector<torch::Tensor> xs, ms;
    for (int b = 0; b < opts.batch; ++b) {
      auto idx = at::randint(1 << 20, {1}, gen, at::TensorOptions().dtype(at::kLong))
                     .item<std::int64_t>();
      auto s = make_composite(opts.data_seed + std::uint64_t(idx), opts.image_size,
                              MaskKind::Binary);
      xs.push_back(s.x_a);
      ms.push_back(downsample_mask(s.mask, f, DownsampleMethod::Area).data);
    }
    auto z0 = ae.normalize(ae.encode(torch::stack(xs)));
    auto m = torch::stack(ms).unsqueeze(1);  // [N,1,h,w]
    auto u = at::rand({opts.batch}, gen, at::TensorOptions().dtype(torch::kFloat32))
                 .clamp(1e-3, 1.0 - 1e-3);
    auto eps = at::randn(z0.sizes(), gen, at::TensorOptions().dtype(torch::kFloat32));
    double lam = opts.lambda;
    if (opts.uniform_mix > 0.0 &&
        at::rand({1}, gen, at::TensorOptions().dtype(torch::kFloat32)).item<double>() <
            opts.uniform_mix)
      lam = 1.0;
    auto ub = u.view({opts.batch, 1, 1, 1});
    auto z_in = (1.0 - ub) * z0 + ub * eps;
    auto ob = lam * ub;
    auto z_out = (1.0 - ob) * z0 + ob * eps;
    auto z = m * z_in + (1.0 - m) * z_out;
    auto loss = (model->forward(z, u) - (eps - z0)).pow(2).mean();
    if (!std::isfinite(loss.item<double>()))
      throw std::runtime_error("finetune_dual_sigma: non-finite loss at step " +
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

std::vector<InpaintRow> evaluate_inpainting(const FrozenAutoencoder& ae, FlowModel base,
                                            FlowModel finetuned, DecformerCompositor decformer,
                                            const InpaintEvalOptions& opts) {
  struct Variant {
    std::string name;
    FlowModel flow;
    InpaintVariant sampler;
    double keep_lambda;
  };
  std::vector<Variant> variants = {
      {"heuristic", base, InpaintVariant::HeuristicPerStep, 1.0},
      {"decformer", base, InpaintVariant::DecformerRetarget, 1.0},
  };
  if (!finetuned.is_empty()) {
    variants.push_back({"dual_sigma_only", finetuned, InpaintVariant::HeuristicPerStep,
                        opts.dual_sigma_lambda});
    variants.push_back({"decformer_dual_sigma", finetuned, InpaintVariant::DecformerRetarget,
                        opts.dual_sigma_lambda});
  }
  std::vector<InpaintRow> rows(variants.size());
  for (std::size_t vi = 0; vi < variants.size(); ++vi) rows[vi].variant = variants[vi].name;

  PerceptualSurrogate perceptual(ae.config().image_channels);
  int used = 0;
  for (int i = 0; i < opts.num_images * 4 && used < opts.num_images; ++i) {
    auto x = generate_image(opts.seed + std::uint64_t(i), opts.image_size, opts.image_size);
    auto raw = generate_mask(opts.seed + 100000 + std::uint64_t(i), opts.image_size,
                             opts.image_size,
                             i % 2 == 0 ? MaskFamily::Ellipse : MaskFamily::Polygon);
    auto mask = augment_mask(raw, MaskKind::Binary);
    double area = mask.data.mean().item<double>();
    if (area <= opts.min_masked_area || area > 0.7) continue;
    ++used;
    auto halo = compute_halo(mask, 8, ae.config().factor);
    for (std::size_t vi = 0; vi < variants.size(); ++vi) {
      InpaintOptions io;
      io.steps = opts.steps;
      io.keep_lambda = variants[vi].keep_lambda;
      io.learned_field_max_t = opts.learned_field_max_t;
      io.learned_shift_gate = opts.learned_shift_gate;
      io.noise_seed = opts.seed + std::uint64_t(1000 + i);  // shared across variants
      auto y = inpaint(ae, variants[vi].flow, x, mask, variants[vi].sampler, decformer, io);
      rows[vi].ssim += ssim(y, x);
      rows[vi].psnr_db += psnr(y, x);
      rows[vi].perceptual += perceptual(y, x).item<double>();
      rows[vi].seam_halo_l1 += halo.degenerate ? 0.0 : halo_l1(y, x, halo.pixel);
      rows[vi].n += 1;
    }
  }
  if (used == 0) throw std::runtime_error("evaluate_inpainting: no masks met the area filter");
  for (auto& r : rows) {
    r.ssim /= r.n;
    r.psnr_db /= r.n;
    r.perceptual /= r.n;
    r.seam_halo_l1 /= r.n;
  }
  return rows;
}

std::string inpaint_to_csv(const std::vector<InpaintRow>& rows) {
  std::ostringstream out;
  out << "variant,ssim,psnr_db,perceptual,seam_halo_l1,n\n";
  for (const auto& r : rows)
    out << r.variant << "," << format_double(r.ssim) << "," << format_double(r.psnr_db) << ","
        << format_double(r.perceptual) << "," << format_double(r.seam_halo_l1) << "," << r.n
        << "\n";
  return out.str();
}

}  // namespace pelc
