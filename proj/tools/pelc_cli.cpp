#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pelc/colorop.hpp"
#include "pelc/common.hpp"
#include "pelc/flow.hpp"
#include "pelc/image.hpp"
#include "pelc/pipeline.hpp"

namespace {

pelc::ExperimentConfig resolve_config(const std::string& config_path, std::int64_t seed,
                                      const std::string& out, int workers) {
  pelc::ExperimentConfig cfg;
  if (!config_path.empty()) cfg = pelc::load_config(config_path);
  if (seed >= 0) cfg.seed = std::uint64_t(seed);
  if (!out.empty()) cfg.out_dir = out;
  if (workers > 0) cfg.workers = workers;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pixel-equivalent latent compositing laboratory"};
  app.require_subcommand(1);

  std::string config_path, out, stage_name;
  std::int64_t seed = -1;
  int workers = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config JSON");
    sub->add_option("--seed", seed, "override config seed");
    sub->add_option("--out", out, "override output directory");
    sub->add_option("--workers", workers, "torch thread count");
  };

  auto* run = app.add_subcommand("run", "run a pipeline stage");
  run->add_option("stage", stage_name, "pipeline stage")
      ->required()
      ->check(CLI::IsMember(pelc::kPipelineStages));
  add_common(run);

  auto* report = app.add_subcommand("report", "emit tables and plots from stage manifests");
  std::vector<std::string> manifest_paths;
  std::string report_out = "report";
  report->add_option("--manifest", manifest_paths, "manifest JSON paths")->required();
  report->add_option("--out", report_out, "report output directory");

  auto* ip = app.add_subcommand("inpaint", "run the inpainting sampler on one image");
  std::string ip_image, ip_mask, ip_variant = "decformer_retarget", ip_out = "inpaint.png";
  int ip_steps = 30;
  std::int64_t ip_seed = 0;
  bool ip_dual_sigma = false;
  ip->add_option("--image", ip_image, "input image PNG")->required();
  ip->add_option("--mask", ip_mask, "mask PNG (1 = region to generate)")->required();
  ip->add_option("--variant", ip_variant, "sampler variant")
      ->check(CLI::IsMember({"heuristic_per_step", "decformer_retarget"}));
  ip->add_option("--steps", ip_steps, "sampler steps");
  ip->add_option("--seed", ip_seed, "noise seed");
  ip->add_option("--result", ip_out, "output PNG path");
  ip->add_flag("--dual-sigma", ip_dual_sigma, "use the dual-sigma finetuned flow");
  ip->add_option("--config", config_path, "experiment config JSON");
  ip->add_option("--out", out, "run directory holding the checkpoints");

  auto* ce = app.add_subcommand("colorop-eval", "apply the trained color operator");
  double ce_gamma = 1.0, ce_contrast = 1.0, ce_brightness = 0.0;
  int ce_n = 8;
  std::string ce_dir = "colorop_eval";
  ce->add_option("--gamma", ce_gamma, "gamma");
  ce->add_option("--contrast", ce_contrast, "contrast");
  ce->add_option("--brightness", ce_brightness, "brightness");
  ce->add_option("--n", ce_n, "number of sample images");
  ce->add_option("--result-dir", ce_dir, "output directory for image grids");
  ce->add_option("--config", config_path, "experiment config JSON");
  ce->add_option("--out", out, "run directory holding the checkpoints");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      auto cfg = resolve_config(config_path, seed, out, workers);
      auto manifest = pelc::run_pipeline(stage_name, cfg);
      std::printf("%s\n", pelc::manifest_to_json(manifest).dump(2).c_str());
    } else if (report->parsed()) {
      pelc::emit_report(manifest_paths, report_out);
      std::printf("report written to %s\n", report_out.c_str());
    } else if (ip->parsed()) {
      auto cfg = resolve_config(config_path, -1, out, 0);
      auto ae = pelc::load_autoencoder(cfg.out_dir + "/ae.ckpt");
      auto flow = pelc::load_flow(cfg.out_dir +
                                  (ip_dual_sigma ? "/flow_dual_sigma.ckpt" : "/flow.ckpt"));
      pelc::DecformerCompositor dec{nullptr};
      auto variant = ip_variant == "heuristic_per_step"
                         ? pelc::InpaintVariant::HeuristicPerStep
                         : pelc::InpaintVariant::DecformerRetarget;
      if (variant == pelc::InpaintVariant::DecformerRetarget)
        dec = pelc::load_decformer(cfg.out_dir + "/decformer.ckpt");
      auto image = pelc::load_image_png(ip_image);
      pelc::PixelMask mask{pelc::load_mask_png(ip_mask), pelc::MaskKind::Original};
      nlohmann::json diagnostics = nlohmann::json::array();
      pelc::InpaintOptions opts;
      opts.steps = ip_steps;
      opts.noise_seed = std::uint64_t(ip_seed);
      if (ip_dual_sigma) opts.keep_lambda = cfg.dual_sigma.lambda;
      opts.diagnostics = &diagnostics;
      auto result = pelc::inpaint(ae, flow, image, mask, variant, dec, opts);
      pelc::save_image_png(result, ip_out);
      pelc::write_file_atomic(ip_out + ".json", diagnostics.dump(2));
      std::printf("wrote %s and %s.json\n", ip_out.c_str(), ip_out.c_str());
    } else if (ce->parsed()) {
      auto cfg = resolve_config(config_path, -1, out, 0);
      auto ae = pelc::load_autoencoder(cfg.out_dir + "/ae.ckpt");
      auto model = pelc::load_color_operator(cfg.out_dir + "/colorop.ckpt");
      pelc::ColorParams params{ce_gamma, ce_contrast, ce_brightness};
      pelc::ensure_dir(ce_dir);
      torch::NoGradGuard ng;
      for (int i = 0; i < ce_n; ++i) {
        auto x = pelc::generate_image(cfg.color_eval.seed + std::uint64_t(i), cfg.image_size,
                                      cfg.image_size);
        auto target = pelc::apply_color_pixels(x, params);
        auto y_ref = ae.decode(ae.encode(target));
        auto y_model = ae.decode(model->forward(ae.encode(x).unsqueeze(0),
                                                params.conditioning().unsqueeze(0))
                                     .squeeze(0));
        auto y_naive =
            ae.decode(pelc::apply_color_latents_naive(ae.encode(x), params, ae.stats()));
        auto grid = torch::cat({x, target, y_ref, y_model, y_naive}, 2).clamp(0.0, 1.0);
        pelc::save_image_png(grid, ce_dir + "/grid_" + std::to_string(i) + ".png");
      }
      std::printf("wrote %d grids (source | pixel target | encode-decode | model | naive) "
                  "to %s\n",
                  ce_n, ce_dir.c_str());
    }
  } catch (const std::exception& e) {
    nlohmann::json err{{"error", e.what()}};
    std::fprintf(stderr, "%s\n", err.dump().c_str());
    return 1;
  }
  return 0;
}
