#include "pelc/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "pelc/common.hpp"
#include "pelc/equivalence.hpp"
#include "pelc/erf.hpp"
#include "pelc/image.hpp"
#include "pelc/rf.hpp"

namespace fs = std::filesystem;

namespace pelc {

namespace {

using Setter = std::function<void(const nlohmann::json&)>;

void apply_object(const nlohmann::json& j, const std::string& section,
                  const std::map<std::string, Setter>& setters) {
  if (!j.is_object())
    throw std::runtime_error("config: section '" + section + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    auto s = setters.find(it.key());
    if (s == setters.end())
      throw std::runtime_error("config: unknown key '" + section + "." + it.key() + "'");
    s->second(it.value());
  }
}

}  // namespace

nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["workers"] = c.workers;
  j["image_size"] = c.image_size;
  j["eval_set"] = {{"size", c.eval_set.size},
                   {"per_kind", c.eval_set.per_kind},
                   {"seed", c.eval_set.seed}};
  j["autoencoder"] = {{"factor", c.autoencoder.factor},
                      {"latent_channels", c.autoencoder.latent_channels},
                      {"image_channels", c.autoencoder.image_channels},
                      {"base_width", c.autoencoder.base_width},
                      {"attention_midblock", c.autoencoder.attention_midblock},
                      {"variational", c.autoencoder.variational},
                      {"kl_weight", c.autoencoder.kl_weight},
                      {"seed", c.autoencoder.seed}};
  j["autoencoder_train"] = {{"steps", c.autoencoder_train.steps},
                            {"batch_size", c.autoencoder_train.batch_size},
                            {"lr", c.autoencoder_train.lr},
                            {"lr_final", c.autoencoder_train.lr_final},
                            {"image_size", c.autoencoder_train.image_size},
                            {"data_seed", c.autoencoder_train.data_seed},
                            {"dataset_size", c.autoencoder_train.dataset_size},
                            {"log_every", c.autoencoder_train.log_every},
                            {"perceptual_weight", c.autoencoder_train.perceptual_weight}};
  j["decformer"] = {{"latent_channels", c.decformer.latent_channels},
                    {"factor", c.decformer.factor},
                    {"patch_sizes", c.decformer.patch_sizes},
                    {"width", c.decformer.width},
                    {"token_dim", c.decformer.token_dim},
                    {"film_hidden", c.decformer.film_hidden},
                    {"trunk_out", c.decformer.trunk_out},
                    {"shift_head", c.decformer.shift_head},
                    {"constrain_alpha", c.decformer.constrain_alpha},
                    {"halo_radius_px", c.decformer.halo_radius_px},
                    {"seed", c.decformer.seed}};
  j["decformer_train"] = {{"max_steps", c.decformer_train.max_steps},
                          {"batch", c.decformer_train.batch},
                          {"lr", c.decformer_train.lr},
                          {"weight_decay", c.decformer_train.weight_decay},
                          {"alpha_lr_scale_warmup", c.decformer_train.alpha_lr_scale_warmup},
                          {"shift_warmup_steps", c.decformer_train.shift_warmup_steps},
                          {"alpha_stage_cap", c.decformer_train.alpha_stage_cap},
                          {"val_every", c.decformer_train.val_every},
                          {"val_window", c.decformer_train.val_window},
                          {"val_rel_improvement", c.decformer_train.val_rel_improvement},
                          {"lambda_e", c.decformer_train.lambda_e},
                          {"lambda_h", c.decformer_train.lambda_h},
                          {"image_size", c.decformer_train.image_size},
                          {"data_seed", c.decformer_train.data_seed},
                          {"val_size", c.decformer_train.val_size},
                          {"log_every", c.decformer_train.log_every}};
  j["flow"] = {{"latent_channels", c.flow.latent_channels},
               {"width", c.flow.width},
               {"blocks", c.flow.blocks},
               {"time_dim", c.flow.time_dim},
               {"seed", c.flow.seed}};
  j["flow_train"] = {{"steps", c.flow_train.steps},
                     {"batch", c.flow_train.batch},
                     {"lr", c.flow_train.lr},
                     {"image_size", c.flow_train.image_size},
                     {"data_seed", c.flow_train.data_seed},
                     {"dataset_size", c.flow_train.dataset_size},
                     {"log_every", c.flow_train.log_every}};
  j["dual_sigma"] = {{"steps", c.dual_sigma.steps},
                     {"batch", c.dual_sigma.batch},
                     {"lr", c.dual_sigma.lr},
                     {"lambda", c.dual_sigma.lambda},
                     {"uniform_mix", c.dual_sigma.uniform_mix},
                     {"image_size", c.dual_sigma.image_size},
                     {"data_seed", c.dual_sigma.data_seed},
                     {"log_every", c.dual_sigma.log_every}};
  j["inpaint_eval"] = {{"num_images", c.inpaint_eval.num_images},
                       {"image_size", c.inpaint_eval.image_size},
                       {"seed", c.inpaint_eval.seed},
                       {"min_masked_area", c.inpaint_eval.min_masked_area},
                       {"steps", c.inpaint_eval.steps},
                       {"learned_field_max_t", c.inpaint_eval.learned_field_max_t},
                       {"learned_shift_gate", c.inpaint_eval.learned_shift_gate}};
  j["colorop"] = {{"latent_channels", c.colorop.latent_channels},
                  {"width", c.colorop.width},
                  {"blocks", c.colorop.blocks},
                  {"cond_dim", c.colorop.cond_dim},
                  {"seed", c.colorop.seed}};
  j["colorop_train"] = {{"steps", c.colorop_train.steps},
                        {"batch", c.colorop_train.batch},
                        {"lr", c.colorop_train.lr},
                        {"image_size", c.colorop_train.image_size},
                        {"data_seed", c.colorop_train.data_seed},
                        {"dataset_size", c.colorop_train.dataset_size},
                        {"log_every", c.colorop_train.log_every},
                        {"perceptual_weight", c.colorop_train.perceptual_weight}};
  j["color_eval"] = {{"num_images", c.color_eval.num_images},
                     {"image_size", c.color_eval.image_size},
                     {"seed", c.color_eval.seed}};
  j["erf_probes"] = c.erf_probes;
  j["ablation_seeds"] = c.ablation_seeds;
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  std::map<std::string, Setter> top = {
      {"seed", [&](const nlohmann::json& v) { c.seed = v; }},
      {"out_dir", [&](const nlohmann::json& v) { c.out_dir = v; }},
      {"workers", [&](const nlohmann::json& v) { c.workers = v; }},
      {"image_size", [&](const nlohmann::json& v) { c.image_size = v; }},
      {"eval_set",
       [&](const nlohmann::json& v) {
         apply_object(v, "eval_set",
                      {{"size", [&](const nlohmann::json& x) { c.eval_set.size = x; }},
                       {"per_kind", [&](const nlohmann::json& x) { c.eval_set.per_kind = x; }},
                       {"seed", [&](const nlohmann::json& x) { c.eval_set.seed = x; }}});
       }},
      {"autoencoder",
       [&](const nlohmann::json& v) {
         auto& a = c.autoencoder;
         apply_object(
             v, "autoencoder",
             {{"factor", [&](const nlohmann::json& x) { a.factor = x; }},
              {"latent_channels", [&](const nlohmann::json& x) { a.latent_channels = x; }},
              {"image_channels", [&](const nlohmann::json& x) { a.image_channels = x; }},
              {"base_width", [&](const nlohmann::json& x) { a.base_width = x; }},
              {"attention_midblock",
               [&](const nlohmann::json& x) { a.attention_midblock = x; }},
              {"variational", [&](const nlohmann::json& x) { a.variational = x; }},
              {"kl_weight", [&](const nlohmann::json& x) { a.kl_weight = x; }},
              {"seed", [&](const nlohmann::json& x) { a.seed = x; }}});
       }},
      {"autoencoder_train",
       [&](const nlohmann::json& v) {
         auto& a = c.autoencoder_train;
         apply_object(
             v, "autoencoder_train",
             {{"steps", [&](const nlohmann::json& x) { a.steps = x; }},
              {"batch_size", [&](const nlohmann::json& x) { a.batch_size = x; }},
              {"lr", [&](const nlohmann::json& x) { a.lr = x; }},
              {"lr_final", [&](const nlohmann::json& x) { a.lr_final = x; }},
              {"image_size", [&](const nlohmann::json& x) { a.image_size = x; }},
              {"data_seed", [&](const nlohmann::json& x) { a.data_seed = x; }},
              {"dataset_size", [&](const nlohmann::json& x) { a.dataset_size = x; }},
              {"log_every", [&](const nlohmann::json& x) { a.log_every = x; }},
              {"perceptual_weight",
               [&](const nlohmann::json& x) { a.perceptual_weight = x; }}});
       }},
      {"decformer",
       [&](const nlohmann::json& v) {
         auto& d = c.decformer;
         apply_object(
             v, "decformer",
             {{"latent_channels", [&](const nlohmann::json& x) { d.latent_channels = x; }},
              {"factor", [&](const nlohmann::json& x) { d.factor = x; }},
              {"patch_sizes",
               [&](const nlohmann::json& x) { d.patch_sizes = x.get<std::vector<int>>(); }},
              {"width", [&](const nlohmann::json& x) { d.width = x; }},
              {"token_dim", [&](const nlohmann::json& x) { d.token_dim = x; }},
              {"film_hidden", [&](const nlohmann::json& x) { d.film_hidden = x; }},
              {"trunk_out", [&](const nlohmann::json& x) { d.trunk_out = x; }},
              {"shift_head", [&](const nlohmann::json& x) { d.shift_head = x; }},
              {"constrain_alpha", [&](const nlohmann::json& x) { d.constrain_alpha = x; }},
              {"halo_radius_px", [&](const nlohmann::json& x) { d.halo_radius_px = x; }},
              {"seed", [&](const nlohmann::json& x) { d.seed = x; }}});
       }},
      {"decformer_train",
       [&](const nlohmann::json& v) {
         auto& d = c.decformer_train;
         apply_object(
             v, "decformer_train",
             {{"max_steps", [&](const nlohmann::json& x) { d.max_steps = x; }},
              {"batch", [&](const nlohmann::json& x) { d.batch = x; }},
              {"lr", [&](const nlohmann::json& x) { d.lr = x; }},
              {"weight_decay", [&](const nlohmann::json& x) { d.weight_decay = x; }},
              {"alpha_lr_scale_warmup",
               [&](const nlohmann::json& x) { d.alpha_lr_scale_warmup = x; }},
              {"shift_warmup_steps",
               [&](const nlohmann::json& x) { d.shift_warmup_steps = x; }},
              {"alpha_stage_cap", [&](const nlohmann::json& x) { d.alpha_stage_cap = x; }},
              {"val_every", [&](const nlohmann::json& x) { d.val_every = x; }},
              {"val_window", [&](const nlohmann::json& x) { d.val_window = x; }},
              {"val_rel_improvement",
               [&](const nlohmann::json& x) { d.val_rel_improvement = x; }},
              {"lambda_e", [&](const nlohmann::json& x) { d.lambda_e = x; }},
              {"lambda_h", [&](const nlohmann::json& x) { d.lambda_h = x; }},
              {"image_size", [&](const nlohmann::json& x) { d.image_size = x; }},
              {"data_seed", [&](const nlohmann::json& x) { d.data_seed = x; }},
              {"val_size", [&](const nlohmann::json& x) { d.val_size = x; }},
              {"log_every", [&](const nlohmann::json& x) { d.log_every = x; }}});
       }},
      {"flow",
       [&](const nlohmann::json& v) {
         auto& f = c.flow;
         apply_object(
             v, "flow",
             {{"latent_channels", [&](const nlohmann::json& x) { f.latent_channels = x; }},
              {"width", [&](const nlohmann::json& x) { f.width = x; }},
              {"blocks", [&](const nlohmann::json& x) { f.blocks = x; }},
              {"time_dim", [&](const nlohmann::json& x) { f.time_dim = x; }},
              {"seed", [&](const nlohmann::json& x) { f.seed = x; }}});
       }},
      {"flow_train",
       [&](const nlohmann::json& v) {
         auto& f = c.flow_train;
         apply_object(
             v, "flow_train",
             {{"steps", [&](const nlohmann::json& x) { f.steps = x; }},
              {"batch", [&](const nlohmann::json& x) { f.batch = x; }},
              {"lr", [&](const nlohmann::json& x) { f.lr = x; }},
              {"image_size", [&](const nlohmann::json& x) { f.image_size = x; }},
              {"data_seed", [&](const nlohmann::json& x) { f.data_seed = x; }},
              {"dataset_size", [&](const nlohmann::json& x) { f.dataset_size = x; }},
              {"log_every", [&](const nlohmann::json& x) { f.log_every = x; }}});
       }},
      {"dual_sigma",
       [&](const nlohmann::json& v) {
         auto& d = c.dual_sigma;
         apply_object(
             v, "dual_sigma",
             {{"steps", [&](const nlohmann::json& x) { d.steps = x; }},
              {"batch", [&](const nlohmann::json& x) { d.batch = x; }},
              {"lr", [&](const nlohmann::json& x) { d.lr = x; }},
              {"lambda", [&](const nlohmann::json& x) { d.lambda = x; }},
              {"uniform_mix", [&](const nlohmann::json& x) { d.uniform_mix = x; }},
              {"image_size", [&](const nlohmann::json& x) { d.image_size = x; }},
              {"data_seed", [&](const nlohmann::json& x) { d.data_seed = x; }},
              {"log_every", [&](const nlohmann::json& x) { d.log_every = x; }}});
       }},
      {"inpaint_eval",
       [&](const nlohmann::json& v) {
         auto& i = c.inpaint_eval;
         apply_object(
             v, "inpaint_eval",
             {{"num_images", [&](const nlohmann::json& x) { i.num_images = x; }},
              {"image_size", [&](const nlohmann::json& x) { i.image_size = x; }},
              {"seed", [&](const nlohmann::json& x) { i.seed = x; }},
              {"min_masked_area", [&](const nlohmann::json& x) { i.min_masked_area = x; }},
              {"steps", [&](const nlohmann::json& x) { i.steps = x; }},
              {"learned_field_max_t",
               [&](const nlohmann::json& x) { i.learned_field_max_t = x; }},
              {"learned_shift_gate",
               [&](const nlohmann::json& x) { i.learned_shift_gate = x; }}});
       }},
      {"colorop",
       [&](const nlohmann::json& v) {
         auto& o = c.colorop;
         apply_object(
             v, "colorop",
             {{"latent_channels", [&](const nlohmann::json& x) { o.latent_channels = x; }},
              {"width", [&](const nlohmann::json& x) { o.width = x; }},
              {"blocks", [&](const nlohmann::json& x) { o.blocks = x; }},
              {"cond_dim", [&](const nlohmann::json& x) { o.cond_dim = x; }},
              {"seed", [&](const nlohmann::json& x) { o.seed = x; }}});
       }},
      {"colorop_train",
       [&](const nlohmann::json& v) {
         auto& o = c.colorop_train;
         apply_object(
             v, "colorop_train",
             {{"steps", [&](const nlohmann::json& x) { o.steps = x; }},
              {"batch", [&](const nlohmann::json& x) { o.batch = x; }},
              {"lr", [&](const nlohmann::json& x) { o.lr = x; }},
              {"image_size", [&](const nlohmann::json& x) { o.image_size = x; }},
              {"data_seed", [&](const nlohmann::json& x) { o.data_seed = x; }},
              {"dataset_size", [&](const nlohmann::json& x) { o.dataset_size = x; }},
              {"log_every", [&](const nlohmann::json& x) { o.log_every = x; }},
              {"perceptual_weight",
               [&](const nlohmann::json& x) { o.perceptual_weight = x; }}});
       }},
      {"color_eval",
       [&](const nlohmann::json& v) {
         auto& o = c.color_eval;
         apply_object(v, "color_eval",
                      {{"num_images", [&](const nlohmann::json& x) { o.num_images = x; }},
                       {"image_size", [&](const nlohmann::json& x) { o.image_size = x; }},
                       {"seed", [&](const nlohmann::json& x) { o.seed = x; }}});
       }},
      {"erf_probes", [&](const nlohmann::json& v) { c.erf_probes = v; }},
      {"ablation_seeds",
       [&](const nlohmann::json& v) {
         c.ablation_seeds = v.get<std::vector<std::uint64_t>>();
       }},
  };
  apply_object(j, "", top);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  return config_from_json(nlohmann::json::parse(read_file(path)));
}

std::string config_hash(const ExperimentConfig& c) {
  return to_hex(fnv1a64(config_to_json(c).dump()));
}

const std::vector<std::string> kPipelineStages = {
    "train-vae",    "train-compositor", "train-flow", "finetune-dual-sigma",
    "train-colorop", "eval-equivalence", "eval-sdf",   "eval-inpaint",
    "eval-color",   "erf",              "rf-calc",    "ablate"};

nlohmann::json manifest_to_json(const RunManifest& m) {
  nlohmann::json j;
  j["stage"] = m.stage;
  j["config_hash"] = m.config_hash;
  j["dataset_hash"] = m.dataset_hash;
  j["artifacts"] = m.artifacts;
  j["wall_seconds"] = m.wall_seconds;
  return j;
}

RunManifest manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  m.stage = j.at("stage");
  m.config_hash = j.at("config_hash");
  m.dataset_hash = j.value("dataset_hash", "");
  m.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
  m.wall_seconds = j.value("wall_seconds", 0.0);
  return m;
}

namespace {

std::string ckpt_path(const ExperimentConfig& c, const std::string& name) {
  return c.out_dir + "/" + name + ".ckpt";
}

void require_artifact(const std::string& path, const std::string& producer_stage) {
  if (!fs::exists(path))
    throw std::runtime_error("missing prerequisite artifact '" + path + "'; run stage '" +
                             producer_stage + "' first");
}

FrozenAutoencoder require_autoencoder(const ExperimentConfig& c) {
  require_artifact(ckpt_path(c, "ae"), "train-vae");
  return load_autoencoder(ckpt_path(c, "ae"));
}

// Metric files embed the config hash so every table row is traceable.
void write_metric_json(RunManifest& m, const ExperimentConfig& c, const std::string& path,
                       nlohmann::json body) {
  body["config_hash"] = config_hash(c);
  if (!m.dataset_hash.empty()) body["dataset_hash"] = m.dataset_hash;
  write_file_atomic(path, body.dump(2));
  m.artifacts[path] = to_hex(hash_file(path));
}

void write_metric_text(RunManifest& m, const ExperimentConfig& c, const std::string& path,
                       const std::string& body) {
  std::string header = "# config_hash=" + config_hash(c) +
                       (m.dataset_hash.empty() ? "" : " dataset_hash=" + m.dataset_hash) +
                       "\n";
  write_file_atomic(path, header + body);
  m.artifacts[path] = to_hex(hash_file(path));
}

void add_artifact(RunManifest& m, const std::string& path) {
  m.artifacts[path] = to_hex(hash_file(path));
}

EvalSet prepare_eval_set(const ExperimentConfig& c, RunManifest& m) {
  auto dir = c.out_dir + "/eval_set";
  EvalSet set;
  if (fs::exists(dir + "/manifest.json")) {
    set = load_eval_set(dir);  // verifies the recorded hash
  } else {
    set = build_eval_set(c.eval_set);
    save_eval_set(set, dir);
  }
  m.dataset_hash = to_hex(set.hash);
  return set;
}

std::string data_file(const std::string& name) {
  return std::string(PELC_DATA_DIR) + "/" + name;
}

}  // namespace

RunManifest run_pipeline(const std::string& stage, const ExperimentConfig& config) {
  auto t0 = std::chrono::steady_clock::now();
  torch::set_num_threads(std::max(1, config.workers));
  ensure_dir(config.out_dir);
  RunManifest m;
  m.stage = stage;
  m.config_hash = config_hash(config);

  if (stage == "train-vae") {
    auto trained = train_autoencoder(config.autoencoder, config.autoencoder_train);
    save_autoencoder(trained, ckpt_path(config, "ae"));
    add_artifact(m, ckpt_path(config, "ae"));
    std::ostringstream log;
    log << "step,loss,psnr\n";
    for (const auto& e : trained.log)
      log << e.step << "," << format_double(e.loss) << "," << format_double(e.psnr) << "\n";
    write_metric_text(m, config, config.out_dir + "/ae_train_log.csv", log.str());
  } else if (stage == "train-compositor") {
    auto ae = require_autoencoder(config);
    auto opts = config.decformer_train;
    opts.log_path = config.out_dir + "/decformer_train_log.jsonl";
    auto trained = train_decformer(config.decformer, opts, ae);
    save_decformer(trained, ckpt_path(config, "decformer"));
    add_artifact(m, ckpt_path(config, "decformer"));
    add_artifact(m, opts.log_path);
  } else if (stage == "train-flow") {
    auto ae = require_autoencoder(config);
    auto trained = train_flow(config.flow, config.flow_train, ae);
    save_flow(trained, ckpt_path(config, "flow"));
    add_artifact(m, ckpt_path(config, "flow"));
  } else if (stage == "finetune-dual-sigma") {
    auto ae = require_autoencoder(config);
    require_artifact(ckpt_path(config, "flow"), "train-flow");
    auto base = load_flow(ckpt_path(config, "flow"));
    auto trained = finetune_dual_sigma(base, config.dual_sigma, ae);
    save_flow(trained, ckpt_path(config, "flow_dual_sigma"));
    add_artifact(m, ckpt_path(config, "flow_dual_sigma"));
  } else if (stage == "train-colorop") {
    auto ae = require_autoencoder(config);
    auto trained = train_color_operator(config.colorop, config.colorop_train, ae);
    save_color_operator(trained, ckpt_path(config, "colorop"));
    add_artifact(m, ckpt_path(config, "colorop"));
  } else if (stage == "eval-equivalence") {
    auto ae = require_autoencoder(config);
    auto set = prepare_eval_set(config, m);
    const int f = config.autoencoder.factor;
    const int R = config.decformer.halo_radius_px;
    std::vector<EquivalenceReport> reports;
    reports.push_back(evaluate_equivalence(
        ae, set, "heuristic_area", make_heuristic_compositor(f, DownsampleMethod::Area), R));
    reports.push_back(evaluate_equivalence(
        ae, set, "heuristic_bilinear",
        make_heuristic_compositor(f, DownsampleMethod::Bilinear), R));
    reports.push_back(evaluate_equivalence(
        ae, set, "heuristic_nearest", make_heuristic_compositor(f, DownsampleMethod::Nearest),
        R));
    reports.push_back(
        evaluate_equivalence(ae, set, "oracle", make_oracle_compositor(false), R));
    reports.push_back(
        evaluate_equivalence(ae, set, "oracle_alpha_only", make_oracle_compositor(true), R));
    reports.push_back(
        evaluate_equivalence(ae, set, "ground_truth", make_ground_truth_compositor(), R));
    if (fs::exists(ckpt_path(config, "decformer"))) {
      auto dec = load_decformer(ckpt_path(config, "decformer"));
      reports.push_back(evaluate_equivalence(ae, set, "decformer",
                                             make_decformer_compositor(dec, ae), R));
    }
    nlohmann::json body = nlohmann::json::array();
    for (const auto& r : reports) body.push_back(report_to_json(r));
    write_metric_json(m, config, config.out_dir + "/equivalence.json",
                      {{"reports", body}});
    write_metric_text(m, config, config.out_dir + "/equivalence.csv", report_to_csv(reports));
  } else if (stage == "eval-sdf") {
    auto ae = require_autoencoder(config);
    auto set = prepare_eval_set(config, m);
    const int f = config.autoencoder.factor;
    auto emit = [&](const std::string& name, const LatentCompositor& comp) {
      auto px = sdf_error_profile(ae, set, comp, false);
      auto lat = sdf_error_profile(ae, set, comp, true);
      write_metric_text(m, config, config.out_dir + "/sdf_" + name + "_pixel.csv",
                        profile_to_csv(px));
      write_metric_text(m, config, config.out_dir + "/sdf_" + name + "_latent.csv",
                        profile_to_csv(lat));
    };
    emit("heuristic", make_heuristic_compositor(f, DownsampleMethod::Area));
    emit("oracle_alpha_only", make_oracle_compositor(true));
    emit("oracle", make_oracle_compositor(false));
    if (fs::exists(ckpt_path(config, "decformer"))) {
      auto dec = load_decformer(ckpt_path(config, "decformer"));
      emit("decformer", make_decformer_compositor(dec, ae));
    }
  } else if (stage == "eval-inpaint") {
    auto ae = require_autoencoder(config);
    require_artifact(ckpt_path(config, "flow"), "train-flow");
    require_artifact(ckpt_path(config, "decformer"), "train-compositor");
    auto set = prepare_eval_set(config, m);  // pins the dataset identity
    auto base = load_flow(ckpt_path(config, "flow"));
    auto dec = load_decformer(ckpt_path(config, "decformer"));
    FlowModel finetuned{nullptr};
    if (fs::exists(ckpt_path(config, "flow_dual_sigma")))
      finetuned = load_flow(ckpt_path(config, "flow_dual_sigma"));
    auto eval_opts = config.inpaint_eval;
    eval_opts.dual_sigma_lambda = config.dual_sigma.lambda;
    auto rows = evaluate_inpainting(ae, base, finetuned, dec, eval_opts);
    write_metric_text(m, config, config.out_dir + "/inpaint.csv", inpaint_to_csv(rows));
    nlohmann::json body = nlohmann::json::array();
    for (const auto& r : rows)
      body.push_back({{"variant", r.variant},
                      {"ssim", r.ssim},
                      {"psnr_db", r.psnr_db},
                      {"perceptual", r.perceptual},
                      {"seam_halo_l1", r.seam_halo_l1},
                      {"n", r.n}});
    write_metric_json(m, config, config.out_dir + "/inpaint.json", {{"rows", body}});
  } else if (stage == "eval-color") {
    auto ae = require_autoencoder(config);
    require_artifact(ckpt_path(config, "colorop"), "train-colorop");
    auto model = load_color_operator(ckpt_path(config, "colorop"));
    auto rows = evaluate_color(model, ae, config.color_eval);
    write_metric_text(m, config, config.out_dir + "/color.csv", color_to_csv(rows));
  } else if (stage == "erf") {
    auto ae = require_autoencoder(config);
    auto dec_rep = erf_report_decoder(ae, config.image_size, config.erf_probes, config.seed);
    auto enc_rep = erf_report_encoder(ae, config.image_size, config.erf_probes, config.seed);
    auto enc_layers = rf::load_layer_specs(data_file("toy_decoder_rf.json"));
    nlohmann::json body;
    auto pack = [](const ErfReport& r) {
      return nlohmann::json{{"r50", r.r50.mean},
                            {"r50_ci", {r.r50.ci_lo, r.r50.ci_hi}},
                            {"r90", r.r90.mean},
                            {"r90_ci", {r.r90.ci_lo, r.r90.ci_hi}},
                            {"probes", r.probes}};
    };
    body["decoder"] = pack(dec_rep);
    body["encoder"] = pack(enc_rep);
    body["toy_decoder_influence"] = rf::influence_field(enc_layers).str();
    write_metric_json(m, config, config.out_dir + "/erf.json", body);
  } else if (stage == "rf-calc") {
    auto enc = rf::load_layer_specs(data_file("flux_encoder_rf.json"));
    auto dec = rf::load_layer_specs(data_file("flux_decoder_rf.json"));
    std::ostringstream out;
    out << "Encoder receptive field (pixels)\n"
        << rf::render_table(rf::receptive_field_table(enc), false) << "\n"
        << "Decoder influence field (pixels)\n"
        << rf::render_table(rf::influence_field_table(dec), true) << "\n"
        << "Decoder receptive field (latents)\n"
        << rf::render_table(rf::receptive_field_table(dec), false) << "\n";
    std::printf("%s", out.str().c_str());
    write_metric_text(m, config, config.out_dir + "/rf_tables.txt", out.str());
  } else if (stage == "ablate") {
    auto ae = require_autoencoder(config);
    auto set = prepare_eval_set(config, m);
    auto rows =
        ablation_suite(config.decformer, config.decformer_train, ae, set,
                       config.ablation_seeds);
    write_metric_text(m, config, config.out_dir + "/ablation.csv", ablation_to_csv(rows));
  } else {
    throw std::runtime_error("unknown pipeline stage '" + stage + "'");
  }

  m.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_file_atomic(config.out_dir + "/manifest_" + stage + ".json",
                    manifest_to_json(m).dump(2));
  return m;
}

void plot_curves(const std::vector<std::string>& labels,
                 const std::vector<std::vector<double>>& xs,
                 const std::vector<std::vector<double>>& ys, const std::string& title,
                 const std::string& path) {
  const int W = 640, H = 420, ML = 60, MR = 20, MT = 40, MB = 40;
  cv::Mat canvas(H, W, CV_8UC3, cv::Scalar(255, 255, 255));
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (std::size_t s = 0; s < xs.size(); ++s)
    for (std::size_t i = 0; i < xs[s].size(); ++i) {
      xmin = std::min(xmin, xs[s][i]);
      xmax = std::max(xmax, xs[s][i]);
      ymin = std::min(ymin, ys[s][i]);
      ymax = std::max(ymax, ys[s][i]);
    }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  auto px = [&](double x) { return ML + int((x - xmin) / (xmax - xmin) * (W - ML - MR)); };
  auto py = [&](double y) {
    return H - MB - int((y - ymin) / (ymax - ymin) * (H - MT - MB));
  };
  cv::rectangle(canvas, {ML, MT}, {W - MR, H - MB}, cv::Scalar(0, 0, 0));
  const cv::Scalar colors[] = {{180, 60, 40}, {40, 140, 60}, {40, 60, 200}, {160, 40, 160}};
  for (std::size_t s = 0; s < xs.size(); ++s) {
    auto color = colors[s % 4];
    for (std::size_t i = 1; i < xs[s].size(); ++i)
      cv::line(canvas, {px(xs[s][i - 1]), py(ys[s][i - 1])}, {px(xs[s][i]), py(ys[s][i])},
               color, 2);
    cv::putText(canvas, labels[s], {ML + 8, MT + 18 + 16 * int(s)},
                cv::FONT_HERSHEY_SIMPLEX, 0.45, color, 1);
  }
  cv::putText(canvas, title, {ML, 24}, cv::FONT_HERSHEY_SIMPLEX, 0.6, {0, 0, 0}, 1);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", ymin);
  cv::putText(canvas, buf, {4, H - MB}, cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0}, 1);
  std::snprintf(buf, sizeof buf, "%.4g", ymax);
  cv::putText(canvas, buf, {4, MT + 8}, cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0}, 1);
  std::snprintf(buf, sizeof buf, "%.4g", xmin);
  cv::putText(canvas, buf, {ML, H - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0}, 1);
  std::snprintf(buf, sizeof buf, "%.4g", xmax);
  cv::putText(canvas, buf, {W - MR - 40, H - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0},
              1);
  cv::imwrite(path, canvas);
}

namespace {

// bin,mean_mse,count,low_sample CSV back into a curve
void parse_profile_csv(const std::string& text, std::vector<double>& xs,
                       std::vector<double>& ys) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("bin,", 0) == 0) continue;
    std::istringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');
    xs.push_back(std::stod(cell));
    std::getline(ls, cell, ',');
    ys.push_back(std::stod(cell));
  }
}

}  // namespace

void emit_report(const std::vector<std::string>& manifest_paths, const std::string& out_dir) {
  if (manifest_paths.empty()) throw std::runtime_error("emit_report: empty manifest list");
  ensure_dir(out_dir);
  std::ostringstream md;
  md << "# Experiment report\n\n";
  std::vector<std::string> sdf_labels;
  std::vector<std::vector<double>> sdf_xs, sdf_ys;
  for (const auto& mp : manifest_paths) {
    auto m = manifest_from_json(nlohmann::json::parse(read_file(mp)));
    md << "## Stage `" << m.stage << "`\n\n";
    md << "config hash `" << m.config_hash << "`";
    if (!m.dataset_hash.empty()) md << ", dataset hash `" << m.dataset_hash << "`";
    md << "\n\n";
    for (const auto& [path, hash] : m.artifacts) {
      if (!fs::exists(path))
        throw std::runtime_error("emit_report: missing metric file " + path);
      md << "- `" << path << "` (" << hash << ")\n";
      if (path.size() > 4 && path.substr(path.size() - 4) == ".csv") {
        auto text = read_file(path);
        md << "\n```\n" << text << "```\n";
        auto base = fs::path(path).filename().string();
        if (base.rfind("sdf_", 0) == 0 && base.find("_pixel") != std::string::npos) {
          std::vector<double> xs, ys;
          parse_profile_csv(text, xs, ys);
          if (!xs.empty()) {
            sdf_labels.push_back(base.substr(4, base.find("_pixel") - 4));
            sdf_xs.push_back(xs);
            sdf_ys.push_back(ys);
          }
        }
      }
    }
    md << "\n";
  }
  if (!sdf_xs.empty())
    plot_curves(sdf_labels, sdf_xs, sdf_ys, "mean MSE vs signed distance (px)",
                out_dir + "/sdf_profiles.png");
  write_file_atomic(out_dir + "/report.md", md.str());
}

}  // namespace pelc
