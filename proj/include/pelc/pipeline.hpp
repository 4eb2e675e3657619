#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "pelc/autoencoder.hpp"
#include "pelc/colorop.hpp"
#include "pelc/dataset.hpp"
#include "pelc/decformer.hpp"
#include "pelc/flow.hpp"

namespace pelc {

// Single-document experiment configuration. Serialization is canonical
// (sorted keys) so the config hash is stable; the hash is embedded in every
// artifact a stage emits.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "runs/default";
  int workers = 1;

  int image_size = 48;
  EvalSetConfig eval_set;

  AutoencoderConfig autoencoder;
  AutoencoderTrainOptions autoencoder_train;

  DecformerConfig decformer;
  DecformerTrainOptions decformer_train;

  FlowConfig flow;
  FlowTrainOptions flow_train;
  DualSigmaFinetuneOptions dual_sigma;
  InpaintEvalOptions inpaint_eval;

  ColorOpConfig colorop;
  ColorTrainOptions colorop_train;
  ColorEvalOptions color_eval;

  int erf_probes = 24;
  std::vector<std::uint64_t> ablation_seeds = {1, 2};
};

nlohmann::json config_to_json(const ExperimentConfig& c);
// Unknown keys are a schema error; listed keys override defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
std::string config_hash(const ExperimentConfig& c);

extern const std::vector<std::string> kPipelineStages;

struct RunManifest {
  std::string stage;
  std::string config_hash;
  std::string dataset_hash;
  std::map<std::string, std::string> artifacts;  // path -> content hash
  double wall_seconds = 0.0;
};

nlohmann::json manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

// Stages: train-vae, train-compositor, train-flow, finetune-dual-sigma,
// train-colorop, eval-equivalence, eval-sdf, eval-inpaint, eval-color, erf,
// rf-calc, ablate. Outputs are written atomically under config.out_dir and a
// manifest_<stage>.json is persisted. Missing prerequisites raise an error
// naming the stage to run first.
RunManifest run_pipeline(const std::string& stage, const ExperimentConfig& config);

// Markdown + CSV tables and PNG plots assembled from stage manifests.
void emit_report(const std::vector<std::string>& manifest_paths, const std::string& out_dir);

// Simple line-plot renderer (one series per label) used by emit_report.
void plot_curves(const std::vector<std::string>& labels,
                 const std::vector<std::vector<double>>& xs,
                 const std::vector<std::vector<double>>& ys, const std::string& title,
                 const std::string& path);

}  // namespace pelc
