#include <filesystem>
#include <string>
#include <tuple>

#include "pelc/common.hpp"
#include "pelc/pipeline.hpp"

#include <doctest.h>

using namespace pelc;
namespace fs = std::filesystem;

namespace {

ExperimentConfig micro_config(const std::string& out_dir) {
  ExperimentConfig c;
  c.out_dir = out_dir;
  c.image_size = 32;
  c.eval_set.size = 32;
  c.eval_set.per_kind = 1;
  c.autoencoder.base_width = 8;
  c.autoencoder.attention_midblock = false;
  c.autoencoder_train.steps = 2;
  c.autoencoder_train.batch_size = 2;
  c.autoencoder_train.image_size = 32;
  c.autoencoder_train.dataset_size = 8;
  c.autoencoder_train.log_every = 1;
  return c;
}

}  // namespace

TEST_CASE("config survives a json round trip") {
  ExperimentConfig c;
  c.seed = 42;
  c.out_dir = "runs/x";
  c.decformer.width = 80;
  c.decformer_train.lambda_h = 3.5;
  c.ablation_seeds = {4, 5, 6};
  auto j = config_to_json(c);
  auto back = config_from_json(j);
  CHECK(config_hash(back) == config_hash(c));
  CHECK(back.decformer.width == 80);
  CHECK(back.decformer_train.lambda_h == doctest::Approx(3.5));
  CHECK(back.ablation_seeds == std::vector<std::uint64_t>{4, 5, 6});
}

TEST_CASE("partial configs inherit defaults; unknown keys are schema errors") {
  auto c = config_from_json(nlohmann::json{{"seed", 7}, {"flow", {{"width", 48}}}});
  CHECK(c.seed == 7);
  CHECK(c.flow.width == 48);
  CHECK(c.flow.blocks == FlowConfig{}.blocks);

  CHECK_THROWS_WITH_AS(config_from_json(nlohmann::json{{"sede", 7}}),
                       doctest::Contains("unknown key"), std::runtime_error);
  CHECK_THROWS_WITH_AS(config_from_json(nlohmann::json{{"flow", {{"widht", 48}}}}),
                       doctest::Contains("flow.widht"), std::runtime_error);
}

TEST_CASE("config hash tracks content, not formatting") {
  ExperimentConfig a, b;
  CHECK(config_hash(a) == config_hash(b));
  b.decformer_train.lr *= 2;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("manifest json round trip") {
  RunManifest m;
  m.stage = "train-vae";
  m.config_hash = "abc";
  m.dataset_hash = "def";
  m.artifacts = {{"runs/x/ae.ckpt", "123"}};
  m.wall_seconds = 1.5;
  auto back = manifest_from_json(manifest_to_json(m));
  CHECK(back.stage == m.stage);
  CHECK(back.artifacts == m.artifacts);
  CHECK(back.wall_seconds == doctest::Approx(1.5));
}

TEST_CASE("the stage list is closed and unknown stages are rejected") {
  CHECK(kPipelineStages.size() == 12);
  ExperimentConfig c;
  c.out_dir = "test_pipeline_unknown";
  CHECK_THROWS_WITH_AS(run_pipeline("train-everything", c),
                       doctest::Contains("unknown pipeline stage"), std::runtime_error);
}

TEST_CASE("analysis stages name their missing prerequisite") {
  ExperimentConfig c;
  c.out_dir = "test_pipeline_missing";
  fs::remove_all(c.out_dir);
  CHECK_THROWS_WITH_AS(run_pipeline("eval-equivalence", c),
                       doctest::Contains("run stage 'train-vae' first"), std::runtime_error);
}

TEST_CASE("receptive-field stage writes its tables") {
  ExperimentConfig c;
  c.out_dir = "test_pipeline_rf";
  fs::remove_all(c.out_dir);
  auto m = run_pipeline("rf-calc", c);
  CHECK(m.stage == "rf-calc");
  CHECK(m.artifacts.count(c.out_dir + "/rf_tables.txt") == 1);
  CHECK(fs::exists(c.out_dir + "/manifest_rf-calc.json"));
  auto text = read_file(c.out_dir + "/rf_tables.txt");
  CHECK(text.find("217") != std::string::npos);
  CHECK(text.find("536") != std::string::npos);
  CHECK(text.find("35.5") != std::string::npos);
}

TEST_CASE("micro pipeline smoke run with hash-identical reruns") {
  auto c = micro_config("test_pipeline_micro");
  fs::remove_all(c.out_dir);

  auto m_vae = run_pipeline("train-vae", c);
  CHECK(fs::exists(c.out_dir + "/ae.ckpt"));
  CHECK(m_vae.artifacts.count(c.out_dir + "/ae_train_log.csv") == 1);

  auto m1 = run_pipeline("eval-equivalence", c);
  CHECK(m1.dataset_hash != "");
  CHECK(m1.artifacts.count(c.out_dir + "/equivalence.json") == 1);
  CHECK(m1.artifacts.count(c.out_dir + "/equivalence.csv") == 1);

  // Rerunning the analysis against the same checkpoints and pinned eval set
  // must reproduce every metric file bit for bit.
  auto m2 = run_pipeline("eval-equivalence", c);
  CHECK(m2.dataset_hash == m1.dataset_hash);
  CHECK(m2.artifacts == m1.artifacts);

  auto body = nlohmann::json::parse(read_file(c.out_dir + "/equivalence.json"));
  CHECK(body.at("config_hash") == config_hash(c));
  CHECK(body.at("reports").size() == 6);  // no compositor checkpoint yet
}

TEST_CASE("report assembly embeds tables and rejects an empty manifest list") {
  CHECK_THROWS(emit_report({}, "test_pipeline_report"));

  auto c = micro_config("test_pipeline_micro");  // reuses the smoke-run output
  if (!fs::exists(c.out_dir + "/manifest_eval-equivalence.json")) {
    run_pipeline("train-vae", c);
    run_pipeline("eval-equivalence", c);
  }
  emit_report({c.out_dir + "/manifest_eval-equivalence.json"}, "test_pipeline_report");
  auto md = read_file("test_pipeline_report/report.md");
  CHECK(md.find("eval-equivalence") != std::string::npos);
  CHECK(md.find("equivalence.csv") != std::string::npos);
  CHECK(md.find("heuristic_area") != std::string::npos);
}

TEST_CASE("line plots render to disk") {
  plot_curves({"a", "b"}, {{0, 1, 2}, {0, 1, 2}}, {{0.0, 1.0, 0.5}, {1.0, 0.2, 0.8}},
              "test curves", "test_pipeline_plot.png");
  CHECK(fs::exists("test_pipeline_plot.png"));
  CHECK(fs::file_size("test_pipeline_plot.png") > 500);
}
