#include "pelc/dataset.hpp"

#include <filesystem>
#include <stdexcept>

#include <json.hpp>

#include "pelc/common.hpp"
#include "pelc/image.hpp"

namespace fs = std::filesystem;

namespace pelc {

namespace {

constexpr MaskKind kKinds[4] = {MaskKind::Soft, MaskKind::Binary, MaskKind::Original,
                                MaskKind::Thin};
constexpr MaskFamily kFamilies[4] = {MaskFamily::Ellipse, MaskFamily::Polygon,
                                     MaskFamily::BrushStroke, MaskFamily::MatteImport};

// Soft-mask blur sigma, stated at 1024-px scale and rescaled to the
// working resolution.
double soft_sigma(int size) { return std::max(1.0, 21.0 * size / 1024.0); }

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t h = seed ^ (salt * 0x9e3779b97f4a7c15ull);
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdull;
  h ^= h >> 33;
  return h;
}

}  // namespace

CompositeSample make_composite(std::uint64_t seed, int size, MaskKind kind) {
  CompositeSample s;
  s.seed = seed;
  s.x_a = generate_image(mix(seed, 1), size, size);
  s.x_b = generate_image(mix(seed, 2), size, size);
  s.family = kFamilies[mix(seed, 3) % 4];
  auto raw = generate_mask(mix(seed, 4), size, size, s.family);
  s.mask = augment_mask(raw, kind, kind == MaskKind::Soft ? soft_sigma(size) : 0.0);
  return s;
}

CompositeSample make_composite(std::uint64_t seed, int size) {
  return make_composite(seed, size, kKinds[mix(seed, 5) % 4]);
}

std::uint64_t tensor_content_hash(const torch::Tensor& t) {
  auto f = t.to(torch::kFloat32).contiguous();
  std::string buf;
  for (auto s : t.sizes()) buf.append(reinterpret_cast<const char*>(&s), sizeof s);
  buf.append(reinterpret_cast<const char*>(f.data_ptr<float>()),
             std::size_t(f.numel()) * 4);
  return fnv1a64(buf);
}

EvalSet build_eval_set(const EvalSetConfig& config) {
  EvalSet set;
  set.config = config;
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto fold = [&h](std::uint64_t v) {
    h ^= v;
    h *= 0x100000001b3ull;
  };
  for (int k = 0; k < 4; ++k) {
    for (int i = 0; i < config.per_kind; ++i) {
      auto seed = mix(config.seed, std::uint64_t(k * 100003 + i + 11));
      auto s = make_composite(seed, config.size, kKinds[k]);
      fold(tensor_content_hash(s.x_a));
      fold(tensor_content_hash(s.x_b));
      fold(tensor_content_hash(s.mask.data));
      set.samples.push_back(std::move(s));
    }
  }
  set.hash = h;
  return set;
}

void save_eval_set(const EvalSet& set, const std::string& dir) {
  ensure_dir(dir);
  nlohmann::json manifest;
  manifest["size"] = set.config.size;
  manifest["per_kind"] = set.config.per_kind;
  manifest["seed"] = set.config.seed;
  manifest["hash"] = to_hex(set.hash);
  auto& entries = manifest["samples"] = nlohmann::json::array();
  for (std::size_t i = 0; i < set.samples.size(); ++i) {
    const auto& s = set.samples[i];
    std::string stem = "sample_" + std::to_string(i);
    save_image_png(s.x_a, dir + "/" + stem + "_a.png");
    save_image_png(s.x_b, dir + "/" + stem + "_b.png");
    save_mask_png(s.mask.data, dir + "/" + stem + "_mask.png",
                  s.mask.kind == MaskKind::Binary || s.mask.kind == MaskKind::Thin);
    entries.push_back({{"a", stem + "_a.png"},
                       {"b", stem + "_b.png"},
                       {"mask", stem + "_mask.png"},
                       {"kind", to_string(s.mask.kind)},
                       {"family", to_string(s.family)},
                       {"seed", s.seed}});
  }
  write_file_atomic(dir + "/manifest.json", manifest.dump(2));
}

EvalSet load_eval_set(const std::string& dir) {
  auto manifest = nlohmann::json::parse(read_file(dir + "/manifest.json"));
  EvalSet set;
  set.config.size = manifest.at("size");
  set.config.per_kind = manifest.at("per_kind");
  set.config.seed = manifest.at("seed");
  // Regenerate rather than trusting quantized PNGs for the hash: the
  // manifest pins the generator inputs, the hash pins the arrays.
  auto rebuilt = build_eval_set(set.config);
  if (to_hex(rebuilt.hash) != manifest.at("hash").get<std::string>())
    throw std::runtime_error("eval set hash mismatch in " + dir +
                             ": expected " + manifest.at("hash").get<std::string>() +
                             ", regenerated " + to_hex(rebuilt.hash));
  return rebuilt;
}

}  // namespace pelc
