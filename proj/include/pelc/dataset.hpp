#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "pelc/masks.hpp"

namespace pelc {

// One compositing example: two source images plus an augmented mask.
struct CompositeSample {
  torch::Tensor x_a;  // [3, H, W] in [0,1]
  torch::Tensor x_b;
  PixelMask mask;
  MaskFamily family;
  std::uint64_t seed;
};

// Deterministic sample constructor; the training streams index into the
// seed space directly so workers can partition it without coordination.
CompositeSample make_composite(std::uint64_t seed, int size, MaskKind kind);

// Mask kind chosen round-robin from the seed when unspecified.
CompositeSample make_composite(std::uint64_t seed, int size);

struct EvalSetConfig {
  int size = 48;
  int per_kind = 16;  // samples per mask kind (soft, binary, original, thin)
  std::uint64_t seed = 500;
};

struct EvalSet {
  EvalSetConfig config;
  std::vector<CompositeSample> samples;
  std::uint64_t hash = 0;  // content hash over all arrays
};

EvalSet build_eval_set(const EvalSetConfig& config);

std::uint64_t tensor_content_hash(const torch::Tensor& t);

// PNG + JSON persistence. save writes images/masks plus manifest.json
// (paths, seeds, kinds, content hash); load verifies the hash.
void save_eval_set(const EvalSet& set, const std::string& dir);
EvalSet load_eval_set(const std::string& dir);

}  // namespace pelc
