#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

#include <json.hpp>

namespace pelc {

// Checkpoint container: magic "PELCCKPT", u64 little-endian JSON byte
// length, JSON metadata (kind, config, seed, stats, ordered tensor index
// with shapes), then raw float32 tensor data in index order.
struct Checkpoint {
  nlohmann::json meta;
  std::vector<std::pair<std::string, torch::Tensor>> tensors;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Named parameters + buffers of a module, sorted by name, as float32 CPU.
std::vector<std::pair<std::string, torch::Tensor>> snapshot_module(const torch::nn::Module& m);
void restore_module(torch::nn::Module& m,
                    const std::vector<std::pair<std::string, torch::Tensor>>& tensors);

}  // namespace pelc
