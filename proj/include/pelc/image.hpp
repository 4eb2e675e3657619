#pragma once

#include <cstdint>
#include <string>

#include <torch/torch.h>

namespace pelc {

// Images are [C, H, W] float tensors in [0,1].

// Procedural toy photograph: smooth color gradients, a few soft shapes and a
// low-frequency texture. Deterministic per seed.
torch::Tensor generate_image(std::uint64_t seed, int height, int width, int channels = 3);

void save_image_png(const torch::Tensor& img_chw, const std::string& path);
torch::Tensor load_image_png(const std::string& path);

// Masks: 8-bit PNG for binary, 16-bit for everything else.
void save_mask_png(const torch::Tensor& mask_hw, const std::string& path, bool binary);
torch::Tensor load_mask_png(const std::string& path);

}  // namespace pelc
