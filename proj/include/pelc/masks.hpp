#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace pelc {

enum class MaskKind { Soft, Binary, Original, Thin };
enum class MaskFamily { Ellipse, Polygon, BrushStroke, MatteImport };
enum class DownsampleMethod { Area, Bilinear, Nearest };

std::string to_string(MaskKind k);
std::string to_string(MaskFamily f);
MaskKind mask_kind_from_string(const std::string& s);
MaskFamily mask_family_from_string(const std::string& s);
DownsampleMethod downsample_method_from_string(const std::string& s);

// Full-resolution matte, values in [0,1], shape [H, W].
struct PixelMask {
  torch::Tensor data;
  MaskKind kind = MaskKind::Original;
};

// Latent-resolution mask, [h, w] in [0,1].
struct LatentMask {
  torch::Tensor data;
  int factor = 1;
};

struct SDFField {
  torch::Tensor data;  // [H, W], signed pixels; negative inside the mask
  bool degenerate = false;
};

struct HaloWeights {
  torch::Tensor pixel;   // [H, W] in [0,1]
  torch::Tensor latent;  // [h, w] in [0,1]
  int radius_px = 0;
  int radius_latent = 0;
  bool degenerate = false;
};

struct MaskGenOptions {
  // Directory of alpha mattes for MatteImport; empty falls back to a
  // procedural feathered shape.
  std::string matte_dir;
  // Edge-band feathering ramp applied to a random fraction of generated
  // masks, stand-in for graduated edge softening during training.
  double feather_sigma = 1.0;
};

torch::Tensor binarize(const torch::Tensor& m);
// 1-px boundary band: morphological XOR of 1-px dilation and erosion.
torch::Tensor edge_set(const torch::Tensor& mask01);
torch::Tensor gaussian_blur(const torch::Tensor& img_hw, double sigma);

PixelMask generate_mask(std::uint64_t seed, int height, int width, MaskFamily family,
                        const MaskGenOptions& opts = {});
// Convex-polygon rasterizer used by generate_mask; zero-area input gives an
// all-zero mask.
torch::Tensor rasterize_convex_polygon(const std::vector<std::pair<double, double>>& pts,
                                       int height, int width);

PixelMask augment_mask(const PixelMask& m, MaskKind kind, double sigma = 0.0);
LatentMask downsample_mask(const PixelMask& m, int factor, DownsampleMethod method);
SDFField compute_sdf(const PixelMask& m);
HaloWeights compute_halo(const PixelMask& m, int radius_px, int factor);

}  // namespace pelc
