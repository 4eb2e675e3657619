#pragma once

#include <string>
#include <vector>

#include "pelc/rational.hpp"

namespace pelc::rf {

// One convolutional (or interpolation) layer. Layers sharing a name form a
// stage row in the printed tables. Upsampling is modeled as an
// interpolation layer with kernel_k = 1, stride_s = 1/f and upscale_f = f:
// the receptive-field pass reads the fractional stride, the influence-field
// pass reads the upscale factor.
struct LayerSpec {
  std::string name;
  int kernel_k = 1;
  Rational stride_s{1};
  int upscale_f = 1;
};

struct StageRow {
  std::string name;
  Rational effective_stride;  // stride (RF) / cumulative upscale (influence) entering the stage
  Rational layer_sum;
  Rational cumulative;
};

// r0 = sum_l (k_l - 1) * prod_{i<l} s_i + 1
Rational receptive_field(const std::vector<LayerSpec>& layers);

// Influence extent of one input site in the output, with upsampling layers
// scaling the accumulated field: r <- r * f; convs add (k-1) * stride * scale.
// Collapses to prod f_k when every kernel is 1.
Rational influence_field(const std::vector<LayerSpec>& layers);

std::vector<StageRow> receptive_field_table(const std::vector<LayerSpec>& layers);
std::vector<StageRow> influence_field_table(const std::vector<LayerSpec>& layers);

std::vector<LayerSpec> load_layer_specs(const std::string& json_path);
std::string render_table(const std::vector<StageRow>& rows, bool influence);

}  // namespace pelc::rf
