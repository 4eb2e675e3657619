#include "pelc/rf.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace pelc::rf {

namespace {

Rational parse_stride(const nlohmann::json& v) {
  if (v.is_number_integer()) return Rational(v.get<std::int64_t>());
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    auto slash = s.find('/');
    if (slash == std::string::npos)
      return Rational(std::stoll(s));
    return Rational(std::stoll(s.substr(0, slash)), std::stoll(s.substr(slash + 1)));
  }
  throw std::invalid_argument("layer stride must be an integer or \"p/q\" string");
}

}  // namespace

Rational receptive_field(const std::vector<LayerSpec>& layers) {
  Rational r(1), stride(1);
  for (const auto& l : layers) {
    r += Rational(l.kernel_k - 1) * stride;
    stride *= l.stride_s;
  }
  return r;
}

Rational influence_field(const std::vector<LayerSpec>& layers) {
  Rational r(1), stride(1), scale(1);
  for (const auto& l : layers) {
    r += Rational(l.kernel_k - 1) * stride * scale;
    if (l.upscale_f > 1) {
      r *= Rational(l.upscale_f);
      scale *= Rational(l.upscale_f);
    } else {
      stride *= l.stride_s;
    }
  }
  return r;
}

std::vector<StageRow> receptive_field_table(const std::vector<LayerSpec>& layers) {
  std::vector<StageRow> rows;
  Rational r(1), stride(1);
  for (const auto& l : layers) {
    if (rows.empty() || rows.back().name != l.name)
      rows.push_back({l.name, stride, Rational(0), r});
    Rational contrib = Rational(l.kernel_k - 1) * stride;
    r += contrib;
    rows.back().layer_sum += contrib;
    rows.back().cumulative = r;
    stride *= l.stride_s;
  }
  return rows;
}

std::vector<StageRow> influence_field_table(const std::vector<LayerSpec>& layers) {
  std::vector<StageRow> rows;
  Rational r(1), stride(1), scale(1);
  for (const auto& l : layers) {
    if (rows.empty() || rows.back().name != l.name)
      rows.push_back({l.name, scale, Rational(0), r});
    if (l.upscale_f > 1) {
      r *= Rational(l.upscale_f);
      scale *= Rational(l.upscale_f);
    } else {
      Rational contrib = Rational(l.kernel_k - 1) * stride * scale;
      r += contrib;
      rows.back().layer_sum += contrib;
      stride *= l.stride_s;
    }
    rows.back().cumulative = r;
  }
  // Layer sums are reported in units of the scale entering the stage's convs;
  // contributions already include the running upscale, matching the recurrence.
  return rows;
}

std::vector<LayerSpec> load_layer_specs(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) throw std::runtime_error("cannot open layer spec file: " + json_path);
  nlohmann::json j;
  in >> j;
  if (!j.is_array()) throw std::invalid_argument("layer spec file must contain a JSON array");
  std::vector<LayerSpec> layers;
  for (const auto& e : j) {
    LayerSpec l;
    l.name = e.at("name").get<std::string>();
    l.kernel_k = e.at("k").get<int>();
    l.stride_s = parse_stride(e.at("s"));
    l.upscale_f = e.value("f", 1);
    if (l.kernel_k < 1) throw std::invalid_argument("layer kernel must be >= 1");
    if (!(Rational(0) < l.stride_s)) throw std::invalid_argument("layer stride must be positive");
    if (l.upscale_f != 1 && l.upscale_f != 2)
      throw std::invalid_argument("layer upscale factor must be 1 or 2");
    layers.push_back(l);
  }
  return layers;
}

std::string render_table(const std::vector<StageRow>& rows, bool influence) {
  std::ostringstream os;
  os << (influence ? "Layer            Upscale-in  Layer Sum  Cumulative field\n"
                   : "Layer            Eff. Stride Layer Sum  Cumulative field\n");
  for (const auto& row : rows) {
    os << row.name;
    for (std::size_t i = row.name.size(); i < 17; ++i) os << ' ';
    std::string s0 = row.effective_stride.str(), s1 = row.layer_sum.str(), s2 = row.cumulative.str();
    os << s0;
    for (std::size_t i = s0.size(); i < 12; ++i) os << ' ';
    os << s1;
    for (std::size_t i = s1.size(); i < 11; ++i) os << ' ';
    os << s2 << "\n";
  }
  return os.str();
}

}  // namespace pelc::rf
