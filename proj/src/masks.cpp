#include "pelc/masks.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "pelc/common.hpp"
#include "pelc/image.hpp"

namespace F = torch::nn::functional;

namespace pelc {

namespace {

torch::Tensor coord_grid(int height, int width) {
  auto ys = torch::arange(height, torch::kFloat32).view({height, 1}).expand({height, width});
  auto xs = torch::arange(width, torch::kFloat32).view({1, width}).expand({height, width});
  return torch::stack({ys, xs}, 0);  // [2, H, W]
}

double uniform(at::Generator& gen, double lo, double hi) {
  auto t = at::rand({1}, gen, at::TensorOptions().dtype(at::kDouble));
  return lo + (hi - lo) * t.item<double>();
}

// Soft step over ~1px so generated mattes are anti-aliased.
torch::Tensor soft_inside(const torch::Tensor& signed_dist) {
  return torch::clamp(0.5 - signed_dist, 0.0, 1.0);
}

torch::Tensor ellipse_mask(at::Generator& gen, int h, int w) {
  double cy = uniform(gen, 0.3, 0.7) * h;
  double cx = uniform(gen, 0.3, 0.7) * w;
  double ay = uniform(gen, 0.15, 0.4) * h;
  double ax = uniform(gen, 0.15, 0.4) * w;
  double th = uniform(gen, 0.0, M_PI);
  auto g = coord_grid(h, w);
  auto dy = g[0] - cy, dx = g[1] - cx;
  auto u = dx * std::cos(th) + dy * std::sin(th);
  auto v = -dx * std::sin(th) + dy * std::cos(th);
  auto q = torch::sqrt((u / ax).pow(2) + (v / ay).pow(2));
  // approximate signed pixel distance to the ellipse boundary
  auto dist = (q - 1.0) * std::min(ax, ay);
  return soft_inside(dist);
}

torch::Tensor brush_mask(at::Generator& gen, int h, int w) {
  auto g = coord_grid(h, w);
  auto acc = torch::zeros({h, w});
  double y = uniform(gen, 0.2, 0.8) * h;
  double x = uniform(gen, 0.2, 0.8) * w;
  int steps = 12 + int(uniform(gen, 0, 20));
  double radius = uniform(gen, 0.05, 0.12) * std::min(h, w);
  for (int i = 0; i < steps; ++i) {
    auto d = torch::sqrt((g[0] - y).pow(2) + (g[1] - x).pow(2));
    acc = torch::maximum(acc, soft_inside(d - radius));
    y += uniform(gen, -1.0, 1.0) * 0.08 * h;
    x += uniform(gen, -1.0, 1.0) * 0.08 * w;
    y = std::clamp(y, 0.0, double(h - 1));
    x = std::clamp(x, 0.0, double(w - 1));
    radius = std::clamp(radius + uniform(gen, -0.6, 0.6), 1.5, 0.2 * std::min(h, w));
  }
  return acc;
}

}  // namespace

std::string to_string(MaskKind k) {
  switch (k) {
    case MaskKind::Soft: return "soft";
    case MaskKind::Binary: return "binary";
    case MaskKind::Original: return "original";
    case MaskKind::Thin: return "thin";
  }
  return "?";
}

std::string to_string(MaskFamily f) {
  switch (f) {
    case MaskFamily::Ellipse: return "ellipse";
    case MaskFamily::Polygon: return "polygon";
    case MaskFamily::BrushStroke: return "brush-stroke";
    case MaskFamily::MatteImport: return "matte-import";
  }
  return "?";
}

MaskKind mask_kind_from_string(const std::string& s) {
  if (s == "soft") return MaskKind::Soft;
  if (s == "binary") return MaskKind::Binary;
  if (s == "original") return MaskKind::Original;
  if (s == "thin") return MaskKind::Thin;
  throw std::invalid_argument("unknown mask kind: " + s);
}

MaskFamily mask_family_from_string(const std::string& s) {
  if (s == "ellipse") return MaskFamily::Ellipse;
  if (s == "polygon") return MaskFamily::Polygon;
  if (s == "brush-stroke") return MaskFamily::BrushStroke;
  if (s == "matte-import") return MaskFamily::MatteImport;
  throw std::invalid_argument("unknown mask family: " + s);
}

DownsampleMethod downsample_method_from_string(const std::string& s) {
  if (s == "area") return DownsampleMethod::Area;
  if (s == "bilinear") return DownsampleMethod::Bilinear;
  if (s == "nearest") return DownsampleMethod::Nearest;
  throw std::invalid_argument("unknown downsample method: " + s);
}

torch::Tensor binarize(const torch::Tensor& m) { return (m >= 0.5).to(torch::kFloat32); }

torch::Tensor edge_set(const torch::Tensor& mask01) {
  auto m = binarize(mask01).view({1, 1, mask01.size(0), mask01.size(1)});
  auto padded = F::pad(m, F::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReplicate));
  auto dil = F::max_pool2d(padded, F::MaxPool2dFuncOptions(3).stride(1));
  auto ero = 1.0 - F::max_pool2d(1.0 - padded, F::MaxPool2dFuncOptions(3).stride(1));
  return (dil != ero).to(torch::kFloat32).view({mask01.size(0), mask01.size(1)});
}

torch::Tensor gaussian_blur(const torch::Tensor& img_hw, double sigma) {
  if (sigma <= 0) throw std::invalid_argument("gaussian_blur: sigma must be > 0");
  int radius = std::max(1, int(std::ceil(3.0 * sigma)));
  auto xs = torch::arange(-radius, radius + 1, torch::kFloat32);
  auto k = torch::exp(-xs * xs / float(2.0 * sigma * sigma));
  k = k / k.sum();
  auto x = img_hw.view({1, 1, img_hw.size(0), img_hw.size(1)});
  x = F::pad(x, F::PadFuncOptions({radius, radius, 0, 0}).mode(torch::kReflect));
  x = F::conv2d(x, k.view({1, 1, 1, 2 * radius + 1}));
  x = F::pad(x, F::PadFuncOptions({0, 0, radius, radius}).mode(torch::kReflect));
  x = F::conv2d(x, k.view({1, 1, 2 * radius + 1, 1}));
  return x.view({img_hw.size(0), img_hw.size(1)});
}

torch::Tensor rasterize_convex_polygon(const std::vector<std::pair<double, double>>& pts,
                                       int height, int width) {
  if (pts.size() < 3) return torch::zeros({height, width});
  // signed area (shoelace); zero-area polygons rasterize to nothing
  double area = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    auto [y0, x0] = pts[i];
    auto [y1, x1] = pts[(i + 1) % pts.size()];
    area += x0 * y1 - x1 * y0;
  }
  area *= 0.5;
  if (std::abs(area) < 1e-9) return torch::zeros({height, width});
  double orient = area > 0 ? 1.0 : -1.0;
  auto g = coord_grid(height, width);
  torch::Tensor inside_dist;  // max over half-plane signed distances (outside-positive)
  for (std::size_t i = 0; i < pts.size(); ++i) {
    auto [y0, x0] = pts[i];
    auto [y1, x1] = pts[(i + 1) % pts.size()];
    double ey = y1 - y0, ex = x1 - x0;
    double len = std::hypot(ey, ex);
    if (len < 1e-12) continue;
    // outward normal w.r.t. polygon orientation
    auto d = (orient * ((g[1] - x0) * ey - (g[0] - y0) * ex)) / len;
    inside_dist = inside_dist.defined() ? torch::maximum(inside_dist, d) : d;
  }
  return soft_inside(inside_dist);
}

PixelMask generate_mask(std::uint64_t seed, int height, int width, MaskFamily family,
                        const MaskGenOptions& opts) {
  if (height < 16 || width < 16)
    throw std::invalid_argument("generate_mask: shape must be at least 16x16");
  auto gen = make_generator(seed ^ 0x9e3779b97f4a7c15ull);
  torch::Tensor m;
  switch (family) {
    case MaskFamily::Ellipse:
      m = ellipse_mask(gen, height, width);
      break;
    case MaskFamily::Polygon: {
      int n = 4 + int(uniform(gen, 0, 5));
      double cy = uniform(gen, 0.35, 0.65) * height;
      double cx = uniform(gen, 0.35, 0.65) * width;
      std::vector<std::pair<double, double>> pts;
      for (int i = 0; i < n; ++i) {
        double ang = 2.0 * M_PI * (i + uniform(gen, -0.2, 0.2)) / n;
        double r = uniform(gen, 0.18, 0.42) * std::min(height, width);
        pts.emplace_back(cy + r * std::sin(ang), cx + r * std::cos(ang));
      }
      m = rasterize_convex_polygon(pts, height, width);
      break;
    }
    case MaskFamily::BrushStroke:
      m = brush_mask(gen, height, width);
      break;
    case MaskFamily::MatteImport: {
      if (!opts.matte_dir.empty()) {
        std::vector<std::string> files;
        for (auto& e : std::filesystem::directory_iterator(opts.matte_dir))
          if (e.path().extension() == ".png") files.push_back(e.path().string());
        if (!files.empty()) {
          std::sort(files.begin(), files.end());
          auto img = load_mask_png(files[seed % files.size()]);
          m = F::interpolate(img.view({1, 1, img.size(0), img.size(1)}),
                             F::InterpolateFuncOptions()
                                 .size(std::vector<std::int64_t>{height, width})
                                 .mode(torch::kBilinear)
                                 .align_corners(false))
                  .view({height, width});
          break;
        }
      }
      // no matte set available: procedural feathered shape
      m = gaussian_blur(binarize(ellipse_mask(gen, height, width)),
                        std::max(0.5, opts.feather_sigma));
      break;
    }
  }
  return {torch::clamp(m, 0.0, 1.0).contiguous(), MaskKind::Original};
}

PixelMask augment_mask(const PixelMask& m, MaskKind kind, double sigma) {
  switch (kind) {
    case MaskKind::Original:
      return {m.data.clone(), MaskKind::Original};
    case MaskKind::Binary:
      return {binarize(m.data), MaskKind::Binary};
    case MaskKind::Soft:
      if (sigma <= 0) throw std::invalid_argument("augment_mask: soft kind needs sigma > 0");
      return {torch::clamp(gaussian_blur(m.data, sigma), 0.0, 1.0), MaskKind::Soft};
    case MaskKind::Thin:
      return {edge_set(m.data), MaskKind::Thin};
  }
  throw std::logic_error("unreachable");
}

LatentMask downsample_mask(const PixelMask& m, int factor, DownsampleMethod method) {
  const auto h = m.data.size(0), w = m.data.size(1);
  if (factor < 1 || h % factor != 0 || w % factor != 0)
    throw std::invalid_argument("downsample_mask: dimensions not divisible by factor");
  auto x = m.data.view({1, 1, h, w});
  torch::Tensor out;
  switch (method) {
    case DownsampleMethod::Area:
      out = F::avg_pool2d(x, F::AvgPool2dFuncOptions(factor));
      break;
    case DownsampleMethod::Bilinear:
      out = F::interpolate(x, F::InterpolateFuncOptions()
                                  .size(std::vector<std::int64_t>{h / factor, w / factor})
                                  .mode(torch::kBilinear)
                                  .align_corners(false));
      break;
    case DownsampleMethod::Nearest:
      out = F::interpolate(x, F::InterpolateFuncOptions()
                                  .size(std::vector<std::int64_t>{h / factor, w / factor})
                                  .mode(torch::kNearest));
      break;
  }
  return {torch::clamp(out, 0.0, 1.0).view({h / factor, w / factor}).contiguous(), factor};
}

namespace {

// Felzenszwalb-Huttenlocher 1D squared distance transform.
void dt1d(const float* f, float* d, int n) {
  std::vector<int> v(n);
  std::vector<float> z(n + 1);
  int k = 0;
  v[0] = 0;
  z[0] = -1e30f;
  z[1] = 1e30f;
  for (int q = 1; q < n; ++q) {
    float s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0f * (q - v[k]));
    while (s <= z[k]) {
      --k;
      s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0f * (q - v[k]));
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = 1e30f;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    d[q] = (q - v[k]) * (q - v[k]) + f[v[k]];
  }
}

torch::Tensor squared_edt(const torch::Tensor& sites) {
  const int h = int(sites.size(0)), w = int(sites.size(1));
  auto d = torch::where(sites > 0.5, torch::zeros_like(sites),
                        torch::full_like(sites, 1e30f))
               .contiguous();
  auto acc = d.accessor<float, 2>();
  std::vector<float> col(h), colo(h);
  for (int j = 0; j < w; ++j) {
    for (int i = 0; i < h; ++i) col[i] = acc[i][j];
    dt1d(col.data(), colo.data(), h);
    for (int i = 0; i < h; ++i) acc[i][j] = colo[i];
  }
  std::vector<float> row(w), rowo(w);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) row[j] = acc[i][j];
    dt1d(row.data(), rowo.data(), w);
    for (int j = 0; j < w; ++j) acc[i][j] = rowo[j];
  }
  return d;
}

}  // namespace

SDFField compute_sdf(const PixelMask& m) {
  auto inside = binarize(m.data);
  auto edges = edge_set(m.data);
  const auto h = m.data.size(0), w = m.data.size(1);
  if (edges.sum().item<double>() == 0.0) {
    // no boundary: constant one-sided field at sentinel distance
    double sentinel = double(h + w);
    bool full = inside.mean().item<double>() > 0.5;
    return {torch::full({h, w}, full ? -sentinel : sentinel), true};
  }
  auto dist = torch::sqrt(squared_edt(edges));
  auto sign = torch::where(inside > 0.5, -torch::ones_like(dist), torch::ones_like(dist));
  return {sign * dist, false};
}

HaloWeights compute_halo(const PixelMask& m, int radius_px, int factor) {
  if (radius_px < 1) throw std::invalid_argument("compute_halo: radius must be >= 1");
  const auto h = m.data.size(0), w = m.data.size(1);
  auto band = [](const torch::Tensor& edges, int radius) {
    auto xs = torch::arange(-radius, radius + 1, torch::kFloat32);
    auto r = torch::sqrt(xs.view({-1, 1}).pow(2) + xs.view({1, -1}).pow(2));
    auto kernel = torch::clamp(1.0 - r / double(radius), 0.0, 1.0);
    auto x = edges.view({1, 1, edges.size(0), edges.size(1)});
    auto out = F::conv2d(x, kernel.view({1, 1, kernel.size(0), kernel.size(1)}),
                         F::Conv2dFuncOptions().padding(radius));
    return torch::clamp(out, 0.0, 1.0).view({edges.size(0), edges.size(1)});
  };

  HaloWeights halo;
  halo.radius_px = radius_px;
  auto edges_px = edge_set(m.data);
  halo.degenerate = edges_px.sum().item<double>() == 0.0;
  halo.pixel = halo.degenerate ? torch::zeros({h, w}) : band(edges_px, radius_px);

  auto m_latent = downsample_mask({m.data, m.kind}, factor, DownsampleMethod::Area);
  double s = double(factor);  // max(H/h, W/w) with integral stride
  halo.radius_latent = std::max(1, int(std::lround(double(radius_px) / s)));
  auto edges_l = edge_set(m_latent.data);
  halo.latent = edges_l.sum().item<double>() == 0.0
                    ? torch::zeros_like(m_latent.data)
                    : band(edges_l, halo.radius_latent);
  return halo;
}

}  // namespace pelc
