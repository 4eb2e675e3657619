#include "pelc/equivalence.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "pelc/common.hpp"
#include "pelc/compositor.hpp"
#include "pelc/metrics.hpp"

namespace pelc {

LatentCompositor make_heuristic_compositor(int factor, DownsampleMethod method) {
  return [factor, method](const torch::Tensor& z_a, const torch::Tensor& z_b,
                          const torch::Tensor&, const CompositeSample& s) {
    return heuristic_blend(z_a, z_b, s.mask, factor, method);
  };
}

LatentCompositor make_oracle_compositor(bool alpha_only) {
  return [alpha_only](const torch::Tensor& z_a, const torch::Tensor& z_b,
                      const torch::Tensor& z_t, const CompositeSample&) {
    auto field = project_alpha_shift(z_a, z_b, z_t);
    if (alpha_only) field.shift = torch::zeros_like(field.shift);
    return apply_blend(z_a, z_b, field);
  };
}

LatentCompositor make_ground_truth_compositor() {
  return [](const torch::Tensor&, const torch::Tensor&, const torch::Tensor& z_t,
            const CompositeSample&) { return z_t; };
}

namespace {

void accumulate(MethodMetrics& m, double s, double p, double perc, double h, double e) {
  m.ssim += s;
  m.psnr_db += p;
  m.perceptual += perc;
  m.halo_l1 += h;
  m.mse += e;
  m.n += 1;
}

void finalize(MethodMetrics& m) {
  if (m.n == 0) return;
  m.ssim /= m.n;
  m.psnr_db /= m.n;
  m.perceptual /= m.n;
  m.halo_l1 /= m.n;
  m.mse /= m.n;
}

}  // namespace

EquivalenceReport evaluate_equivalence(const FrozenAutoencoder& ae, const EvalSet& set,
                                       const std::string& method_name,
                                       const LatentCompositor& compositor,
                                       int halo_radius_px) {
  if (set.samples.empty()) throw std::invalid_argument("evaluate_equivalence: empty set");
  const int f = ae.config().factor;
  PerceptualSurrogate perceptual(ae.config().image_channels);
  EquivalenceReport rep;
  rep.method = method_name;
  double oor = 0.0;
  torch::NoGradGuard ng;
  for (const auto& s : set.samples) {
    auto z_a = ae.encode(s.x_a);
    auto z_b = ae.encode(s.x_b);
    auto x_comp = compose_pixels(s.x_a, s.x_b, s.mask);
    auto z_t = ae.encode(x_comp);
    auto zhat = compositor(z_a, z_b, z_t, s);
    auto y = ae.decode(zhat);
    auto y_ref = ae.decode(z_t);
    auto halo = compute_halo(s.mask, halo_radius_px, f);
    double h = halo.degenerate ? 0.0 : halo_l1(y, y_ref, halo.pixel);
    double sv = ssim(y, y_ref);
    double pv = psnr(y, y_ref);
    double perc = perceptual(y, y_ref).item<double>();
    double ev = mse(y, y_ref);
    accumulate(rep.overall, sv, pv, perc, h, ev);
    accumulate(rep.per_kind[to_string(s.mask.kind)], sv, pv, perc, h, ev);
    auto stats = out_of_range_fraction(z_a, z_b, z_t);
    oor += stats.fraction;
  }
  finalize(rep.overall);
  for (auto& [k, m] : rep.per_kind) finalize(m);
  rep.out_of_range_fraction = oor / double(set.samples.size());
  return rep;
}

namespace {

nlohmann::json metrics_json(const MethodMetrics& m) {
  return {{"ssim", m.ssim},       {"psnr_db", m.psnr_db}, {"perceptual", m.perceptual},
          {"halo_l1", m.halo_l1}, {"mse", m.mse},         {"n", m.n}};
}

}  // namespace

nlohmann::json report_to_json(const EquivalenceReport& r) {
  nlohmann::json j;
  j["method"] = r.method;
  j["overall"] = metrics_json(r.overall);
  j["out_of_range_fraction"] = r.out_of_range_fraction;
  for (const auto& [k, m] : r.per_kind) j["per_kind"][k] = metrics_json(m);
  return j;
}

std::string report_to_csv(const std::vector<EquivalenceReport>& rs) {
  std::ostringstream out;
  out << "method,kind,ssim,psnr_db,perceptual,halo_l1,mse,n\n";
  for (const auto& r : rs) {
    out << r.method << ",all," << format_double(r.overall.ssim) << ","
        << format_double(r.overall.psnr_db) << "," << format_double(r.overall.perceptual)
        << "," << format_double(r.overall.halo_l1) << "," << format_double(r.overall.mse)
        << "," << r.overall.n << "\n";
    for (const auto& [k, m] : r.per_kind) {
      out << r.method << "," << k << "," << format_double(m.ssim) << ","
          << format_double(m.psnr_db) << "," << format_double(m.perceptual) << ","
          << format_double(m.halo_l1) << "," << format_double(m.mse) << "," << m.n << "\n";
    }
  }
  return out.str();
}

SdfProfile sdf_error_profile(const FrozenAutoencoder& ae, const EvalSet& set,
                             const LatentCompositor& compositor, bool latent_scale) {
  const int f = ae.config().factor;
  std::map<int, std::pair<double, std::int64_t>> bins;
  torch::NoGradGuard ng;
  for (const auto& s : set.samples) {
    auto z_a = ae.encode(s.x_a);
    auto z_b = ae.encode(s.x_b);
    auto x_comp = compose_pixels(s.x_a, s.x_b, s.mask);
    auto z_t = ae.encode(x_comp);
    auto zhat = compositor(z_a, z_b, z_t, s);

    torch::Tensor err_hw, sdf_hw;
    if (latent_scale) {
      err_hw = (zhat - z_t).pow(2).mean(0);
      auto m_lat = downsample_mask(s.mask, f, DownsampleMethod::Area);
      PixelMask lat_mask{m_lat.data, MaskKind::Original};
      auto sdf = compute_sdf(lat_mask);
      if (sdf.degenerate) continue;
      sdf_hw = sdf.data;
    } else {
      err_hw = (ae.decode(zhat) - ae.decode(z_t)).pow(2).mean(0);
      auto sdf = compute_sdf(s.mask);
      if (sdf.degenerate) continue;
      sdf_hw = sdf.data;
    }
    auto d = sdf_hw.round().to(torch::kLong).flatten();
    auto e = err_hw.to(torch::kFloat64).flatten();
    auto* dp = d.data_ptr<std::int64_t>();
    auto* ep = e.data_ptr<double>();
    for (std::int64_t i = 0; i < d.numel(); ++i) {
      auto& [sum, count] = bins[int(dp[i])];
      sum += ep[i];
      count += 1;
    }
  }
  SdfProfile p;
  p.latent_scale = latent_scale;
  for (const auto& [bin, sc] : bins) {
    p.bins.push_back(bin);
    p.mean_mse.push_back(sc.first / double(sc.second));
    p.counts.push_back(sc.second);
    p.low_sample.push_back(sc.second < 30);
  }
  return p;
}

std::string profile_to_csv(const SdfProfile& p) {
  std::ostringstream out;
  out << "bin,mean_mse,count,low_sample\n";
  for (std::size_t i = 0; i < p.bins.size(); ++i)
    out << p.bins[i] << "," << format_double(p.mean_mse[i]) << "," << p.counts[i] << ","
        << (p.low_sample[i] ? 1 : 0) << "\n";
  return out.str();
}

double profile_at(const SdfProfile& p, int bin) {
  for (std::size_t i = 0; i < p.bins.size(); ++i)
    if (p.bins[i] == bin) return p.mean_mse[i];
  throw std::out_of_range("profile_at: bin " + std::to_string(bin) + " absent");
}

int profile_peak_bin(const SdfProfile& p) {
  if (p.bins.empty()) throw std::invalid_argument("profile_peak_bin: empty profile");
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.bins.size(); ++i)
    if (p.mean_mse[i] > p.mean_mse[best]) best = i;
  return p.bins[best];
}

}  // namespace pelc
