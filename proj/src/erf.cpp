#include "pelc/erf.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pelc/common.hpp"
#include "pelc/image.hpp"

namespace pelc {

torch::Tensor erf_probe_decoder(const FrozenAutoencoder& ae, const torch::Tensor& z_chw,
                                std::pair<int, int> site, double eps) {
  if (eps < 0) throw std::invalid_argument("erf_probe_decoder: eps must be >= 0");
  auto [i, j] = site;
  if (i < 0 || j < 0 || i >= z_chw.size(1) || j >= z_chw.size(2))
    throw std::out_of_range("erf_probe_decoder: site out of bounds");
  torch::NoGradGuard ng;
  auto z2 = z_chw.clone();
  z2.index({torch::indexing::Slice(), i, j}) += eps;
  auto d = ae.decode(z2) - ae.decode(z_chw);
  return d.pow(2).sum(0).sqrt();
}

torch::Tensor erf_probe_encoder(const FrozenAutoencoder& ae, const torch::Tensor& x_chw,
                                std::pair<int, int> pixel, double delta) {
  if (delta < 0) throw std::invalid_argument("erf_probe_encoder: delta must be >= 0");
  auto [i, j] = pixel;
  if (i < 0 || j < 0 || i >= x_chw.size(1) || j >= x_chw.size(2))
    throw std::out_of_range("erf_probe_encoder: pixel out of bounds");
  auto x2 = x_chw.clone();
  x2.index({torch::indexing::Slice(), i, j}) += delta;
  auto d = ae.encode(x2) - ae.encode(x_chw);
  return d.pow(2).sum(0).sqrt();
}

torch::Tensor erf_probe_gradient(const FrozenAutoencoder& ae, const torch::Tensor& z_chw,
                                 std::pair<int, int> window_corner, int window) {
  auto [i, j] = window_corner;
  auto f = ae.config().factor;
  const auto H = z_chw.size(1) * f, W = z_chw.size(2) * f;
  if (i < 0 || j < 0 || i + window > H || j + window > W)
    throw std::out_of_range("erf_probe_gradient: window outside image");
  auto z = z_chw.detach().clone().requires_grad_(true);
  auto y = ae.decode(z);
  auto s = y.index({torch::indexing::Slice(), torch::indexing::Slice(i, i + window),
                    torch::indexing::Slice(j, j + window)})
               .pow(2)
               .sum();
  s.backward();
  return z.grad().pow(2).sum(0).sqrt();
}

double cumulative_energy_radius(const torch::Tensor& energy_hw, std::pair<int, int> center,
                                double p) {
  if (p <= 0 || p > 1) throw std::invalid_argument("cumulative_energy_radius: p in (0,1]");
  const auto h = energy_hw.size(0), w = energy_hw.size(1);
  auto e = energy_hw.to(torch::kFloat64).flatten();
  double total = e.sum().item<double>();
  if (total <= 0) throw std::invalid_argument("cumulative_energy_radius: all-zero map");
  auto ii = torch::arange(h, torch::kFloat64).view({h, 1}).expand({h, w});
  auto jj = torch::arange(w, torch::kFloat64).view({1, w}).expand({h, w});
  auto r = ((ii - center.first).pow(2) + (jj - center.second).pow(2)).sqrt().flatten();
  auto order = r.argsort();
  auto cum = e.index({order}).cumsum(0) / total;
  auto rs = r.index({order});
  // smallest radius whose enclosed energy reaches p
  auto idx = (cum >= p - 1e-12).nonzero();
  auto k = idx[0].item<std::int64_t>();
  double diag = std::sqrt(double(h * h + w * w));
  return rs[k].item<double>() / diag;
}

RadiusSummary bootstrap_radius(const std::vector<double>& radii, int resamples,
                               std::uint64_t seed) {
  if (radii.empty()) throw std::invalid_argument("bootstrap_radius: empty sample");
  RadiusSummary out;
  for (double v : radii) out.mean += v;
  out.mean /= double(radii.size());
  auto gen = make_generator(seed ^ 0xb00757a9ull);
  std::vector<double> means(static_cast<std::size_t>(resamples), 0.0);
  const auto n = std::int64_t(radii.size());
  for (int r = 0; r < resamples; ++r) {
    auto idx = at::randint(n, {n}, gen, at::TensorOptions().dtype(at::kLong));
    double m = 0.0;
    auto* ip = idx.data_ptr<std::int64_t>();
    for (std::int64_t k = 0; k < n; ++k) m += radii[std::size_t(ip[k])];
    means[std::size_t(r)] = m / double(n);
  }
  std::sort(means.begin(), means.end());
  auto pick = [&](double q) {
    double pos = q * double(resamples - 1);
    auto lo = std::size_t(pos);
    auto hi = std::min(lo + 1, means.size() - 1);
    double frac = pos - double(lo);
    return means[lo] * (1 - frac) + means[hi] * frac;
  };
  out.ci_lo = pick(0.025);
  out.ci_hi = pick(0.975);
  return out;
}

namespace {

ErfReport summarize(std::vector<double> r50s, std::vector<double> r90s, std::uint64_t seed) {
  ErfReport rep;
  rep.probes = int(r50s.size());
  rep.r50 = bootstrap_radius(r50s, 1000, seed);
  rep.r90 = bootstrap_radius(r90s, 1000, seed + 1);
  return rep;
}

}  // namespace

ErfReport erf_report_decoder(const FrozenAutoencoder& ae, int image_size, int probes,
                             std::uint64_t data_seed, double eps) {
  const int f = ae.config().factor;
  const int hl = image_size / f;
  auto gen = make_generator(data_seed ^ 0xde0de0ull);
  std::vector<double> r50s, r90s;
  for (int p = 0; p < probes; ++p) {
    auto x = generate_image(data_seed + std::uint64_t(p), image_size, image_size);
    auto z = ae.encode(x);
    // interior sites so the energy disk is not clipped asymmetrically
    auto ij = at::randint(1, hl - 1, {2}, gen, at::TensorOptions().dtype(at::kLong));
    int i = int(ij[0].item<std::int64_t>()), j = int(ij[1].item<std::int64_t>());
    auto energy = erf_probe_decoder(ae, z, {i, j}, eps);
    std::pair<int, int> c{i * f + f / 2, j * f + f / 2};
    r50s.push_back(cumulative_energy_radius(energy, c, 0.5));
    r90s.push_back(cumulative_energy_radius(energy, c, 0.9));
  }
  return summarize(std::move(r50s), std::move(r90s), data_seed);
}

ErfReport erf_report_encoder(const FrozenAutoencoder& ae, int image_size, int probes,
                             std::uint64_t data_seed, double delta) {
  const int f = ae.config().factor;
  auto gen = make_generator(data_seed ^ 0xe0c0de0ull);
  std::vector<double> r50s, r90s;
  for (int p = 0; p < probes; ++p) {
    auto x = generate_image(data_seed + std::uint64_t(p), image_size, image_size);
    auto ij = at::randint(f, image_size - f, {2}, gen, at::TensorOptions().dtype(at::kLong));
    int i = int(ij[0].item<std::int64_t>()), j = int(ij[1].item<std::int64_t>());
    auto energy = erf_probe_encoder(ae, x, {i, j}, delta);
    std::pair<int, int> c{i / f, j / f};
    r50s.push_back(cumulative_energy_radius(energy, c, 0.5));
    r90s.push_back(cumulative_energy_radius(energy, c, 0.9));
  }
  return summarize(std::move(r50s), std::move(r90s), data_seed);
}

}  // namespace pelc
