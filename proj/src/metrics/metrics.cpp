#include "lowlight/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>

#include "lowlight/error.hpp"
#include "lowlight/rawproc.hpp"

namespace lowlight::metrics {
namespace {

// (H, W) view of a (C, H, W) or (H, W) tensor as its channel mean.
std::vector<double> gray_plane(const Tensor& image, std::size_t& h, std::size_t& w, const char* who) {
  if (image.rank() == 2) {
    h = image.dim(0);
    w = image.dim(1);
    const auto v = image.values();
    return {v.begin(), v.end()};
  }
  if (image.rank() != 3 || image.dim(0) == 0)
    throw ContractError(std::string(who) + ": expected (C,H,W) or (H,W), got " + ad::to_string(image.shape()));
  const std::size_t c = image.dim(0);
  h = image.dim(1);
  w = image.dim(2);
  const std::size_t n = h * w;
  std::vector<double> out(n, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < n; ++i) out[i] += image[ch * n + i];
  if (c > 1)
    for (double& v : out) v /= static_cast<double>(c);
  return out;
}

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

GroupStats group_brightness_stats_of(std::span<const double> b, std::string group_id) {
  if (b.size() < 2) throw ContractError("group_brightness_stats: need at least 2 images, got " + std::to_string(b.size()));
  GroupStats s;
  s.group_id = std::move(group_id);
  const double n = static_cast<double>(b.size());
  s.mu = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : b) ss += (v - s.mu) * (v - s.mu);
  s.cv = s.mu == 0.0 ? 0.0 : std::sqrt(ss / n) / s.mu;
  return s;
}

GroupStats group_brightness_stats(std::span<const Tensor> images, std::string group_id) {
  std::vector<double> b;
  b.reserve(images.size());
  for (const Tensor& t : images) b.push_back(raw::brightness(t));
  return group_brightness_stats_of(b, std::move(group_id));
}

double noise_variance(const Tensor& image) {
  std::size_t h = 0, w = 0;
  const std::vector<double> g = gray_plane(image, h, w, "noise_variance");
  if (h < 3 || w < 3) throw ContractError("noise_variance: need at least 3x3, got " + ad::to_string(image.shape()));
  double sum = 0.0;
  for (std::size_t y = 1; y + 1 < h; ++y) {
    const double* a = &g[(y - 1) * w];
    const double* m = &g[y * w];
    const double* b = &g[(y + 1) * w];
    for (std::size_t x = 1; x + 1 < w; ++x) {
      const double r = (a[x - 1] - 2 * a[x] + a[x + 1]) - 2 * (m[x - 1] - 2 * m[x] + m[x + 1]) +
                       (b[x - 1] - 2 * b[x] + b[x + 1]);
      sum += std::fabs(r);
    }
  }
  return std::sqrt(std::numbers::pi / 2.0) * sum / (6.0 * static_cast<double>(w - 2) * static_cast<double>(h - 2));
}

double entropy(const Tensor& image) {
  std::size_t h = 0, w = 0;
  const std::vector<double> g = gray_plane(image, h, w, "entropy");
  if (g.empty()) return 0.0;
  std::array<std::size_t, 256> hist{};
  for (double v : g) {
    if (std::isnan(v)) throw ContractError("entropy: NaN pixel");
    const double c = std::clamp(v, 0.0, 1.0);
    ++hist[std::min<std::size_t>(255, static_cast<std::size_t>(c * 256.0))];
  }
  const double n = static_cast<double>(g.size());
  double e = 0.0;
  for (std::size_t count : hist)
    if (count) {
      const double p = static_cast<double>(count) / n;
      e -= p * std::log2(p);
    }
  return e == 0.0 ? 0.0 : e;  // no -0
}

FilterMode parse_filter_mode(std::string_view name) {
  if (name == "identity") return FilterMode::identity;
  if (name == "ema") return FilterMode::ema;
  throw ContractError("t1_filter: unknown mode '" + std::string(name) + "' (expected identity or ema)");
}

std::string_view to_string(FilterMode mode) { return mode == FilterMode::ema ? "ema" : "identity"; }

std::vector<double> t1_filter(std::span<const double> t1, FilterMode mode, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ContractError("t1_filter: beta must be in [0, 1]");
  for (std::size_t i = 0; i < t1.size(); ++i)
    if (!(t1[i] > 0.0) || !std::isfinite(t1[i]))
      throw ContractError("t1_filter: t1[" + std::to_string(i) + "] must be positive and finite");
  std::vector<double> out(t1.begin(), t1.end());
  if (mode == FilterMode::identity || beta == 0.0 || out.empty()) return out;
  double y = std::log(t1[0]);
  for (std::size_t k = 1; k < t1.size(); ++k) {
    y = beta * y + (1.0 - beta) * std::log(t1[k]);
    out[k] = std::exp(y);
  }
  return out;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw ContractError("spearman: need two equal-length series of >= 2");
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace lowlight::metrics
