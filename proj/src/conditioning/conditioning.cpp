#include "lowlight/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lowlight/autodiff/ops.hpp"
#include "lowlight/error.hpp"

namespace lowlight::cond {
namespace {

bool is_log_element(std::size_t i) { return i == kT0 || i == kT1; }

double transform(double v, std::size_t i) { return is_log_element(i) ? std::log(v) : v; }

}  // namespace

Iev build_iev(const raw::ExifMeta& meta, double t1) {
  if (!(t1 > 0.0) || !std::isfinite(t1)) throw ContractError("build_iev: t1 must be positive, got " + std::to_string(t1));
  const PIev p = build_piev(meta);
  Iev iev;
  std::copy(p.values.begin(), p.values.end(), iev.values.begin());
  iev.values[kT1] = t1;
  return iev;
}

PIev build_piev(const raw::ExifMeta& meta) {
  raw::validate(meta);
  const auto& g = meta.wb_gains;
  return PIev{{g[0], g[1], g[2], g[3], meta.iso, meta.exposure_time}};
}

NormStats fit_norm_stats(std::span<const NormSample> samples) {
  if (samples.size() < 2)
    throw ContractError("fit_norm_stats: need at least 2 samples, got " + std::to_string(samples.size()));
  NormStats s;

  std::array<double, 4> total{};
  std::size_t pixels = 0;
  for (const NormSample& x : samples) {
    if (!x.packed || x.packed->rank() != 3 || x.packed->dim(0) != 4)
      throw ContractError("fit_norm_stats: packed inputs must be (4,h,w)");
    const std::size_t n = x.packed->dim(1) * x.packed->dim(2);
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t i = 0; i < n; ++i) total[c] += (*x.packed)[c * n + i];
    pixels += n;
  }
  for (std::size_t c = 0; c < 4; ++c) s.channel_mean[c] = total[c] / static_cast<double>(pixels);
  std::array<double, 4> sq{};
  for (const NormSample& x : samples) {
    const std::size_t n = x.packed->dim(1) * x.packed->dim(2);
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t i = 0; i < n; ++i) {
        const double d = (*x.packed)[c * n + i] - s.channel_mean[c];
        sq[c] += d * d;
      }
  }
  for (std::size_t c = 0; c < 4; ++c)
    s.channel_std[c] = std::max(std::sqrt(sq[c] / static_cast<double>(pixels)), NormStats::kStdFloor);

  const double count = static_cast<double>(samples.size());
  for (std::size_t i = 0; i < kIevSize; ++i) {
    double m = 0.0;
    for (const NormSample& x : samples) m += transform(x.iev[i], i);
    m /= count;
    double v = 0.0;
    for (const NormSample& x : samples) {
      const double d = transform(x.iev[i], i) - m;
      v += d * d;
    }
    s.iev_mean[i] = m;
    s.iev_std[i] = std::max(std::sqrt(v / count), NormStats::kStdFloor);
  }
  return s;
}

double normalize_element(double value, std::size_t i, const NormStats& s) {
  if (i >= kIevSize) throw ContractError("normalize_element: index out of range");
  if (is_log_element(i) && !(value > 0.0)) throw ContractError("normalize_element: exposure time must be positive");
  return (transform(value, i) - s.iev_mean[i]) / s.iev_std[i];
}

double denormalize_element(double value, std::size_t i, const NormStats& s) {
  if (i >= kIevSize) throw ContractError("denormalize_element: index out of range");
  const double v = value * s.iev_std[i] + s.iev_mean[i];
  return is_log_element(i) ? std::exp(v) : v;
}

Tensor normalize_and_broadcast(std::span<const double> values, const NormStats& stats, std::size_t h,
                               std::size_t w) {
  if (values.size() != kIevSize && values.size() != kPievSize)
    throw ContractError("normalize_and_broadcast: expected 6 or 7 entries, got " + std::to_string(values.size()));
  if (h == 0 || w == 0) throw ContractError("normalize_and_broadcast: extent must be positive");
  std::vector<double> out(values.size() * h * w);
  for (std::size_t i = 0; i < values.size(); ++i)
    std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(i * h * w), h * w,
                normalize_element(values[i], i, stats));
  return Tensor({values.size(), h, w}, std::move(out));
}

Tensor t1_plane(const Tensor& t1, const NormStats& stats, std::size_t h, std::size_t w) {
  const Tensor z = ad::mul_scalar(ad::add_scalar(ad::log(t1), -stats.iev_mean[kT1]), 1.0 / stats.iev_std[kT1]);
  return ad::broadcast(z, {1, h, w});
}

Tensor normalize_packed(const Tensor& packed, const NormStats& stats) {
  if (packed.rank() != 3 || packed.dim(0) != 4)
    throw ContractError("normalize_packed: expected (4,h,w), got " + ad::to_string(packed.shape()));
  const std::size_t n = packed.dim(1) * packed.dim(2);
  std::vector<double> out(packed.size());
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < n; ++i)
      out[c * n + i] = (packed[c * n + i] - stats.channel_mean[c]) / stats.channel_std[c];
  return Tensor(packed.shape(), std::move(out));
}

}  // namespace lowlight::cond
