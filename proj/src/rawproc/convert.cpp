#include <algorithm>
#include <cmath>

#include "lowlight/autodiff/ops.hpp"
#include "lowlight/error.hpp"
#include "lowlight/rawproc.hpp"

namespace lowlight::raw {
namespace {

// reflect-101: -1 -> 1, n -> n-2. Keeps site parity, so mirrored neighbors
// carry the same CFA color.
std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  if (i < 0) return static_cast<std::size_t>(-i);
  if (i >= static_cast<std::ptrdiff_t>(n)) return 2 * n - 2 - static_cast<std::size_t>(i);
  return static_cast<std::size_t>(i);
}

// Demosaic color of a CFA channel; both greens feed plane 1.
constexpr std::size_t plane_of(std::size_t channel) { return channel == 3 ? 1 : channel; }

}  // namespace

Tensor pack_bayer(const RawFrame& f) {
  validate(f);
  const std::size_t h = f.height / 2, w = f.width / 2;
  const double black = f.black_level, range = f.white_level - black;
  std::vector<double> out(4 * h * w);
  for (std::size_t y = 0; y < f.height; ++y)
    for (std::size_t x = 0; x < f.width; ++x) {
      const double v = (f.at(y, x) - black) / range;
      out[(site_channel(y, x) * h + y / 2) * w + x / 2] = std::clamp(v, 0.0, 1.0);
    }
  return Tensor({4, h, w}, std::move(out));
}

Tensor raw_to_rgb_linear(const RawFrame& f) {
  validate(f);
  const std::size_t H = f.height, W = f.width;
  const double black = f.black_level, range = f.white_level - black;

  std::vector<double> site(H * W);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const double v = std::clamp((f.at(y, x) - black) / range, 0.0, 1.0);
      site[y * W + x] = v * f.meta.wb_gains[site_channel(y, x)];
    }

  // Bilinear: a pixel keeps its own color and averages the same-color sites of
  // its 3x3 neighborhood for the other two.
  std::vector<double> out(3 * H * W);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t own = plane_of(site_channel(y, x));
      double total[3] = {0, 0, 0};
      int count[3] = {0, 0, 0};
      for (std::ptrdiff_t dy = -1; dy <= 1; ++dy)
        for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
          const std::size_t yy = reflect(static_cast<std::ptrdiff_t>(y) + dy, H);
          const std::size_t xx = reflect(static_cast<std::ptrdiff_t>(x) + dx, W);
          const std::size_t p = plane_of(site_channel(yy, xx));
          total[p] += site[yy * W + xx];
          ++count[p];
        }
      for (std::size_t p = 0; p < 3; ++p) {
        const double v = p == own ? site[y * W + x] : total[p] / count[p];
        out[(p * H + y) * W + x] = std::clamp(v, 0.0, 1.0);
      }
    }
  return Tensor({3, H, W}, std::move(out));
}

Tensor raw_to_rgb_reference(const RawFrame& f) {
  const Tensor lin = raw_to_rgb_linear(f);
  std::vector<double> out(lin.values().begin(), lin.values().end());
  for (double& v : out) v = std::pow(v, 1.0 / 2.2);
  return Tensor(lin.shape(), std::move(out));
}

Tensor rgb_to_gray(const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3)
    throw ContractError("rgb_to_gray: expected (3,H,W), got " + ad::to_string(rgb.shape()));
  return ad::reshape(ad::mean(rgb, 0), {1, rgb.dim(1), rgb.dim(2)});
}

double brightness(const Tensor& image) {
  if (image.size() == 0) throw ContractError("brightness: empty image");
  double s = 0.0;
  for (double v : image.values()) s += v;
  return s / static_cast<double>(image.size());
}

double saturated_fraction(const Tensor& rgb, double threshold) {
  if (rgb.rank() != 3) throw ContractError("saturated_fraction: expected (C,H,W), got " + ad::to_string(rgb.shape()));
  const std::size_t c = rgb.dim(0), n = rgb.dim(1) * rgb.dim(2);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      if (rgb[ch * n + i] >= threshold) {
        ++hits;
        break;
      }
  return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace lowlight::raw
