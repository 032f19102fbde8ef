#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "lowlight/error.hpp"
#include "lowlight/synthcam.hpp"

namespace lowlight::synth {
namespace {

struct Wave {
  double fy, fx, phase, amp;
};

std::vector<Wave> random_waves(std::mt19937_64& rng, std::size_t n, double amp_total) {
  std::uniform_real_distribution<double> freq(0.3, 2.5), phase(0.0, 2 * std::numbers::pi), sign(-1.0, 1.0);
  std::vector<Wave> waves(n);
  for (Wave& w : waves) {
    w.fy = freq(rng) * (sign(rng) < 0 ? -1 : 1);
    w.fx = freq(rng) * (sign(rng) < 0 ? -1 : 1);
    w.phase = phase(rng);
    w.amp = amp_total / std::sqrt(static_cast<double>(n));
  }
  return waves;
}

double eval_waves(const std::vector<Wave>& waves, double v, double u) {
  double s = 0.0;
  for (const Wave& w : waves) s += w.amp * std::cos(2 * std::numbers::pi * (w.fy * v + w.fx * u) + w.phase);
  return s;
}

}  // namespace

void SensorModel::validate() const {
  if (!(crf_a > 0.0) || !std::isfinite(crf_a)) throw ContractError("sensor: crf_a must be positive");
  if (!std::isfinite(crf_b)) throw ContractError("sensor: crf_b must be finite");
  if (!(read_noise_sd >= 0.0) || !(shot_noise_gain >= 0.0))
    throw ContractError("sensor: noise parameters must be non-negative");
  if (black_level >= white_level) throw ContractError("sensor: black_level must be below white_level");
}

double SensorModel::response(double e) const {
  if (!(e > 0.0)) return 0.0;
  return 1.0 / (1.0 + std::exp(-crf_a * (std::log(e) - crf_b)));
}

double SensorModel::exposure_for(double br) const {
  if (!(br > 0.0 && br < 1.0)) throw ContractError("sensor: response must be in (0, 1)");
  return std::exp(crf_b + std::log(br / (1.0 - br)) / crf_a);
}

Scene synth_scene(std::uint64_t seed, std::size_t height, std::size_t width, double illumination) {
  if (height < 32 || width < 32 || height % 2 || width % 2)
    throw ContractError("synth_scene: extents must be even and at least 32, got " + std::to_string(height) + "x" +
                        std::to_string(width));
  if (!(illumination > 0.0) || !std::isfinite(illumination))
    throw ContractError("synth_scene: illumination must be positive");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto base = random_waves(rng, 6, 0.9);
  std::array<std::vector<Wave>, 3> tint;
  for (auto& t : tint) t = random_waves(rng, 3, 0.25);

  const double h = static_cast<double>(height), w = static_cast<double>(width);
  const std::size_t n = height * width;
  std::vector<double> gray(n);  // achromatic reflectance x shading
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) gray[y * width + x] = std::exp(eval_waves(base, y / h, x / w));

  // Flat objects: rectangles and discs with their own reflectance.
  const int objects = 5 + static_cast<int>(rng() % 6);
  for (int i = 0; i < objects; ++i) {
    const double cy = unit(rng) * h, cx = unit(rng) * w;
    const double ry = (0.05 + 0.15 * unit(rng)) * h, rx = (0.05 + 0.15 * unit(rng)) * w;
    const double factor = std::exp(-2.5 + 3.5 * unit(rng));
    const bool disc = unit(rng) < 0.5;
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        const double dy = (y - cy) / ry, dx = (x - cx) / rx;
        const bool inside = disc ? dy * dy + dx * dx <= 1.0 : std::fabs(dy) <= 1.0 && std::fabs(dx) <= 1.0;
        if (inside) gray[y * width + x] *= factor;
      }
  }

  // Scale so the median matches the requested illumination.
  std::vector<double> sorted = gray;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n / 2), sorted.end());
  const double scale = illumination / sorted[n / 2];
  for (double& v : gray) v *= scale;

  // A near-black region and a light source, placed apart.
  {
    const double ry = (0.08 + 0.06 * unit(rng)) * h, rx = (0.08 + 0.06 * unit(rng)) * w;
    const double cy = (0.15 + 0.2 * unit(rng)) * h, cx = (0.15 + 0.7 * unit(rng)) * w;
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x)
        if (std::fabs(y - cy) <= ry && std::fabs(x - cx) <= rx) gray[y * width + x] = 1e-3 * illumination;
  }
  {
    const double r = (0.03 + 0.015 * unit(rng)) * std::min(h, w);
    const double cy = (0.65 + 0.2 * unit(rng)) * h, cx = (0.15 + 0.7 * unit(rng)) * w;
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x)
        if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) gray[y * width + x] = 2000.0 * illumination;
  }

  std::vector<double> out(3 * n);
  for (std::size_t p = 0; p < 3; ++p)
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        const std::size_t i = y * width + x;
        out[p * n + i] = gray[i] * std::exp(eval_waves(tint[p], y / h, x / w));
      }
  return Scene{Tensor({3, height, width}, std::move(out)), seed};
}

double site_irradiance(const Scene& scene, const raw::ExifMeta& meta, std::size_t y, std::size_t x) {
  const std::size_t channel = raw::site_channel(y, x);
  const std::size_t plane = channel == 3 ? 1 : channel;
  const std::size_t n = scene.height() * scene.width();
  return scene.irradiance[plane * n + y * scene.width() + x] / meta.wb_gains[channel];
}

raw::RawFrame expose(const Scene& scene, double t, const SensorModel& model, const raw::ExifMeta& meta,
                     std::uint64_t noise_seed) {
  if (!(t > 0.0) || !std::isfinite(t)) throw ContractError("expose: exposure time must be positive");
  model.validate();
  raw::RawFrame f;
  f.height = static_cast<std::uint32_t>(scene.height());
  f.width = static_cast<std::uint32_t>(scene.width());
  f.black_level = model.black_level;
  f.white_level = model.white_level;
  f.meta = meta;
  f.meta.exposure_time = static_cast<float>(t);
  raw::validate(f.meta);

  const double range = static_cast<double>(model.white_level) - model.black_level;
  const bool noisy = model.read_noise_sd > 0.0 || model.shot_noise_gain > 0.0;
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  f.counts.resize(std::size_t{f.width} * f.height);
  for (std::size_t y = 0; y < f.height; ++y)
    for (std::size_t x = 0; x < f.width; ++x) {
      const double br = model.response(exposure(site_irradiance(scene, meta, y, x), t));
      double counts = model.black_level + br * range;
      if (noisy) {
        const double var = model.read_noise_sd * model.read_noise_sd + model.shot_noise_gain * br * range;
        counts += std::sqrt(var) * normal(rng);
      }
      f.counts[y * f.width + x] = static_cast<std::uint16_t>(std::clamp(std::round(counts), 0.0, 65535.0));
    }
  return f;
}

}  // namespace lowlight::synth
