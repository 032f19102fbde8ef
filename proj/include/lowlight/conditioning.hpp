#pragma once

// Image Enhancing Vector (IEV), its partial form without t1 (pIEV), and the
// frozen sample-dimension normalization applied to network inputs.
//
// Element order is (w_r, w_g, w_b, w_g2, iso, t0[, t1]). Exposure times enter
// the statistics and the normalized planes as natural logs.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lowlight/autodiff/tensor.hpp"
#include "lowlight/rawproc.hpp"

namespace lowlight::cond {

using ad::Tensor;

inline constexpr std::size_t kIevSize = 7;
inline constexpr std::size_t kPievSize = 6;
inline constexpr std::size_t kT0 = 5;
inline constexpr std::size_t kT1 = 6;

struct Iev {
  std::array<double, kIevSize> values{};
  double operator[](std::size_t i) const { return values[i]; }
};

struct PIev {
  std::array<double, kPievSize> values{};
  double operator[](std::size_t i) const { return values[i]; }
};

Iev build_iev(const raw::ExifMeta& meta, double t1);
PIev build_piev(const raw::ExifMeta& meta);

struct NormStats {
  static constexpr std::uint32_t kVersion = 1;
  static constexpr double kStdFloor = 1e-6;

  std::uint32_t version = kVersion;
  std::array<double, 4> channel_mean{};
  std::array<double, 4> channel_std{1, 1, 1, 1};
  std::array<double, kIevSize> iev_mean{};
  std::array<double, kIevSize> iev_std{1, 1, 1, 1, 1, 1, 1};

  bool operator==(const NormStats&) const = default;
};

/// One training pair as seen by the statistics: packed input (4,h,w) and its
/// IEV with t1 = t_g.
struct NormSample {
  const Tensor* packed = nullptr;
  Iev iev;
};

/// Pooled per-channel mean / population std over every pixel of every sample,
/// and per-element mean / std of the (log-time) IEV. Std below 1e-6 is floored.
NormStats fit_norm_stats(std::span<const NormSample> samples);

/// e_i -> (f(e_i) - mean_i) / std_i with f = log for t0, t1 and identity otherwise.
double normalize_element(double value, std::size_t index, const NormStats& stats);
double denormalize_element(double value, std::size_t index, const NormStats& stats);

/// Constant planes (k, h, w), k = 7 for an IEV and 6 for a pIEV.
Tensor normalize_and_broadcast(std::span<const double> values, const NormStats& stats, std::size_t h,
                               std::size_t w);
inline Tensor normalize_and_broadcast(const Iev& iev, const NormStats& s, std::size_t h, std::size_t w) {
  return normalize_and_broadcast(iev.values, s, h, w);
}
inline Tensor normalize_and_broadcast(const PIev& p, const NormStats& s, std::size_t h, std::size_t w) {
  return normalize_and_broadcast(p.values, s, h, w);
}

/// Differentiable t1 plane (1, h, w) from a positive scalar tensor t1.
Tensor t1_plane(const Tensor& t1, const NormStats& stats, std::size_t h, std::size_t w);

/// Per-channel (x - mean_c) / std_c of a packed (4,h,w) tensor.
Tensor normalize_packed(const Tensor& packed, const NormStats& stats);

}  // namespace lowlight::cond
