#pragma once

// Exposure Shifting Network: a U-Net mapping a packed raw patch plus IEV planes
// to an RGB image at twice the packed resolution, and its training losses.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

#include "lowlight/autodiff/params.hpp"
#include "lowlight/autodiff/tensor.hpp"

namespace lowlight::esn {

using ad::Tensor;

struct EsnConfig {
  static constexpr std::size_t kInputChannels = 4 + 7;
  static constexpr std::size_t kHeadChannels = 12;

  std::uint32_t depth = 3;
  std::uint32_t base_channels = 16;
  double leaky_slope = 0.2;

  void validate() const;
  /// Channels at encoder level `level`; level == depth is the bottleneck.
  std::size_t channels(std::size_t level) const { return std::size_t{base_channels} << level; }
  bool operator==(const EsnConfig&) const = default;
};

/// Parameters in canonical order: encoder levels, bottleneck, decoder levels
/// (deepest first), head. Kaiming-normal kernels, zero biases.
ad::ParamSet esn_init(const EsnConfig& config, std::uint64_t seed);

/// Shapes esn_init would produce, in the same order; used to validate loads.
std::vector<std::pair<std::string, ad::Shape>> esn_param_shapes(const EsnConfig& config);

/// packed (4,h,w) network input (already channel-normalized) and iev_planes
/// (7,h,w) -> RGB (3,2h,2w) in (0,1). `params` follows esn_init order.
Tensor esn_forward(const EsnConfig& config, const Tensor& packed, const Tensor& iev_planes,
                   std::span<const Tensor> params);

/// Mean over channels of per-channel mean absolute error.
Tensor loss_mae(const Tensor& est, const Tensor& gt);

struct MsSsimOptions {
  std::array<double, 5> weights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  double sigma = 1.5;
  std::size_t radius = 5;  // 11 taps
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
  /// Mean contrast-structure terms are clamped below at this value before the
  /// fractional power.
  double cs_floor = 1e-6;
};

/// Smallest side ms_ssim accepts with the default 5 levels.
std::size_t ms_ssim_min_extent(std::size_t levels = 5);

/// Multi-scale SSIM of (C,H,W) images, per channel then channel-averaged.
Tensor ms_ssim(const Tensor& a, const Tensor& b, const MsSsimOptions& options = {});
Tensor loss_ssim(const Tensor& est, const Tensor& gt, const MsSsimOptions& options = {});
/// (1 - alpha) * L_MAE + alpha * L_SSIM, 0 <= alpha < 1.
Tensor loss_es(const Tensor& est, const Tensor& gt, double alpha);

}  // namespace lowlight::esn
