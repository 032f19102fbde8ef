#pragma once

// Brightness Prediction Network: predicts the guideline exposure time t1 from
// a resized packed raw patch and the pIEV planes; plus the AoI weight map and
// the brightness loss used to train it through the frozen ESN.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lowlight/autodiff/params.hpp"
#include "lowlight/autodiff/tensor.hpp"

namespace lowlight::bpn {

using ad::Tensor;

struct BpnConfig {
  static constexpr std::size_t kInputChannels = 4 + 6;

  std::vector<std::uint32_t> stage_channels{16, 32, 64, 64};  // one stride-2 conv each
  std::vector<std::uint32_t> fc_widths{32};                   // hidden widths; a 1-wide output follows
  std::uint32_t input_extent = 64;
  double leaky_slope = 0.2;
  double mu_w = 0.5;
  double sigma_w_sq = 0.01;
  double sigma_v_sq = 0.04;
  double z_min = -7.0;
  double z_max = 4.0;

  std::size_t conv_stages() const { return stage_channels.size(); }
  void validate() const;
  bool operator==(const BpnConfig&) const = default;
};

/// Kaiming-normal kernels, zero biases except the output bias, which starts at
/// `initial_log_time` so t1 begins near a typical exposure.
ad::ParamSet bpn_init(const BpnConfig& config, std::uint64_t seed, double initial_log_time = 0.0);
std::vector<std::pair<std::string, ad::Shape>> bpn_param_shapes(const BpnConfig& config);

/// Pre-activation scalar z. Inputs are (4,E,E) and (6,E,E) with E = input_extent.
Tensor bpn_logit(const BpnConfig& config, const Tensor& packed_resized, const Tensor& piev_planes,
                 std::span<const Tensor> params);
/// t1 = exp(clamp(z, z_min, z_max)) seconds; a positive scalar tensor.
Tensor bpn_forward(const BpnConfig& config, const Tensor& packed_resized, const Tensor& piev_planes,
                   std::span<const Tensor> params);
Tensor time_from_logit(const BpnConfig& config, const Tensor& z);

/// softmax over all pixels of -(Y - mu_w)^2 / (2 sigma_w^2), for gray (1,H,W) or (H,W).
Tensor aoi_weight_map(const Tensor& gray_gt, double mu_w, double sigma_w_sq);

/// -(1/mn) * sum exp(-(Y_hat - mu_w)^2 / (2 sigma_v^2)) * W.
Tensor loss_bp(const Tensor& est_gray, const Tensor& weights, double mu_w, double sigma_v_sq);

}  // namespace lowlight::bpn
