#pragma once

// Evaluation metrics: per-group brightness statistics, a Laplacian noise
// estimate, histogram entropy, and the smoothing filter for t1 sequences.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lowlight/autodiff/tensor.hpp"

namespace lowlight::metrics {

using ad::Tensor;

struct GroupStats {
  std::string group_id;
  double mu = 0.0;
  double cv = 0.0;  // population std / mu, 0 when mu == 0
};

/// Statistics of member-image brightnesses; needs at least two images.
GroupStats group_brightness_stats(std::span<const Tensor> images, std::string group_id = {});
GroupStats group_brightness_stats_of(std::span<const double> brightnesses, std::string group_id = {});

/// Noise standard deviation from the Laplacian-difference mask response.
/// Multi-channel images are reduced to their channel mean first.
double noise_variance(const Tensor& image);

/// Shannon entropy (bits) of the 256-bin histogram of the channel-mean gray
/// image. Values are clamped to [0, 1] before binning.
double entropy(const Tensor& image);

enum class FilterMode { identity, ema };
FilterMode parse_filter_mode(std::string_view name);
std::string_view to_string(FilterMode mode);

/// identity: unchanged. ema: y_k = beta y_{k-1} + (1 - beta) ln t1_k in the log
/// domain with y_0 = ln t1_0.
std::vector<double> t1_filter(std::span<const double> t1, FilterMode mode, double beta);

/// Spearman rank correlation with average ranks for ties; 0 when either
/// side is constant.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace lowlight::metrics
