#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lowlight/autodiff/params.hpp"

namespace lowlight::ad {

struct AdamState {
  std::uint64_t step_count = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  /// Zero moments shaped like `params`.
  static AdamState for_params(const ParamSet& params);
};

/// One bias-corrected Adam update of every parameter. `grads[i]` must match the
/// shape of `params[i]`. A zero learning rate updates the moments only.
void adam_step(ParamSet& params, std::span<const Tensor> grads, AdamState& state,
               double learning_rate);

}  // namespace lowlight::ad
