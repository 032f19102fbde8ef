#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "lowlight/autodiff/tensor.hpp"

namespace lowlight::ad {

/// Scalar function of several tensors, built from ad operations.
using ScalarFn = std::function<Tensor(std::span<const Tensor>)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  std::size_t coordinates_checked = 0;
};

struct GradCheckOptions {
  double step = 1e-5;
  /// Check at most this many coordinates per input, chosen with `seed`; all
  /// coordinates when unset.
  std::optional<std::size_t> max_coordinates;
  std::uint64_t seed = 0;
};

/// Compares backward() against central finite differences,
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8), maximized over the
/// checked coordinates. Throws ContractError naming the coordinate when the
/// function evaluates to a non-finite value.
GradCheckResult grad_check(const ScalarFn& fn, std::span<const Tensor> point,
                           const GradCheckOptions& options = {});
GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point,
                           double step = 1e-5);

}  // namespace lowlight::ad
