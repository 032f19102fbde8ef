#include "lowlight/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "lowlight/error.hpp"

namespace lowlight::ad {
namespace {

double evaluate(const ScalarFn& fn, std::span<const Tensor> args, std::size_t input, std::size_t index) {
  Tensor out;
  try {
    out = fn(args);
  } catch (const ContractError& e) {
    throw ContractError("grad_check: evaluation failed at input " + std::to_string(input) +
                        ", coordinate " + std::to_string(index) + ": " + e.what());
  }
  if (out.size() != 1) throw ContractError("grad_check: function is not scalar-valued");
  const double v = out.item();
  if (!std::isfinite(v))
    throw ContractError("grad_check: non-finite function value at input " + std::to_string(input) +
                        ", coordinate " + std::to_string(index));
  return v;
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& fn, std::span<const Tensor> point,
                           const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw ContractError("grad_check: step must be positive");

  Tape tape;
  std::vector<Tensor> watched;
  for (const Tensor& t : point) watched.push_back(tape.watch(t));
  const Tensor loss = fn(watched);
  if (!std::isfinite(loss.item())) throw ContractError("grad_check: non-finite function value at the point");
  const Gradients grads = tape.backward(loss);

  std::vector<Tensor> args;
  for (const Tensor& t : point) args.push_back(t.detached());

  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  for (std::size_t input = 0; input < point.size(); ++input) {
    const Tensor analytic = grads.of(watched[input]);
    std::vector<std::size_t> coords(point[input].size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coordinates && coords.size() > *options.max_coordinates) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(*options.max_coordinates);
      std::sort(coords.begin(), coords.end());
    }

    const Shape shape = point[input].shape();
    std::vector<double> base(point[input].values().begin(), point[input].values().end());
    for (std::size_t idx : coords) {
      std::vector<double> shifted = base;
      shifted[idx] = base[idx] + options.step;
      args[input] = Tensor(shape, shifted);
      const double plus = evaluate(fn, args, input, idx);
      shifted[idx] = base[idx] - options.step;
      args[input] = Tensor(shape, shifted);
      const double minus = evaluate(fn, args, input, idx);

      const double numeric = (plus - minus) / (2.0 * options.step);
      const double a = analytic[idx];
      const double err = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      if (result.coordinates_checked == 0 || err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_input = input;
        result.worst_index = idx;
      }
      ++result.coordinates_checked;
    }
    args[input] = point[input].detached();
  }
  return result;
}

GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point,
                           double step) {
  const Tensor args[] = {point};
  GradCheckOptions options;
  options.step = step;
  return grad_check([&fn](std::span<const Tensor> in) { return fn(in[0]); }, args, options);
}

}  // namespace lowlight::ad
