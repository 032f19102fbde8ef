#include "lowlight/autodiff/adam.hpp"

#include <cmath>

#include "lowlight/error.hpp"

namespace lowlight::ad {

AdamState AdamState::for_params(const ParamSet& params) {
  AdamState s;
  for (const Parameter& p : params.items()) {
    s.first_moment.emplace_back(p.value.size(), 0.0);
    s.second_moment.emplace_back(p.value.size(), 0.0);
  }
  return s;
}

void adam_step(ParamSet& params, std::span<const Tensor> grads, AdamState& state,
               double learning_rate) {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ContractError("adam: learning rate must be finite and non-negative");
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size())
    throw ContractError("adam: parameter, gradient and moment counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::size_t n = params[i].value.size();
    if (grads[i].shape() != params[i].value.shape() || state.first_moment[i].size() != n ||
        state.second_moment[i].size() != n)
      throw ContractError("adam: shape mismatch for " + params[i].name);
  }

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const auto g = grads[i].values();
    const auto p = params[i].value.values();
    std::vector<double> next(p.begin(), p.end());
    for (std::size_t j = 0; j < next.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      next[j] -= learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
    params.set(i, Tensor(params[i].value.shape(), std::move(next)));
  }
}

}  // namespace lowlight::ad
