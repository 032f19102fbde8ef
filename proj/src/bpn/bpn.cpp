#include "lowlight/bpn.hpp"

#include <cmath>
#include <random>
#include <string>

#include "lowlight/autodiff/ops.hpp"
#include "lowlight/error.hpp"

namespace lowlight::bpn {
namespace {

struct LayerSpec {
  std::string name;
  ad::Shape weight;
  std::size_t fan_in;
};

std::vector<LayerSpec> layer_specs(const BpnConfig& c) {
  std::vector<LayerSpec> specs;
  std::size_t in = BpnConfig::kInputChannels;
  for (std::size_t s = 0; s < c.conv_stages(); ++s) {
    const std::size_t out = c.stage_channels[s];
    specs.push_back({"stage" + std::to_string(s), {out, in, 3, 3}, in * 9});
    in = out;
  }
  for (std::size_t f = 0; f <= c.fc_widths.size(); ++f) {
    const std::size_t out = f < c.fc_widths.size() ? c.fc_widths[f] : 1;
    specs.push_back({"fc" + std::to_string(f), {out, in}, in});
    in = out;
  }
  return specs;
}

void require_planar(const char* op, const Tensor& t) {
  if (t.rank() != 2 && !(t.rank() == 3 && t.dim(0) == 1))
    throw ContractError(std::string(op) + ": expected a single-channel map, got " + ad::to_string(t.shape()));
}

}  // namespace

void BpnConfig::validate() const {
  if (stage_channels.empty()) throw ContractError("bpn config: need at least one conv stage");
  for (auto c : stage_channels)
    if (c == 0) throw ContractError("bpn config: stage channels must be positive");
  for (auto w : fc_widths)
    if (w == 0) throw ContractError("bpn config: fc widths must be positive");
  const std::size_t multiple = std::size_t{1} << conv_stages();
  if (input_extent == 0 || input_extent % multiple != 0)
    throw ContractError("bpn config: input_extent " + std::to_string(input_extent) + " must be divisible by " +
                        std::to_string(multiple));
  if (!(sigma_w_sq > 0.0) || !(sigma_v_sq > 0.0)) throw ContractError("bpn config: variances must be positive");
  if (!std::isfinite(mu_w)) throw ContractError("bpn config: mu_w must be finite");
  if (!(z_min < z_max)) throw ContractError("bpn config: z_min must be below z_max");
  if (!std::isfinite(leaky_slope) || leaky_slope < 0.0 || leaky_slope >= 1.0)
    throw ContractError("bpn config: leaky_slope must be in [0, 1)");
}

std::vector<std::pair<std::string, ad::Shape>> bpn_param_shapes(const BpnConfig& config) {
  config.validate();
  std::vector<std::pair<std::string, ad::Shape>> shapes;
  for (const LayerSpec& s : layer_specs(config)) {
    shapes.emplace_back(s.name + ".weight", s.weight);
    shapes.emplace_back(s.name + ".bias", ad::Shape{s.weight[0]});
  }
  return shapes;
}

ad::ParamSet bpn_init(const BpnConfig& config, std::uint64_t seed, double initial_log_time) {
  config.validate();
  if (!std::isfinite(initial_log_time)) throw ContractError("bpn_init: initial_log_time must be finite");
  std::mt19937_64 rng(seed);
  ad::ParamSet params;
  const auto specs = layer_specs(config);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& s = specs[i];
    const bool output = i + 1 == specs.size();
    // The output layer starts small so the initial prediction sits at the bias.
    const double gain = output ? 0.1 : 1.0;
    std::normal_distribution<double> normal(0.0, gain * std::sqrt(2.0 / static_cast<double>(s.fan_in)));
    std::vector<double> w(ad::numel(s.weight));
    for (double& v : w) v = normal(rng);
    params.add(s.name + ".weight", Tensor(s.weight, std::move(w)));
    params.add(s.name + ".bias", Tensor::full({s.weight[0]}, output ? initial_log_time : 0.0));
  }
  return params;
}

Tensor bpn_logit(const BpnConfig& config, const Tensor& packed_resized, const Tensor& piev_planes,
                 std::span<const Tensor> params) {
  config.validate();
  const std::size_t e = config.input_extent;
  if (packed_resized.shape() != ad::Shape{4, e, e})
    throw ContractError("bpn_forward: packed input must be (4," + std::to_string(e) + "," + std::to_string(e) +
                        "), got " + ad::to_string(packed_resized.shape()));
  if (piev_planes.shape() != ad::Shape{6, e, e})
    throw ContractError("bpn_forward: pIEV planes must be (6," + std::to_string(e) + "," + std::to_string(e) +
                        "), got " + ad::to_string(piev_planes.shape()));
  const std::size_t expected = 2 * (config.conv_stages() + config.fc_widths.size() + 1);
  if (params.size() != expected)
    throw ContractError("bpn_forward: expected " + std::to_string(expected) + " parameter tensors, got " +
                        std::to_string(params.size()));

  std::size_t next = 0;
  Tensor x = ad::concat_channels(packed_resized, piev_planes);
  for (std::size_t s = 0; s < config.conv_stages(); ++s, next += 2)
    x = ad::leaky_relu(ad::conv2d(x, params[next], params[next + 1], 2), config.leaky_slope);
  x = ad::mean(ad::mean(x, 2), 1);  // global average pool -> (C)
  for (std::size_t f = 0; f < config.fc_widths.size(); ++f, next += 2)
    x = ad::leaky_relu(ad::linear(x, params[next], params[next + 1]), config.leaky_slope);
  return ad::reshape(ad::linear(x, params[next], params[next + 1]), {});
}

Tensor time_from_logit(const BpnConfig& config, const Tensor& z) {
  return ad::exp(ad::clamp(z, config.z_min, config.z_max));
}

Tensor bpn_forward(const BpnConfig& config, const Tensor& packed_resized, const Tensor& piev_planes,
                   std::span<const Tensor> params) {
  return time_from_logit(config, bpn_logit(config, packed_resized, piev_planes, params));
}

Tensor aoi_weight_map(const Tensor& gray_gt, double mu_w, double sigma_w_sq) {
  require_planar("aoi_weight_map", gray_gt);
  if (!(sigma_w_sq > 0.0) || !std::isfinite(mu_w)) throw ContractError("aoi_weight_map: invalid parameters");
  const Tensor d = ad::add_scalar(gray_gt, -mu_w);
  return ad::spatial_softmax(ad::mul_scalar(ad::square(d), -1.0 / (2.0 * sigma_w_sq)));
}

Tensor loss_bp(const Tensor& est_gray, const Tensor& weights, double mu_w, double sigma_v_sq) {
  require_planar("loss_bp", est_gray);
  if (est_gray.shape() != weights.shape())
    throw ContractError("loss_bp: shape mismatch " + ad::to_string(est_gray.shape()) + " vs " +
                        ad::to_string(weights.shape()));
  if (!(sigma_v_sq > 0.0) || !std::isfinite(mu_w)) throw ContractError("loss_bp: invalid parameters");
  double total = 0.0;
  for (double w : weights.values()) {
    if (!(w >= 0.0)) throw ContractError("loss_bp: weight map has a negative or non-finite entry");
    total += w;
  }
  if (std::fabs(total - 1.0) > 1e-9) throw ContractError("loss_bp: weight map must sum to 1");

  const Tensor d = ad::add_scalar(est_gray, -mu_w);
  const Tensor kernel = ad::exp(ad::mul_scalar(ad::square(d), -1.0 / (2.0 * sigma_v_sq)));
  // Dividing by sum(W) (= 1 up to rounding) makes est == mu_w give exactly -1/(mn).
  const Tensor weighted = ad::div(ad::sum(ad::mul(kernel, weights)), ad::sum(weights));
  return ad::mul_scalar(weighted, -1.0 / static_cast<double>(est_gray.size()));
}

}  // namespace lowlight::bpn
