#include "lowlight/esn.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "lowlight/autodiff/ops.hpp"
#include "lowlight/error.hpp"

namespace lowlight::esn {
namespace {

struct ConvSpec {
  std::string name;
  std::size_t in, out, kernel;
};

std::vector<ConvSpec> conv_specs(const EsnConfig& c) {
  std::vector<ConvSpec> specs;
  std::size_t in = EsnConfig::kInputChannels;
  for (std::size_t l = 0; l < c.depth; ++l) {
    const std::string p = "enc" + std::to_string(l);
    specs.push_back({p + ".conv1", in, c.channels(l), 3});
    specs.push_back({p + ".conv2", c.channels(l), c.channels(l), 3});
    in = c.channels(l);
  }
  specs.push_back({"mid.conv1", in, c.channels(c.depth), 3});
  specs.push_back({"mid.conv2", c.channels(c.depth), c.channels(c.depth), 3});
  for (std::size_t l = c.depth; l-- > 0;) {
    const std::string p = "dec" + std::to_string(l);
    specs.push_back({p + ".up", c.channels(l + 1), c.channels(l), 3});
    specs.push_back({p + ".conv1", 2 * c.channels(l), c.channels(l), 3});
    specs.push_back({p + ".conv2", c.channels(l), c.channels(l), 3});
  }
  specs.push_back({"head", c.channels(0), EsnConfig::kHeadChannels, 1});
  return specs;
}

}  // namespace

void EsnConfig::validate() const {
  if (depth < 2) throw ContractError("esn config: depth must be at least 2, got " + std::to_string(depth));
  if (depth > 8) throw ContractError("esn config: depth above 8 is not supported");
  if (base_channels < 4)
    throw ContractError("esn config: base_channels must be at least 4, got " + std::to_string(base_channels));
  if (!std::isfinite(leaky_slope) || leaky_slope < 0.0 || leaky_slope >= 1.0)
    throw ContractError("esn config: leaky_slope must be in [0, 1)");
}

std::vector<std::pair<std::string, ad::Shape>> esn_param_shapes(const EsnConfig& config) {
  config.validate();
  std::vector<std::pair<std::string, ad::Shape>> shapes;
  for (const ConvSpec& s : conv_specs(config)) {
    shapes.emplace_back(s.name + ".weight", ad::Shape{s.out, s.in, s.kernel, s.kernel});
    shapes.emplace_back(s.name + ".bias", ad::Shape{s.out});
  }
  return shapes;
}

ad::ParamSet esn_init(const EsnConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ad::ParamSet params;
  for (const ConvSpec& s : conv_specs(config)) {
    const std::size_t fan_in = s.in * s.kernel * s.kernel;
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    std::vector<double> w(s.out * fan_in);
    for (double& v : w) v = normal(rng);
    params.add(s.name + ".weight", Tensor({s.out, s.in, s.kernel, s.kernel}, std::move(w)));
    params.add(s.name + ".bias", Tensor::zeros({s.out}));
  }
  return params;
}

Tensor esn_forward(const EsnConfig& config, const Tensor& packed, const Tensor& iev_planes,
                   std::span<const Tensor> params) {
  config.validate();
  if (packed.rank() != 3 || packed.dim(0) != 4)
    throw ContractError("esn_forward: packed input must be (4,h,w), got " + ad::to_string(packed.shape()));
  if (iev_planes.rank() != 3 || iev_planes.dim(0) != 7 || iev_planes.dim(1) != packed.dim(1) ||
      iev_planes.dim(2) != packed.dim(2))
    throw ContractError("esn_forward: iev planes " + ad::to_string(iev_planes.shape()) +
                        " do not match packed input " + ad::to_string(packed.shape()));
  const std::size_t multiple = std::size_t{1} << config.depth;
  for (std::size_t axis : {1u, 2u})
    if (packed.dim(axis) % multiple != 0) {
      const std::size_t need = (packed.dim(axis) + multiple - 1) / multiple * multiple;
      throw ContractError("esn_forward: extent " + std::to_string(packed.dim(axis)) +
                          " is not divisible by " + std::to_string(multiple) + "; pad to " +
                          std::to_string(need));
    }
  const std::size_t expected = 2 * conv_specs(config).size();
  if (params.size() != expected)
    throw ContractError("esn_forward: expected " + std::to_string(expected) + " parameter tensors, got " +
                        std::to_string(params.size()));

  std::size_t next = 0;
  auto conv = [&](const Tensor& x) {
    const Tensor& w = params[next++];
    const Tensor& b = params[next++];
    return ad::conv2d(x, w, b);
  };
  auto conv_act = [&](const Tensor& x) { return ad::leaky_relu(conv(x), config.leaky_slope); };

  Tensor x = ad::concat_channels(packed, iev_planes);
  std::vector<Tensor> skips;
  for (std::size_t l = 0; l < config.depth; ++l) {
    x = conv_act(conv_act(x));
    skips.push_back(x);
    x = ad::max_pool_2x2(x);
  }
  x = conv_act(conv_act(x));
  for (std::size_t l = config.depth; l-- > 0;) {
    x = conv_act(ad::upsample_nearest_2x(x));
    x = ad::concat_channels(x, skips[l]);
    x = conv_act(conv_act(x));
  }
  return ad::sigmoid(ad::pixel_shuffle(conv(x)));
}

Tensor loss_mae(const Tensor& est, const Tensor& gt) {
  if (est.shape() != gt.shape() || est.rank() != 3)
    throw ContractError("loss_mae: shape mismatch " + ad::to_string(est.shape()) + " vs " +
                        ad::to_string(gt.shape()));
  // channel means of equal-sized planes average to the global mean
  return ad::mean(ad::abs(ad::sub(est, gt)));
}

std::size_t ms_ssim_min_extent(std::size_t levels) { return std::size_t{1} << (levels - 1); }

Tensor ms_ssim(const Tensor& a, const Tensor& b, const MsSsimOptions& o) {
  if (a.shape() != b.shape() || a.rank() != 3)
    throw ContractError("ms_ssim: shape mismatch " + ad::to_string(a.shape()) + " vs " +
                        ad::to_string(b.shape()));
  const std::size_t levels = o.weights.size();
  const std::size_t min_extent = ms_ssim_min_extent(levels);
  if (a.dim(1) < min_extent || a.dim(2) < min_extent)
    throw ContractError("ms_ssim: image " + ad::to_string(a.shape()) + " too small for " +
                        std::to_string(levels) + " levels; minimum extent is " + std::to_string(min_extent));

  auto blur = [&](const Tensor& t) { return ad::gaussian_blur(t, o.sigma, o.radius); };
  auto spatial_mean = [](const Tensor& t) { return ad::mean(ad::mean(t, 2), 1); };  // (C)

  Tensor x = a, y = b;
  Tensor product;
  for (std::size_t level = 0; level < levels; ++level) {
    const Tensor mx = blur(x), my = blur(y);
    const Tensor mx2 = ad::square(mx), my2 = ad::square(my), mxy = ad::mul(mx, my);
    const Tensor sxx = ad::sub(blur(ad::square(x)), mx2);
    const Tensor syy = ad::sub(blur(ad::square(y)), my2);
    const Tensor sxy = ad::sub(blur(ad::mul(x, y)), mxy);
    const Tensor cs_map = ad::div(ad::add_scalar(ad::mul_scalar(sxy, 2.0), o.c2),
                                  ad::add_scalar(ad::add(sxx, syy), o.c2));
    Tensor term;
    if (level + 1 < levels) {
      term = spatial_mean(cs_map);
      x = ad::avg_downsample_2x(x);
      y = ad::avg_downsample_2x(y);
    } else {
      const Tensor l_map = ad::div(ad::add_scalar(ad::mul_scalar(mxy, 2.0), o.c1),
                                   ad::add_scalar(ad::add(mx2, my2), o.c1));
      term = spatial_mean(ad::mul(l_map, cs_map));
    }
    term = ad::pow(ad::clamp(term, o.cs_floor, std::numeric_limits<double>::max()), o.weights[level]);
    product = level == 0 ? term : ad::mul(product, term);
  }
  return ad::mean(product);
}

Tensor loss_ssim(const Tensor& est, const Tensor& gt, const MsSsimOptions& options) {
  return ad::add_scalar(ad::mul_scalar(ms_ssim(est, gt, options), -1.0), 1.0);
}

Tensor loss_es(const Tensor& est, const Tensor& gt, double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ContractError("loss_es: alpha must be in [0, 1), got " + std::to_string(alpha));
  const Tensor mae = loss_mae(est, gt);
  if (alpha == 0.0) return mae;
  return ad::add(ad::mul_scalar(mae, 1.0 - alpha), ad::mul_scalar(loss_ssim(est, gt), alpha));
}

}  // namespace lowlight::esn
