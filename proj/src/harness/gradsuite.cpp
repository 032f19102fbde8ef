#include <algorithm>
#include <functional>
#include <random>

#include "lowlight/autodiff/gradcheck.hpp"
#include "lowlight/autodiff/ops.hpp"
#include "lowlight/harness.hpp"

namespace lowlight::harness {
namespace {

using ad::Shape;

class Points {
 public:
  explicit Points(std::uint64_t seed) : rng_(seed) {}

  Tensor uniform(Shape shape, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(ad::numel(shape));
    for (double& x : v) x = u(rng_);
    return Tensor(std::move(shape), std::move(v));
  }
  // Magnitudes in [0.05, 1], so kinks at 0 and at +-0.5 are at least 0.01 away.
  Tensor kink_free(Shape shape) {
    std::uniform_real_distribution<double> mag(0.05, 1.0);
    std::vector<double> v(ad::numel(shape));
    for (double& x : v) {
      double m = mag(rng_);
      if (std::fabs(m - 0.5) < 0.01) m += 0.02;
      x = (rng_() & 1) ? m : -m;
    }
    return Tensor(std::move(shape), std::move(v));
  }
  // Distinct values, so max-pool windows have a strict maximum.
  Tensor distinct(Shape shape) {
    std::vector<double> v(ad::numel(shape));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(v.size());
    std::shuffle(v.begin(), v.end(), rng_);
    return Tensor(std::move(shape), std::move(v));
  }
  // Image pair for SSIM-type losses: a smooth-ish target and a perturbed estimate.
  std::pair<Tensor, Tensor> image_pair(Shape shape) {
    Tensor gt = uniform(shape, 0.1, 0.9);
    std::normal_distribution<double> n(0.0, 0.05);
    std::vector<double> est(gt.values().begin(), gt.values().end());
    for (double& x : est) {
      double d = n(rng_);
      if (std::fabs(d) < 0.002) d = d < 0 ? -0.002 : 0.002;  // away from the |.| kink
      x = std::clamp(x + d, 0.02, 0.98);
    }
    return {Tensor(shape, std::move(est)), gt};
  }
  std::uint64_t next() { return rng_(); }

 private:
  std::mt19937_64 rng_;
};

Tensor probe(const Tensor& y, std::uint64_t seed) {
  Points p(seed);
  return ad::sum(ad::mul(y, p.uniform(y.shape(), -1.0, 1.0)));
}

using Case = std::function<double(Points&)>;

double unary(Points& p, const Tensor& x, const std::function<Tensor(const Tensor&)>& f) {
  const std::uint64_t s = p.next();
  return ad::grad_check([&](const Tensor& t) { return probe(f(t), s); }, x).max_relative_error;
}

double multi(Points& p, std::vector<Tensor> xs, const std::function<Tensor(std::span<const Tensor>)>& f,
             std::optional<std::size_t> max_coordinates = std::nullopt) {
  ad::GradCheckOptions o;
  o.max_coordinates = max_coordinates;
  o.seed = p.next();
  return ad::grad_check(f, xs, o).max_relative_error;
}

struct Entry {
  const char* name;
  double bound;
  Case run;
};

std::vector<Entry> entries() {
  const Shape img{2, 6, 8};
  return {
      {"conv2d", 1e-4,
       [=](Points& p) {
         const std::uint64_t s = p.next();
         return multi(p, {p.uniform(img, -1, 1), p.uniform({3, 2, 3, 3}, -1, 1), p.uniform({3}, -1, 1)},
                      [s](std::span<const Tensor> in) { return probe(ad::conv2d(in[0], in[1], in[2]), s); });
       }},
      {"conv2d_stride2", 1e-4,
       [=](Points& p) {
         const std::uint64_t s = p.next();
         return multi(p, {p.uniform(img, -1, 1), p.uniform({3, 2, 3, 3}, -1, 1), p.uniform({3}, -1, 1)},
                      [s](std::span<const Tensor> in) { return probe(ad::conv2d(in[0], in[1], in[2], 2), s); });
       }},
      {"linear", 1e-4,
       [](Points& p) {
         const std::uint64_t s = p.next();
         return multi(p, {p.uniform({5}, -1, 1), p.uniform({3, 5}, -1, 1), p.uniform({3}, -1, 1)},
                      [s](std::span<const Tensor> in) { return probe(ad::linear(in[0], in[1], in[2]), s); });
       }},
      {"leaky_relu", 1e-4, [=](Points& p) { return unary(p, p.kink_free(img), [](const Tensor& x) { return ad::leaky_relu(x, 0.2); }); }},
      {"sigmoid", 1e-4, [=](Points& p) { return unary(p, p.uniform(img, -3, 3), [](const Tensor& x) { return ad::sigmoid(x); }); }},
      {"exp", 1e-4, [=](Points& p) { return unary(p, p.uniform(img, -2, 2), [](const Tensor& x) { return ad::exp(x); }); }},
      {"log", 1e-4, [=](Points& p) { return unary(p, p.uniform(img, 0.2, 3), [](const Tensor& x) { return ad::log(x); }); }},
      {"abs", 1e-4, [=](Points& p) { return unary(p, p.kink_free(img), [](const Tensor& x) { return ad::abs(x); }); }},
      {"square", 1e-4, [=](Points& p) { return unary(p, p.uniform(img, -2, 2), [](const Tensor& x) { return ad::square(x); }); }},
      {"pow", 1e-4, [=](Points& p) { return unary(p, p.uniform(img, 0.2, 2), [](const Tensor& x) { return ad::pow(x, 0.7); }); }},
      {"clamp", 1e-4, [=](Points& p) { return unary(p, p.kink_free(img), [](const Tensor& x) { return ad::clamp(x, -0.5, 0.5); }); }},
      {"max_pool_2x2", 1e-4, [=](Points& p) { return unary(p, p.distinct(img), [](const Tensor& x) { return ad::max_pool_2x2(x); }); }},
      {"upsample_nearest_2x", 1e-4, [=](Points& p) { return unary(p, p.uniform(img, -1, 1), [](const Tensor& x) { return ad::upsample_nearest_2x(x); }); }},
      {"avg_downsample_2x", 1e-4, [=](Points& p) { return unary(p, p.uniform({2, 7, 8}, -1, 1), [](const Tensor& x) { return ad::avg_downsample_2x(x); }); }},
      {"pixel_shuffle", 1e-4, [](Points& p) { return unary(p, p.uniform({8, 3, 4}, -1, 1), [](const Tensor& x) { return ad::pixel_shuffle(x); }); }},
      {"pixel_unshuffle", 1e-4, [=](Points& p) { return unary(p, p.uniform(img, -1, 1), [](const Tensor& x) { return ad::pixel_unshuffle(x); }); }},
      {"resize_nearest", 1e-4, [=](Points& p) { return unary(p, p.uniform(img, -1, 1), [](const Tensor& x) { return ad::resize_nearest(x, 4, 11); }); }},
      {"reshape", 1e-4, [=](Points& p) { return unary(p, p.uniform(img, -1, 1), [](const Tensor& x) { return ad::reshape(x, {4, 24}); }); }},
      {"broadcast", 1e-4, [](Points& p) { return unary(p, p.uniform({}, -1, 1), [](const Tensor& x) { return ad::broadcast(x, {3, 2}); }); }},
      {"spatial_softmax", 1e-4, [=](Points& p) { return unary(p, p.uniform(img, -2, 2), [](const Tensor& x) { return ad::spatial_softmax(x); }); }},
      {"gaussian_blur", 1e-4, [=](Points& p) { return unary(p, p.uniform(img, -1, 1), [](const Tensor& x) { return ad::gaussian_blur(x, 1.5, 5); }); }},
      {"sum", 1e-4, [=](Points& p) { return unary(p, p.uniform(img, -1, 1), [](const Tensor& x) { return ad::sum(x); }); }},
      {"mean", 1e-4, [=](Points& p) { return unary(p, p.uniform(img, -1, 1), [](const Tensor& x) { return ad::mean(x); }); }},
      {"sum_axis", 1e-4, [=](Points& p) { return unary(p, p.uniform(img, -1, 1), [](const Tensor& x) { return ad::sum(x, 1); }); }},
      {"mean_axis", 1e-4, [=](Points& p) { return unary(p, p.uniform(img, -1, 1), [](const Tensor& x) { return ad::mean(x, 2); }); }},
      {"add_scalar_mul_scalar", 1e-4, [=](Points& p) { return unary(p, p.uniform(img, -1, 1), [](const Tensor& x) { return ad::add_scalar(ad::mul_scalar(x, 3.0), 1.0); }); }},
      {"add", 1e-4,
       [=](Points& p) {
         const std::uint64_t s = p.next();
         return multi(p, {p.uniform(img, -1, 1), p.uniform(img, -1, 1)}, [s](std::span<const Tensor> in) { return probe(ad::add(in[0], in[1]), s); });
       }},
      {"sub", 1e-4,
       [=](Points& p) {
         const std::uint64_t s = p.next();
         return multi(p, {p.uniform(img, -1, 1), p.uniform(img, -1, 1)}, [s](std::span<const Tensor> in) { return probe(ad::sub(in[0], in[1]), s); });
       }},
      {"mul", 1e-4,
       [=](Points& p) {
         const std::uint64_t s = p.next();
         return multi(p, {p.uniform(img, -1, 1), p.uniform(img, -1, 1)}, [s](std::span<const Tensor> in) { return probe(ad::mul(in[0], in[1]), s); });
       }},
      {"div", 1e-4,
       [=](Points& p) {
         const std::uint64_t s = p.next();
         return multi(p, {p.uniform(img, -1, 1), p.uniform(img, 0.3, 2)}, [s](std::span<const Tensor> in) { return probe(ad::div(in[0], in[1]), s); });
       }},
      {"concat_channels", 1e-4,
       [=](Points& p) {
         const std::uint64_t s = p.next();
         return multi(p, {p.uniform(img, -1, 1), p.uniform({1, 6, 8}, -1, 1)},
                      [s](std::span<const Tensor> in) { return probe(ad::concat_channels(in[0], in[1]), s); });
       }},
      {"L_MAE", 1e-4,
       [](Points& p) {
         auto [est, gt] = p.image_pair({3, 8, 8});
         return unary(p, est, [gt](const Tensor& x) { return esn::loss_mae(x, gt); });
       }},
      {"L_SSIM", 1e-3,
       [](Points& p) {
         auto [est, gt] = p.image_pair({3, 32, 32});
         return multi(p, {est}, [gt](std::span<const Tensor> in) { return esn::loss_ssim(in[0], gt); }, 24);
       }},
      {"L_ES", 1e-4,
       [](Points& p) {
         auto [est, gt] = p.image_pair({3, 32, 32});
         return multi(p, {est}, [gt](std::span<const Tensor> in) { return esn::loss_es(in[0], gt, 0.15); }, 24);
       }},
      {"L_BP", 1e-4,
       [](Points& p) {
         const Tensor est = p.uniform({1, 8, 8}, 0.0, 1.0);
         const Tensor w = bpn::aoi_weight_map(p.uniform({1, 8, 8}, 0.0, 1.0), 0.5, 0.01);
         return multi(p, {est}, [w](std::span<const Tensor> in) { return bpn::loss_bp(in[0], w, 0.5, 0.04); });
       }},
  };
}

}  // namespace

std::vector<GradSuiteRow> run_gradient_suite(std::size_t instances, std::uint64_t seed) {
  std::vector<GradSuiteRow> rows;
  const auto all = entries();
  for (std::size_t e = 0; e < all.size(); ++e) {
    GradSuiteRow row{all[e].name, instances, 0.0, all[e].bound};
    for (std::size_t i = 0; i < instances; ++i) {
      Points p(seed * 1000003 + e * 1009 + i);
      row.worst = std::max(row.worst, all[e].run(p));
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace lowlight::harness
