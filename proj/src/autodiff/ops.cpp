#include "lowlight/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "lowlight/error.hpp"
#include "lowlight/kernels.hpp"

namespace lowlight::ad {
namespace {

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw ContractError(std::string(op) + ": " + detail);
}

void require_finite(const char* op, const char* name, double v) {
  if (!std::isfinite(v)) shape_error(op, std::string("non-finite parameter ") + name);
}

void require_rank(const char* op, const Tensor& x, std::size_t rank) {
  if (x.rank() != rank)
    shape_error(op, "expected rank " + std::to_string(rank) + ", got shape " + to_string(x.shape()));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    shape_error(op, "shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

template <std::size_t N>
Tensor record(Tensor out, const Tensor* const (&inputs)[N], BackwardFn fn, const char* op) {
  return Tape::record(std::move(out), std::span<const Tensor* const>(inputs, N), std::move(fn), op);
}

// Elementwise y = f(x) with dy/dx = deriv(x, y).
template <class Fwd, class Deriv>
Tensor unary(const Tensor& x, const char* op, Fwd fwd, Deriv deriv) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  Tensor y(x.shape(), std::move(out));
  const Tensor xin = x.detached(), yout = y.detached();
  const Tensor* const inputs[] = {&x};
  return record(
      y, inputs,
      [xin, yout, deriv](std::span<const double> up, std::span<const GradSink> sinks) {
        const GradSink g = sinks[0];
        if (g.empty()) return;
        for (std::size_t i = 0; i < up.size(); ++i) g[i] += up[i] * deriv(xin[i], yout[i]);
      },
      op);
}

struct Chw {
  std::size_t c, h, w;
};

Chw chw(const char* op, const Tensor& x) {
  require_rank(op, x, 3);
  return {x.dim(0), x.dim(1), x.dim(2)};
}

// Gaussian taps per output position with out-of-range taps zeroed and the
// remaining ones renormalized.
std::vector<double> blur_table(std::size_t length, double sigma, std::size_t radius) {
  const std::size_t taps = 2 * radius + 1;
  std::vector<double> base(taps);
  for (std::size_t d = 0; d < taps; ++d) {
    const double off = static_cast<double>(d) - static_cast<double>(radius);
    base[d] = std::exp(-off * off / (2.0 * sigma * sigma));
  }
  std::vector<double> table(length * taps, 0.0);
  for (std::size_t x = 0; x < length; ++x) {
    double norm = 0.0;
    for (std::size_t d = 0; d < taps; ++d) {
      const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(x + d) - static_cast<std::ptrdiff_t>(radius);
      if (xx >= 0 && xx < static_cast<std::ptrdiff_t>(length)) norm += base[d];
    }
    for (std::size_t d = 0; d < taps; ++d) {
      const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(x + d) - static_cast<std::ptrdiff_t>(radius);
      if (xx >= 0 && xx < static_cast<std::ptrdiff_t>(length)) table[x * taps + d] = base[d] / norm;
    }
  }
  return table;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride) {
  constexpr const char* op = "conv2d";
  const Chw in = chw(op, x);
  require_rank(op, weight, 4);
  if (weight.dim(1) != in.c || weight.dim(2) != weight.dim(3) || weight.dim(2) % 2 == 0)
    shape_error(op, "weight " + to_string(weight.shape()) + " incompatible with input " +
                        to_string(x.shape()));
  if (bias.shape() != Shape{weight.dim(0)})
    shape_error(op, "bias " + to_string(bias.shape()) + " does not match weight " +
                        to_string(weight.shape()));
  if (stride != 1 && stride != 2) shape_error(op, "stride must be 1 or 2");

  kernels::ConvGeometry g;
  g.in_channels = in.c;
  g.height = in.h;
  g.width = in.w;
  g.out_channels = weight.dim(0);
  g.kernel = weight.dim(2);
  g.stride = stride;
  g.pad = g.kernel / 2;
  if (in.h + 2 * g.pad < g.kernel || in.w + 2 * g.pad < g.kernel)
    shape_error(op, "input " + to_string(x.shape()) + " smaller than kernel");

  std::vector<double> out(g.output_size());
  kernels::conv2d_forward(g, x.values(), weight.values(), bias.values(), out);
  Tensor y({g.out_channels, g.out_height(), g.out_width()}, std::move(out));

  const Tensor xin = x.detached(), win = weight.detached();
  const Tensor* const inputs[] = {&x, &weight, &bias};
  return record(
      y, inputs,
      [g, xin, win](std::span<const double> up, std::span<const GradSink> sinks) {
        if (!sinks[0].empty()) kernels::conv2d_backward_input(g, up, win.values(), sinks[0]);
        if (!sinks[1].empty() || !sinks[2].empty())
          kernels::conv2d_backward_weight(g, xin.values(), up, sinks[1], sinks[2]);
      },
      op);
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  constexpr const char* op = "linear";
  require_rank(op, x, 1);
  require_rank(op, weight, 2);
  const std::size_t m = weight.dim(0), n = weight.dim(1);
  if (x.dim(0) != n || bias.shape() != Shape{m})
    shape_error(op, "x " + to_string(x.shape()) + ", weight " + to_string(weight.shape()) +
                        ", bias " + to_string(bias.shape()));
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    double s = bias[i];
    for (std::size_t j = 0; j < n; ++j) s += weight[i * n + j] * x[j];
    out[i] = s;
  }
  const Tensor xin = x.detached(), win = weight.detached();
  const Tensor* const inputs[] = {&x, &weight, &bias};
  return record(
      Tensor({m}, std::move(out)), inputs,
      [m, n, xin, win](std::span<const double> up, std::span<const GradSink> sinks) {
        if (!sinks[0].empty())
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) sinks[0][j] += win[i * n + j] * up[i];
        if (!sinks[1].empty())
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) sinks[1][i * n + j] += up[i] * xin[j];
        if (!sinks[2].empty())
          for (std::size_t i = 0; i < m; ++i) sinks[2][i] += up[i];
      },
      op);
}

Tensor leaky_relu(const Tensor& x, double slope) {
  require_finite("leaky_relu", "slope", slope);
  return unary(
      x, "leaky_relu", [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
  return unary(x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.values())
    if (!(v > 0.0)) shape_error("log", "argument must be positive");
  return unary(x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, "abs", [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& x) {
  return unary(x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor pow(const Tensor& x, double exponent) {
  require_finite("pow", "exponent", exponent);
  for (double v : x.values())
    if (!(v > 0.0)) shape_error("pow", "base must be positive");
  return unary(
      x, "pow", [exponent](double v) { return std::pow(v, exponent); },
      [exponent](double v, double y) { return exponent * y / v; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  require_finite("clamp", "lo", lo);
  require_finite("clamp", "hi", hi);
  if (lo > hi) shape_error("clamp", "lo > hi");
  return unary(
      x, "clamp", [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor max_pool_2x2(const Tensor& x) {
  constexpr const char* op = "max_pool_2x2";
  const Chw in = chw(op, x);
  if (in.h % 2 || in.w % 2) shape_error(op, "odd extent " + to_string(x.shape()));
  const std::size_t oh = in.h / 2, ow = in.w / 2;
  std::vector<double> out(in.c * oh * ow);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const auto xv = x.values();
  for (std::size_t c = 0; c < in.c; ++c)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xo = 0; xo < ow; ++xo) {
        const std::size_t base = (c * in.h + 2 * y) * in.w + 2 * xo;
        const std::size_t cand[4] = {base, base + 1, base + in.w, base + in.w + 1};
        std::size_t best = cand[0];
        for (std::size_t k = 1; k < 4; ++k)
          if (xv[cand[k]] > xv[best]) best = cand[k];
        const std::size_t o = (c * oh + y) * ow + xo;
        out[o] = xv[best];
        (*argmax)[o] = best;
      }
  const Tensor* const inputs[] = {&x};
  return record(
      Tensor({in.c, oh, ow}, std::move(out)), inputs,
      [argmax](std::span<const double> up, std::span<const GradSink> sinks) {
        if (sinks[0].empty()) return;
        for (std::size_t o = 0; o < up.size(); ++o) sinks[0][(*argmax)[o]] += up[o];
      },
      op);
}

Tensor upsample_nearest_2x(const Tensor& x) {
  constexpr const char* op = "upsample_nearest_2x";
  const Chw in = chw(op, x);
  const std::size_t oh = in.h * 2, ow = in.w * 2;
  std::vector<double> out(in.c * oh * ow);
  const auto xv = x.values();
  for (std::size_t c = 0; c < in.c; ++c)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xo = 0; xo < ow; ++xo)
        out[(c * oh + y) * ow + xo] = xv[(c * in.h + y / 2) * in.w + xo / 2];
  const Tensor* const inputs[] = {&x};
  return record(
      Tensor({in.c, oh, ow}, std::move(out)), inputs,
      [in, oh, ow](std::span<const double> up, std::span<const GradSink> sinks) {
        if (sinks[0].empty()) return;
        for (std::size_t c = 0; c < in.c; ++c)
          for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t xo = 0; xo < ow; ++xo)
              sinks[0][(c * in.h + y / 2) * in.w + xo / 2] += up[(c * oh + y) * ow + xo];
      },
      op);
}

Tensor avg_downsample_2x(const Tensor& x) {
  constexpr const char* op = "avg_downsample_2x";
  const Chw in = chw(op, x);
  if (in.h < 2 || in.w < 2) shape_error(op, "extent too small " + to_string(x.shape()));
  const std::size_t oh = in.h / 2, ow = in.w / 2;
  std::vector<double> out(in.c * oh * ow);
  const auto xv = x.values();
  for (std::size_t c = 0; c < in.c; ++c)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xo = 0; xo < ow; ++xo) {
        const std::size_t b = (c * in.h + 2 * y) * in.w + 2 * xo;
        out[(c * oh + y) * ow + xo] = 0.25 * (xv[b] + xv[b + 1] + xv[b + in.w] + xv[b + in.w + 1]);
      }
  const Tensor* const inputs[] = {&x};
  return record(
      Tensor({in.c, oh, ow}, std::move(out)), inputs,
      [in, oh, ow](std::span<const double> up, std::span<const GradSink> sinks) {
        if (sinks[0].empty()) return;
        for (std::size_t c = 0; c < in.c; ++c)
          for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t xo = 0; xo < ow; ++xo) {
              const std::size_t b = (c * in.h + 2 * y) * in.w + 2 * xo;
              const double g = 0.25 * up[(c * oh + y) * ow + xo];
              sinks[0][b] += g;
              sinks[0][b + 1] += g;
              sinks[0][b + in.w] += g;
              sinks[0][b + in.w + 1] += g;
            }
      },
      op);
}

Tensor concat_channels(std::span<const Tensor> parts) {
  constexpr const char* op = "concat_channels";
  if (parts.empty()) shape_error(op, "no inputs");
  const Chw first = chw(op, parts[0]);
  std::size_t channels = 0;
  std::vector<const Tensor*> inputs;
  std::vector<std::size_t> offsets;
  for (const Tensor& p : parts) {
    const Chw d = chw(op, p);
    if (d.h != first.h || d.w != first.w)
      shape_error(op, "spatial mismatch " + to_string(parts[0].shape()) + " vs " + to_string(p.shape()));
    offsets.push_back(channels * first.h * first.w);
    channels += d.c;
    inputs.push_back(&p);
  }
  std::vector<double> out;
  out.reserve(channels * first.h * first.w);
  for (const Tensor& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  std::vector<std::size_t> sizes;
  for (const Tensor& p : parts) sizes.push_back(p.size());
  return Tape::record(
      Tensor({channels, first.h, first.w}, std::move(out)), inputs,
      [offsets, sizes](std::span<const double> up, std::span<const GradSink> sinks) {
        for (std::size_t k = 0; k < sinks.size(); ++k) {
          if (sinks[k].empty()) continue;
          for (std::size_t i = 0; i < sizes[k]; ++i) sinks[k][i] += up[offsets[k] + i];
        }
      },
      op);
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const Tensor parts[] = {a, b};
  return concat_channels(std::span<const Tensor>(parts));
}

Tensor pixel_shuffle(const Tensor& x) {
  constexpr const char* op = "pixel_shuffle";
  const Chw in = chw(op, x);
  if (in.c % 4) shape_error(op, "channel count not divisible by 4 in " + to_string(x.shape()));
  const std::size_t c_out = in.c / 4, oh = in.h * 2, ow = in.w * 2;
  auto index = std::make_shared<std::vector<std::size_t>>(x.size());  // output -> input
  std::vector<double> out(x.size());
  const auto xv = x.values();
  for (std::size_t c = 0; c < c_out; ++c)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xo = 0; xo < ow; ++xo) {
        const std::size_t src = ((4 * c + 2 * (y % 2) + xo % 2) * in.h + y / 2) * in.w + xo / 2;
        const std::size_t dst = (c * oh + y) * ow + xo;
        (*index)[dst] = src;
        out[dst] = xv[src];
      }
  const Tensor* const inputs[] = {&x};
  return record(
      Tensor({c_out, oh, ow}, std::move(out)), inputs,
      [index](std::span<const double> up, std::span<const GradSink> sinks) {
        if (sinks[0].empty()) return;
        for (std::size_t i = 0; i < up.size(); ++i) sinks[0][(*index)[i]] += up[i];
      },
      op);
}

Tensor pixel_unshuffle(const Tensor& x) {
  constexpr const char* op = "pixel_unshuffle";
  const Chw in = chw(op, x);
  if (in.h % 2 || in.w % 2) shape_error(op, "odd extent " + to_string(x.shape()));
  const std::size_t oh = in.h / 2, ow = in.w / 2;
  auto index = std::make_shared<std::vector<std::size_t>>(x.size());
  std::vector<double> out(x.size());
  const auto xv = x.values();
  for (std::size_t c = 0; c < in.c; ++c)
    for (std::size_t y = 0; y < in.h; ++y)
      for (std::size_t xi = 0; xi < in.w; ++xi) {
        const std::size_t src = (c * in.h + y) * in.w + xi;
        const std::size_t dst = ((4 * c + 2 * (y % 2) + xi % 2) * oh + y / 2) * ow + xi / 2;
        (*index)[dst] = src;
        out[dst] = xv[src];
      }
  const Tensor* const inputs[] = {&x};
  return record(
      Tensor({in.c * 4, oh, ow}, std::move(out)), inputs,
      [index](std::span<const double> up, std::span<const GradSink> sinks) {
        if (sinks[0].empty()) return;
        for (std::size_t i = 0; i < up.size(); ++i) sinks[0][(*index)[i]] += up[i];
      },
      op);
}

Tensor resize_nearest(const Tensor& x, std::size_t height, std::size_t width) {
  constexpr const char* op = "resize_nearest";
  const Chw in = chw(op, x);
  if (height == 0 || width == 0) shape_error(op, "empty target extent");
  auto index = std::make_shared<std::vector<std::size_t>>(in.c * height * width);
  std::vector<double> out(index->size());
  const auto xv = x.values();
  for (std::size_t c = 0; c < in.c; ++c)
    for (std::size_t y = 0; y < height; ++y) {
      const std::size_t sy = y * in.h / height;
      for (std::size_t xo = 0; xo < width; ++xo) {
        const std::size_t sx = xo * in.w / width;
        const std::size_t dst = (c * height + y) * width + xo;
        (*index)[dst] = (c * in.h + sy) * in.w + sx;
        out[dst] = xv[(*index)[dst]];
      }
    }
  const Tensor* const inputs[] = {&x};
  return record(
      Tensor({in.c, height, width}, std::move(out)), inputs,
      [index](std::span<const double> up, std::span<const GradSink> sinks) {
        if (sinks[0].empty()) return;
        for (std::size_t i = 0; i < up.size(); ++i) sinks[0][(*index)[i]] += up[i];
      },
      op);
}

Tensor reshape(const Tensor& x, Shape shape) {
  Tensor y = x.with_shape(std::move(shape));
  const Tensor* const inputs[] = {&x};
  return record(
      y, inputs,
      [](std::span<const double> up, std::span<const GradSink> sinks) {
        if (sinks[0].empty()) return;
        for (std::size_t i = 0; i < up.size(); ++i) sinks[0][i] += up[i];
      },
      "reshape");
}

Tensor broadcast(const Tensor& scalar, Shape shape) {
  if (scalar.size() != 1) shape_error("broadcast", "expected a scalar, got " + to_string(scalar.shape()));
  Tensor y = Tensor::full(std::move(shape), scalar[0]);
  const Tensor* const inputs[] = {&scalar};
  return record(
      y, inputs,
      [](std::span<const double> up, std::span<const GradSink> sinks) {
        if (sinks[0].empty()) return;
        double s = 0.0;
        for (double g : up) s += g;
        sinks[0][0] += s;
      },
      "broadcast");
}

namespace {

template <class Fwd, class Back>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, Fwd fwd, Back back) {
  require_same_shape(op, a, b);
  const auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i]);
  const Tensor ain = a.detached(), bin = b.detached();
  const Tensor* const inputs[] = {&a, &b};
  return record(
      Tensor(a.shape(), std::move(out)), inputs,
      [ain, bin, back](std::span<const double> up, std::span<const GradSink> sinks) {
        for (std::size_t i = 0; i < up.size(); ++i) {
          double ga = 0.0, gb = 0.0;
          back(ain[i], bin[i], up[i], ga, gb);
          if (!sinks[0].empty()) sinks[0][i] += ga;
          if (!sinks[1].empty()) sinks[1][i] += gb;
        }
      },
      op);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double g, double& ga, double& gb) { ga = g; gb = g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double g, double& ga, double& gb) { ga = g; gb = -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& ga, double& gb) { ga = g * y; gb = g * x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double x, double y, double g, double& ga, double& gb) {
        ga = g / y;
        gb = -g * x / (y * y);
      });
}

Tensor add_scalar(const Tensor& x, double s) {
  require_finite("add_scalar", "s", s);
  return unary(x, "add_scalar", [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double s) {
  require_finite("mul_scalar", "s", s);
  return unary(x, "mul_scalar", [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  const Tensor* const inputs[] = {&x};
  return record(
      Tensor::scalar(s), inputs,
      [](std::span<const double> up, std::span<const GradSink> sinks) {
        if (sinks[0].empty()) return;
        for (double& g : sinks[0]) g += up[0];
      },
      "sum");
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) shape_error("mean", "empty tensor");
  return mul_scalar(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor sum(const Tensor& x, std::size_t axis) {
  constexpr const char* op = "sum(axis)";
  if (axis >= x.rank()) shape_error(op, "axis out of range for " + to_string(x.shape()));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t n = x.dim(axis);
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(outer * inner, 0.0);
  const auto xv = x.values();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += xv[(o * n + k) * inner + i];
  const Tensor* const inputs[] = {&x};
  return record(
      Tensor(std::move(shape), std::move(out)), inputs,
      [outer, inner, n](std::span<const double> up, std::span<const GradSink> sinks) {
        if (sinks[0].empty()) return;
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t k = 0; k < n; ++k)
            for (std::size_t i = 0; i < inner; ++i) sinks[0][(o * n + k) * inner + i] += up[o * inner + i];
      },
      op);
}

Tensor mean(const Tensor& x, std::size_t axis) {
  const Tensor s = sum(x, axis);
  return mul_scalar(s, 1.0 / static_cast<double>(x.dim(axis)));
}

Tensor spatial_softmax(const Tensor& x) {
  constexpr const char* op = "spatial_softmax";
  if (x.rank() != 2 && x.rank() != 3) shape_error(op, "expected (H,W) or (C,H,W), got " + to_string(x.shape()));
  const std::size_t channels = x.rank() == 3 ? x.dim(0) : 1;
  const std::size_t plane = x.size() / channels;
  std::vector<double> out(x.size());
  const auto xv = x.values();
  for (std::size_t c = 0; c < channels; ++c) {
    const double* in = xv.data() + c * plane;
    double* o = out.data() + c * plane;
    const double mx = *std::max_element(in, in + plane);
    double z = 0.0;
    for (std::size_t i = 0; i < plane; ++i) z += (o[i] = std::exp(in[i] - mx));
    for (std::size_t i = 0; i < plane; ++i) o[i] /= z;
  }
  Tensor y(x.shape(), std::move(out));
  const Tensor yout = y.detached();
  const Tensor* const inputs[] = {&x};
  return record(
      y, inputs,
      [yout, channels, plane](std::span<const double> up, std::span<const GradSink> sinks) {
        if (sinks[0].empty()) return;
        for (std::size_t c = 0; c < channels; ++c) {
          double dot = 0.0;
          for (std::size_t i = 0; i < plane; ++i) dot += up[c * plane + i] * yout[c * plane + i];
          for (std::size_t i = 0; i < plane; ++i)
            sinks[0][c * plane + i] += yout[c * plane + i] * (up[c * plane + i] - dot);
        }
      },
      op);
}

Tensor gaussian_blur(const Tensor& x, double sigma, std::size_t radius) {
  constexpr const char* op = "gaussian_blur";
  require_finite(op, "sigma", sigma);
  if (sigma <= 0.0) shape_error(op, "sigma must be positive");
  const Chw in = chw(op, x);
  auto rows = std::make_shared<std::vector<double>>(blur_table(in.h, sigma, radius));
  auto cols = std::make_shared<std::vector<double>>(blur_table(in.w, sigma, radius));
  const kernels::BlurTable rt{in.h, radius, *rows}, ct{in.w, radius, *cols};
  std::vector<double> out(x.size());
  kernels::gaussian_blur(in.c, rt, ct, x.values(), out);
  const Tensor* const inputs[] = {&x};
  return record(
      Tensor(x.shape(), std::move(out)), inputs,
      [in, radius, rows, cols](std::span<const double> up, std::span<const GradSink> sinks) {
        if (sinks[0].empty()) return;
        const kernels::BlurTable r{in.h, radius, *rows}, c{in.w, radius, *cols};
        kernels::gaussian_blur_transpose(in.c, r, c, up, sinks[0]);
      },
      op);
}

}  // namespace lowlight::ad
