// Reference kernels: direct loop nests, no blocking, no threads.

#include "lowlight/kernels.hpp"

#include <cstddef>

namespace lowlight::kernels::serial {

void gemm_accumulate(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                     const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * lda + p] * b[p * ldb + j];
      c[i * ldc + j] += s;
    }
}

namespace {

// Input coordinate feeding output (oy, ox) through tap (ky, kx); false when it
// lands in the zero padding.
bool source(const ConvGeometry& g, std::size_t oy, std::size_t ox, std::size_t ky, std::size_t kx,
            std::size_t& iy, std::size_t& ix) {
  const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
  const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
  if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(g.height) || x >= static_cast<std::ptrdiff_t>(g.width))
    return false;
  iy = static_cast<std::size_t>(y);
  ix = static_cast<std::size_t>(x);
  return true;
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  for (std::size_t o = 0; o < g.out_channels; ++o)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double s = bias.empty() ? 0.0 : bias[o];
        for (std::size_t c = 0; c < g.in_channels; ++c)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              std::size_t iy = 0, ix = 0;
              if (!source(g, oy, ox, ky, kx, iy, ix)) continue;
              s += weight[((o * g.in_channels + c) * k + ky) * k + kx] *
                   input[(c * g.height + iy) * g.width + ix];
            }
        output[(o * oh + oy) * ow + ox] = s;
      }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output,
                           std::span<const double> weight, std::span<double> grad_input) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  for (std::size_t o = 0; o < g.out_channels; ++o)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double go = grad_output[(o * oh + oy) * ow + ox];
        for (std::size_t c = 0; c < g.in_channels; ++c)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              std::size_t iy = 0, ix = 0;
              if (!source(g, oy, ox, ky, kx, iy, ix)) continue;
              grad_input[(c * g.height + iy) * g.width + ix] +=
                  go * weight[((o * g.in_channels + c) * k + ky) * k + kx];
            }
      }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_output, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  for (std::size_t o = 0; o < g.out_channels; ++o)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double go = grad_output[(o * oh + oy) * ow + ox];
        if (!grad_bias.empty()) grad_bias[o] += go;
        if (grad_weight.empty()) continue;
        for (std::size_t c = 0; c < g.in_channels; ++c)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              std::size_t iy = 0, ix = 0;
              if (!source(g, oy, ox, ky, kx, iy, ix)) continue;
              grad_weight[((o * g.in_channels + c) * k + ky) * k + kx] +=
                  go * input[(c * g.height + iy) * g.width + ix];
            }
      }
}

// The reference blur evaluates the full 2-D window per output pixel.
void gaussian_blur(std::size_t channels, const BlurTable& rows, const BlurTable& cols,
                   std::span<const double> input, std::span<double> output) {
  const std::size_t h = rows.length, w = cols.length;
  const std::ptrdiff_t rr = static_cast<std::ptrdiff_t>(rows.radius);
  const std::ptrdiff_t rc = static_cast<std::ptrdiff_t>(cols.radius);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double s = 0.0;
        for (std::ptrdiff_t dy = -rr; dy <= rr; ++dy)
          for (std::ptrdiff_t dx = -rc; dx <= rc; ++dx) {
            const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(y) + dy;
            const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(x) + dx;
            if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(h) || xx >= static_cast<std::ptrdiff_t>(w))
              continue;
            const double wy = rows.weights[y * (2 * rows.radius + 1) + static_cast<std::size_t>(dy + rr)];
            const double wx = cols.weights[x * (2 * cols.radius + 1) + static_cast<std::size_t>(dx + rc)];
            s += wy * wx * input[(c * h + static_cast<std::size_t>(yy)) * w + static_cast<std::size_t>(xx)];
          }
        output[(c * h + y) * w + x] = s;
      }
}

void gaussian_blur_transpose(std::size_t channels, const BlurTable& rows, const BlurTable& cols,
                             std::span<const double> grad_output, std::span<double> grad_input) {
  const std::size_t h = rows.length, w = cols.length;
  const std::ptrdiff_t rr = static_cast<std::ptrdiff_t>(rows.radius);
  const std::ptrdiff_t rc = static_cast<std::ptrdiff_t>(cols.radius);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double g = grad_output[(c * h + y) * w + x];
        for (std::ptrdiff_t dy = -rr; dy <= rr; ++dy)
          for (std::ptrdiff_t dx = -rc; dx <= rc; ++dx) {
            const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(y) + dy;
            const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(x) + dx;
            if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(h) || xx >= static_cast<std::ptrdiff_t>(w))
              continue;
            const double wy = rows.weights[y * (2 * rows.radius + 1) + static_cast<std::size_t>(dy + rr)];
            const double wx = cols.weights[x * (2 * cols.radius + 1) + static_cast<std::size_t>(dx + rc)];
            grad_input[(c * h + static_cast<std::size_t>(yy)) * w + static_cast<std::size_t>(xx)] += wy * wx * g;
          }
      }
}

}  // namespace lowlight::kernels::serial
