#include "lowlight/kernels.hpp"

#include <algorithm>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lowlight::kernels {
namespace {

constexpr std::size_t kRowsPerTile = 8;     // micro-kernel rows
constexpr std::size_t kColsPerTile = 16;    // micro-kernel columns (packed panel width)
constexpr std::size_t kDepthBlock = 256;    // reduction block kept hot in L1
constexpr std::size_t kRowBlock = 64;       // rows per parallel task

#if defined(__GNUC__)
// Two 8-wide lanes cover one panel row; the compiler maps them onto whatever
// vector width the target offers.
typedef double lane_t __attribute__((vector_size(64)));

inline lane_t load_lane(const double* p) {
  lane_t v;
  __builtin_memcpy(&v, p, sizeof v);
  return v;
}

// acc(MR x 16) = A(MR x kc) * panel(kc x 16), then C += acc on the valid columns.
template <std::size_t MR>
void micro_kernel(const double* a, std::size_t lda, const double* panel, std::size_t kc,
                  double* c, std::size_t ldc, std::size_t cols) {
  lane_t lo[MR], hi[MR];
  for (std::size_t r = 0; r < MR; ++r) lo[r] = hi[r] = lane_t{};
  for (std::size_t p = 0; p < kc; ++p) {
    const lane_t b0 = load_lane(panel + p * kColsPerTile);
    const lane_t b1 = load_lane(panel + p * kColsPerTile + 8);
    for (std::size_t r = 0; r < MR; ++r) {
      const double av = a[r * lda + p];
      lo[r] += av * b0;
      hi[r] += av * b1;
    }
  }
  for (std::size_t r = 0; r < MR; ++r) {
    double* row = c + r * ldc;
    for (std::size_t j = 0; j < cols && j < 8; ++j) row[j] += lo[r][j];
    for (std::size_t j = 8; j < cols; ++j) row[j] += hi[r][j - 8];
  }
}
#else
template <std::size_t MR>
void micro_kernel(const double* a, std::size_t lda, const double* panel, std::size_t kc,
                  double* c, std::size_t ldc, std::size_t cols) {
  double acc[MR][kColsPerTile] = {};
  for (std::size_t p = 0; p < kc; ++p) {
    const double* b = panel + p * kColsPerTile;
    for (std::size_t r = 0; r < MR; ++r) {
      const double av = a[r * lda + p];
      for (std::size_t j = 0; j < kColsPerTile; ++j) acc[r][j] += av * b[j];
    }
  }
  for (std::size_t r = 0; r < MR; ++r)
    for (std::size_t j = 0; j < cols; ++j) c[r * ldc + j] += acc[r][j];
}
#endif

void run_micro(std::size_t rows, const double* a, std::size_t lda, const double* panel,
               std::size_t kc, double* c, std::size_t ldc, std::size_t cols) {
  switch (rows) {
    case 8: micro_kernel<8>(a, lda, panel, kc, c, ldc, cols); break;
    case 7: micro_kernel<7>(a, lda, panel, kc, c, ldc, cols); break;
    case 6: micro_kernel<6>(a, lda, panel, kc, c, ldc, cols); break;
    case 5: micro_kernel<5>(a, lda, panel, kc, c, ldc, cols); break;
    case 4: micro_kernel<4>(a, lda, panel, kc, c, ldc, cols); break;
    case 3: micro_kernel<3>(a, lda, panel, kc, c, ldc, cols); break;
    case 2: micro_kernel<2>(a, lda, panel, kc, c, ldc, cols); break;
    default: micro_kernel<1>(a, lda, panel, kc, c, ldc, cols); break;
  }
}

// col[(c*k + ky)*k + kx][(oy - oy0)*OW + ox] = input[c][oy*s + ky - pad][ox*s + kx - pad]
// for output rows oy in [oy0, oy1).
void im2col(const ConvGeometry& g, const double* input, double* col, std::size_t oy0,
            std::size_t oy1) {
  const std::size_t ow = g.out_width(), k = g.kernel;
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(g.height);
  const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(g.width);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(g.pad);
  const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(g.stride);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t row = 0; row < static_cast<std::ptrdiff_t>(g.in_channels * k * k); ++row) {
    const std::size_t c = static_cast<std::size_t>(row) / (k * k);
    const std::ptrdiff_t ky = (row / static_cast<std::ptrdiff_t>(k)) % static_cast<std::ptrdiff_t>(k);
    const std::ptrdiff_t kx = row % static_cast<std::ptrdiff_t>(k);
    const double* plane = input + c * g.height * g.width;
    double* dst = col + static_cast<std::size_t>(row) * (oy1 - oy0) * ow;
    for (std::size_t oy = oy0; oy < oy1; ++oy) {
      const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * s + ky - pad;
      double* out = dst + (oy - oy0) * ow;
      if (iy < 0 || iy >= h) {
        std::fill(out, out + ow, 0.0);
        continue;
      }
      const double* src = plane + iy * w;
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * s + kx - pad;
        out[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
      }
    }
  }
}

// row[oy*OW + ox][(c*k + ky)*k + kx]: the transpose of im2col, which lets the
// forward GEMM stream pixels while the (small) weight matrix stays packed.
void im2row(const ConvGeometry& g, const double* input, double* rows) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  const std::size_t kdim = g.in_channels * k * k;
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(g.height);
  const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(g.width);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(g.pad);
  const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(g.stride);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t oy = 0; oy < static_cast<std::ptrdiff_t>(oh); ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      double* dst = rows + (static_cast<std::size_t>(oy) * ow + ox) * kdim;
      for (std::size_t c = 0; c < g.in_channels; ++c) {
        const double* plane = input + c * g.height * g.width;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const std::ptrdiff_t iy = oy * s + static_cast<std::ptrdiff_t>(ky) - pad;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * s + static_cast<std::ptrdiff_t>(kx) - pad;
            *dst++ = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? plane[iy * w + ix] : 0.0;
          }
        }
      }
    }
  }
}

// Scatter-add of im2col columns back onto the image. Parallel over input
// channels: rows of one channel never touch another channel's plane.
void col2im_accumulate(const ConvGeometry& g, const double* col, double* grad_input) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(g.height);
  const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(g.width);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(g.pad);
  const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(g.stride);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(g.in_channels); ++c) {
    double* plane = grad_input + static_cast<std::size_t>(c) * g.height * g.width;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double* src = col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * s + static_cast<std::ptrdiff_t>(ky) - pad;
          if (iy < 0 || iy >= h) continue;
          double* dst = plane + iy * w;
          const double* row = src + oy * ow;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * s + static_cast<std::ptrdiff_t>(kx) - pad;
            if (ix >= 0 && ix < w) dst[ix] += row[ox];
          }
        }
      }
    }
  }
}

// Stride-1 convolution evaluated straight from a zero-padded copy of the input.
// A tile is 8 consecutive output pixels of one row times 16 output channels;
// the reduction runs over (channel, ky, kx) in a fixed order.
struct PaddedInput {
  std::size_t channels, height, width, stride_y;  // stride_y = padded row length
  std::vector<double> data;
};

constexpr std::size_t kPixelsPerTile = 8;
constexpr std::size_t kChunkPixels = 1024;

PaddedInput pad_input(const double* input, std::size_t channels, std::size_t h, std::size_t w,
                      std::size_t pad) {
  PaddedInput p{channels, h + 2 * pad, w + 2 * pad, w + 2 * pad + kPixelsPerTile, {}};
  p.data.assign(channels * p.height * p.stride_y, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(channels); ++c)
    for (std::size_t y = 0; y < h; ++y) {
      const double* src = input + (static_cast<std::size_t>(c) * h + y) * w;
      double* dst = p.data.data() + (static_cast<std::size_t>(c) * p.height + y + pad) * p.stride_y + pad;
      std::copy(src, src + w, dst);
    }
  return p;
}

// weight (O, C, k, k) -> panels[P][C*k*k][16], zero beyond O.
std::vector<double> pack_weight_panels(const double* weight, std::size_t out_channels,
                                       std::size_t kdim) {
  const std::size_t panels = (out_channels + kColsPerTile - 1) / kColsPerTile;
  std::vector<double> packed(panels * kdim * kColsPerTile, 0.0);
  for (std::size_t o = 0; o < out_channels; ++o)
    for (std::size_t r = 0; r < kdim; ++r)
      packed[((o / kColsPerTile) * kdim + r) * kColsPerTile + o % kColsPerTile] = weight[o * kdim + r];
  return packed;
}

#if defined(__GNUC__)
void direct_tile(const PaddedInput& in, std::size_t k, const double* panel, std::size_t oy,
                 std::size_t ox0, lane_t (&lo)[kPixelsPerTile], lane_t (&hi)[kPixelsPerTile]) {
  for (std::size_t r = 0; r < kPixelsPerTile; ++r) lo[r] = hi[r] = lane_t{};
  const double* wrow = panel;
  for (std::size_t c = 0; c < in.channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      const double* src = in.data.data() + (c * in.height + oy + ky) * in.stride_y + ox0;
      for (std::size_t kx = 0; kx < k; ++kx, wrow += kColsPerTile) {
        const lane_t b0 = load_lane(wrow);
        const lane_t b1 = load_lane(wrow + 8);
        for (std::size_t r = 0; r < kPixelsPerTile; ++r) {
          const double av = src[r + kx];
          lo[r] += av * b0;
          hi[r] += av * b1;
        }
      }
    }
  }
}
#else
void direct_tile(const PaddedInput& in, std::size_t k, const double* panel, std::size_t oy,
                 std::size_t ox0, double (&lo)[kPixelsPerTile][8], double (&hi)[kPixelsPerTile][8]) {
  for (std::size_t r = 0; r < kPixelsPerTile; ++r)
    for (std::size_t j = 0; j < 8; ++j) lo[r][j] = hi[r][j] = 0.0;
  const double* wrow = panel;
  for (std::size_t c = 0; c < in.channels; ++c)
    for (std::size_t ky = 0; ky < k; ++ky) {
      const double* src = in.data.data() + (c * in.height + oy + ky) * in.stride_y + ox0;
      for (std::size_t kx = 0; kx < k; ++kx, wrow += kColsPerTile)
        for (std::size_t r = 0; r < kPixelsPerTile; ++r)
          for (std::size_t j = 0; j < 8; ++j) {
            lo[r][j] += src[r + kx] * wrow[j];
            hi[r][j] += src[r + kx] * wrow[8 + j];
          }
    }
}
#endif

// out[o][y][x] (=|+=) bias[o] + sum_{c,ky,kx} W[o][c][ky][kx] * P[c][y+ky][x+kx]
void direct_conv_s1(const PaddedInput& in, std::size_t k, const std::vector<double>& panels,
                    std::size_t out_channels, std::size_t oh, std::size_t ow,
                    std::span<const double> bias, double* out, bool accumulate) {
  const std::size_t kdim = in.channels * k * k;
  const std::size_t npanels = (out_channels + kColsPerTile - 1) / kColsPerTile;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t y = 0; y < static_cast<std::ptrdiff_t>(oh); ++y) {
    const std::size_t oy = static_cast<std::size_t>(y);
#if defined(__GNUC__)
    lane_t lo[kPixelsPerTile], hi[kPixelsPerTile];
#else
    double lo[kPixelsPerTile][8], hi[kPixelsPerTile][8];
#endif
    for (std::size_t ox0 = 0; ox0 < ow; ox0 += kPixelsPerTile) {
      const std::size_t pixels = std::min(kPixelsPerTile, ow - ox0);
      for (std::size_t p = 0; p < npanels; ++p) {
        direct_tile(in, k, panels.data() + p * kdim * kColsPerTile, oy, ox0, lo, hi);
        const std::size_t o_end = std::min(out_channels, (p + 1) * kColsPerTile);
        for (std::size_t o = p * kColsPerTile; o < o_end; ++o) {
          const std::size_t j = o % kColsPerTile;
          double* dst = out + (o * oh + oy) * ow + ox0;
          const double b = bias.empty() ? 0.0 : bias[o];
          for (std::size_t r = 0; r < pixels; ++r) {
            const double v = b + (j < 8 ? lo[r][j] : hi[r][j - 8]);
            dst[r] = accumulate ? dst[r] + v : v;
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kernel == 1 && g.stride == 1 && g.pad == 0;
}

std::vector<double> transpose(const double* src, std::size_t rows, std::size_t cols) {
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
  return out;
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void gemm_accumulate(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                     const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  if (m == 0 || n == 0 || k == 0) return;
  const std::size_t panels = (n + kColsPerTile - 1) / kColsPerTile;
  const std::size_t row_blocks = (m + kRowBlock - 1) / kRowBlock;
  std::vector<double> packed(std::min(k, kDepthBlock) * kColsPerTile * panels);

  for (std::size_t k0 = 0; k0 < k; k0 += kDepthBlock) {
    const std::size_t kc = std::min(kDepthBlock, k - k0);

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t pi = 0; pi < static_cast<std::ptrdiff_t>(panels); ++pi) {
      const std::size_t j0 = static_cast<std::size_t>(pi) * kColsPerTile;
      const std::size_t cols = std::min(kColsPerTile, n - j0);
      double* dst = packed.data() + static_cast<std::size_t>(pi) * kc * kColsPerTile;
      for (std::size_t p = 0; p < kc; ++p) {
        const double* src = b + (k0 + p) * ldb + j0;
        double* out = dst + p * kColsPerTile;
        std::size_t j = 0;
        for (; j < cols; ++j) out[j] = src[j];
        for (; j < kColsPerTile; ++j) out[j] = 0.0;
      }
    }

#pragma omp parallel for collapse(2) schedule(static)
    for (std::ptrdiff_t pi = 0; pi < static_cast<std::ptrdiff_t>(panels); ++pi) {
      for (std::ptrdiff_t bi = 0; bi < static_cast<std::ptrdiff_t>(row_blocks); ++bi) {
        const std::size_t j0 = static_cast<std::size_t>(pi) * kColsPerTile;
        const std::size_t cols = std::min(kColsPerTile, n - j0);
        const double* panel = packed.data() + static_cast<std::size_t>(pi) * kc * kColsPerTile;
        const std::size_t i_end = std::min(m, static_cast<std::size_t>(bi + 1) * kRowBlock);
        for (std::size_t i = static_cast<std::size_t>(bi) * kRowBlock; i < i_end; i += kRowsPerTile) {
          const std::size_t rows = std::min(kRowsPerTile, i_end - i);
          run_micro(rows, a + i * lda + k0, lda, panel, kc, c + i * ldc + j0, ldc, cols);
        }
      }
    }
  }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output) {
  const std::size_t n = g.out_height() * g.out_width();
  const std::size_t kdim = g.in_channels * g.kernel * g.kernel;
  const std::size_t o = g.out_channels;

  if (g.stride == 1 && 2 * g.pad + 1 == g.kernel) {
    const PaddedInput padded = pad_input(input.data(), g.in_channels, g.height, g.width, g.pad);
    direct_conv_s1(padded, g.kernel, pack_weight_panels(weight.data(), o, kdim), o, g.out_height(),
                   g.out_width(), bias, output.data(), false);
    return;
  }

  // out^T (n x O) = rows (n x kdim) * W^T (kdim x O)
  std::vector<double> rows;
  if (is_pointwise(g)) {
    rows = transpose(input.data(), kdim, n);
  } else {
    rows.resize(n * kdim);
    im2row(g, input.data(), rows.data());
  }
  const std::vector<double> wt = transpose(weight.data(), o, kdim);
  std::vector<double> out_t(n * o, 0.0);
  gemm_accumulate(n, o, kdim, rows.data(), kdim, wt.data(), o, out_t.data(), o);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t oc = 0; oc < static_cast<std::ptrdiff_t>(o); ++oc) {
    const double b = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(oc)];
    double* dst = output.data() + static_cast<std::size_t>(oc) * n;
    for (std::size_t i = 0; i < n; ++i) dst[i] = b + out_t[i * o + static_cast<std::size_t>(oc)];
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output,
                           std::span<const double> weight, std::span<double> grad_input) {
  const std::size_t n = g.out_height() * g.out_width();
  const std::size_t kdim = g.in_channels * g.kernel * g.kernel;
  const std::vector<double> wt = transpose(weight.data(), g.out_channels, kdim);

  if (is_pointwise(g)) {
    gemm_accumulate(kdim, n, g.out_channels, wt.data(), g.out_channels, grad_output.data(), n,
                    grad_input.data(), n);
    return;
  }
  if (g.stride == 1 && 2 * g.pad + 1 == g.kernel) {
    // Full correlation of dOut with the flipped kernel, channels swapped.
    const std::size_t k = g.kernel, kk = k * k;
    std::vector<double> flipped(g.in_channels * g.out_channels * kk);
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t c = 0; c < g.in_channels; ++c)
        for (std::size_t t = 0; t < kk; ++t)
          flipped[(c * g.out_channels + o) * kk + (kk - 1 - t)] = weight[(o * g.in_channels + c) * kk + t];
    const PaddedInput padded =
        pad_input(grad_output.data(), g.out_channels, g.out_height(), g.out_width(), k - 1 - g.pad);
    direct_conv_s1(padded, k, pack_weight_panels(flipped.data(), g.in_channels, g.out_channels * kk),
                   g.in_channels, g.height, g.width, {}, grad_input.data(), true);
    return;
  }
  std::vector<double> col(kdim * n, 0.0);
  gemm_accumulate(kdim, n, g.out_channels, wt.data(), g.out_channels, grad_output.data(), n,
                  col.data(), n);
  col2im_accumulate(g, col.data(), grad_input.data());
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_output, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
  const std::size_t n = g.out_height() * g.out_width();
  const std::size_t kdim = g.in_channels * g.kernel * g.kernel;

  if (!grad_bias.empty()) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t o = 0; o < static_cast<std::ptrdiff_t>(g.out_channels); ++o) {
      const double* row = grad_output.data() + static_cast<std::size_t>(o) * n;
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += row[i];
      grad_bias[static_cast<std::size_t>(o)] += s;
    }
  }
  if (grad_weight.empty()) return;

  // dW^T (kdim x O) = col (kdim x n) * dOut^T (n x O)
  const std::vector<double> gt = transpose(grad_output.data(), g.out_channels, n);
  std::vector<double> dwt(kdim * g.out_channels, 0.0);
  if (is_pointwise(g)) {
    gemm_accumulate(kdim, g.out_channels, n, input.data(), n, gt.data(), g.out_channels,
                    dwt.data(), g.out_channels);
  } else {
    // Row chunks keep the column buffer cache-sized; chunks are summed in order.
    const std::size_t ow = g.out_width(), oh = g.out_height();
    const std::size_t chunk_rows = std::max<std::size_t>(1, kChunkPixels / ow);
    std::vector<double> col(kdim * std::min(oh, chunk_rows) * ow);
    for (std::size_t oy0 = 0; oy0 < oh; oy0 += chunk_rows) {
      const std::size_t oy1 = std::min(oh, oy0 + chunk_rows);
      const std::size_t nc = (oy1 - oy0) * ow;
      im2col(g, input.data(), col.data(), oy0, oy1);
      gemm_accumulate(kdim, g.out_channels, nc, col.data(), nc, gt.data() + oy0 * ow * g.out_channels,
                      g.out_channels, dwt.data(), g.out_channels);
    }
  }
  for (std::size_t o = 0; o < g.out_channels; ++o)
    for (std::size_t r = 0; r < kdim; ++r) grad_weight[o * kdim + r] += dwt[r * g.out_channels + o];
}

void gaussian_blur(std::size_t channels, const BlurTable& rows, const BlurTable& cols,
                   std::span<const double> input, std::span<double> output) {
  const std::size_t h = rows.length, w = cols.length;
  const std::ptrdiff_t rr = static_cast<std::ptrdiff_t>(rows.radius);
  const std::ptrdiff_t rc = static_cast<std::ptrdiff_t>(cols.radius);
  const std::size_t taps_r = 2 * rows.radius + 1, taps_c = 2 * cols.radius + 1;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(channels); ++c) {
    const double* in = input.data() + static_cast<std::size_t>(c) * h * w;
    double* out = output.data() + static_cast<std::size_t>(c) * h * w;
    std::vector<double> tmp(h * w, 0.0);
    // horizontal
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double* wt = cols.weights.data() + x * taps_c;
        double s = 0.0;
        for (std::ptrdiff_t d = -rc; d <= rc; ++d) {
          const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(x) + d;
          if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(w)) continue;
          s += wt[d + rc] * in[y * w + static_cast<std::size_t>(xx)];
        }
        tmp[y * w + x] = s;
      }
    }
    // vertical, row-at-a-time so the inner loop is contiguous
    std::fill(out, out + h * w, 0.0);
    for (std::size_t y = 0; y < h; ++y) {
      const double* wt = rows.weights.data() + y * taps_r;
      double* dst = out + y * w;
      for (std::ptrdiff_t d = -rr; d <= rr; ++d) {
        const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(y) + d;
        if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(h)) continue;
        const double wv = wt[d + rr];
        const double* src = tmp.data() + static_cast<std::size_t>(yy) * w;
        for (std::size_t x = 0; x < w; ++x) dst[x] += wv * src[x];
      }
    }
  }
}

void gaussian_blur_transpose(std::size_t channels, const BlurTable& rows, const BlurTable& cols,
                             std::span<const double> grad_output, std::span<double> grad_input) {
  const std::size_t h = rows.length, w = cols.length;
  const std::ptrdiff_t rr = static_cast<std::ptrdiff_t>(rows.radius);
  const std::ptrdiff_t rc = static_cast<std::ptrdiff_t>(cols.radius);
  const std::size_t taps_r = 2 * rows.radius + 1, taps_c = 2 * cols.radius + 1;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(channels); ++c) {
    const double* go = grad_output.data() + static_cast<std::size_t>(c) * h * w;
    double* gi = grad_input.data() + static_cast<std::size_t>(c) * h * w;
    std::vector<double> tmp(h * w, 0.0);
    // transpose of the vertical pass
    for (std::size_t y = 0; y < h; ++y) {
      const double* wt = rows.weights.data() + y * taps_r;
      const double* src = go + y * w;
      for (std::ptrdiff_t d = -rr; d <= rr; ++d) {
        const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(y) + d;
        if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(h)) continue;
        const double wv = wt[d + rr];
        double* dst = tmp.data() + static_cast<std::size_t>(yy) * w;
        for (std::size_t x = 0; x < w; ++x) dst[x] += wv * src[x];
      }
    }
    // transpose of the horizontal pass
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double* wt = cols.weights.data() + x * taps_c;
        const double g = tmp[y * w + x];
        for (std::ptrdiff_t d = -rc; d <= rc; ++d) {
          const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(x) + d;
          if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(w)) continue;
          gi[y * w + static_cast<std::size_t>(xx)] += wt[d + rc] * g;
        }
      }
    }
  }
}

}  // namespace lowlight::kernels
