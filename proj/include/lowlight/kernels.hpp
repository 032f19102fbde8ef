#pragma once

// Compute kernels behind the autodiff primitives.
//
// Every kernel exists twice: the default version is blocked and parallelized
// with OpenMP, the one in `serial` is a direct loop nest kept as the reference
// for tests and benchmarks. Parallel kernels only split work across disjoint
// outputs, so each output element is reduced in a fixed order and results do
// not depend on the thread count.
//
// Backward kernels accumulate (+=) into their outputs.

#include <cstddef>
#include <span>

namespace lowlight::kernels {

struct ConvGeometry {
  std::size_t in_channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 1;

  std::size_t out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
  std::size_t input_size() const { return in_channels * height * width; }
  std::size_t output_size() const { return out_channels * out_height() * out_width(); }
  std::size_t weight_size() const { return out_channels * in_channels * kernel * kernel; }
};

/// C(MxN) += A(MxK) * B(KxN); all row-major with the given leading dimensions.
void gemm_accumulate(std::size_t m, std::size_t n, std::size_t k,
                     const double* a, std::size_t lda,
                     const double* b, std::size_t ldb,
                     double* c, std::size_t ldc);

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output,
                           std::span<const double> weight, std::span<double> grad_input);
void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_output, std::span<double> grad_weight,
                            std::span<double> grad_bias);

/// Per-axis Gaussian taps for a "same"-extent blur. Taps that fall outside the
/// image are dropped and the remaining ones renormalized, so constants are
/// fixed points. Row `x` of the table holds the 2*radius+1 weights for output x.
struct BlurTable {
  std::size_t length = 0;
  std::size_t radius = 0;
  std::span<const double> weights;
};

void gaussian_blur(std::size_t channels, const BlurTable& rows, const BlurTable& cols,
                   std::span<const double> input, std::span<double> output);
void gaussian_blur_transpose(std::size_t channels, const BlurTable& rows, const BlurTable& cols,
                             std::span<const double> grad_output, std::span<double> grad_input);

namespace serial {

void gemm_accumulate(std::size_t m, std::size_t n, std::size_t k,
                     const double* a, std::size_t lda,
                     const double* b, std::size_t ldb,
                     double* c, std::size_t ldc);
void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output,
                           std::span<const double> weight, std::span<double> grad_input);
void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_output, std::span<double> grad_weight,
                            std::span<double> grad_bias);
void gaussian_blur(std::size_t channels, const BlurTable& rows, const BlurTable& cols,
                   std::span<const double> input, std::span<double> output);
void gaussian_blur_transpose(std::size_t channels, const BlurTable& rows, const BlurTable& cols,
                             std::span<const double> grad_output, std::span<double> grad_input);

}  // namespace serial

/// Number of threads the parallel kernels will use (1 without OpenMP).
int max_threads();

}  // namespace lowlight::kernels
