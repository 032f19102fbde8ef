#pragma once

// Differentiable primitives. Every function returns a new Tensor; when any
// input is recorded, a tape node is appended with the exact local gradient.
//
// Image tensors are channel-major (C, H, W). Non-differentiable points use
// fixed subgradients: abs'(0) = 0, clamp passes the gradient at its edges,
// max-pool ties route to the first maximum in row-major order.

#include <cstddef>
#include <span>
#include <vector>

#include "lowlight/autodiff/tensor.hpp"

namespace lowlight::ad {

// --- convolution and dense layers -----------------------------------------

/// x (C,H,W), weight (O,C,k,k), bias (O) -> (O, H', W'); zero padding k/2.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride = 1);
/// x (n), weight (m,n), bias (m) -> (m)
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// --- activations -----------------------------------------------------------

Tensor leaky_relu(const Tensor& x, double slope);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor square(const Tensor& x);
Tensor pow(const Tensor& x, double exponent);  // x > 0
Tensor clamp(const Tensor& x, double lo, double hi);

// --- spatial rearrangement ---------------------------------------------------

Tensor max_pool_2x2(const Tensor& x);
Tensor upsample_nearest_2x(const Tensor& x);
Tensor avg_downsample_2x(const Tensor& x);  // odd trailing row/column dropped
Tensor concat_channels(std::span<const Tensor> parts);
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// (4C, H, W) -> (C, 2H, 2W); out[c, 2h+i, 2w+j] = in[4c + 2i + j, h, w]
Tensor pixel_shuffle(const Tensor& x);
/// Inverse permutation of pixel_shuffle.
Tensor pixel_unshuffle(const Tensor& x);
/// Nearest-neighbor resize of (C,H,W) to (C,height,width).
Tensor resize_nearest(const Tensor& x, std::size_t height, std::size_t width);
Tensor reshape(const Tensor& x, Shape shape);
/// Scalar tensor -> constant tensor of `shape` filled with its value.
Tensor broadcast(const Tensor& scalar, Shape shape);

// --- elementwise arithmetic (equal shapes) ----------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& x, double s);
Tensor mul_scalar(const Tensor& x, double s);

// --- reductions -------------------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Reduces one axis, removing it from the shape.
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x, std::size_t axis);
/// Softmax over the flattened spatial extent of each channel of (C,H,W).
Tensor spatial_softmax(const Tensor& x);

// --- filtering --------------------------------------------------------------

/// Separable Gaussian blur of (C,H,W) keeping the extent; taps beyond the border
/// are dropped and the rest renormalized.
Tensor gaussian_blur(const Tensor& x, double sigma, std::size_t radius);

}  // namespace lowlight::ad
