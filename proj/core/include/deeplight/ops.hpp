#pragma once

#include <optional>
#include <vector>

#include "deeplight/tensor.hpp"

// Differentiable operators. Image tensors are NCHW; the only broadcasting is
// along the batch axis (an operand with N = 1 pairs with any N).
namespace dl {

// --- elementwise and reductions -------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, Scalar value);
Tensor mul_scalar(const Tensor& a, Scalar value);
Tensor leaky_relu(const Tensor& x, Scalar slope);
Tensor sigmoid(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor square(const Tensor& x);
Tensor mean(const Tensor& x);  // -> shape {1}
Tensor sum(const Tensor& x);   // -> shape {1}
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor reshape(const Tensor& x, Shape shape);
Tensor global_avg_pool(const Tensor& x);  // NCHW -> NC11

/// Mean binary cross-entropy of probabilities against a {0,1} target.
/// Probabilities are clamped to [eps, 1 - eps]; clamped entries pass no
/// gradient. Accumulates in double.
Tensor binary_cross_entropy(const Tensor& probs, const Tensor& target, double eps);

// --- convolution ------------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
              int stride, int padding);

/// Deformable convolution, stride 1, "same" zero padding, odd kernel.
/// offsets is N x (2*Kh*Kw) x H x W with (dy, dx) pairs per tap in
/// kernel-row-major order.
Tensor deformable_conv2d(const Tensor& input, const Tensor& offsets, const Tensor& weight,
                         const std::optional<Tensor>& bias);

// --- spatial sampling -------------------------------------------------------

/// theta N x 2 x 3 -> grid N x H x W x 2 of normalized (x, y) coordinates,
/// pixel centres at (2j + 1)/W - 1.
Tensor affine_grid(const Tensor& theta, std::int64_t out_h, std::int64_t out_w);

/// Bilinear sampling of input at grid coordinates with zero padding.
Tensor grid_sample(const Tensor& input, const Tensor& grid);

/// Half-pixel (align_corners = false) bilinear resize.
Tensor resize_bilinear(const Tensor& input, std::int64_t out_h, std::int64_t out_w);

Tensor pixel_shuffle(const Tensor& input, int factor);
Tensor pixel_unshuffle(const Tensor& input, int factor);

}  // namespace dl
