#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fusionsam/tensor.hpp"

// Differentiable primitives. Every function records a backward closure when
// any input requires a gradient. Reductions accumulate serially in index
// order, so results are bitwise reproducible.
namespace fusionsam {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// Scalar broadcast.
Tensor scale(const Tensor& x, Scalar s);
Tensor add_scalar(const Tensor& x, Scalar s);
// Scalar tensor times x (s must hold one element; gradient flows to both).
Tensor scale_by(const Tensor& x, const Tensor& s);

/// Adds `bias` (shape [n]) along the last axis of `x` (shape [..., n]).
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, Scalar slope);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor square(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Sum of squared entries, the squared Frobenius norm.
Tensor sum_squares(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
/// 2-D transpose.
Tensor transpose(const Tensor& x);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
/// Rows of a [K x d] table selected by `rows`; gradients scatter-add back.
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> rows);

/// [m x k] . [k x n] -> [m x n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);
/// Normalizes the last axis, then applies gamma * xhat + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Scalar eps);

/// Cross-correlation. x: [B x C x H x W], w: [O x C x kh x kw], b: [O].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad);
/// Adjoint of conv2d. x: [B x C x H x W], w: [C x O x kh x kw], b: [O].
/// Output spatial size is (H - 1) * stride - 2 * pad + kh.
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
                        std::size_t pad);
/// Non-overlapping k x k mean pooling on [B x C x H x W].
Tensor avg_pool2d(const Tensor& x, std::size_t k);

/// Identity forward, zero gradient.
Tensor stop_gradient(const Tensor& x);
/// Forward value of `zq`; the gradient is copied to `z` unchanged and `zq`
/// receives nothing through this path.
Tensor straight_through(const Tensor& z, const Tensor& zq);

/// Mean cross-entropy. logits: [C x ...] class-major; labels: one id per
/// trailing position.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, Scalar s) { return scale(a, s); }
inline Tensor operator*(Scalar s, const Tensor& a) { return scale(a, s); }

}  // namespace fusionsam
