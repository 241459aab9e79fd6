#pragma once

// Differentiable primitives. Every op records its inputs and a backward
// closure when any input requires a gradient; otherwise the result is a plain
// constant. Feature maps are rank-3 [C, H, W] tensors.

#include <vector>

#include "evlt/numgrid/tensor.hpp"

namespace evlt::numgrid {

// Elementwise (shapes must match exactly).
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> mul_scalar(const Tensor<T>& a, T s);

// Adds a vector of length shape.back() to every row.
template <typename T> Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// Batched: [n, m, k] x [n, k, p] -> [n, m, p].
template <typename T> Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b);

/// 2-D convolution of x [C, H, W] with weight [O, C, k, k] and optional bias
/// [O] (pass an undefined tensor to skip). Zero padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride, int padding);

template <typename T> Tensor<T> upsample_nearest(const Tensor<T>& x, int factor);
/// Bilinear resize of [C, H, W] with half-pixel centers.
template <typename T> Tensor<T> resize_bilinear(const Tensor<T>& x, std::size_t out_h, std::size_t out_w);
/// Average over bins [floor(i*H/out), ceil((i+1)*H/out)).
template <typename T> Tensor<T> adaptive_avg_pool2d(const Tensor<T>& x, std::size_t out_h, std::size_t out_w);

template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
/// Gradient passes only where lo < x < hi.
template <typename T> Tensor<T> clamp(const Tensor<T>& x, T lo, T hi);
template <typename T> Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);
/// Normalizes over the last axis, then scales by gamma and shifts by beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5));

template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
template <typename T> Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end);
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T> Tensor<T> transpose(const Tensor<T>& x);
template <typename T> Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& order);

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
/// mean |a - b|
template <typename T> Tensor<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b);
/// Mean binary cross-entropy of probabilities p against a constant 0/1
/// target. p is clamped to [1e-7, 1 - 1e-7] before the log.
template <typename T> Tensor<T> bce_loss(const Tensor<T>& p, const Tensor<T>& target);

inline constexpr double kBceClamp = 1e-7;

}  // namespace evlt::numgrid
