#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "lgrit/ad/tensor.hpp"

namespace lgrit::ad {

/// Guard used by log: values below it are clamped before the log and in
/// the derivative.
inline constexpr double kLogEpsilon = 1e-12;

// Binary elementwise ops. `b` must have the same shape as `a`, a single
// element, or a shape equal to a trailing suffix of a's shape.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> neg(const Tensor<T>& a);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T value);
template <typename T> Tensor<T> square(const Tensor<T>& a);
template <typename T> Tensor<T> exp(const Tensor<T>& a);
/// log(max(a, eps)); derivative 1 / max(a, eps).
template <typename T> Tensor<T> log(const Tensor<T>& a);
/// Subgradient 0 at 0.
template <typename T> Tensor<T> abs(const Tensor<T>& a);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
/// tanh approximation.
template <typename T> Tensor<T> gelu(const Tensor<T>& a);

/// a[..., k] x b[k, n] -> [..., n]
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// a[B, m, k] x b[B, k, n] -> [B, m, n]
template <typename T> Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b);

struct Conv2dGeometry {
    std::size_t stride_h = 1;
    std::size_t stride_w = 1;
    std::size_t pad_h = 0;
    std::size_t pad_w = 0;
};

/// x[N, C, H, W], weight[O, C, kh, kw], bias[O] -> [N, O, Ho, Wo].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, Conv2dGeometry g);

/// Adjoint of conv2d. x[N, C, H, W], weight[C, O, kh, kw], bias[O] ->
/// [N, O, (H-1)*sh - 2*ph + kh, (W-1)*sw - 2*pw + kw].
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, Conv2dGeometry g);

/// Over the last axis.
template <typename T> Tensor<T> softmax(const Tensor<T>& a);
template <typename T> Tensor<T> log_softmax(const Tensor<T>& a);
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5));

/// Rows of table[V, D] selected by indices; result shape index_shape + [D].
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, const std::vector<std::int32_t>& indices, Shape index_shape);

template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T> Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& axes);
template <typename T> Tensor<T> transpose(const Tensor<T>& a, std::size_t axis0, std::size_t axis1);
/// Elements [begin, end) along `axis`.
template <typename T> Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin, std::size_t end);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);

template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);

/// Sets positions where mask != 0 to `value`; no gradient flows there.
/// The mask covers either all of `a` or a trailing suffix of its shape.
template <typename T> Tensor<T> masked_fill(const Tensor<T>& a, const std::vector<std::uint8_t>& mask, T value);

/// a[R, C], one column per row -> [R].
template <typename T> Tensor<T> pick(const Tensor<T>& a, const std::vector<std::int32_t>& columns);

/// Same value, no gradient (the sg[.] operator).
template <typename T> Tensor<T> detach(const Tensor<T>& a);

/// Forward value of `value`, gradient passed unchanged to `input`; `value`
/// receives no gradient.
template <typename T> Tensor<T> straight_through(const Tensor<T>& input, const Tensor<T>& value);

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a) { return neg(a); }

}  // namespace lgrit::ad
