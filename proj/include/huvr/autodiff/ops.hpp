#pragma once

#include <cstddef>
#include <vector>

#include "huvr/autodiff/tensor.hpp"

// Differentiable primitives. Every op records onto the tape of its recorded
// inputs (if any) and otherwise computes plain values. Elementwise binary ops
// broadcast only by trailing-dimension alignment: the smaller operand's shape
// must equal a suffix of the larger one's. Use broadcast() for anything else.

namespace huvr::ad {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);

/// a [..., m, k] x b [k, n] (shared right operand) or batched a [..., m, k] x b [..., k, n]
/// with identical leading extents. `transpose_b` reads b as its last-two-axes transpose.
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);

/// Swaps the last two axes.
Tensor transpose(const Tensor& x);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& xs, std::ptrdiff_t axis);
Tensor slice(const Tensor& x, std::ptrdiff_t axis, std::size_t start, std::size_t length);

Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, std::ptrdiff_t axis, bool keepdim = false);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, std::ptrdiff_t axis, bool keepdim = false);
Tensor max(const Tensor& x, std::ptrdiff_t axis, bool keepdim = false);
/// Numpy-style expansion of size-1 and missing leading axes to `shape`.
Tensor broadcast(const Tensor& x, const Shape& shape);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor power(const Tensor& x, double exponent);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sin(const Tensor& x);
Tensor cos(const Tensor& x);
Tensor softmax(const Tensor& x, std::ptrdiff_t axis = -1);

// Composites.
Tensor square(const Tensor& x);
Tensor silu(const Tensor& x);
/// tanh approximation.
Tensor gelu(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return mul_scalar(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul_scalar(a, c); }
inline Tensor operator+(const Tensor& a, double c) { return add_scalar(a, c); }
inline Tensor operator-(const Tensor& a) { return mul_scalar(a, -1.0); }

}  // namespace huvr::ad
