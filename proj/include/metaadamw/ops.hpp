#pragma once

#include <cstddef>
#include <vector>

#include "metaadamw/tensor.hpp"

// Differentiable primitives. Binary elementwise ops broadcast NumPy-style;
// every backward rule is itself written with these ops, so gradients can be
// differentiated again.
namespace metaadamw {

/// Summation used for the contraction axis of matmul.
enum class Accumulation {
  fast,
  /// Correctly rounded; makes results independent of the order of the
  /// contracted terms (used where token order must not matter).
  exact,
};

Shape broadcast_shapes(const Shape& a, const Shape& b);
Tensor broadcast_to(const Tensor& x, const Shape& shape);
/// Sums `x` down to `shape`, the reverse of broadcast_to.
Tensor sum_to(const Tensor& x, const Shape& shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);

/// x^p for integer p (any sign of x) or fractional p (x >= 0 required).
Tensor pow(const Tensor& x, double p);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
/// abs'(0) = 0.
Tensor abs(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
/// relu'(0) = 0.
Tensor relu(const Tensor& x);
/// Elementwise clamp; the gradient is zero outside (lo, hi).
Tensor clamp(const Tensor& x, double lo, double hi);

/// (n,k)x(k,m); (B,n,k)x(B,k,m); or (...,n,k)x(k,m) applied to every row.
Tensor matmul(const Tensor& a, const Tensor& b, Accumulation acc = Accumulation::fast);
/// Swaps the last two axes.
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor flatten(const Tensor& x);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length);
/// Inverse of slice: places `x` at `start` along `axis` inside zeros of
/// extent `total`.
Tensor pad_axis(const Tensor& x, int axis, std::size_t start, std::size_t total);
/// Rank-0 view of one element of a rank-1 tensor.
Tensor element(const Tensor& x, std::size_t index);

Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, int axis, bool keepdim);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, int axis, bool keepdim);
/// Population variance (divides by n).
Tensor variance(const Tensor& x);
Tensor variance(const Tensor& x, int axis, bool keepdim);
Tensor dot(const Tensor& a, const Tensor& b);
/// Euclidean norm of all entries; its gradient at 0 is taken as 0.
Tensor l2_norm(const Tensor& x);
/// Cosine of the angle between flattened a and b; 0 if either is zero.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

/// Over the last axis. The normalizer is summed with exact_sum.
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
/// Normalizes over the last axis, then applies gain and shift of shape
/// (last extent).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps = 1e-5);

/// Rows of a (V, d) table: result (indices.size(), d).
Tensor embedding(const Tensor& table, const std::vector<std::size_t>& indices);
/// Adds the rows of `x` into a zero (rows, d) table at `indices`.
Tensor scatter_rows(const Tensor& x, const std::vector<std::size_t>& indices, std::size_t rows);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& x);
Tensor operator+(const Tensor& a, double b);
Tensor operator+(double a, const Tensor& b);
Tensor operator-(const Tensor& a, double b);
Tensor operator-(double a, const Tensor& b);
Tensor operator*(const Tensor& a, double b);
Tensor operator*(double a, const Tensor& b);
Tensor operator/(const Tensor& a, double b);
Tensor operator/(double a, const Tensor& b);

}  // namespace metaadamw
