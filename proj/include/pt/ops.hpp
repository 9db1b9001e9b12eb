#pragma once

// Differentiable primitives. Every op validates shapes up front and throws
// pt::Error(Dimension) naming the offending shapes. Broadcasting is limited
// to leading batch dimensions (matmul) and row-wise bias vectors.

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "pt/tensor.hpp"

namespace pt::ops {

/// a[..., m, k] x b[..., k, n]. Leading batch extents must match, or one
/// operand may be a plain matrix that is shared across the batch.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// a[..., m, k] x b[..., n, k]^T, same batching rules as matmul.
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

/// Swaps the last two axes.
template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T>
Tensor<T> square(const Tensor<T>& a);

/// x[..., n] + bias[n]
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);

/// x[..., in] w[in, out] + b[out]; fused for speed.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> relu(const Tensor<T>& x);

/// Numerically stable softmax along `axis`. Non-finite input is a numeric error.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::ptrdiff_t axis);

/// Standardizes along `axis` (eps inside the square root), then applies
/// gain and bias, both shaped [extent of axis].
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     std::ptrdiff_t axis, T eps = T(1e-5));

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::ptrdiff_t axis);

template <typename T>
struct MaxReduce {
  Tensor<T> values;
  /// Position along the reduced axis, one per output element. Ties go to the
  /// lowest index.
  std::vector<std::size_t> argmax;
};

/// Max over `axis`; backward routes the gradient only to the argmax entries.
template <typename T>
MaxReduce<T> max_reduce_with_argmax(const Tensor<T>& x, std::ptrdiff_t axis);

/// Rows (first-axis slices) of x selected by `indices`, duplicates allowed.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> indices);

template <typename T>
struct GroupedRows {
  /// groups[g] holds the rows assigned to g in original order; an undefined
  /// tensor when the group is empty.
  std::vector<Tensor<T>> groups;
  std::vector<std::vector<std::size_t>> members;
};

/// Splits the rows of x by group id. Concatenating the groups and gathering
/// with the inverse permutation restores the original row order.
template <typename T>
GroupedRows<T> scatter_rows_by_group(const Tensor<T>& x, std::span<const int> assignments,
                                     std::size_t num_groups);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// [a, b, c] -> [b, a, c]
template <typename T>
Tensor<T> swap_axes01(const Tensor<T>& x);

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x);
template <typename T>
Tensor<T> mean_all(const Tensor<T>& x);
/// Sums out `axis`, keeping the remaining axes in order.
template <typename T>
Tensor<T> sum_axis(const Tensor<T>& x, std::ptrdiff_t axis);

/// Inverted dropout with keep-probability 1-p. Identity when p == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, T p, std::mt19937_64& rng);

/// Cross entropy of logits [C] (or [1, C]) against the smoothed target that
/// puts 1-eps on `label` and eps/(C-1) on every other class.
template <typename T>
Tensor<T> smooth_cross_entropy(const Tensor<T>& logits, std::size_t label, T eps);

}  // namespace pt::ops
