// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef REFEREE_NUMCORE_OPS_HPP_
#define REFEREE_NUMCORE_OPS_HPP_

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "referee/numcore/tensor.hpp"

namespace referee::numcore {

/// a[..., m, k] x b[k, n] or a[..., m, k] x b[..., k, n] (equal batch dims).
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Elementwise sum. `b` may equal a's shape or a trailing suffix of it, in
/// which case it is broadcast over the leading dimensions.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);

/// Elementwise product of equal shapes.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

/// x[..., in] W[in, out] + b[out].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias);

/// Exact (erf) GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

/// Max-subtracted softmax along `axis` (negative counts from the back).
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis);

/// Normalises the last dimension, then applies gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, double eps = 1e-5);

/// Mean over the batch of -log softmax(logits)[label]; logits are [B, C].
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

/// Per-head scaled dot-product attention over pre-projected inputs.
/// q: [B, Nq, D], k and v: [B, Nk, D]; D must be divisible by num_heads.
/// When `weights_out` is non-null it receives the attention matrix
/// [B, H, Nq, Nk] (values only, not part of the graph).
template <typename T>
Tensor<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k,
                               const Tensor<T>& v, std::size_t num_heads,
                               std::vector<T>* weights_out = nullptr);

/// Inverted dropout. Identity when !training or p == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training,
                  std::mt19937_64& rng);

/// Mean along `axis`; the axis is removed from the result.
template <typename T>
Tensor<T> mean(const Tensor<T>& x, int axis);

/// Sum of every element, as a rank-0 scalar.
template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);

/// Rows of `table` [V, D] selected by `indices`, giving [n, D].
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const int> indices);

/// Contiguous slice [start, start + length) along `axis`.
template <typename T>
Tensor<T> narrow(const Tensor<T>& x, int axis, std::size_t start,
                 std::size_t length);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// Repeats x along a new leading axis of size `count`.
template <typename T>
Tensor<T> expand_leading(const Tensor<T>& x, std::size_t count);

}  // namespace referee::numcore

#endif  // REFEREE_NUMCORE_OPS_HPP_
