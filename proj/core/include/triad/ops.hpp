// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable primitives. Every function here records a backward rule when
// any input requires a gradient.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "triad/tensor.hpp"

namespace triad {

// Elementwise arithmetic. `b` may have the same shape as `a` or a suffix of
// it, in which case it is broadcast over the leading axes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
// x times a one-element tensor.
Tensor mul_scalar(const Tensor& x, const Tensor& s);

Tensor exp(const Tensor& x);
// Natural log; non-positive input raises NumericError.
Tensor log(const Tensor& x);
// Exact (erf) GELU.
Tensor gelu(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Mean over one axis; the axis is removed from the shape.
Tensor mean_axis(const Tensor& x, std::size_t axis);

// [m,k] x [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);
// x[..., in] * w[in, out] (+ bias[out]) -> [..., out]. bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);
// Softmax over the last axis where mask[i] == 0 entries get probability 0.
// A row with no unmasked entry raises ContractError.
Tensor masked_softmax(const Tensor& x, std::span<const std::uint8_t> mask);

inline constexpr double kLayerNormEps = 1e-5;
// Normalizes the last axis, then applies gamma/beta (both [n]).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = kLayerNormEps);
// Unit L2 norm along the last axis.
Tensor l2_normalize(const Tensor& x);

// table[V, C] rows picked by ids; result shape is index_shape + [C].
Tensor embedding(const Tensor& table, std::span<const std::int64_t> ids, const Shape& index_shape);
// Mean negative log-likelihood of targets under logits[N, V].
Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets);

Tensor reshape(const Tensor& x, Shape shape);
// Swaps the last two axes.
Tensor transpose(const Tensor& x);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
// Diagonal of a square matrix.
Tensor diagonal(const Tensor& x);
// out.flat[i] = x.flat[indices[i]]; gradients scatter-add back.
Tensor gather(const Tensor& x, std::vector<std::size_t> indices, Shape shape);

/// Which key positions each query position may attend to.
///
/// Stored as [batch][queries][keys]; a batch extent of 1 is broadcast.
struct AttentionMask {
  std::size_t batch = 1;
  std::size_t queries = 0;
  std::size_t keys = 0;
  std::vector<std::uint8_t> allowed;

  static AttentionMask full(std::size_t queries, std::size_t keys);
  static AttentionMask causal(std::size_t length);
  // Bidirectional over keys whose padding flag is set; one row of flags per batch item.
  static AttentionMask key_padding(std::span<const std::uint8_t> key_valid, std::size_t batch,
                                   std::size_t queries);

  bool at(std::size_t b, std::size_t q, std::size_t k) const {
    return allowed[((batch == 1 ? 0 : b) * queries + q) * keys + k] != 0;
  }
};

// Scaled dot-product attention split over `heads`.
// query [B, Lq, C], key/value [B, Lk, C] -> [B, Lq, C]. Query rows with no
// allowed key produce zeros. Disallowed keys contribute exactly nothing.
Tensor attention(const Tensor& query, const Tensor& key, const Tensor& value, std::size_t heads,
                 const AttentionMask& mask);

// Weighted bidirectional max-mean similarity for every (query item, target item) pair.
//
// query [B, Nq, C], target [K, Nx, C]; weights are [B, Nq] and [K, Nx] and
// should already be normalized over the unmasked rows. For each pair:
//   S[i][j] = <query_i, target_j>
//   s = 1/2 sum_i wq_i max_j S[i][j] + 1/2 sum_j wx_j max_i S[i][j]
// with masked rows excluded from both maxima and both sums. Returns [B, K].
Tensor fine_similarity_matrix(const Tensor& query, std::span<const std::uint8_t> query_mask,
                              const Tensor& query_weights, const Tensor& target,
                              std::span<const std::uint8_t> target_mask,
                              const Tensor& target_weights);

}  // namespace triad
