// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0
//
// Parameter containers and the transformer building blocks shared by the
// encoders and the multimodal decoder.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "triad/ops.hpp"
#include "triad/tensor.hpp"

namespace triad {

using Rng = std::mt19937_64;

inline constexpr double kInitStd = 0.02;

/// Ordered, de-duplicated list of named trainable tensors.
///
/// A tensor registered twice (a shared parameter) keeps its first name.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
  };

  void add(const std::string& name, const Tensor& tensor);
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  const Tensor* find(const std::string& name) const;
  bool contains(const Tensor& tensor) const;
  void zero_grad() const;

 private:
  std::vector<Entry> entries_;
};

Tensor normal_parameter(Shape shape, double stddev, Rng& rng);

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out], may be undefined

  static Linear create(std::size_t in, std::size_t out, Rng& rng, double stddev = kInitStd, bool with_bias = true);
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
  void collect(ParameterSet& set, const std::string& prefix) const;
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  static LayerNorm create(std::size_t width);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
  void collect(ParameterSet& set, const std::string& prefix) const;
};

struct MultiHeadAttention {
  Linear query, key, value, output;
  std::size_t heads = 1;

  static MultiHeadAttention create(std::size_t width, std::size_t heads, Rng& rng, double output_stddev);
  // x [B, Lq, C] attends over context [B, Lk, C].
  Tensor operator()(const Tensor& x, const Tensor& context, const AttentionMask& mask) const;
  void collect(ParameterSet& set, const std::string& prefix) const;
};

struct FeedForward {
  Linear up, down;

  static FeedForward create(std::size_t width, std::size_t multiple, Rng& rng, double output_stddev);
  Tensor operator()(const Tensor& x) const { return down(gelu(up(x))); }
  void collect(ParameterSet& set, const std::string& prefix) const;
};

struct TransformerConfig {
  std::size_t hidden = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ffn_multiple = 4;

  void validate(const std::string& what) const;
};

/// Pre-norm encoder block: x + attn(ln(x)), then x + ffn(ln(x)).
struct TransformerBlock {
  LayerNorm attention_norm;
  MultiHeadAttention self_attention;
  LayerNorm ffn_norm;
  FeedForward ffn;

  static TransformerBlock create(const TransformerConfig& config, Rng& rng);
  Tensor operator()(const Tensor& x, const AttentionMask& mask) const;
  void collect(ParameterSet& set, const std::string& prefix) const;
};

}  // namespace triad
