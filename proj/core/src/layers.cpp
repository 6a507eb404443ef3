// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0

#include "triad/layers.hpp"

#include <algorithm>
#include <cmath>

#include "triad/error.hpp"

namespace triad {

void ParameterSet::add(const std::string& name, const Tensor& tensor) {
  if (!tensor.defined()) return;
  if (contains(tensor)) return;
  if (find(name) != nullptr) throw ConfigError("duplicate parameter name " + name);
  entries_.push_back({name, tensor});
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

const Tensor* ParameterSet::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e.tensor;
  }
  return nullptr;
}

bool ParameterSet::contains(const Tensor& tensor) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.tensor.same_node(tensor); });
}

void ParameterSet::zero_grad() const {
  for (const auto& e : entries_) {
    Tensor t = e.tensor;
    t.zero_grad();
  }
}

Tensor normal_parameter(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> data(numel(shape));
  for (auto& v : data) v = dist(rng);
  return Tensor(std::move(shape), std::move(data), true);
}

Linear Linear::create(std::size_t in, std::size_t out, Rng& rng, double stddev, bool with_bias) {
  Linear l;
  l.weight = normal_parameter({in, out}, stddev, rng);
  if (with_bias) l.bias = Tensor::zeros({out}, true);
  return l;
}

void Linear::collect(ParameterSet& set, const std::string& prefix) const {
  set.add(prefix + ".weight", weight);
  set.add(prefix + ".bias", bias);
}

LayerNorm LayerNorm::create(std::size_t width) {
  return {Tensor::full({width}, 1.0, true), Tensor::zeros({width}, true)};
}

void LayerNorm::collect(ParameterSet& set, const std::string& prefix) const {
  set.add(prefix + ".gamma", gamma);
  set.add(prefix + ".beta", beta);
}

MultiHeadAttention MultiHeadAttention::create(std::size_t width, std::size_t heads, Rng& rng, double output_stddev) {
  MultiHeadAttention m;
  m.query = Linear::create(width, width, rng);
  m.key = Linear::create(width, width, rng);
  m.value = Linear::create(width, width, rng);
  m.output = Linear::create(width, width, rng, output_stddev);
  m.heads = heads;
  return m;
}

Tensor MultiHeadAttention::operator()(const Tensor& x, const Tensor& context, const AttentionMask& mask) const {
  return output(attention(query(x), key(context), value(context), heads, mask));
}

void MultiHeadAttention::collect(ParameterSet& set, const std::string& prefix) const {
  query.collect(set, prefix + ".query");
  key.collect(set, prefix + ".key");
  value.collect(set, prefix + ".value");
  output.collect(set, prefix + ".output");
}

FeedForward FeedForward::create(std::size_t width, std::size_t multiple, Rng& rng, double output_stddev) {
  return {Linear::create(width, width * multiple, rng), Linear::create(width * multiple, width, rng, output_stddev)};
}

void FeedForward::collect(ParameterSet& set, const std::string& prefix) const {
  up.collect(set, prefix + ".up");
  down.collect(set, prefix + ".down");
}

void TransformerConfig::validate(const std::string& what) const {
  if (hidden == 0 || layers == 0 || heads == 0 || ffn_multiple == 0) {
    throw ConfigError(what + ": hidden size, layers, heads and feed-forward multiple must be positive");
  }
  if (hidden % heads != 0) {
    throw ConfigError(what + ": hidden size " + std::to_string(hidden) + " not divisible by " + std::to_string(heads) +
                      " heads");
  }
}

TransformerBlock TransformerBlock::create(const TransformerConfig& config, Rng& rng) {
  // Residual branch outputs start smaller so a deep stack stays near identity.
  const double residual_std = kInitStd / std::sqrt(2.0 * static_cast<double>(config.layers));
  TransformerBlock b;
  b.attention_norm = LayerNorm::create(config.hidden);
  b.self_attention = MultiHeadAttention::create(config.hidden, config.heads, rng, residual_std);
  b.ffn_norm = LayerNorm::create(config.hidden);
  b.ffn = FeedForward::create(config.hidden, config.ffn_multiple, rng, residual_std);
  return b;
}

Tensor TransformerBlock::operator()(const Tensor& x, const AttentionMask& mask) const {
  const Tensor normed = attention_norm(x);
  Tensor h = add(x, self_attention(normed, normed, mask));
  return add(h, ffn(ffn_norm(h)));
}

void TransformerBlock::collect(ParameterSet& set, const std::string& prefix) const {
  attention_norm.collect(set, prefix + ".attention_norm");
  self_attention.collect(set, prefix + ".self_attention");
  ffn_norm.collect(set, prefix + ".ffn_norm");
  ffn.collect(set, prefix + ".ffn");
}

}  // namespace triad
