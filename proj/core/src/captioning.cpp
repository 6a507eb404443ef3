// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0

#include "triad/captioning.hpp"

#include <cmath>

#include "triad/error.hpp"

namespace triad {

MaskedBatch mask_tokens(const TokenBatch& tokens, const MaskPolicy& policy, Rng& rng,
                        std::span<const std::size_t> row_first_maskable) {
  if (!(policy.probability > 0.0 && policy.probability < 1.0)) {
    throw ContractError("mask probability must lie strictly between 0 and 1");
  }
  if (!row_first_maskable.empty() && row_first_maskable.size() != tokens.batch) {
    throw DimensionError("one first-maskable index per row is required");
  }
  MaskedBatch out;
  out.input = tokens;
  std::bernoulli_distribution draw(policy.probability);
  std::vector<std::size_t> maskable;
  for (std::size_t b = 0; b < tokens.batch; ++b) {
    const std::size_t base = b * tokens.length;
    std::size_t last_valid = 0;
    for (std::size_t i = 0; i < tokens.length; ++i) {
      if (tokens.mask[base + i]) last_valid = i;
    }
    maskable.clear();
    const std::size_t first = row_first_maskable.empty() ? policy.first_maskable : row_first_maskable[b];
    for (std::size_t i = first; i < tokens.length; ++i) {
      if (!tokens.mask[base + i]) continue;
      const TokenId id = tokens.ids[base + i];
      const bool terminal_sep = policy.include_terminal_sep && id == Vocabulary::kSep && i == last_valid;
      if (!Vocabulary::is_special(id) || terminal_sep) maskable.push_back(i);
    }
    if (maskable.empty()) throw ContractError("row " + std::to_string(b) + " has no maskable token");
    std::size_t chosen = 0;
    for (std::size_t i : maskable) {
      if (draw(rng)) {
        out.input.ids[base + i] = Vocabulary::kMask;
        ++chosen;
      }
    }
    if (chosen == 0) {
      std::uniform_int_distribution<std::size_t> pick(0, maskable.size() - 1);
      out.input.ids[base + maskable[pick(rng)]] = Vocabulary::kMask;
    }
    for (std::size_t i : maskable) {
      if (out.input.ids[base + i] == Vocabulary::kMask) {
        out.positions.push_back(base + i);
        out.targets.push_back(tokens.ids[base + i]);
      }
    }
  }
  return out;
}

Tensor ConditionalFeatures::audiovisual() const {
  if (!vision.defined() || !audio.defined()) throw ConfigError("audio-visual condition needs both vision and audio");
  return concat({vision, audio}, 1);
}

ConditionalFeatures ConditionalFeatures::select(const ModalityGroup& group) const {
  if (group.query != Modality::Text) {
    throw ConfigError("captioning groups are T-V, T-A or T-AV, got " + group.name());
  }
  ConditionalFeatures out;
  for (auto m : group.target) {
    if (m == Modality::Vision) {
      if (!vision.defined()) throw ConfigError("group " + group.name() + " needs vision, which the batch lacks");
      out.vision = vision;
    } else if (m == Modality::Audio) {
      if (!audio.defined()) throw ConfigError("group " + group.name() + " needs audio, which the batch lacks");
      out.audio = audio;
    } else {
      throw ConfigError("captioning groups are T-V, T-A or T-AV, got " + group.name());
    }
  }
  return out;
}

std::string fusion_variant_name(FusionVariant v) {
  switch (v) {
    case FusionVariant::MergeAttention:
      return "merge-attention";
    case FusionVariant::AudioVisualCross:
      return "audio-visual-cross";
    case FusionVariant::VisualAudioCross:
      return "visual-audio-cross";
    case FusionVariant::ParallelCross:
      return "parallel-cross";
    case FusionVariant::ConcatenateCross:
      return "concatenate-cross";
  }
  return "?";
}

FusionVariant parse_fusion_variant(const std::string& name) {
  for (auto v : {FusionVariant::MergeAttention, FusionVariant::AudioVisualCross, FusionVariant::VisualAudioCross,
                 FusionVariant::ParallelCross, FusionVariant::ConcatenateCross}) {
    if (fusion_variant_name(v) == name) return v;
  }
  throw ConfigError("unknown fusion variant '" + name + "'");
}

CrossAttentionLayer CrossAttentionLayer::create(const TransformerConfig& config, Rng& rng) {
  const double residual_std = kInitStd / std::sqrt(2.0 * static_cast<double>(config.layers));
  return {LayerNorm::create(config.hidden), MultiHeadAttention::create(config.hidden, config.heads, rng, residual_std)};
}

Tensor CrossAttentionLayer::operator()(const Tensor& x, const Tensor& context) const {
  return attention(norm(x), context, AttentionMask::full(x.dim(1), context.dim(1)));
}

void CrossAttentionLayer::collect(ParameterSet& set, const std::string& prefix) const {
  norm.collect(set, prefix + ".norm");
  attention.collect(set, prefix + ".attention");
}

namespace {

std::size_t cross_layers_per_block(FusionVariant v) {
  switch (v) {
    case FusionVariant::MergeAttention:
      return 0;
    case FusionVariant::ConcatenateCross:
      return 1;
    default:
      return 2;
  }
}

}  // namespace

MultimodalDecoder::MultimodalDecoder(const DecoderConfig& config, std::size_t vision_width, std::size_t audio_width,
                                     const TextEncoder* text, Rng& rng)
    : config_(config) {
  config.transformer.validate("decoder");
  if (config.max_length < 2) throw ConfigError("decoder length must be at least 2");
  const auto c = config.transformer.hidden;
  if (config.share_with_text_encoder) {
    if (text == nullptr) throw ConfigError("decoder weight sharing needs a text encoder");
    const auto& tc = text->config();
    if (tc.transformer.hidden != c || tc.transformer.layers != config.transformer.layers ||
        tc.transformer.heads != config.transformer.heads || tc.transformer.ffn_multiple != config.transformer.ffn_multiple ||
        tc.vocab_size != config.vocab_size || tc.max_length != config.max_length) {
      throw ConfigError("decoder weight sharing needs the text encoder's geometry");
    }
    word_embedding_ = text->word_embedding();
    position_embedding_ = text->position_embedding();
    blocks_ = text->blocks();
    final_norm_ = text->final_norm();
  } else {
    word_embedding_ = normal_parameter({config.vocab_size, c}, kInitStd, rng);
    position_embedding_ = normal_parameter({config.max_length, c}, kInitStd, rng);
    for (std::size_t l = 0; l < config.transformer.layers; ++l) blocks_.push_back(TransformerBlock::create(config.transformer, rng));
    final_norm_ = LayerNorm::create(c);
  }
  const std::size_t per_block = cross_layers_per_block(config.variant);
  cross_.resize(config.transformer.layers);
  for (auto& layers : cross_) {
    for (std::size_t k = 0; k < per_block; ++k) layers.push_back(CrossAttentionLayer::create(config.transformer, rng));
  }
  vision_map_ = Linear::create(vision_width, c, rng);
  audio_map_ = Linear::create(audio_width, c, rng);
  head_hidden_ = Linear::create(c, c, rng);
  head_norm_ = LayerNorm::create(c);
  head_out_ = Linear::create(c, config.vocab_size, rng);
}

ConditionalFeatures MultimodalDecoder::build_conditions(const Tensor& vision_features, const Tensor& audio_features) const {
  auto flatten = [](const Tensor& f, const Linear& map, const char* what) {
    if (f.rank() != 4) throw DimensionError(std::string(what) + " features must be [B, N, S, C], got " + shape_string(f.shape()));
    return map(reshape(f, {f.dim(0), f.dim(1) * f.dim(2), f.dim(3)}));
  };
  ConditionalFeatures c;
  if (vision_features.defined()) c.vision = flatten(vision_features, vision_map_, "vision");
  if (audio_features.defined()) c.audio = flatten(audio_features, audio_map_, "audio");
  return c;
}

Tensor MultimodalDecoder::embed(const std::vector<TokenId>& ids, std::size_t batch, std::size_t length) const {
  if (length == 0 || length > config_.max_length) {
    throw DimensionError("decoder length " + std::to_string(length) + " outside 1.." + std::to_string(config_.max_length));
  }
  if (ids.size() != batch * length) throw DimensionError("decoder ids do not match [batch, length]");
  return add(embedding(word_embedding_, ids, {batch, length}), slice(position_embedding_, 0, 0, length));
}

Tensor MultimodalDecoder::apply_cross(std::size_t block, const Tensor& x, const ConditionalFeatures& conditions) const {
  const auto& layers = cross_[block];
  switch (config_.variant) {
    case FusionVariant::MergeAttention:
      return x;
    case FusionVariant::ConcatenateCross: {
      const Tensor context = conditions.vision.defined() && conditions.audio.defined() ? conditions.audiovisual()
                             : conditions.vision.defined()                             ? conditions.vision
                                                                                       : conditions.audio;
      return add(x, layers[0](x, context));
    }
    case FusionVariant::AudioVisualCross: {
      Tensor y = x;
      if (conditions.audio.defined()) y = add(y, layers[1](y, conditions.audio));
      if (conditions.vision.defined()) y = add(y, layers[0](y, conditions.vision));
      return y;
    }
    case FusionVariant::VisualAudioCross: {
      Tensor y = x;
      if (conditions.vision.defined()) y = add(y, layers[0](y, conditions.vision));
      if (conditions.audio.defined()) y = add(y, layers[1](y, conditions.audio));
      return y;
    }
    case FusionVariant::ParallelCross: {
      // Summing the branches before the residual keeps the result symmetric in them.
      if (conditions.vision.defined() && conditions.audio.defined()) {
        return add(x, add(layers[0](x, conditions.vision), layers[1](x, conditions.audio)));
      }
      if (conditions.vision.defined()) return add(x, layers[0](x, conditions.vision));
      return add(x, layers[1](x, conditions.audio));
    }
  }
  throw ContractError("unknown fusion variant");
}

Tensor MultimodalDecoder::head(const Tensor& x) const {
  return head_out_(head_norm_(gelu(head_hidden_(final_norm_(x)))));
}

AttentionMask prefix_causal_mask(std::size_t length, std::size_t prefix) {
  AttentionMask m;
  m.queries = m.keys = length;
  m.allowed.assign(length * length, 0);
  for (std::size_t i = 0; i < length; ++i) {
    for (std::size_t j = 0; j < length; ++j) {
      const bool both_prefix = i < prefix && j < prefix;
      m.allowed[i * length + j] = (both_prefix || (i >= prefix && j <= i)) ? 1 : 0;
    }
  }
  return m;
}

namespace {

// Self-attention mask over [conditions (n_c rows); text (L rows)] for a batch.
AttentionMask merged_mask(std::size_t batch, std::size_t conditions, std::size_t length,
                          const std::vector<std::size_t>& prefix) {
  const std::size_t total = conditions + length;
  AttentionMask m;
  m.batch = prefix.empty() ? 1 : batch;
  m.queries = m.keys = total;
  m.allowed.assign(m.batch * total * total, 0);
  for (std::size_t b = 0; b < m.batch; ++b) {
    const auto text = prefix_causal_mask(length, prefix.empty() ? 0 : prefix[b]);
    std::uint8_t* base = m.allowed.data() + b * total * total;
    for (std::size_t i = 0; i < total; ++i) {
      for (std::size_t j = 0; j < conditions; ++j) base[i * total + j] = 1;
    }
    for (std::size_t i = 0; i < length; ++i) {
      for (std::size_t j = 0; j < length; ++j) {
        base[(conditions + i) * total + conditions + j] = text.allowed[i * length + j];
      }
    }
  }
  return m;
}

AttentionMask text_mask(std::size_t batch, std::size_t length, const std::vector<std::size_t>& prefix) {
  if (prefix.empty()) return AttentionMask::causal(length);
  AttentionMask m;
  m.batch = batch;
  m.queries = m.keys = length;
  for (std::size_t b = 0; b < batch; ++b) {
    const auto row = prefix_causal_mask(length, prefix[b]);
    m.allowed.insert(m.allowed.end(), row.allowed.begin(), row.allowed.end());
  }
  return m;
}

}  // namespace

Tensor MultimodalDecoder::forward(const std::vector<TokenId>& ids, std::size_t batch, std::size_t length,
                                  const ConditionalFeatures& conditions, const std::vector<std::size_t>& prefix) const {
  if (conditions.empty()) throw ConfigError("decoder needs at least one condition modality");
  if (conditions.batch() != batch) throw DimensionError("condition batch does not match token batch");
  if (!prefix.empty() && prefix.size() != batch) throw DimensionError("one prefix length per row is required");
  for (std::size_t p : prefix) {
    if (p > length) throw ContractError("prefix longer than the sequence");
  }
  Tensor x = embed(ids, batch, length);

  if (config_.variant == FusionVariant::MergeAttention) {
    std::vector<Tensor> parts;
    if (conditions.vision.defined()) parts.push_back(conditions.vision);
    if (conditions.audio.defined()) parts.push_back(conditions.audio);
    const std::size_t n_cond = [&] {
      std::size_t n = 0;
      for (const auto& p : parts) n += p.dim(1);
      return n;
    }();
    parts.push_back(x);
    Tensor h = concat(parts, 1);
    const auto mask = merged_mask(batch, n_cond, length, prefix);
    for (const auto& block : blocks_) h = block(h, mask);
    return head(slice(h, 1, n_cond, n_cond + length));
  }

  const auto mask = text_mask(batch, length, prefix);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const auto& block = blocks_[l];
    const Tensor normed = block.attention_norm(x);
    x = add(x, block.self_attention(normed, normed, mask));
    x = apply_cross(l, x, conditions);
    x = add(x, block.ffn(block.ffn_norm(x)));
  }
  return head(x);
}

void MultimodalDecoder::collect(ParameterSet& set, const std::string& prefix) const {
  set.add(prefix + ".word_embedding", word_embedding_);
  set.add(prefix + ".position_embedding", position_embedding_);
  for (std::size_t l = 0; l < blocks_.size(); ++l) blocks_[l].collect(set, prefix + ".block" + std::to_string(l));
  final_norm_.collect(set, prefix + ".final_norm");
  collect_own(set, prefix);
}

void MultimodalDecoder::collect_own(ParameterSet& set, const std::string& prefix) const {
  for (std::size_t l = 0; l < cross_.size(); ++l) {
    for (std::size_t k = 0; k < cross_[l].size(); ++k) {
      cross_[l][k].collect(set, prefix + ".block" + std::to_string(l) + ".cross" + std::to_string(k));
    }
  }
  vision_map_.collect(set, prefix + ".vision_map");
  audio_map_.collect(set, prefix + ".audio_map");
  head_hidden_.collect(set, prefix + ".head_hidden");
  head_norm_.collect(set, prefix + ".head_norm");
  head_out_.collect(set, prefix + ".head_out");
}

Tensor mgc_loss(const Tensor& logits, const MaskedBatch& masked) {
  if (logits.rank() != 3) throw DimensionError("mgc_loss expects logits [B, L, V], got " + shape_string(logits.shape()));
  if (masked.positions.empty()) throw ContractError("mgc_loss needs at least one masked position");
  const std::size_t vocab = logits.dim(2), rows = logits.dim(0) * logits.dim(1);
  std::vector<std::size_t> idx;
  idx.reserve(masked.positions.size() * vocab);
  for (std::size_t p : masked.positions) {
    if (p >= rows) throw IndexError("masked position " + std::to_string(p) + " outside logits");
    for (std::size_t v = 0; v < vocab; ++v) idx.push_back(p * vocab + v);
  }
  Tensor picked = gather(logits, std::move(idx), {masked.positions.size(), vocab});
  return cross_entropy(picked, masked.targets);
}

Tensor grouped_mgc_loss(const MultimodalDecoder& decoder, const MaskedBatch& masked,
                        const ConditionalFeatures& conditions, const std::vector<ModalityGroup>& groups,
                        const std::vector<std::size_t>& prefix) {
  if (groups.empty()) throw ConfigError("at least one captioning group is required");
  Tensor total;
  for (const auto& g : groups) {
    const auto selected = conditions.select(g);
    Tensor logits = decoder.forward(masked.input.ids, masked.input.batch, masked.input.length, selected, prefix);
    Tensor l = mgc_loss(logits, masked);
    total = total.defined() ? add(total, l) : l;
  }
  return scale(total, 1.0 / static_cast<double>(groups.size()));
}

}  // namespace triad
