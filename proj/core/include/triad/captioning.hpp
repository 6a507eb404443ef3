// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0
//
// Conditional masked-token captioning: token masking, condition features and
// the multimodal decoder with its five fusion-attention variants.

#pragma once

#include <string>
#include <vector>

#include "triad/alignment.hpp"
#include "triad/encoders.hpp"

namespace triad {

struct MaskPolicy {
  double probability = 0.6;
  // Lets the [SEP] closing a sequence be masked so the decoder learns to stop.
  bool include_terminal_sep = false;
  // Positions before this index are never masked ([CLS] sits at 0). QA uses it
  // to keep every question token visible.
  std::size_t first_maskable = 1;
};

struct MaskedBatch {
  TokenBatch input;                    // ids with [MASK] substitutions
  std::vector<std::size_t> positions;  // flat b * length + i, ascending
  std::vector<TokenId> targets;        // original id at each position
};

/// Replaces each maskable token with [MASK] independently with the policy's
/// probability; a row where nothing was drawn gets one uniformly chosen
/// maskable token masked. [CLS] and [PAD] are never masked, nor is [SEP]
/// unless it closes the sequence and the policy allows it.
/// A row with no maskable token raises ContractError. A non-empty
/// `row_first_maskable` overrides policy.first_maskable per row.
MaskedBatch mask_tokens(const TokenBatch& tokens, const MaskPolicy& policy, Rng& rng,
                        std::span<const std::size_t> row_first_maskable = {});

/// Flattened, width-matched condition sequences; undefined when absent.
struct ConditionalFeatures {
  Tensor vision;  // [B, n_v, C']
  Tensor audio;   // [B, n_a, C']

  // Vision rows then audio rows.
  Tensor audiovisual() const;
  // Keeps only what a group conditions on: T-V, T-A or T-AV.
  ConditionalFeatures select(const ModalityGroup& group) const;
  std::size_t batch() const { return vision.defined() ? vision.dim(0) : audio.dim(0); }
  bool empty() const { return !vision.defined() && !audio.defined(); }
};

enum class FusionVariant { MergeAttention, AudioVisualCross, VisualAudioCross, ParallelCross, ConcatenateCross };

std::string fusion_variant_name(FusionVariant v);
FusionVariant parse_fusion_variant(const std::string& name);

struct DecoderConfig {
  TransformerConfig transformer;
  std::size_t vocab_size = 64;
  std::size_t max_length = 32;
  FusionVariant variant = FusionVariant::ConcatenateCross;
  // Share embeddings, self-attention, feed-forward and norms with the text encoder.
  bool share_with_text_encoder = true;
};

struct CrossAttentionLayer {
  LayerNorm norm;
  MultiHeadAttention attention;

  static CrossAttentionLayer create(const TransformerConfig& config, Rng& rng);
  Tensor operator()(const Tensor& x, const Tensor& context) const;
  void collect(ParameterSet& set, const std::string& prefix) const;
};

/// Text decoder with cross-attention inserted between self-attention and the
/// feed-forward layer of every block. Text self-attention is causal; an
/// optional per-row prefix length makes the leading tokens bidirectional (QA).
class MultimodalDecoder {
 public:
  MultimodalDecoder() = default;
  // `text` supplies the shared parameters when sharing is on; it may be null otherwise.
  MultimodalDecoder(const DecoderConfig& config, std::size_t vision_width, std::size_t audio_width,
                    const TextEncoder* text, Rng& rng);

  /// Flatten [B, N, S, C] features over frames/clips and map them to the decoder width.
  ConditionalFeatures build_conditions(const Tensor& vision_features, const Tensor& audio_features) const;

  /// Logits [B, L, V] for ids [B, L]. `prefix` holds per-row bidirectional
  /// prefix lengths (empty means fully causal).
  Tensor forward(const std::vector<TokenId>& ids, std::size_t batch, std::size_t length,
                 const ConditionalFeatures& conditions, const std::vector<std::size_t>& prefix = {}) const;

  const DecoderConfig& config() const { return config_; }
  void collect(ParameterSet& set, const std::string& prefix) const;
  // Parameters owned by the decoder alone (cross-attention, condition maps, head).
  void collect_own(ParameterSet& set, const std::string& prefix) const;

 private:
  Tensor embed(const std::vector<TokenId>& ids, std::size_t batch, std::size_t length) const;
  Tensor apply_cross(std::size_t block, const Tensor& x, const ConditionalFeatures& conditions) const;
  Tensor head(const Tensor& x) const;

  DecoderConfig config_;
  Tensor word_embedding_;
  Tensor position_embedding_;
  std::vector<TransformerBlock> blocks_;
  LayerNorm final_norm_;
  // Per block: one layer (concatenate), two (audio/vision ordered or parallel), none (merge).
  std::vector<std::vector<CrossAttentionLayer>> cross_;
  Linear vision_map_, audio_map_;
  Linear head_hidden_;
  LayerNorm head_norm_;
  Linear head_out_;
};

/// Self-attention mask over L text positions: the first `prefix` positions are
/// mutually visible, every later position sees all earlier positions and itself.
AttentionMask prefix_causal_mask(std::size_t length, std::size_t prefix);

/// Mean cross-entropy of logits [B, L, V] at the masked positions only.
Tensor mgc_loss(const Tensor& logits, const MaskedBatch& masked);

/// Mean over groups (each T-V, T-A or T-AV) of the masked-token loss with that
/// group's condition. The same masked batch serves every group.
Tensor grouped_mgc_loss(const MultimodalDecoder& decoder, const MaskedBatch& masked,
                        const ConditionalFeatures& conditions, const std::vector<ModalityGroup>& groups,
                        const std::vector<std::size_t>& prefix = {});

}  // namespace triad
