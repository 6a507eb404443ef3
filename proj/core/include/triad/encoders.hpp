// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0
//
// Single-modality transformer encoders for text, vision frames and audio
// spectrograms.

#pragma once

#include <cstdint>
#include <vector>

#include "triad/layers.hpp"
#include "triad/text.hpp"

namespace triad {

/// A batch of fixed-length token sequences, row-major [batch, length].
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<TokenId> ids;
  std::vector<std::uint8_t> mask;

  static TokenBatch from(const std::vector<TokenizedText>& rows);
  static TokenBatch single(const TokenizedText& row) { return from({row}); }
  std::vector<TokenId> row(std::size_t b) const;
};

struct TextEncoderConfig {
  TransformerConfig transformer;
  std::size_t vocab_size = 64;
  std::size_t max_length = 32;

  void validate() const;
};

struct TextFeatures {
  Tensor features;  // [B, N_t, C_t]
  std::vector<TokenId> token_ids;
  std::vector<std::uint8_t> attention_mask;
};

/// Bidirectional text encoder over word + position embeddings. Padding
/// positions are excluded as keys, so they never influence real tokens.
class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(const TextEncoderConfig& config, Rng& rng);

  TextFeatures forward(const TokenBatch& tokens) const;
  // Word + position embedding of a [B, L] id grid (L <= max_length).
  Tensor embed(const std::vector<TokenId>& ids, std::size_t batch, std::size_t length) const;

  const TextEncoderConfig& config() const { return config_; }
  const Tensor& word_embedding() const { return word_embedding_; }
  const Tensor& position_embedding() const { return position_embedding_; }
  const std::vector<TransformerBlock>& blocks() const { return blocks_; }
  const LayerNorm& final_norm() const { return final_norm_; }
  void collect(ParameterSet& set, const std::string& prefix) const;

 private:
  TextEncoderConfig config_;
  Tensor word_embedding_;
  Tensor position_embedding_;
  std::vector<TransformerBlock> blocks_;
  LayerNorm final_norm_;
};

struct VisionEncoderConfig {
  TransformerConfig transformer;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 3;
  std::size_t patch = 8;

  std::size_t sequence_length() const { return (height / patch) * (width / patch); }
  std::size_t patch_dim() const { return patch * patch * channels; }
  void validate() const;
};

/// Per-frame patch transformer. Frames never attend to each other.
class VisionEncoder {
 public:
  VisionEncoder() = default;
  VisionEncoder(const VisionEncoderConfig& config, Rng& rng);

  // frames [N_v, H, W, ch] -> [N_v, S_v, C_v], or [B, N_v, H, W, ch] -> [B, N_v, S_v, C_v].
  Tensor forward(const Tensor& frames) const;

  const VisionEncoderConfig& config() const { return config_; }
  void collect(ParameterSet& set, const std::string& prefix) const;

 private:
  VisionEncoderConfig config_;
  Linear patch_embedding_;
  Tensor position_embedding_;
  std::vector<TransformerBlock> blocks_;
  LayerNorm final_norm_;
};

struct AudioEncoderConfig {
  TransformerConfig transformer;
  std::size_t mel_bins = 8;
  std::size_t time_frames = 16;
  std::size_t patch_mel = 4;
  std::size_t patch_time = 4;

  std::size_t sequence_length() const { return (mel_bins / patch_mel) * (time_frames / patch_time); }
  std::size_t patch_dim() const { return patch_mel * patch_time; }
  void validate() const;
};

/// Per-clip spectrogram patch transformer.
class AudioEncoder {
 public:
  AudioEncoder() = default;
  AudioEncoder(const AudioEncoderConfig& config, Rng& rng);

  // spectrograms [N_a, M, T] -> [N_a, S_a, C_a], or [B, N_a, M, T] -> [B, N_a, S_a, C_a].
  // Geometry other than the configured M x T raises InputError.
  Tensor forward(const Tensor& spectrograms) const;

  const AudioEncoderConfig& config() const { return config_; }
  void collect(ParameterSet& set, const std::string& prefix) const;

 private:
  AudioEncoderConfig config_;
  Linear patch_embedding_;
  Tensor position_embedding_;
  std::vector<TransformerBlock> blocks_;
  LayerNorm final_norm_;
};

// Row-major patch extraction: [items, H, W, ch] -> [items, S, p*p*ch].
Tensor patchify_frames(const Tensor& frames, std::size_t patch);
// [items, M, T] -> [items, S, pm*pt].
Tensor patchify_spectrograms(const Tensor& spectrograms, std::size_t patch_mel, std::size_t patch_time);

}  // namespace triad
