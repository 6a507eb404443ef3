// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0

#include "triad/encoders.hpp"

#include "triad/error.hpp"

namespace triad {

TokenBatch TokenBatch::from(const std::vector<TokenizedText>& rows) {
  if (rows.empty()) throw ContractError("token batch needs at least one row");
  TokenBatch t;
  t.batch = rows.size();
  t.length = rows.front().ids.size();
  for (const auto& r : rows) {
    if (r.ids.size() != t.length || r.mask.size() != t.length) throw DimensionError("token rows differ in length");
    t.ids.insert(t.ids.end(), r.ids.begin(), r.ids.end());
    t.mask.insert(t.mask.end(), r.mask.begin(), r.mask.end());
  }
  return t;
}

std::vector<TokenId> TokenBatch::row(std::size_t b) const {
  return {ids.begin() + static_cast<std::ptrdiff_t>(b * length),
          ids.begin() + static_cast<std::ptrdiff_t>((b + 1) * length)};
}

void TextEncoderConfig::validate() const {
  transformer.validate("text encoder");
  if (vocab_size <= Vocabulary::kSpecialCount) throw ConfigError("vocabulary must hold more than the special tokens");
  if (max_length < 2) throw ConfigError("text length must be at least 2");
}

TextEncoder::TextEncoder(const TextEncoderConfig& config, Rng& rng) : config_(config) {
  config.validate();
  const auto c = config.transformer.hidden;
  word_embedding_ = normal_parameter({config.vocab_size, c}, kInitStd, rng);
  position_embedding_ = normal_parameter({config.max_length, c}, kInitStd, rng);
  for (std::size_t l = 0; l < config.transformer.layers; ++l) blocks_.push_back(TransformerBlock::create(config.transformer, rng));
  final_norm_ = LayerNorm::create(c);
}

Tensor TextEncoder::embed(const std::vector<TokenId>& ids, std::size_t batch, std::size_t length) const {
  if (length == 0 || length > config_.max_length) {
    throw DimensionError("text length " + std::to_string(length) + " outside 1.." + std::to_string(config_.max_length));
  }
  Tensor words = embedding(word_embedding_, ids, {batch, length});
  return add(words, slice(position_embedding_, 0, 0, length));
}

TextFeatures TextEncoder::forward(const TokenBatch& tokens) const {
  Tensor x = embed(tokens.ids, tokens.batch, tokens.length);
  const auto mask = AttentionMask::key_padding(tokens.mask, tokens.batch, tokens.length);
  for (const auto& block : blocks_) x = block(x, mask);
  return {final_norm_(x), tokens.ids, tokens.mask};
}

void TextEncoder::collect(ParameterSet& set, const std::string& prefix) const {
  set.add(prefix + ".word_embedding", word_embedding_);
  set.add(prefix + ".position_embedding", position_embedding_);
  for (std::size_t l = 0; l < blocks_.size(); ++l) blocks_[l].collect(set, prefix + ".block" + std::to_string(l));
  final_norm_.collect(set, prefix + ".final_norm");
}

Tensor patchify_frames(const Tensor& frames, std::size_t patch) {
  if (frames.rank() != 4) throw DimensionError("patchify_frames expects [items, H, W, ch], got " + shape_string(frames.shape()));
  const std::size_t items = frames.dim(0), h = frames.dim(1), w = frames.dim(2), ch = frames.dim(3);
  if (patch == 0 || h % patch != 0 || w % patch != 0) {
    throw ConfigError("frame size " + std::to_string(h) + "x" + std::to_string(w) + " not divisible by patch " +
                      std::to_string(patch));
  }
  const std::size_t rows = h / patch, cols = w / patch, dim = patch * patch * ch;
  std::vector<std::size_t> idx;
  idx.reserve(frames.size());
  for (std::size_t f = 0; f < items; ++f) {
    for (std::size_t pr = 0; pr < rows; ++pr) {
      for (std::size_t pc = 0; pc < cols; ++pc) {
        for (std::size_t y = 0; y < patch; ++y) {
          for (std::size_t x = 0; x < patch; ++x) {
            for (std::size_t c = 0; c < ch; ++c) {
              idx.push_back(((f * h + pr * patch + y) * w + pc * patch + x) * ch + c);
            }
          }
        }
      }
    }
  }
  return gather(frames, std::move(idx), {items, rows * cols, dim});
}

Tensor patchify_spectrograms(const Tensor& spectrograms, std::size_t patch_mel, std::size_t patch_time) {
  if (spectrograms.rank() != 3) {
    throw DimensionError("patchify_spectrograms expects [items, M, T], got " + shape_string(spectrograms.shape()));
  }
  const std::size_t items = spectrograms.dim(0), m = spectrograms.dim(1), t = spectrograms.dim(2);
  if (patch_mel == 0 || patch_time == 0 || m % patch_mel != 0 || t % patch_time != 0) {
    throw ConfigError("spectrogram " + std::to_string(m) + "x" + std::to_string(t) + " not divisible by patch " +
                      std::to_string(patch_mel) + "x" + std::to_string(patch_time));
  }
  const std::size_t rows = m / patch_mel, cols = t / patch_time;
  std::vector<std::size_t> idx;
  idx.reserve(spectrograms.size());
  for (std::size_t a = 0; a < items; ++a) {
    for (std::size_t pr = 0; pr < rows; ++pr) {
      for (std::size_t pc = 0; pc < cols; ++pc) {
        for (std::size_t y = 0; y < patch_mel; ++y) {
          for (std::size_t x = 0; x < patch_time; ++x) {
            idx.push_back((a * m + pr * patch_mel + y) * t + pc * patch_time + x);
          }
        }
      }
    }
  }
  return gather(spectrograms, std::move(idx), {items, rows * cols, patch_mel * patch_time});
}

namespace {

Tensor run_patch_transformer(Tensor patches, const Linear& embedding, const Tensor& position,
                             const std::vector<TransformerBlock>& blocks, const LayerNorm& norm) {
  Tensor x = add(embedding(patches), position);
  const auto mask = AttentionMask::full(x.dim(1), x.dim(1));
  for (const auto& block : blocks) x = block(x, mask);
  return norm(x);
}

}  // namespace

void VisionEncoderConfig::validate() const {
  transformer.validate("vision encoder");
  if (patch == 0 || height == 0 || width == 0 || channels == 0) throw ConfigError("vision geometry must be positive");
  if (height % patch != 0 || width % patch != 0) {
    throw ConfigError("frame size " + std::to_string(height) + "x" + std::to_string(width) + " not divisible by patch " +
                      std::to_string(patch));
  }
}

VisionEncoder::VisionEncoder(const VisionEncoderConfig& config, Rng& rng) : config_(config) {
  config.validate();
  const auto c = config.transformer.hidden;
  patch_embedding_ = Linear::create(config.patch_dim(), c, rng);
  position_embedding_ = normal_parameter({config.sequence_length(), c}, kInitStd, rng);
  for (std::size_t l = 0; l < config.transformer.layers; ++l) blocks_.push_back(TransformerBlock::create(config.transformer, rng));
  final_norm_ = LayerNorm::create(c);
}

Tensor VisionEncoder::forward(const Tensor& frames) const {
  if (frames.rank() != 4 && frames.rank() != 5) {
    throw DimensionError("vision input must be [N_v, H, W, ch] or [B, N_v, H, W, ch], got " + shape_string(frames.shape()));
  }
  const bool batched = frames.rank() == 5;
  const auto& s = frames.shape();
  const std::size_t off = batched ? 1 : 0;
  if (s[off + 1] % config_.patch != 0 || s[off + 2] % config_.patch != 0) {
    throw ConfigError("frame size " + std::to_string(s[off + 1]) + "x" + std::to_string(s[off + 2]) +
                      " not divisible by patch " + std::to_string(config_.patch));
  }
  if (s[off + 1] != config_.height || s[off + 2] != config_.width || s[off + 3] != config_.channels) {
    throw InputError("frames " + shape_string(s) + " do not match configured " + std::to_string(config_.height) + "x" +
                     std::to_string(config_.width) + "x" + std::to_string(config_.channels));
  }
  const std::size_t items = batched ? s[0] * s[1] : s[0];
  Tensor flat = batched ? reshape(frames, {items, s[2], s[3], s[4]}) : frames;
  Tensor out = run_patch_transformer(patchify_frames(flat, config_.patch), patch_embedding_, position_embedding_,
                                     blocks_, final_norm_);
  const std::size_t seq = config_.sequence_length(), c = config_.transformer.hidden;
  return batched ? reshape(out, {s[0], s[1], seq, c}) : out;
}

void VisionEncoder::collect(ParameterSet& set, const std::string& prefix) const {
  patch_embedding_.collect(set, prefix + ".patch_embedding");
  set.add(prefix + ".position_embedding", position_embedding_);
  for (std::size_t l = 0; l < blocks_.size(); ++l) blocks_[l].collect(set, prefix + ".block" + std::to_string(l));
  final_norm_.collect(set, prefix + ".final_norm");
}

void AudioEncoderConfig::validate() const {
  transformer.validate("audio encoder");
  if (patch_mel == 0 || patch_time == 0 || mel_bins % patch_mel != 0 || time_frames % patch_time != 0) {
    throw ConfigError("spectrogram " + std::to_string(mel_bins) + "x" + std::to_string(time_frames) +
                      " not divisible by patch " + std::to_string(patch_mel) + "x" + std::to_string(patch_time));
  }
}

AudioEncoder::AudioEncoder(const AudioEncoderConfig& config, Rng& rng) : config_(config) {
  config.validate();
  const auto c = config.transformer.hidden;
  patch_embedding_ = Linear::create(config.patch_dim(), c, rng);
  position_embedding_ = normal_parameter({config.sequence_length(), c}, kInitStd, rng);
  for (std::size_t l = 0; l < config.transformer.layers; ++l) blocks_.push_back(TransformerBlock::create(config.transformer, rng));
  final_norm_ = LayerNorm::create(c);
}

Tensor AudioEncoder::forward(const Tensor& spectrograms) const {
  if (spectrograms.rank() != 3 && spectrograms.rank() != 4) {
    throw InputError("audio input must be [N_a, M, T] or [B, N_a, M, T], got " + shape_string(spectrograms.shape()));
  }
  const bool batched = spectrograms.rank() == 4;
  const auto& s = spectrograms.shape();
  const std::size_t off = batched ? 1 : 0;
  if (s[off + 1] != config_.mel_bins || s[off + 2] != config_.time_frames) {
    throw InputError("spectrogram geometry " + std::to_string(s[off + 1]) + "x" + std::to_string(s[off + 2]) +
                     " does not match configured " + std::to_string(config_.mel_bins) + "x" +
                     std::to_string(config_.time_frames));
  }
  const std::size_t items = batched ? s[0] * s[1] : s[0];
  Tensor flat = batched ? reshape(spectrograms, {items, s[2], s[3]}) : spectrograms;
  Tensor out = run_patch_transformer(patchify_spectrograms(flat, config_.patch_mel, config_.patch_time),
                                     patch_embedding_, position_embedding_, blocks_, final_norm_);
  const std::size_t seq = config_.sequence_length(), c = config_.transformer.hidden;
  return batched ? reshape(out, {s[0], s[1], seq, c}) : out;
}

void AudioEncoder::collect(ParameterSet& set, const std::string& prefix) const {
  patch_embedding_.collect(set, prefix + ".patch_embedding");
  set.add(prefix + ".position_embedding", position_embedding_);
  for (std::size_t l = 0; l < blocks_.size(); ++l) blocks_[l].collect(set, prefix + ".block" + std::to_string(l));
  final_norm_.collect(set, prefix + ".final_norm");
}

}  // namespace triad
