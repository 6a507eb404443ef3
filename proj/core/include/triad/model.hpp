// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0
//
// The full tri-modality model and its joint alignment + captioning objective.

#pragma once

#include <cstdint>
#include <vector>

#include "triad/alignment.hpp"
#include "triad/captioning.hpp"
#include "triad/data.hpp"
#include "triad/encoders.hpp"

namespace triad {

struct ModelConfig {
  TextEncoderConfig text;
  VisionEncoderConfig vision;
  AudioEncoderConfig audio;
  AlignmentConfig alignment;
  FusionVariant fusion = FusionVariant::ConcatenateCross;
  bool share_weights = true;

  void validate() const;
};

struct EncodedBatch {
  TextFeatures text;  // features undefined when text was not encoded
  Tensor vision;      // [B, N_v, S_v, C_v] or undefined
  Tensor audio;       // [B, N_a, S_a, C_a] or undefined
};

class TriadModel {
 public:
  TriadModel() = default;
  TriadModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const TextEncoder& text_encoder() const { return text_; }
  const VisionEncoder& vision_encoder() const { return vision_; }
  const AudioEncoder& audio_encoder() const { return audio_; }
  const AlignmentParams& alignment() const { return alignment_; }
  const MultimodalDecoder& decoder() const { return decoder_; }

  // Encodes whatever is defined / non-empty.
  EncodedBatch encode(const TokenBatch* text, const Tensor& frames, const Tensor& spectrograms) const;
  CommonEmbeddings embed(const EncodedBatch& encoded) const;

  /// All trainable tensors in a stable order; shared tensors appear once.
  ParameterSet parameters() const;

 private:
  ModelConfig config_;
  TextEncoder text_;
  VisionEncoder vision_;
  AudioEncoder audio_;
  AlignmentParams alignment_;
  MultimodalDecoder decoder_;
};

struct ObjectiveConfig {
  double alpha = 1.5;
  std::vector<ModalityGroup> mga_groups;
  std::vector<ModalityGroup> mgc_groups;
  AlignmentVariant alignment;
  MaskPolicy mask;
};

// T-AV, T-V, T-A.
std::vector<ModalityGroup> default_groups();

struct LossBreakdown {
  Tensor total;
  Tensor mga;  // undefined when no alignment term was computed
  Tensor mgc;  // undefined when no captioning term was computed
};

/// alpha * alignment + captioning over one batch. The alignment term is skipped
/// when alpha is 0 or no alignment group is set; the captioning term when no
/// captioning group is set. `rng` drives token masking.
LossBreakdown joint_loss(const TriadModel& model, const Batch& batch, const ObjectiveConfig& objective, Rng& rng);

/// Groups usable on a batch: groups needing audio are dropped when the batch
/// has none, falling back to T-V if nothing remains.
std::vector<ModalityGroup> active_groups(const std::vector<ModalityGroup>& groups, bool has_audio);

}  // namespace triad
