// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0

#include "triad/model.hpp"

#include "triad/error.hpp"

namespace triad {

void ModelConfig::validate() const {
  text.validate();
  vision.validate();
  audio.validate();
  if (alignment.common == 0) throw ConfigError("common embedding size must be positive");
  if (!(alignment.initial_temperature > 0.0)) throw ConfigError("initial temperature must be positive");
}

TriadModel::TriadModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config.validate();
  Rng rng(seed);
  text_ = TextEncoder(config.text, rng);
  vision_ = VisionEncoder(config.vision, rng);
  audio_ = AudioEncoder(config.audio, rng);
  alignment_ = AlignmentParams::create(config.text.transformer.hidden, config.vision.transformer.hidden,
                                       config.audio.transformer.hidden, config.alignment, rng);
  DecoderConfig dc;
  dc.transformer = config.text.transformer;
  dc.vocab_size = config.text.vocab_size;
  dc.max_length = config.text.max_length;
  dc.variant = config.fusion;
  dc.share_with_text_encoder = config.share_weights;
  decoder_ = MultimodalDecoder(dc, config.vision.transformer.hidden, config.audio.transformer.hidden, &text_, rng);
}

EncodedBatch TriadModel::encode(const TokenBatch* text, const Tensor& frames, const Tensor& spectrograms) const {
  EncodedBatch e;
  if (text != nullptr) e.text = text_.forward(*text);
  if (frames.defined()) e.vision = vision_.forward(frames);
  if (spectrograms.defined()) e.audio = audio_.forward(spectrograms);
  return e;
}

CommonEmbeddings TriadModel::embed(const EncodedBatch& encoded) const {
  return pool_and_project(encoded.text.features, encoded.text.attention_mask, encoded.vision, encoded.audio, alignment_);
}

ParameterSet TriadModel::parameters() const {
  ParameterSet set;
  text_.collect(set, "text");
  vision_.collect(set, "vision");
  audio_.collect(set, "audio");
  alignment_.collect(set, "align");
  decoder_.collect(set, "decoder");
  return set;
}

std::vector<ModalityGroup> default_groups() { return ModalityGroup::parse_list({"T-AV", "T-V", "T-A"}); }

std::vector<ModalityGroup> active_groups(const std::vector<ModalityGroup>& groups, bool has_audio) {
  if (has_audio) return groups;
  std::vector<ModalityGroup> out;
  for (const auto& g : groups) {
    if (!g.uses(Modality::Audio)) out.push_back(g);
  }
  if (out.empty() && !groups.empty()) out.push_back(ModalityGroup::parse("T-V"));
  return out;
}

LossBreakdown joint_loss(const TriadModel& model, const Batch& batch, const ObjectiveConfig& objective, Rng& rng) {
  if (objective.alpha < 0.0) throw ConfigError("alpha must be non-negative");
  const bool use_mga = objective.alpha > 0.0 && !objective.mga_groups.empty();
  const bool use_mgc = !objective.mgc_groups.empty();
  if (!use_mga && !use_mgc) throw ConfigError("objective has neither an alignment nor a captioning term");

  bool needs_vision = false, needs_audio = false;
  for (const auto* groups : {&objective.mga_groups, &objective.mgc_groups}) {
    if ((groups == &objective.mga_groups && !use_mga) || (groups == &objective.mgc_groups && !use_mgc)) continue;
    for (const auto& g : *groups) {
      needs_vision = needs_vision || g.uses(Modality::Vision);
      needs_audio = needs_audio || g.uses(Modality::Audio);
    }
  }
  if (needs_audio && !batch.spectrograms.defined()) throw ConfigError("objective needs audio but the batch has none");
  const EncodedBatch enc = model.encode(use_mga ? &batch.captions : nullptr, needs_vision ? batch.frames : Tensor(),
                                        needs_audio ? batch.spectrograms : Tensor());

  LossBreakdown out;
  if (use_mga) {
    out.mga = mga_loss(model.embed(enc), objective.mga_groups, model.alignment(), objective.alignment);
    out.total = scale(out.mga, objective.alpha);
  }
  if (use_mgc) {
    const MaskedBatch masked = mask_tokens(batch.captions, objective.mask, rng);
    const ConditionalFeatures cond = model.decoder().build_conditions(enc.vision, enc.audio);
    out.mgc = grouped_mgc_loss(model.decoder(), masked, cond, objective.mgc_groups);
    out.total = out.total.defined() ? add(out.total, out.mgc) : out.mgc;
  }
  return out;
}

}  // namespace triad
