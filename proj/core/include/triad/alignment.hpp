// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0
//
// Contrastive alignment of text, vision and audio in a shared embedding space.

#pragma once

#include <string>
#include <vector>

#include "triad/layers.hpp"

namespace triad {

enum class Modality { Text, Vision, Audio };

char modality_letter(Modality m);

/// A query modality paired with an ordered, non-empty set of target modalities.
struct ModalityGroup {
  Modality query = Modality::Text;
  std::vector<Modality> target;

  // "T-V", "T-A", "T-AV", "V-A", "A-TV", "V-TA". Other spellings raise ConfigError.
  static ModalityGroup parse(const std::string& name);
  static std::vector<ModalityGroup> parse_list(const std::vector<std::string>& names);
  std::string name() const;
  bool uses(Modality m) const;
  bool operator==(const ModalityGroup& other) const = default;
};

/// Per-example embedding rows for each modality, every row unit-norm.
/// Vision and audio are undefined when a batch carries no such input.
struct CommonEmbeddings {
  Tensor text;    // [B, N_t, C]
  Tensor vision;  // [B, N_v, C]
  Tensor audio;   // [B, N_a, C]
  std::vector<std::uint8_t> text_mask;  // [B * N_t]

  std::size_t batch() const { return text.defined() ? text.dim(0) : vision.defined() ? vision.dim(0) : audio.dim(0); }
  bool has(Modality m) const;
  // Vision rows followed by audio rows.
  Tensor audiovisual() const;
};

struct AlignmentConfig {
  std::size_t common = 64;
  double initial_temperature = 0.07;
};

struct AlignmentParams {
  Linear project_text, project_vision, project_audio;
  // Token weighting maps, C -> 1.
  Linear weight_text, weight_vision, weight_audio;
  // Feature-fusion projections for the coarse variant, 2C -> C, keyed by target pair.
  Linear fuse_av, fuse_tv, fuse_ta;
  // tau = exp(log_temperature).
  Tensor log_temperature;

  static AlignmentParams create(std::size_t text_width, std::size_t vision_width, std::size_t audio_width,
                                const AlignmentConfig& config, Rng& rng);
  double temperature() const;
  Tensor inverse_temperature() const;
  const Linear& weighting(Modality m) const;
  void collect(ParameterSet& set, const std::string& prefix) const;
};

enum class Granularity { Fine, Coarse };
enum class TargetFusion { Feature, Score };
enum class TokenWeighting { Learned, Equal };
enum class TextPooling { Mean, Cls };

struct AlignmentVariant {
  Granularity granularity = Granularity::Fine;
  TargetFusion fusion = TargetFusion::Feature;
  TokenWeighting weighting = TokenWeighting::Learned;
  TextPooling text_pooling = TextPooling::Mean;

  // e.g. "fine-feature-learned"; parse accepts that form.
  std::string name() const;
  static AlignmentVariant parse(const std::string& name);
};

/// Projects encoder outputs to unit-norm common-space rows. Text keeps one row
/// per token; vision and audio are mean-pooled over patches first.
/// text [B, N_t, C_t]; vision [B, N_v, S_v, C_v]; audio [B, N_a, S_a, C_a].
/// Undefined vision/audio inputs stay undefined.
CommonEmbeddings pool_and_project(const Tensor& text, std::span<const std::uint8_t> text_mask,
                                  const Tensor& vision, const Tensor& audio, const AlignmentParams& params);

/// Weighted bidirectional max-mean similarity between one text and one target
/// item. e_t [N_t, C] with mask, e_x [N_x, C]. Returns a scalar.
Tensor fine_similarity(const Tensor& e_t, std::span<const std::uint8_t> text_mask, const Tensor& e_x,
                       const Linear& text_weighting, const Linear& target_weighting);

/// Similarity of every query-side item against every target-side item for a
/// group, [Q, K]. Query items come from `queries`, targets from `targets`
/// (the same embeddings during training).
Tensor group_similarity(const CommonEmbeddings& queries, const CommonEmbeddings& targets, const ModalityGroup& group,
                        const AlignmentParams& params, const AlignmentVariant& variant = {});

/// Symmetric InfoNCE over a square similarity matrix with positives on the
/// diagonal: the mean over rows and over columns of -log softmax at the diagonal,
/// averaged over the two directions. `inverse_temperature` is a one-element tensor.
Tensor contrastive_loss(const Tensor& similarity, const Tensor& inverse_temperature);
Tensor contrastive_loss(const Tensor& similarity, double temperature);

/// Mean of the per-group contrastive losses.
Tensor mga_loss(const CommonEmbeddings& embeddings, const std::vector<ModalityGroup>& groups,
                const AlignmentParams& params, const AlignmentVariant& variant = {});

}  // namespace triad
