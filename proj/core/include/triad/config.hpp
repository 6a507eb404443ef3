// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0
//
// Flat `key = value` configuration files and the training configuration.
//
//   # comment
//   alpha = 1.5
//   mga_groups = [T-AV, T-V, T-A]

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "triad/model.hpp"

namespace triad {

class ConfigFile {
 public:
  static ConfigFile parse(const std::string& text);
  static ConfigFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;

 private:
  std::map<std::string, std::string> values_;
};

std::string format_list(const std::vector<std::string>& items);

struct TrainConfig {
  std::uint64_t seed = 1234;

  // Objective.
  double alpha = 1.5;
  double mask_prob = 0.6;
  bool mask_terminal_sep = true;
  std::vector<std::string> mga_groups = {"T-AV", "T-V", "T-A"};
  std::vector<std::string> mgc_groups = {"T-AV", "T-V", "T-A"};
  std::string fusion = "concatenate-cross";
  std::string alignment = "fine-feature-learned";
  bool share_weights = true;

  // Optimization.
  double learning_rate = 1e-3;
  std::size_t warmup_steps = 30;
  std::size_t total_steps = 300;
  std::size_t batch_size = 32;
  double clip_norm = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  // Model.
  std::size_t hidden = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ffn_multiple = 4;
  std::size_t text_length = 16;
  std::size_t common = 64;
  double temperature = 0.07;

  // Data.
  std::vector<std::string> datasets = {"synthetic:1:av"};
  std::size_t vision_events = 8;
  std::size_t audio_events = 8;
  std::size_t frame_size = 16;
  std::size_t channels = 3;
  std::size_t patch = 8;
  std::size_t mel_bins = 8;
  std::size_t time_frames = 16;
  std::size_t patch_mel = 4;
  std::size_t patch_time = 4;
  double noise = 0.3;
  std::size_t render_frames = 1;
  std::size_t render_clips = 1;
  std::size_t frames_per_example = 1;
  std::size_t clips_per_example = 1;
  std::size_t train_pool = 0;  // 0 draws fresh examples every step

  // Evaluation.
  std::size_t eval_interval = 100;  // 0 evaluates only at the end
  std::size_t eval_splits = 4;
  std::vector<std::string> eval_groups = {"T-AV", "T-V", "T-A"};
  std::size_t beam_size = 3;  // 1 decodes greedily
  bool length_normalize = true;
  std::size_t generation_length = 14;
  double dual_softmax_temperature = 100.0;

  // Fine-tuning.
  std::string finetune_task = "retrieval";
  std::string finetune_group = "T-AV";
  std::size_t finetune_steps = 200;
  double finetune_learning_rate = 5e-4;
  std::size_t finetune_warmup = 20;

  // Ablation grid.
  std::vector<std::string> ablation = {"M1", "M6"};
  std::vector<std::string> ablation_benchmarks = {"T-V", "T-A", "T-AV"};
  std::size_t ablation_finetune_steps = 0;

  /// Unknown keys and malformed values raise ConfigError.
  static TrainConfig from_file(const ConfigFile& file);
  static TrainConfig load(const std::filesystem::path& path);
  static TrainConfig parse(const std::string& text);
  ConfigFile to_file() const;
  std::string to_text() const;
  void validate() const;

  ModelConfig model_config() const;
  SynthConfig synth_config() const;
  BatchOptions batch_options() const;
  ObjectiveConfig objective() const;
  DatasetSpec dataset_spec() const;
};

}  // namespace triad
