// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0

#include "triad/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "triad/error.hpp"

namespace triad {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text) {
  ConfigFile file;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(number) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(number) + ": empty key");
    if (file.has(key)) throw ConfigError("line " + std::to_string(number) + ": duplicate key '" + key + "'");
    file.values_[key] = value;
  }
  return file;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

std::string ConfigFile::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
  return it->second;
}

double ConfigFile::get_double(const std::string& key) const {
  const std::string v = get_string(key);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": '" + v + "' is not a number");
  return out;
}

std::uint64_t ConfigFile::get_uint(const std::string& key) const {
  const std::string v = get_string(key);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": '" + v + "' is not a non-negative integer");
  }
  return out;
}

bool ConfigFile::get_bool(const std::string& key) const {
  const std::string v = get_string(key);
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(key + ": '" + v + "' is not true or false");
}

std::vector<std::string> ConfigFile::get_list(const std::string& key) const {
  const std::string v = get_string(key);
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') throw ConfigError(key + ": expected [a, b, ...]");
  std::vector<std::string> out;
  const std::string body = trim(v.substr(1, v.size() - 2));
  if (body.empty()) return out;
  std::istringstream in(body);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError(key + ": empty list item");
    out.push_back(item);
  }
  return out;
}

std::string format_list(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + items[i];
  return out + "]";
}

namespace {

struct Field {
  const char* key;
  std::function<void(TrainConfig&, const ConfigFile&)> read;
  std::function<std::string(const TrainConfig&)> write;
};

template <typename T>
Field size_field(const char* key, T TrainConfig::*member) {
  return {key, [key, member](TrainConfig& c, const ConfigFile& f) { c.*member = static_cast<T>(f.get_uint(key)); },
          [member](const TrainConfig& c) { return std::to_string(c.*member); }};
}

Field double_field(const char* key, double TrainConfig::*member) {
  return {key, [key, member](TrainConfig& c, const ConfigFile& f) { c.*member = f.get_double(key); },
          [member](const TrainConfig& c) { return format_double(c.*member); }};
}

Field bool_field(const char* key, bool TrainConfig::*member) {
  return {key, [key, member](TrainConfig& c, const ConfigFile& f) { c.*member = f.get_bool(key); },
          [member](const TrainConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

Field string_field(const char* key, std::string TrainConfig::*member) {
  return {key, [key, member](TrainConfig& c, const ConfigFile& f) { c.*member = f.get_string(key); },
          [member](const TrainConfig& c) { return c.*member; }};
}

Field list_field(const char* key, std::vector<std::string> TrainConfig::*member) {
  return {key, [key, member](TrainConfig& c, const ConfigFile& f) { c.*member = f.get_list(key); },
          [member](const TrainConfig& c) { return format_list(c.*member); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      size_field("seed", &TrainConfig::seed),
      double_field("alpha", &TrainConfig::alpha),
      double_field("mask_prob", &TrainConfig::mask_prob),
      bool_field("mask_terminal_sep", &TrainConfig::mask_terminal_sep),
      list_field("mga_groups", &TrainConfig::mga_groups),
      list_field("mgc_groups", &TrainConfig::mgc_groups),
      string_field("fusion", &TrainConfig::fusion),
      string_field("alignment", &TrainConfig::alignment),
      bool_field("share_weights", &TrainConfig::share_weights),
      double_field("learning_rate", &TrainConfig::learning_rate),
      size_field("warmup_steps", &TrainConfig::warmup_steps),
      size_field("total_steps", &TrainConfig::total_steps),
      size_field("batch_size", &TrainConfig::batch_size),
      double_field("clip_norm", &TrainConfig::clip_norm),
      double_field("adam_beta1", &TrainConfig::adam_beta1),
      double_field("adam_beta2", &TrainConfig::adam_beta2),
      double_field("adam_eps", &TrainConfig::adam_eps),
      size_field("hidden", &TrainConfig::hidden),
      size_field("layers", &TrainConfig::layers),
      size_field("heads", &TrainConfig::heads),
      size_field("ffn_multiple", &TrainConfig::ffn_multiple),
      size_field("text_length", &TrainConfig::text_length),
      size_field("common", &TrainConfig::common),
      double_field("temperature", &TrainConfig::temperature),
      list_field("datasets", &TrainConfig::datasets),
      size_field("vision_events", &TrainConfig::vision_events),
      size_field("audio_events", &TrainConfig::audio_events),
      size_field("frame_size", &TrainConfig::frame_size),
      size_field("channels", &TrainConfig::channels),
      size_field("patch", &TrainConfig::patch),
      size_field("mel_bins", &TrainConfig::mel_bins),
      size_field("time_frames", &TrainConfig::time_frames),
      size_field("patch_mel", &TrainConfig::patch_mel),
      size_field("patch_time", &TrainConfig::patch_time),
      double_field("noise", &TrainConfig::noise),
      size_field("render_frames", &TrainConfig::render_frames),
      size_field("render_clips", &TrainConfig::render_clips),
      size_field("frames_per_example", &TrainConfig::frames_per_example),
      size_field("clips_per_example", &TrainConfig::clips_per_example),
      size_field("train_pool", &TrainConfig::train_pool),
      size_field("eval_interval", &TrainConfig::eval_interval),
      size_field("eval_splits", &TrainConfig::eval_splits),
      list_field("eval_groups", &TrainConfig::eval_groups),
      size_field("beam_size", &TrainConfig::beam_size),
      bool_field("length_normalize", &TrainConfig::length_normalize),
      size_field("generation_length", &TrainConfig::generation_length),
      double_field("dual_softmax_temperature", &TrainConfig::dual_softmax_temperature),
      string_field("finetune_task", &TrainConfig::finetune_task),
      string_field("finetune_group", &TrainConfig::finetune_group),
      size_field("finetune_steps", &TrainConfig::finetune_steps),
      double_field("finetune_learning_rate", &TrainConfig::finetune_learning_rate),
      size_field("finetune_warmup", &TrainConfig::finetune_warmup),
      list_field("ablation", &TrainConfig::ablation),
      list_field("ablation_benchmarks", &TrainConfig::ablation_benchmarks),
      size_field("ablation_finetune_steps", &TrainConfig::ablation_finetune_steps),
  };
  return all;
}

}  // namespace

TrainConfig TrainConfig::from_file(const ConfigFile& file) {
  for (const auto& [key, value] : file.values()) {
    bool known = false;
    for (const auto& f : fields()) known = known || key == f.key;
    if (!known) throw ConfigError("unknown config key '" + key + "'");
  }
  TrainConfig c;
  for (const auto& f : fields()) {
    if (file.has(f.key)) f.read(c, file);
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) { return from_file(ConfigFile::load(path)); }

TrainConfig TrainConfig::parse(const std::string& text) { return from_file(ConfigFile::parse(text)); }

ConfigFile TrainConfig::to_file() const {
  ConfigFile file;
  for (const auto& f : fields()) file.set(f.key, f.write(*this));
  return file;
}

std::string TrainConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.write(*this) + "\n";
  return out;
}

void TrainConfig::validate() const {
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be non-negative");
  if (!(mask_prob > 0.0 && mask_prob < 1.0)) throw ConfigError("mask_prob must lie in (0, 1)");
  if (total_steps <= warmup_steps) throw ConfigError("total_steps must exceed warmup_steps");
  if (finetune_steps > 0 && finetune_steps <= finetune_warmup) {
    throw ConfigError("finetune_steps must exceed finetune_warmup");
  }
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (!(learning_rate > 0.0) || !(finetune_learning_rate > 0.0)) throw ConfigError("learning rates must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0)) {
    throw ConfigError("Adam coefficients out of range");
  }
  if (mga_groups.empty() && mgc_groups.empty()) throw ConfigError("at least one of mga_groups / mgc_groups is required");
  if (eval_splits == 0) throw ConfigError("eval_splits must be at least 1");
  if (beam_size == 0) throw ConfigError("beam_size must be at least 1");
  if (generation_length == 0) throw ConfigError("generation_length must be at least 1");
  if (!(dual_softmax_temperature > 0.0)) throw ConfigError("dual_softmax_temperature must be positive");
  if (finetune_task != "retrieval" && finetune_task != "caption" && finetune_task != "qa") {
    throw ConfigError("finetune_task must be retrieval, caption or qa");
  }
  ModalityGroup::parse_list(mga_groups);
  ModalityGroup::parse_list(mgc_groups);
  ModalityGroup::parse_list(eval_groups);
  ModalityGroup::parse(finetune_group);
  parse_fusion_variant(fusion);
  AlignmentVariant::parse(alignment);
  model_config().validate();
  synth_config().validate();
  dataset_spec().validate();
  if (frames_per_example == 0 || frames_per_example > render_frames) {
    throw ConfigError("frames_per_example must lie in [1, render_frames]");
  }
  if (clips_per_example == 0 || clips_per_example > render_clips) {
    throw ConfigError("clips_per_example must lie in [1, render_clips]");
  }
}

ModelConfig TrainConfig::model_config() const {
  TransformerConfig t;
  t.hidden = hidden;
  t.layers = layers;
  t.heads = heads;
  t.ffn_multiple = ffn_multiple;
  ModelConfig m;
  m.text.transformer = t;
  m.text.vocab_size = synthetic_vocabulary().size();
  m.text.max_length = text_length;
  m.vision.transformer = t;
  m.vision.height = frame_size;
  m.vision.width = frame_size;
  m.vision.channels = channels;
  m.vision.patch = patch;
  m.audio.transformer = t;
  m.audio.mel_bins = mel_bins;
  m.audio.time_frames = time_frames;
  m.audio.patch_mel = patch_mel;
  m.audio.patch_time = patch_time;
  m.alignment.common = common;
  m.alignment.initial_temperature = temperature;
  m.fusion = parse_fusion_variant(fusion);
  m.share_weights = share_weights;
  return m;
}

SynthConfig TrainConfig::synth_config() const {
  SynthConfig s;
  s.vision_events = vision_events;
  s.audio_events = audio_events;
  s.height = frame_size;
  s.width = frame_size;
  s.channels = channels;
  s.frames = render_frames;
  s.clips = render_clips;
  s.mel_bins = mel_bins;
  s.time_frames = time_frames;
  s.noise = noise;
  return s;
}

BatchOptions TrainConfig::batch_options() const {
  BatchOptions o;
  o.frames_per_example = frames_per_example;
  o.clips_per_example = clips_per_example;
  o.max_text_length = text_length;
  return o;
}

ObjectiveConfig TrainConfig::objective() const {
  ObjectiveConfig o;
  o.alpha = alpha;
  o.mga_groups = ModalityGroup::parse_list(mga_groups);
  o.mgc_groups = ModalityGroup::parse_list(mgc_groups);
  o.alignment = AlignmentVariant::parse(alignment);
  o.mask.probability = mask_prob;
  o.mask.include_terminal_sep = mask_terminal_sep;
  return o;
}

DatasetSpec TrainConfig::dataset_spec() const { return DatasetSpec::parse(datasets); }

}  // namespace triad
