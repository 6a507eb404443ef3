// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic correlated vision/audio/text data, batch assembly with weighted
// dataset sampling, dataset persistence and caption corpus statistics.

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "triad/encoders.hpp"
#include "triad/layers.hpp"

namespace triad {

/// Geometry and difficulty of the synthetic generator.
///
/// Vision event k draws a colored rectangle in an event-indexed region of every
/// frame; audio event k puts energy in an event-indexed mel band of every clip.
struct SynthConfig {
  std::size_t vision_events = 8;
  std::size_t audio_events = 8;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 3;
  std::size_t frames = 1;  // frames rendered per example
  std::size_t clips = 1;   // clips rendered per example
  std::size_t mel_bins = 8;
  std::size_t time_frames = 16;
  double motif_amplitude = 1.0;
  double noise = 0.3;  // stddev of additive Gaussian noise

  void validate() const;
};

// Fixed phrase lists; event k uses entry k.
const std::vector<std::string>& vision_phrases();
const std::vector<std::string>& audio_phrases();

// "a <vision> appears and <audio> can be heard", or "a <vision> appears" without audio.
std::string compose_caption(std::size_t vision_event, std::size_t audio_event, bool has_audio);

struct QaPair {
  std::string question;
  std::string answer;
};

// "what is seen" -> vision phrase; "what is heard" -> audio phrase (audio only when present).
std::vector<QaPair> qa_pairs(std::size_t vision_event, std::size_t audio_event, bool has_audio);

/// Every word the grammar and the QA templates can emit, after the specials.
Vocabulary synthetic_vocabulary();

struct TriModalExample {
  std::string caption;
  std::size_t vision_event = 0;
  std::size_t audio_event = 0;
  bool has_audio = true;
  Tensor frames;        // [frames, H, W, ch]
  Tensor spectrograms;  // [clips, M, T]; undefined without audio
};

Tensor render_frames(const SynthConfig& config, std::size_t vision_event, Rng& rng);
Tensor render_spectrograms(const SynthConfig& config, std::size_t audio_event, Rng& rng);

TriModalExample make_example(const SynthConfig& config, std::size_t vision_event, std::size_t audio_event,
                             bool has_audio, Rng& rng);
// Draws both events uniformly and independently.
TriModalExample generate_example(const SynthConfig& config, Rng& rng, bool has_audio = true);

/// One example per (vision, audio) event pair, in row-major event order.
std::vector<TriModalExample> all_combinations(const SynthConfig& config, Rng& rng);

struct DatasetEntry {
  std::string name;
  double weight = 1.0;
  bool has_audio = true;
};

struct DatasetSpec {
  std::vector<DatasetEntry> datasets;

  void validate() const;
  // "name:weight:av" or "name:weight:v" entries.
  static DatasetSpec parse(const std::vector<std::string>& entries);
  std::vector<std::string> serialize() const;
  std::size_t sample(Rng& rng) const;
};

struct Batch {
  std::string dataset;
  bool has_audio = true;
  TokenBatch captions;
  Tensor frames;        // [B, N_v, H, W, ch]
  Tensor spectrograms;  // [B, N_a, M, T]; undefined without audio
  std::vector<std::size_t> vision_events;
  std::vector<std::size_t> audio_events;
  std::vector<std::string> caption_text;

  std::size_t size() const { return captions.batch; }
};

struct BatchOptions {
  std::size_t frames_per_example = 1;
  std::size_t clips_per_example = 1;
  std::size_t max_text_length = 16;
};

/// Stacks examples into a batch, subsampling frames and clips without
/// replacement (kept in temporal order). Audio is dropped when any example lacks it.
Batch assemble_batch(const std::vector<TriModalExample>& examples, const Vocabulary& vocab, const BatchOptions& options,
                     Rng& rng);

/// Picks a dataset by weight, then B fresh examples from the generator. A
/// dataset without audio yields captions and inputs without audio.
Batch build_batch(const DatasetSpec& spec, const SynthConfig& synth, const Vocabulary& vocab,
                  const BatchOptions& options, std::size_t batch_size, Rng& rng);

/// Same, drawing uniformly from a fixed pool instead of fresh examples.
Batch build_batch_from_pool(const DatasetSpec& spec, const std::vector<TriModalExample>& pool, const Vocabulary& vocab,
                            const BatchOptions& options, std::size_t batch_size, Rng& rng);

// Directory layout: manifest.txt plus <id>.frames.bin / <id>.audio.bin blobs.
void write_dataset(const std::filesystem::path& dir, const std::vector<TriModalExample>& examples);
std::vector<TriModalExample> read_dataset(const std::filesystem::path& dir);

// Blob: u32 rank, u64 extents, little-endian f64 payload.
void write_tensor_blob(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor_blob(const std::filesystem::path& path);

// Non-empty lines of a UTF-8 text file.
std::vector<std::string> read_lines(const std::filesystem::path& path);

struct AcdResult {
  std::size_t concepts = 0;
  std::size_t words = 0;
  double density = 0.0;
};

/// Concept phrase occurrences per word over a caption corpus. Captions and
/// phrases are lowercased and stripped of ASCII punctuation; a phrase matches a
/// contiguous run of whole words and every occurrence counts.
AcdResult acd(const std::vector<std::string>& corpus, const std::vector<std::string>& ontology);

// Occurrences of a preprocessed phrase (as words) in preprocessed caption words.
std::size_t count_phrase(const std::vector<std::string>& words, const std::vector<std::string>& phrase);

struct CorpusStats {
  std::size_t captions = 0;
  double average_length = 0.0;
  std::map<std::string, std::size_t> phrase_counts;  // per ontology phrase
};

CorpusStats corpus_stats(const std::vector<std::string>& corpus, const std::vector<std::string>& ontology = {});

}  // namespace triad
