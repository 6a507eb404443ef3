// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0

#include "triad/data.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "triad/error.hpp"

namespace triad {

namespace {

static_assert(std::endian::native == std::endian::little, "blob IO assumes a little-endian host");

constexpr double kPalette[8][3] = {{1.0, 0.0, 0.0}, {0.0, 0.0, 1.0}, {0.0, 1.0, 0.0}, {1.0, 1.0, 0.0},
                                   {1.0, 1.0, 1.0}, {0.3, 0.3, 0.3}, {1.0, 0.5, 0.0}, {0.5, 0.0, 0.5}};

std::vector<std::string> words_of(const std::string& text) { return split_words(normalize_text(text)); }

}  // namespace

void SynthConfig::validate() const {
  if (vision_events < 2 || audio_events < 2) throw ConfigError("synthetic data needs at least 2 vision and 2 audio events");
  if (vision_events > vision_phrases().size() || audio_events > audio_phrases().size()) {
    throw ConfigError("synthetic data supports at most " + std::to_string(vision_phrases().size()) + " events per modality");
  }
  if (height == 0 || width == 0 || channels == 0 || frames == 0 || clips == 0 || mel_bins == 0 || time_frames == 0) {
    throw ConfigError("synthetic geometry must be positive");
  }
  const std::size_t rows = (vision_events + 1) / 2;
  if (height < rows || width < 2) throw ConfigError("frames are too small for the vision event layout");
  if (audio_events > mel_bins) throw ConfigError("audio events cannot exceed mel bins");
  if (noise < 0.0) throw ConfigError("noise must be non-negative");
}

const std::vector<std::string>& vision_phrases() {
  static const std::vector<std::string> kPhrases = {"red ball",   "blue car",  "green tree",  "yellow bird",
                                                    "white boat", "black dog", "orange kite", "purple train"};
  return kPhrases;
}

const std::vector<std::string>& audio_phrases() {
  static const std::vector<std::string> kPhrases = {"siren wailing", "bell ringing",    "engine humming", "people talking",
                                                    "music playing", "water splashing", "wind blowing",   "drum beating"};
  return kPhrases;
}

std::string compose_caption(std::size_t vision_event, std::size_t audio_event, bool has_audio) {
  std::string s = "a " + vision_phrases().at(vision_event) + " appears";
  if (has_audio) s += " and " + audio_phrases().at(audio_event) + " can be heard";
  return s;
}

std::vector<QaPair> qa_pairs(std::size_t vision_event, std::size_t audio_event, bool has_audio) {
  std::vector<QaPair> out{{"what is seen", vision_phrases().at(vision_event)}};
  if (has_audio) out.push_back({"what is heard", audio_phrases().at(audio_event)});
  return out;
}

Vocabulary synthetic_vocabulary() {
  std::vector<std::string> words = {"a", "appears", "and", "can", "be", "heard", "what", "is", "seen"};
  for (const auto* list : {&vision_phrases(), &audio_phrases()}) {
    for (const auto& p : *list) {
      for (auto& w : words_of(p)) words.push_back(w);
    }
  }
  return Vocabulary(words);
}

Tensor render_frames(const SynthConfig& config, std::size_t vision_event, Rng& rng) {
  if (vision_event >= config.vision_events) throw IndexError("vision event " + std::to_string(vision_event) + " out of range");
  const std::size_t h = config.height, w = config.width, ch = config.channels;
  const std::size_t rows = (config.vision_events + 1) / 2;
  const std::size_t region_h = h / rows, region_w = w / 2;
  const std::size_t r0 = (vision_event / 2) * region_h, c0 = (vision_event % 2) * region_w;
  std::normal_distribution<double> noise(0.0, config.noise);
  std::vector<double> data(config.frames * h * w * ch, 0.0);
  for (std::size_t f = 0; f < config.frames; ++f) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const bool inside = y >= r0 && y < r0 + region_h && x >= c0 && x < c0 + region_w;
        for (std::size_t c = 0; c < ch; ++c) {
          const double motif = inside ? config.motif_amplitude * kPalette[vision_event % 8][c % 3] : 0.0;
          data[((f * h + y) * w + x) * ch + c] = motif + (config.noise > 0.0 ? noise(rng) : 0.0);
        }
      }
    }
  }
  return Tensor({config.frames, h, w, ch}, std::move(data));
}

Tensor render_spectrograms(const SynthConfig& config, std::size_t audio_event, Rng& rng) {
  if (audio_event >= config.audio_events) throw IndexError("audio event " + std::to_string(audio_event) + " out of range");
  const std::size_t m = config.mel_bins, t = config.time_frames;
  const std::size_t band_lo = audio_event * m / config.audio_events;
  const std::size_t band_hi = (audio_event + 1) * m / config.audio_events;
  std::normal_distribution<double> noise(0.0, config.noise);
  std::vector<double> data(config.clips * m * t, 0.0);
  for (std::size_t c = 0; c < config.clips; ++c) {
    for (std::size_t b = 0; b < m; ++b) {
      for (std::size_t k = 0; k < t; ++k) {
        const double motif = (b >= band_lo && b < band_hi) ? config.motif_amplitude : 0.0;
        data[(c * m + b) * t + k] = motif + (config.noise > 0.0 ? noise(rng) : 0.0);
      }
    }
  }
  return Tensor({config.clips, m, t}, std::move(data));
}

TriModalExample make_example(const SynthConfig& config, std::size_t vision_event, std::size_t audio_event,
                             bool has_audio, Rng& rng) {
  config.validate();
  TriModalExample e;
  e.vision_event = vision_event;
  e.audio_event = audio_event;
  e.has_audio = has_audio;
  e.caption = compose_caption(vision_event, audio_event, has_audio);
  e.frames = render_frames(config, vision_event, rng);
  if (has_audio) e.spectrograms = render_spectrograms(config, audio_event, rng);
  return e;
}

TriModalExample generate_example(const SynthConfig& config, Rng& rng, bool has_audio) {
  config.validate();
  std::uniform_int_distribution<std::size_t> pick_v(0, config.vision_events - 1);
  std::uniform_int_distribution<std::size_t> pick_a(0, config.audio_events - 1);
  const std::size_t v = pick_v(rng);
  const std::size_t a = pick_a(rng);
  return make_example(config, v, a, has_audio, rng);
}

std::vector<TriModalExample> all_combinations(const SynthConfig& config, Rng& rng) {
  std::vector<TriModalExample> out;
  for (std::size_t v = 0; v < config.vision_events; ++v) {
    for (std::size_t a = 0; a < config.audio_events; ++a) out.push_back(make_example(config, v, a, true, rng));
  }
  return out;
}

void DatasetSpec::validate() const {
  if (datasets.empty()) throw ConfigError("dataset spec needs at least one dataset");
  for (const auto& d : datasets) {
    if (!(d.weight > 0.0)) throw ConfigError("dataset '" + d.name + "' must have a positive weight");
  }
}

DatasetSpec DatasetSpec::parse(const std::vector<std::string>& entries) {
  DatasetSpec spec;
  for (const auto& e : entries) {
    const auto first = e.find(':');
    const auto second = first == std::string::npos ? std::string::npos : e.find(':', first + 1);
    if (second == std::string::npos) throw ConfigError("dataset entry '" + e + "' is not name:weight:av|v");
    DatasetEntry d;
    d.name = e.substr(0, first);
    try {
      std::size_t used = 0;
      const std::string w = e.substr(first + 1, second - first - 1);
      d.weight = std::stod(w, &used);
      if (used != w.size()) throw ConfigError("bad weight");
    } catch (const std::exception&) {
      throw ConfigError("dataset entry '" + e + "' has a malformed weight");
    }
    const std::string kind = e.substr(second + 1);
    if (kind == "av") d.has_audio = true;
    else if (kind == "v") d.has_audio = false;
    else throw ConfigError("dataset entry '" + e + "' modality must be av or v");
    if (d.name.empty()) throw ConfigError("dataset entry '" + e + "' has an empty name");
    spec.datasets.push_back(d);
  }
  spec.validate();
  return spec;
}

std::vector<std::string> DatasetSpec::serialize() const {
  std::vector<std::string> out;
  for (const auto& d : datasets) {
    std::ostringstream s;
    s.precision(17);
    s << d.name << ':' << d.weight << ':' << (d.has_audio ? "av" : "v");
    out.push_back(s.str());
  }
  return out;
}

std::size_t DatasetSpec::sample(Rng& rng) const {
  validate();
  double total = 0.0;
  for (const auto& d : datasets) total += d.weight;
  std::uniform_real_distribution<double> u(0.0, total);
  const double r = u(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    acc += datasets[i].weight;
    if (r < acc) return i;
  }
  return datasets.size() - 1;
}

namespace {

std::vector<std::size_t> subsample(std::size_t available, std::size_t wanted, Rng& rng) {
  if (wanted == 0 || wanted > available) {
    throw ConfigError("cannot sample " + std::to_string(wanted) + " of " + std::to_string(available) + " frames/clips");
  }
  std::vector<std::size_t> idx(available);
  std::iota(idx.begin(), idx.end(), 0);
  if (wanted == available) return idx;
  for (std::size_t i = 0; i < wanted; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, available - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(wanted);
  std::sort(idx.begin(), idx.end());
  return idx;
}

void append_items(std::vector<double>& out, const Tensor& t, const std::vector<std::size_t>& items) {
  const std::size_t per = t.size() / t.dim(0);
  for (std::size_t i : items) {
    const auto d = t.data().subspan(i * per, per);
    out.insert(out.end(), d.begin(), d.end());
  }
}

}  // namespace

Batch assemble_batch(const std::vector<TriModalExample>& examples, const Vocabulary& vocab, const BatchOptions& options,
                     Rng& rng) {
  if (examples.empty()) throw ContractError("a batch needs at least one example");
  Batch b;
  b.has_audio = std::all_of(examples.begin(), examples.end(), [](const auto& e) { return e.has_audio; });
  std::vector<TokenizedText> rows;
  std::vector<double> frames, spectrograms;
  const Shape frame_shape = examples.front().frames.shape();
  Shape clip_shape;
  if (b.has_audio) clip_shape = examples.front().spectrograms.shape();
  for (const auto& e : examples) {
    if (e.frames.shape() != frame_shape) throw DimensionError("examples in a batch must share frame geometry");
    b.caption_text.push_back(e.caption);
    rows.push_back(tokenize(e.caption, vocab, options.max_text_length));
    b.vision_events.push_back(e.vision_event);
    b.audio_events.push_back(e.audio_event);
    append_items(frames, e.frames, subsample(e.frames.dim(0), options.frames_per_example, rng));
    if (b.has_audio) {
      if (e.spectrograms.shape() != clip_shape) throw DimensionError("examples in a batch must share clip geometry");
      append_items(spectrograms, e.spectrograms, subsample(e.spectrograms.dim(0), options.clips_per_example, rng));
    }
  }
  const std::size_t n = examples.size();
  b.captions = TokenBatch::from(rows);
  b.frames = Tensor({n, options.frames_per_example, frame_shape[1], frame_shape[2], frame_shape[3]}, std::move(frames));
  if (b.has_audio) {
    b.spectrograms = Tensor({n, options.clips_per_example, clip_shape[1], clip_shape[2]}, std::move(spectrograms));
  }
  return b;
}

Batch build_batch(const DatasetSpec& spec, const SynthConfig& synth, const Vocabulary& vocab,
                  const BatchOptions& options, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ContractError("batch size must be at least 1");
  const auto& d = spec.datasets[spec.sample(rng)];
  std::vector<TriModalExample> examples;
  for (std::size_t i = 0; i < batch_size; ++i) examples.push_back(generate_example(synth, rng, d.has_audio));
  Batch b = assemble_batch(examples, vocab, options, rng);
  b.dataset = d.name;
  return b;
}

Batch build_batch_from_pool(const DatasetSpec& spec, const std::vector<TriModalExample>& pool, const Vocabulary& vocab,
                            const BatchOptions& options, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ContractError("batch size must be at least 1");
  if (pool.empty()) throw ContractError("example pool is empty");
  const auto& d = spec.datasets[spec.sample(rng)];
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::vector<TriModalExample> examples;
  for (std::size_t i = 0; i < batch_size; ++i) {
    TriModalExample e = pool[pick(rng)];
    if (!d.has_audio && e.has_audio) {
      e.has_audio = false;
      e.spectrograms = Tensor();
      e.caption = compose_caption(e.vision_event, e.audio_event, false);
    }
    examples.push_back(std::move(e));
  }
  Batch b = assemble_batch(examples, vocab, options, rng);
  b.dataset = d.name;
  return b;
}

void write_tensor_blob(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write blob " + path.string());
  const auto rank = static_cast<std::uint32_t>(t.rank());
  out.write(reinterpret_cast<const char*>(&rank), sizeof(rank));
  for (std::size_t d : t.shape()) {
    const auto e = static_cast<std::uint64_t>(d);
    out.write(reinterpret_cast<const char*>(&e), sizeof(e));
  }
  out.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!out) throw InputError("failed writing blob " + path.string());
}

Tensor read_tensor_blob(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open blob " + path.string());
  std::uint32_t rank = 0;
  if (!in.read(reinterpret_cast<char*>(&rank), sizeof(rank)) || rank > 8) {
    throw InputError("blob " + path.string() + " has a bad header");
  }
  Shape shape(rank);
  for (auto& d : shape) {
    std::uint64_t e = 0;
    if (!in.read(reinterpret_cast<char*>(&e), sizeof(e)) || e == 0 || e > (1ull << 32)) {
      throw InputError("blob " + path.string() + " has a bad extent");
    }
    d = static_cast<std::size_t>(e);
  }
  std::vector<double> data(numel(shape));
  if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)))) {
    throw InputError("blob " + path.string() + " is truncated");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw InputError("blob " + path.string() + " has trailing bytes");
  return Tensor(std::move(shape), std::move(data));
}

void write_dataset(const std::filesystem::path& dir, const std::vector<TriModalExample>& examples) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw InputError("cannot write manifest in " + dir.string());
  manifest << "# id vision_event audio_event has_audio caption\n";
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& e = examples[i];
    manifest << i << ' ' << e.vision_event << ' ' << e.audio_event << ' ' << (e.has_audio ? 1 : 0) << ' ' << e.caption
             << '\n';
    write_tensor_blob(dir / (std::to_string(i) + ".frames.bin"), e.frames);
    if (e.has_audio) write_tensor_blob(dir / (std::to_string(i) + ".audio.bin"), e.spectrograms);
  }
}

std::vector<TriModalExample> read_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw InputError("no manifest.txt in " + dir.string());
  std::vector<TriModalExample> out;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream in(line);
    std::size_t id = 0;
    int audio = 0;
    TriModalExample e;
    if (!(in >> id >> e.vision_event >> e.audio_event >> audio)) throw InputError("malformed manifest line: " + line);
    e.has_audio = audio != 0;
    std::getline(in >> std::ws, e.caption);
    e.frames = read_tensor_blob(dir / (std::to_string(id) + ".frames.bin"));
    if (e.has_audio) e.spectrograms = read_tensor_blob(dir / (std::to_string(id) + ".audio.bin"));
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::size_t count_phrase(const std::vector<std::string>& words, const std::vector<std::string>& phrase) {
  if (phrase.empty() || phrase.size() > words.size()) return 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i + phrase.size() <= words.size(); ++i) {
    if (std::equal(phrase.begin(), phrase.end(), words.begin() + static_cast<std::ptrdiff_t>(i))) ++count;
  }
  return count;
}

namespace {

std::vector<std::vector<std::string>> preprocess_ontology(const std::vector<std::string>& ontology) {
  std::vector<std::vector<std::string>> phrases;
  for (const auto& p : ontology) {
    auto w = words_of(p);
    if (w.empty()) throw ContractError("ontology phrase '" + p + "' is empty after preprocessing");
    if (std::find(phrases.begin(), phrases.end(), w) != phrases.end()) {
      throw ContractError("ontology phrase '" + p + "' is duplicated");
    }
    phrases.push_back(std::move(w));
  }
  return phrases;
}

}  // namespace

AcdResult acd(const std::vector<std::string>& corpus, const std::vector<std::string>& ontology) {
  if (ontology.empty()) throw ContractError("concept ontology is empty");
  if (corpus.empty()) throw ContractError("caption corpus is empty");
  const auto phrases = preprocess_ontology(ontology);
  AcdResult r;
  for (const auto& caption : corpus) {
    const auto words = words_of(caption);
    r.words += words.size();
    for (const auto& p : phrases) r.concepts += count_phrase(words, p);
  }
  r.density = r.words == 0 ? 0.0 : static_cast<double>(r.concepts) / static_cast<double>(r.words);
  return r;
}

CorpusStats corpus_stats(const std::vector<std::string>& corpus, const std::vector<std::string>& ontology) {
  if (corpus.empty()) throw ContractError("caption corpus is empty");
  const auto phrases = ontology.empty() ? std::vector<std::vector<std::string>>{} : preprocess_ontology(ontology);
  CorpusStats s;
  s.captions = corpus.size();
  std::size_t words_total = 0;
  for (const auto& p : ontology) s.phrase_counts[normalize_text(p)] = 0;
  for (const auto& caption : corpus) {
    const auto words = words_of(caption);
    words_total += words.size();
    for (std::size_t i = 0; i < phrases.size(); ++i) s.phrase_counts[normalize_text(ontology[i])] += count_phrase(words, phrases[i]);
  }
  s.average_length = static_cast<double>(words_total) / static_cast<double>(corpus.size());
  return s;
}

}  // namespace triad
