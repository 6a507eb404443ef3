// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "triad/data.hpp"
#include "triad/error.hpp"

namespace triad {
namespace {

namespace fs = std::filesystem;

const fs::path kFixtures = TRIAD_FIXTURE_DIR;

SynthConfig quiet() {
  SynthConfig c;
  c.noise = 0.0;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("triad_data_" + name);
  fs::remove_all(p);
  return p;
}

TEST(Synth, CaptionsAndQa) {
  EXPECT_EQ(compose_caption(0, 2, true), "a red ball appears and engine humming can be heard");
  EXPECT_EQ(compose_caption(5, 2, false), "a black dog appears");
  EXPECT_EQ(qa_pairs(1, 3, false).size(), 1u);
  const auto qa = qa_pairs(1, 3, true);
  ASSERT_EQ(qa.size(), 2u);
  EXPECT_EQ(qa[1].answer, "people talking");
  const Vocabulary v = synthetic_vocabulary();
  for (std::size_t a = 0; a < 8; ++a) {
    for (std::size_t b = 0; b < 8; ++b) {
      for (const auto& w : split_words(compose_caption(a, b, true))) EXPECT_TRUE(v.contains(w)) << w;
    }
  }
}

TEST(Synth, RenderingIsEventSpecific) {
  const SynthConfig c = quiet();
  Rng rng(1);
  const Tensor f0 = render_frames(c, 0, rng), f3 = render_frames(c, 3, rng);
  EXPECT_EQ(f0.shape(), (Shape{1, 16, 16, 3}));
  double diff = 0.0;
  for (std::size_t i = 0; i < f0.size(); ++i) diff += std::abs(f0.at(i) - f3.at(i));
  EXPECT_GT(diff, 0.0);
  // Audio event k lights exactly mel band k when events equal bins.
  const Tensor s = render_spectrograms(c, 5, rng);
  EXPECT_EQ(s.shape(), (Shape{1, 8, 16}));
  for (std::size_t b = 0; b < 8; ++b) EXPECT_EQ(s.at(b * 16), b == 5 ? 1.0 : 0.0);
  EXPECT_THROW(render_frames(c, 8, rng), IndexError);
  EXPECT_THROW(render_spectrograms(c, 8, rng), IndexError);
}

TEST(Synth, ZeroNoiseRendersAreLabelDetermined) {
  const SynthConfig c = quiet();
  Rng a(1), b(2);
  for (std::size_t k = 0; k < 8; ++k) {
    const Tensor f = render_frames(c, k, a), g = render_frames(c, k, b);
    for (std::size_t i = 0; i < f.size(); ++i) ASSERT_EQ(f.at(i), g.at(i));
    const Tensor s = render_spectrograms(c, k, a), t = render_spectrograms(c, k, b);
    for (std::size_t i = 0; i < s.size(); ++i) ASSERT_EQ(s.at(i), t.at(i));
  }
}

TEST(Synth, CaptionsAreDistinctAsBagsOfWords) {
  std::set<std::string> captions;
  std::set<std::multiset<std::string>> bags;
  for (std::size_t a = 0; a < 8; ++a) {
    for (std::size_t b = 0; b < 8; ++b) {
      const std::string caption = compose_caption(a, b, true);
      captions.insert(caption);
      const auto words = split_words(caption);
      bags.insert(std::multiset<std::string>(words.begin(), words.end()));
    }
  }
  EXPECT_EQ(captions.size(), 64u);
  EXPECT_EQ(bags.size(), 64u);
}

TEST(Synth, ConfigValidation) {
  SynthConfig c;
  c.audio_events = 9;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SynthConfig{};
  c.noise = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SynthConfig{};
  c.vision_events = 1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Synth, DeterministicGivenSeed) {
  Rng a(7), b(7);
  const auto x = generate_example(SynthConfig{}, a), y = generate_example(SynthConfig{}, b);
  EXPECT_EQ(x.caption, y.caption);
  for (std::size_t i = 0; i < x.frames.size(); ++i) ASSERT_EQ(x.frames.at(i), y.frames.at(i));
}

TEST(Synth, AllCombinationsRowMajor) {
  Rng rng(2);
  const auto all = all_combinations(quiet(), rng);
  ASSERT_EQ(all.size(), 64u);
  EXPECT_EQ(all[9].vision_event, 1u);
  EXPECT_EQ(all[9].audio_event, 1u);
  EXPECT_EQ(all[63].caption, compose_caption(7, 7, true));
}

TEST(DatasetSpec, ParseSerializeAndErrors) {
  const auto spec = DatasetSpec::parse({"web:3:av", "captions:1.5:v"});
  ASSERT_EQ(spec.datasets.size(), 2u);
  EXPECT_FALSE(spec.datasets[1].has_audio);
  EXPECT_EQ(DatasetSpec::parse(spec.serialize()).datasets[1].weight, 1.5);
  EXPECT_THROW(DatasetSpec::parse({"web:3"}), ConfigError);
  EXPECT_THROW(DatasetSpec::parse({"web:x:av"}), ConfigError);
  EXPECT_THROW(DatasetSpec::parse({"web:1:va"}), ConfigError);
  EXPECT_THROW(DatasetSpec::parse({":1:av"}), ConfigError);
  EXPECT_THROW(DatasetSpec::parse({"web:0:av"}).validate(), ConfigError);
  EXPECT_THROW(DatasetSpec{}.validate(), ConfigError);
}

TEST(DatasetSpec, SamplesByWeight) {
  const auto spec = DatasetSpec::parse({"a:3:av", "b:1:v"});
  Rng rng(3);
  std::size_t first = 0;
  const std::size_t n = 20000;
  for (std::size_t i = 0; i < n; ++i) first += spec.sample(rng) == 0;
  EXPECT_NEAR(static_cast<double>(first) / n, 0.75, 0.02);
}

TEST(DatasetSpec, SingleDatasetAlwaysSampled) {
  const auto spec = DatasetSpec::parse({"a:2.5:av"});
  Rng rng(8);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(spec.sample(rng), 0u);
}

TEST(Batches, AssembleSubsamplesInOrder) {
  SynthConfig c = quiet();
  c.frames = 4;
  c.clips = 3;
  Rng rng(4);
  std::vector<TriModalExample> ex{generate_example(c, rng), generate_example(c, rng)};
  // Tag every frame with its index so the subsample is observable.
  auto frames = ex[0].frames.mutable_data();
  for (std::size_t f = 0; f < 4; ++f) frames[f * 16 * 16 * 3] = 100.0 + static_cast<double>(f);
  BatchOptions opts;
  opts.frames_per_example = 2;
  opts.clips_per_example = 3;
  const Batch b = assemble_batch(ex, synthetic_vocabulary(), opts, rng);
  EXPECT_EQ(b.frames.shape(), (Shape{2, 2, 16, 16, 3}));
  EXPECT_EQ(b.spectrograms.shape(), (Shape{2, 3, 8, 16}));
  EXPECT_LT(b.frames.at(0), b.frames.at(16 * 16 * 3));
  opts.frames_per_example = 5;
  EXPECT_THROW(assemble_batch(ex, synthetic_vocabulary(), opts, rng), ConfigError);
}

TEST(Batches, VisionOnlyDatasetDropsAudio) {
  const auto spec = DatasetSpec::parse({"captions:1:v"});
  Rng rng(5);
  const Batch b = build_batch(spec, SynthConfig{}, synthetic_vocabulary(), BatchOptions{}, 4, rng);
  EXPECT_FALSE(b.has_audio);
  EXPECT_FALSE(b.spectrograms.defined());
  for (const auto& caption : b.caption_text) EXPECT_EQ(caption.find("heard"), std::string::npos);

  std::vector<TriModalExample> pool{generate_example(SynthConfig{}, rng)};
  const Batch p = build_batch_from_pool(spec, pool, synthetic_vocabulary(), BatchOptions{}, 3, rng);
  EXPECT_FALSE(p.has_audio);
  EXPECT_EQ(p.caption_text[0], compose_caption(pool[0].vision_event, 0, false));
}

TEST(Persistence, DatasetRoundTrip) {
  const fs::path dir = scratch("roundtrip");
  Rng rng(6);
  std::vector<TriModalExample> ex{generate_example(SynthConfig{}, rng), generate_example(SynthConfig{}, rng, false)};
  write_dataset(dir, ex);
  const auto back = read_dataset(dir);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].caption, ex[0].caption);
  EXPECT_FALSE(back[1].has_audio);
  for (std::size_t i = 0; i < ex[0].spectrograms.size(); ++i) ASSERT_EQ(back[0].spectrograms.at(i), ex[0].spectrograms.at(i));
  fs::remove_all(dir);
}

TEST(Persistence, BlobErrors) {
  const fs::path dir = scratch("blob");
  fs::create_directories(dir);
  const fs::path p = dir / "t.bin";
  write_tensor_blob(p, Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(read_tensor_blob(p).shape(), (Shape{2, 3}));
  fs::resize_file(p, fs::file_size(p) - 4);
  EXPECT_THROW(read_tensor_blob(p), InputError);
  std::ofstream(p, std::ios::app) << "0123456789abcdef";
  EXPECT_THROW(read_tensor_blob(p), InputError);
  EXPECT_THROW(read_tensor_blob(dir / "missing.bin"), InputError);
  EXPECT_THROW(read_dataset(dir), InputError);
  fs::remove_all(dir);
}

TEST(Acd, FixtureMatchesHandTally) {
  const auto r = acd(read_lines(kFixtures / "acd_captions.txt"), read_lines(kFixtures / "acd_ontology.txt"));
  EXPECT_EQ(r.concepts, 22u);
  EXPECT_EQ(r.words, 92u);
  EXPECT_DOUBLE_EQ(r.density, 22.0 / 92.0);
}

TEST(Acd, TrivialCorpora) {
  EXPECT_EQ(acd({"nothing to see"}, {"dog"}).density, 0.0);
  EXPECT_EQ(acd({"a dog barks loudly"}, {"barks"}).density, 0.25);
  EXPECT_EQ(acd({"Dog! dog? DOG."}, {"dog"}).concepts, 3u);
  EXPECT_THROW(acd({}, {"dog"}), ContractError);
  EXPECT_THROW(acd({"dog"}, {}), ContractError);
  EXPECT_THROW(acd({"dog"}, {"dog", "Dog"}), ContractError);
  EXPECT_THROW(acd({"dog"}, {"!!"}), ContractError);
}

TEST(Acd, PhraseMatchingIsWholeWord) {
  const std::vector<std::string> words{"the", "dog", "dog", "barking", "dogs"};
  EXPECT_EQ(count_phrase(words, {"dog"}), 2u);
  EXPECT_EQ(count_phrase(words, {"dog", "barking"}), 1u);
  EXPECT_EQ(count_phrase(words, {"dog", "dog", "dog"}), 0u);
  const std::vector<std::string> repeated{"la", "la", "la"};
  EXPECT_EQ(count_phrase(repeated, {"la", "la"}), 2u);
}

TEST(CorpusStats, CountsAndLength) {
  const auto s = corpus_stats({"A dog.", "a dog and a dog"}, {"Dog"});
  EXPECT_EQ(s.captions, 2u);
  EXPECT_DOUBLE_EQ(s.average_length, 3.5);
  EXPECT_EQ(s.phrase_counts.at("dog"), 3u);
}


TEST(CorpusStats, AverageLengthCases) {
  EXPECT_DOUBLE_EQ(corpus_stats({"one two three", "one two three four five"}, {"two"}).average_length, 4.0);
  const auto single = corpus_stats({"a dog barks"}, {"dog"});
  EXPECT_EQ(single.captions, 1u);
  EXPECT_DOUBLE_EQ(single.average_length, 3.0);
  std::vector<std::string> synthetic;
  for (std::size_t a = 0; a < 8; ++a) {
    for (std::size_t b = 0; b < 8; ++b) synthetic.push_back(compose_caption(a, b, true));
  }
  EXPECT_DOUBLE_EQ(corpus_stats(synthetic, {"appears"}).average_length, 10.0);
}

}  // namespace
}  // namespace triad
