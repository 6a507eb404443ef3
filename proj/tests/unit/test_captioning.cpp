// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "support/oracles.hpp"
#include "triad/captioning.hpp"
#include "triad/data.hpp"
#include "triad/error.hpp"
#include "triad/generation.hpp"

namespace triad {
namespace {

using testing::random_tensor;

constexpr FusionVariant kVariants[] = {FusionVariant::MergeAttention, FusionVariant::AudioVisualCross,
                                       FusionVariant::VisualAudioCross, FusionVariant::ParallelCross,
                                       FusionVariant::ConcatenateCross};

constexpr std::size_t kVocab = 64;

MultimodalDecoder make_decoder(FusionVariant variant, std::uint64_t seed = 3) {
  DecoderConfig cfg;
  cfg.transformer.hidden = 16;
  cfg.transformer.layers = 2;
  cfg.transformer.heads = 2;
  cfg.transformer.ffn_multiple = 2;
  cfg.vocab_size = kVocab;
  cfg.max_length = 12;
  cfg.variant = variant;
  cfg.share_with_text_encoder = false;
  Rng rng(seed);
  return MultimodalDecoder(cfg, 8, 8, nullptr, rng);
}

ConditionalFeatures make_conditions(const MultimodalDecoder& d, std::size_t batch, std::mt19937_64& gen) {
  return d.build_conditions(random_tensor({batch, 2, 3, 8}, gen), random_tensor({batch, 1, 4, 8}, gen));
}

TokenBatch caption_rows(std::size_t rows, std::size_t length, Rng& rng) {
  const Vocabulary v = synthetic_vocabulary();
  std::vector<TokenizedText> out;
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t a = rng() % 8, b = rng() % 8;
    out.push_back(tokenize(compose_caption(a, b, rng() % 2 == 0), v, length));
  }
  return TokenBatch::from(out);
}

TEST(MaskTokens, RateAndExclusions) {
  Rng rng(1);
  const TokenBatch tokens = caption_rows(2000, 16, rng);
  const MaskedBatch m = mask_tokens(tokens, MaskPolicy{}, rng);
  std::size_t eligible = 0;
  for (std::size_t b = 0; b < tokens.batch; ++b) {
    for (std::size_t i = 0; i < tokens.length; ++i) {
      const TokenId id = tokens.ids[b * tokens.length + i];
      const bool masked = m.input.ids[b * tokens.length + i] == Vocabulary::kMask;
      if (id == Vocabulary::kCls || id == Vocabulary::kPad || id == Vocabulary::kSep) {
        EXPECT_FALSE(masked);
      } else {
        ++eligible;
      }
    }
  }
  const double rate = static_cast<double>(m.positions.size()) / static_cast<double>(eligible);
  EXPECT_NEAR(rate, 0.6, 0.02);
  ASSERT_EQ(m.positions.size(), m.targets.size());
  for (std::size_t k = 0; k < m.positions.size(); ++k) EXPECT_EQ(tokens.ids[m.positions[k]], m.targets[k]);
  EXPECT_TRUE(std::is_sorted(m.positions.begin(), m.positions.end()));
}

TEST(MaskTokens, TerminalSepAndForcedMask) {
  const Vocabulary v = synthetic_vocabulary();
  const TokenBatch one = TokenBatch::single(tokenize("a", v, 6));
  MaskPolicy policy;
  policy.probability = 1e-9;
  policy.include_terminal_sep = true;
  bool saw_sep = false, saw_word = false;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(seed);
    const MaskedBatch m = mask_tokens(one, policy, rng);
    ASSERT_EQ(m.positions.size(), 1u);  // nothing drawn, one forced
    saw_sep = saw_sep || m.targets[0] == Vocabulary::kSep;
    saw_word = saw_word || m.targets[0] == v.id("a");
  }
  EXPECT_TRUE(saw_sep);
  EXPECT_TRUE(saw_word);

  Rng rng(0);
  const TokenBatch empty = TokenBatch::single(tokenize("", v, 4));
  EXPECT_THROW(mask_tokens(empty, MaskPolicy{}, rng), ContractError);
}

TEST(MaskTokens, NearCertainProbabilityMasksEverything) {
  Rng rng(2);
  const TokenBatch tokens = caption_rows(50, 16, rng);
  MaskPolicy policy;
  policy.probability = 0.999;
  policy.include_terminal_sep = true;
  Rng draw(0);
  const MaskedBatch m = mask_tokens(tokens, policy, draw);
  for (std::size_t b = 0; b < tokens.batch; ++b) {
    for (std::size_t i = 1; i < tokens.length; ++i) {
      const TokenId id = tokens.ids[b * tokens.length + i];
      if (id != Vocabulary::kPad) EXPECT_EQ(m.input.ids[b * tokens.length + i], Vocabulary::kMask);
    }
  }
}

TEST(MaskTokens, FixedSeedIsReproducible) {
  Rng rng(3);
  const TokenBatch tokens = caption_rows(20, 16, rng);
  Rng a(77), b(77);
  const MaskedBatch x = mask_tokens(tokens, MaskPolicy{}, a), y = mask_tokens(tokens, MaskPolicy{}, b);
  EXPECT_EQ(x.input.ids, y.input.ids);
  EXPECT_EQ(x.positions, y.positions);
  EXPECT_EQ(x.targets, y.targets);
}

TEST(MaskTokens, QuestionPrefixStaysVisible) {
  const Vocabulary v = synthetic_vocabulary();
  const QaTokens qa = tokenize_qa({{"what is seen", "red ball"}}, v, 12);
  ASSERT_EQ(qa.prefix, (std::vector<std::size_t>{5}));
  Rng rng(4);
  MaskPolicy policy;
  policy.probability = 0.99;
  policy.include_terminal_sep = true;
  const MaskedBatch m = mask_tokens(qa.tokens, policy, rng, qa.prefix);
  for (std::size_t p : m.positions) EXPECT_GE(p, 5u);
}

TEST(PrefixCausalMask, Structure) {
  const AttentionMask m = prefix_causal_mask(4, 2);
  const std::vector<std::uint8_t> want{1, 1, 0, 0,  //
                                       1, 1, 0, 0,  //
                                       1, 1, 1, 0,  //
                                       1, 1, 1, 1};
  EXPECT_EQ(m.allowed, want);
}

TEST(Fusion, NamesRoundTrip) {
  for (FusionVariant v : kVariants) EXPECT_EQ(parse_fusion_variant(fusion_variant_name(v)), v);
  EXPECT_THROW(parse_fusion_variant("sideways"), ConfigError);
}

class DecoderVariant : public ::testing::TestWithParam<FusionVariant> {};

TEST_P(DecoderVariant, LaterTokensDoNotAffectEarlierLogits) {
  const MultimodalDecoder d = make_decoder(GetParam());
  std::mt19937_64 gen(9);
  const ConditionalFeatures c = make_conditions(d, 1, gen);
  std::vector<TokenId> ids{1, 7, 9, 11, 3, 15, 6, 2};
  const Tensor base = d.forward(ids, 1, 8, c);
  ASSERT_EQ(base.shape(), (Shape{1, 8, kVocab}));
  for (std::size_t j = 1; j < 8; ++j) {
    std::vector<TokenId> edited = ids;
    edited[j] = (edited[j] + 5) % static_cast<TokenId>(kVocab);
    const Tensor out = d.forward(edited, 1, 8, c);
    for (std::size_t i = 0; i < j * kVocab; ++i) ASSERT_EQ(base.at(i), out.at(i)) << "edit " << j;
  }
}

TEST_P(DecoderVariant, ConditionsMatter) {
  const MultimodalDecoder d = make_decoder(GetParam());
  std::mt19937_64 gen(10);
  const std::vector<TokenId> ids{1, 7, 3};
  const Tensor a = d.forward(ids, 1, 3, make_conditions(d, 1, gen));
  const Tensor b = d.forward(ids, 1, 3, make_conditions(d, 1, gen));
  EXPECT_NE(a.at(0), b.at(0));
}

TEST_P(DecoderVariant, SingleModalityConditions) {
  const MultimodalDecoder d = make_decoder(GetParam());
  std::mt19937_64 gen(12);
  const ConditionalFeatures c = make_conditions(d, 2, gen);
  const std::vector<TokenId> ids{1, 7, 3, 1, 8, 3};
  EXPECT_EQ(d.forward(ids, 2, 3, c.select(ModalityGroup::parse("T-V"))).shape(), (Shape{2, 3, kVocab}));
  EXPECT_EQ(d.forward(ids, 2, 3, c.select(ModalityGroup::parse("T-A"))).shape(), (Shape{2, 3, kVocab}));
}

INSTANTIATE_TEST_SUITE_P(AllVariants, DecoderVariant, ::testing::ValuesIn(kVariants),
                         [](const auto& info) {
                           std::string n = fusion_variant_name(info.param);
                           std::erase(n, '-');
                           return n;
                         });

TEST(Conditions, SelectDropsUnusedModalities) {
  const MultimodalDecoder d = make_decoder(FusionVariant::ConcatenateCross);
  std::mt19937_64 gen(1);
  const ConditionalFeatures c = make_conditions(d, 1, gen);
  const auto tv = c.select(ModalityGroup::parse("T-V"));
  EXPECT_TRUE(tv.vision.defined());
  EXPECT_FALSE(tv.audio.defined());
  EXPECT_EQ(c.audiovisual().shape(), (Shape{1, 10, 16}));
}

TEST(Conditions, RowCountsAndVisionFirstStacking) {
  const MultimodalDecoder d = make_decoder(FusionVariant::ConcatenateCross);
  std::mt19937_64 gen(2);
  const ConditionalFeatures c =
      d.build_conditions(random_tensor({1, 2, 4, 8}, gen), random_tensor({1, 2, 3, 8}, gen));
  EXPECT_EQ(c.vision.shape(), (Shape{1, 8, 16}));
  EXPECT_EQ(c.audio.shape(), (Shape{1, 6, 16}));
  const Tensor av = c.audiovisual();
  ASSERT_EQ(av.shape(), (Shape{1, 14, 16}));
  for (std::size_t i = 0; i < 8 * 16; ++i) EXPECT_EQ(av.at(i), c.vision.at(i));
  for (std::size_t i = 0; i < 6 * 16; ++i) EXPECT_EQ(av.at(8 * 16 + i), c.audio.at(i));
}

TEST(Conditions, VisionGroupIgnoresAudioValues) {
  std::mt19937_64 gen(3);
  const Tensor vision = random_tensor({1, 2, 3, 8}, gen);
  const std::vector<TokenId> ids{1, 7, 3, 9};
  for (FusionVariant v : kVariants) {
    const MultimodalDecoder d = make_decoder(v);
    const auto tv = ModalityGroup::parse("T-V");
    const Tensor a = d.forward(ids, 1, 4, d.build_conditions(vision, random_tensor({1, 1, 4, 8}, gen)).select(tv));
    const Tensor b = d.forward(ids, 1, 4, d.build_conditions(vision, random_tensor({1, 1, 4, 8}, gen)).select(tv));
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a.at(i), b.at(i)) << fusion_variant_name(v);
  }
}

TEST(Conditions, ParallelCrossSymmetricUnderBranchSwap) {
  const MultimodalDecoder d = make_decoder(FusionVariant::ParallelCross);
  const MultimodalDecoder swapped = make_decoder(FusionVariant::ParallelCross);
  ParameterSet own, other;
  d.collect_own(own, "d");
  swapped.collect_own(other, "d");
  // Give the copy's vision branch the audio branch weights and vice versa.
  const auto& entries = own.entries();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const std::string& name = entries[k].name;
    std::string partner = name;
    if (name.find(".cross0.") != std::string::npos) {
      partner.replace(name.find(".cross0."), 8, ".cross1.");
    } else if (name.find(".cross1.") != std::string::npos) {
      partner.replace(name.find(".cross1."), 8, ".cross0.");
    } else {
      continue;
    }
    const Tensor* source = own.find(partner);
    ASSERT_NE(source, nullptr) << partner;
    Tensor target = other.entries()[k].tensor;
    std::copy(source->data().begin(), source->data().end(), target.mutable_data().begin());
  }
  std::mt19937_64 gen(4);
  const ConditionalFeatures c{random_tensor({1, 3, 16}, gen), random_tensor({1, 5, 16}, gen)};
  const ConditionalFeatures flipped{c.audio, c.vision};
  const std::vector<TokenId> ids{1, 7, 3, 9, 4};
  const Tensor a = d.forward(ids, 1, 5, c), b = swapped.forward(ids, 1, 5, flipped);
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a.at(i), b.at(i));
}

TEST(MgcLoss, EqualsCrossEntropyAtMaskedPositions) {
  std::mt19937_64 gen(2);
  const Tensor logits = random_tensor({2, 3, 5}, gen);
  MaskedBatch m;
  m.positions = {1, 5};
  m.targets = {4, 0};
  double want = 0.0;
  for (std::size_t k = 0; k < 2; ++k) {
    const std::size_t row = m.positions[k];
    double z = 0.0;
    for (std::size_t v = 0; v < 5; ++v) z += std::exp(logits.at(row * 5 + v));
    want += std::log(z) - logits.at(row * 5 + static_cast<std::size_t>(m.targets[k]));
  }
  EXPECT_NEAR(mgc_loss(logits, m).item(), want / 2.0, 1e-12);
}

TEST(MgcLoss, AnalyticValuesAndUnmaskedIndependence) {
  MaskedBatch m;
  m.positions = {0, 2};
  m.targets = {3, 11};
  EXPECT_NEAR(mgc_loss(Tensor::zeros({1, 3, 16}), m).item(), std::log(16.0), 1e-14);
  // A margin of 20 on each target leaves almost no loss.
  Tensor confident = Tensor::zeros({1, 3, 16});
  confident.mutable_data()[0 * 16 + 3] = 20.0;
  confident.mutable_data()[2 * 16 + 11] = 20.0;
  EXPECT_LT(mgc_loss(confident, m).item(), 1e-3);
  // Logits at the unmasked position 1 do not enter the loss.
  Tensor edited = add(confident, Tensor::zeros({1, 3, 16}));  // a copy, not a second handle
  for (std::size_t v = 0; v < 16; ++v) edited.mutable_data()[16 + v] = 50.0 * static_cast<double>(v);
  EXPECT_EQ(mgc_loss(edited, m).item(), mgc_loss(confident, m).item());
}

TEST(GroupedMgcLoss, SingleGroupEqualsDirectAndThreeAverage) {
  const MultimodalDecoder d = make_decoder(FusionVariant::ConcatenateCross);
  std::mt19937_64 gen(6);
  const ConditionalFeatures c = make_conditions(d, 3, gen);
  Rng rng(7);
  const MaskedBatch m = mask_tokens(caption_rows(3, 8, rng), MaskPolicy{}, rng);
  double total = 0.0;
  for (const char* name : {"T-V", "T-A", "T-AV"}) {
    const auto g = ModalityGroup::parse(name);
    const double direct = mgc_loss(d.forward(m.input.ids, 3, 8, c.select(g)), m).item();
    EXPECT_NEAR(grouped_mgc_loss(d, m, c, {g}).item(), direct, 1e-14) << name;
    total += direct;
  }
  EXPECT_NEAR(grouped_mgc_loss(d, m, c, ModalityGroup::parse_list({"T-V", "T-A", "T-AV"})).item(), total / 3.0, 1e-13);
}

TEST(GroupedMgcLoss, Gradients) {
  const MultimodalDecoder d = make_decoder(FusionVariant::ParallelCross);
  std::mt19937_64 gen(5);
  Tensor vision = random_tensor({2, 1, 2, 8}, gen), audio = random_tensor({2, 1, 2, 8}, gen);
  Rng rng(6);
  const MaskedBatch m = mask_tokens(caption_rows(2, 6, rng), MaskPolicy{}, rng);
  const auto groups = ModalityGroup::parse_list({"T-V", "T-A", "T-AV"});
  const auto r = testing::check_gradients(
      [&] { return grouped_mgc_loss(d, m, d.build_conditions(vision, audio), groups); }, {vision, audio});
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst;
}

TEST(Generation, BeamOfOneEqualsGreedy) {
  for (FusionVariant v : kVariants) {
    const MultimodalDecoder d = make_decoder(v, 11);
    std::mt19937_64 gen(13);
    for (int trial = 0; trial < 4; ++trial) {
      const ConditionalFeatures c = make_conditions(d, 1, gen);
      GenerationConfig greedy;
      greedy.max_length = 8;
      GenerationConfig beam = greedy;
      beam.strategy = SearchStrategy::Beam;
      beam.beam_size = 1;
      const auto a = generate_caption(d, c, greedy), b = generate_caption(d, c, beam);
      EXPECT_EQ(a.tokens, b.tokens);
      EXPECT_EQ(a.terminated, b.terminated);
      EXPECT_NEAR(a.log_probability, b.log_probability, 1e-12);
    }
  }
}

TEST(Generation, RespectsLengthAndBeamScore) {
  const MultimodalDecoder d = make_decoder(FusionVariant::ConcatenateCross);
  std::mt19937_64 gen(14);
  const ConditionalFeatures c = make_conditions(d, 1, gen);
  GenerationConfig cfg;
  cfg.max_length = 4;
  const auto g = generate_caption(d, c, cfg);
  EXPECT_LE(g.tokens.size(), 4u);
  cfg.strategy = SearchStrategy::Beam;
  cfg.beam_size = 3;
  const auto b = generate_caption(d, c, cfg);
  EXPECT_LE(b.tokens.size(), 4u);
  EXPECT_LE(b.log_probability, 0.0);
  cfg.beam_size = 0;
  EXPECT_THROW(generate_caption(d, c, cfg), ConfigError);
}

TEST(Generation, BeamOfThreeScoresAtLeastGreedy) {
  // Compared on total log-probability with length normalization off on both sides.
  for (FusionVariant v : kVariants) {
    const MultimodalDecoder d = make_decoder(v, 21);
    std::mt19937_64 gen(22);
    for (int trial = 0; trial < 6; ++trial) {
      const ConditionalFeatures c = make_conditions(d, 1, gen);
      GenerationConfig greedy;
      greedy.max_length = 8;
      greedy.length_normalize = false;
      GenerationConfig beam = greedy;
      beam.strategy = SearchStrategy::Beam;
      beam.beam_size = 3;
      const auto g = generate_caption(d, c, greedy), b = generate_caption(d, c, beam);
      EXPECT_GE(b.log_probability, g.log_probability - 1e-12) << fusion_variant_name(v) << " trial " << trial;
    }
  }
}

TEST(Generation, QuestionAnswerMaskBehaviour) {
  const MultimodalDecoder d = make_decoder(FusionVariant::ConcatenateCross);
  std::mt19937_64 gen(16);
  const ConditionalFeatures c = make_conditions(d, 1, gen);
  // Question occupies positions 0..3; answer positions 4..7 are causal.
  const std::vector<TokenId> ids{1, 7, 9, 2, 11, 13, 15, 2};
  const std::vector<std::size_t> prefix{4};
  const Tensor base = d.forward(ids, 1, 8, c, prefix);
  std::vector<TokenId> later = ids;
  later[6] = 17;
  const Tensor edited = d.forward(later, 1, 8, c, prefix);
  for (std::size_t i = 0; i < 6 * kVocab; ++i) ASSERT_EQ(base.at(i), edited.at(i));
  std::vector<TokenId> question = ids;
  question[2] = 19;
  const Tensor asked = d.forward(question, 1, 8, c, prefix);
  double diff = 0.0;
  for (std::size_t i = 4 * kVocab; i < 8 * kVocab; ++i) diff += std::abs(base.at(i) - asked.at(i));
  EXPECT_GT(diff, 1e-9);
  // Every question position sees the whole question, so a late question token moves position 0.
  double early = 0.0;
  for (std::size_t i = 0; i < kVocab; ++i) early += std::abs(base.at(i) - asked.at(i));
  EXPECT_GT(early, 1e-9);
}

TEST(Generation, AnswerQuestionBatchOneOnly) {
  const MultimodalDecoder d = make_decoder(FusionVariant::ConcatenateCross);
  std::mt19937_64 gen(15);
  const Vocabulary v = synthetic_vocabulary();
  const auto q = encode_question("what is seen", v);
  EXPECT_EQ(q.front(), Vocabulary::kCls);
  EXPECT_EQ(q.back(), Vocabulary::kSep);
  GenerationConfig cfg;
  cfg.max_length = 3;
  EXPECT_LE(answer_question(d, q, make_conditions(d, 1, gen), cfg).tokens.size(), 3u);
  EXPECT_THROW(answer_question(d, q, make_conditions(d, 2, gen), cfg), ContractError);
}

}  // namespace
}  // namespace triad
