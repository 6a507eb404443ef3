// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "support/oracles.hpp"
#include "triad/alignment.hpp"
#include "triad/error.hpp"

namespace triad {
namespace {

using testing::random_tensor;
using testing::rows_of;
using testing::vector_of;

constexpr std::size_t kC = 6;

struct Fixture {
  std::mt19937_64 gen{21};
  AlignmentParams params;
  CommonEmbeddings emb;

  explicit Fixture(std::size_t batch = 3) {
    Rng rng(5);
    AlignmentConfig cfg;
    cfg.common = kC;
    params = AlignmentParams::create(kC, kC, kC, cfg, rng);
    // Larger weighting vectors so token weights are far from uniform.
    for (Linear* l : {&params.weight_text, &params.weight_vision, &params.weight_audio}) {
      l->weight = random_tensor(l->weight.shape(), gen);
    }
    emb.text = l2_normalize(random_tensor({batch, 4, kC}, gen));
    emb.vision = l2_normalize(random_tensor({batch, 2, kC}, gen));
    emb.audio = l2_normalize(random_tensor({batch, 3, kC}, gen));
    emb.text_mask.assign(batch * 4, 1);
    emb.text_mask[3] = 0;  // item 0 has three valid tokens
  }

  std::vector<int> text_mask(std::size_t item) const {
    return {emb.text_mask.begin() + static_cast<std::ptrdiff_t>(item * 4),
            emb.text_mask.begin() + static_cast<std::ptrdiff_t>(item * 4 + 4)};
  }
};

TEST(ModalityGroup, ParseAndName) {
  for (const char* name : {"T-V", "T-A", "T-AV", "V-A", "A-TV", "V-TA"}) {
    EXPECT_EQ(ModalityGroup::parse(name).name(), name);
  }
  const auto g = ModalityGroup::parse("T-AV");
  EXPECT_EQ(g.query, Modality::Text);
  EXPECT_EQ(g.target, (std::vector<Modality>{Modality::Audio, Modality::Vision}));
  EXPECT_TRUE(g.uses(Modality::Audio));
  EXPECT_THROW(ModalityGroup::parse("T-T"), ConfigError);
  EXPECT_THROW(ModalityGroup::parse("TV"), ConfigError);
}

TEST(AlignmentVariant, RoundTrip) {
  for (const char* name : {"fine-feature-learned", "coarse-score-equal", "coarse-feature-learned-cls"}) {
    EXPECT_EQ(AlignmentVariant::parse(name).name(), name);
  }
  EXPECT_THROW(AlignmentVariant::parse("medium-feature-learned"), ConfigError);
}

TEST(FineSimilarity, MatchesScalarReference) {
  Fixture f;
  for (std::size_t item = 0; item < 3; ++item) {
    const Tensor et = reshape(slice(f.emb.text, 0, item, item + 1), {4, kC});
    const Tensor ex = reshape(slice(f.emb.vision, 0, item, item + 1), {2, kC});
    const std::vector<std::uint8_t> mask(f.emb.text_mask.begin() + static_cast<std::ptrdiff_t>(item * 4),
                                         f.emb.text_mask.begin() + static_cast<std::ptrdiff_t>(item * 4 + 4));
    const double got = fine_similarity(et, mask, ex, f.params.weight_text, f.params.weight_vision).item();
    const double want = testing::fine_similarity_reference(rows_of(et, 0, 4, kC), f.text_mask(item), rows_of(ex, 0, 2, kC),
                                                           vector_of(f.params.weight_text.weight),
                                                           vector_of(f.params.weight_vision.weight));
    EXPECT_NEAR(got, want, 1e-12);
  }
}

TEST(GroupSimilarity, FineFeatureFusionMatchesReference) {
  Fixture f;
  const Tensor s = group_similarity(f.emb, f.emb, ModalityGroup::parse("T-AV"), f.params);
  ASSERT_EQ(s.shape(), (Shape{3, 3}));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      // Targets: vision rows then audio rows, each with its own weighting map.
      auto rows = rows_of(f.emb.vision, j * 2 * kC, 2, kC);
      const auto audio = rows_of(f.emb.audio, j * 3 * kC, 3, kC);
      rows.insert(rows.end(), audio.begin(), audio.end());
      std::vector<std::vector<double>> weights(2, vector_of(f.params.weight_vision.weight));
      weights.insert(weights.end(), 3, vector_of(f.params.weight_audio.weight));
      const double want = testing::fine_similarity_reference(rows_of(f.emb.text, i * 4 * kC, 4, kC), f.text_mask(i), rows,
                                                             vector_of(f.params.weight_text.weight), weights);
      EXPECT_NEAR(s.at(i * 3 + j), want, 1e-12) << i << "," << j;
    }
  }
}

TEST(GroupSimilarity, ScoreFusionAveragesSingleTargets) {
  Fixture f;
  AlignmentVariant score = AlignmentVariant::parse("fine-score-learned");
  const Tensor fused = group_similarity(f.emb, f.emb, ModalityGroup::parse("T-AV"), f.params, score);
  const Tensor sv = group_similarity(f.emb, f.emb, ModalityGroup::parse("T-V"), f.params, score);
  const Tensor sa = group_similarity(f.emb, f.emb, ModalityGroup::parse("T-A"), f.params, score);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(fused.at(i), 0.5 * (sv.at(i) + sa.at(i)), 1e-14);
}

TEST(GroupSimilarity, CoarseIsDotOfNormalizedMeans) {
  Fixture f;
  const AlignmentVariant coarse = AlignmentVariant::parse("coarse-feature-equal");
  const Tensor s = group_similarity(f.emb, f.emb, ModalityGroup::parse("T-V"), f.params, coarse);
  for (std::size_t i = 0; i < 3; ++i) {
    std::vector<double> t(kC, 0.0), v(kC, 0.0);
    double count = 0.0;
    for (std::size_t r = 0; r < 4; ++r) {
      if (!f.emb.text_mask[i * 4 + r]) continue;
      count += 1.0;
      for (std::size_t k = 0; k < kC; ++k) t[k] += f.emb.text.at((i * 4 + r) * kC + k);
    }
    for (std::size_t j = 0; j < 3; ++j) {
      std::fill(v.begin(), v.end(), 0.0);
      for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t k = 0; k < kC; ++k) v[k] += f.emb.vision.at((j * 2 + r) * kC + k);
      }
      double tn = 0.0, vn = 0.0, dot = 0.0;
      for (std::size_t k = 0; k < kC; ++k) {
        tn += t[k] * t[k] / (count * count);
        vn += v[k] * v[k] / 4.0;
        dot += (t[k] / count) * (v[k] / 2.0);
      }
      EXPECT_NEAR(s.at(i * 3 + j), dot / std::sqrt(tn * vn), 1e-12);
    }
  }
}

TEST(PoolAndProject, IdenticalPatchesPoolToThatPatch) {
  Fixture f(1);
  std::mt19937_64 gen(3);
  const Tensor patch = random_tensor({1, 1, 1, kC}, gen);
  const Tensor repeated = concat({patch, patch, patch}, 2);
  const std::vector<std::uint8_t> mask(4, 1);
  const Tensor text = random_tensor({1, 4, kC}, gen);
  const CommonEmbeddings one = pool_and_project(text, mask, patch, Tensor(), f.params);
  const CommonEmbeddings three = pool_and_project(text, mask, repeated, Tensor(), f.params);
  for (std::size_t k = 0; k < kC; ++k) EXPECT_NEAR(three.vision.at(k), one.vision.at(k), 1e-15);
}

TEST(CommonEmbeddings, AudiovisualStacksVisionFirst) {
  Fixture f(1);
  CommonEmbeddings e = f.emb;
  e.audio = slice(f.emb.audio, 1, 0, 1);
  const Tensor av = e.audiovisual();
  ASSERT_EQ(av.shape(), (Shape{1, 3, kC}));
  for (std::size_t k = 0; k < 2 * kC; ++k) EXPECT_EQ(av.at(k), e.vision.at(k));
  for (std::size_t k = 0; k < kC; ++k) EXPECT_EQ(av.at(2 * kC + k), e.audio.at(k));
}

TEST(FineSimilarity, IdenticalAndOrthogonalRows) {
  Fixture f;
  const Tensor x({1, kC}, {1, 0, 0, 0, 0, 0}), y({1, kC}, {0, 1, 0, 0, 0, 0});
  const std::vector<std::uint8_t> mask{1};
  EXPECT_NEAR(fine_similarity(x, mask, x, f.params.weight_text, f.params.weight_vision).item(), 1.0, 1e-15);
  EXPECT_NEAR(fine_similarity(x, mask, y, f.params.weight_text, f.params.weight_vision).item(), 0.0, 1e-15);
}

TEST(GroupSimilarity, CoarseMatchesFineForSingleRows) {
  Fixture f;
  std::mt19937_64 gen(4);
  CommonEmbeddings e;
  e.text = l2_normalize(random_tensor({3, 1, kC}, gen));
  e.vision = l2_normalize(random_tensor({3, 1, kC}, gen));
  e.text_mask.assign(3, 1);
  const auto group = ModalityGroup::parse("T-V");
  const Tensor fine = group_similarity(e, e, group, f.params);
  const Tensor coarse = group_similarity(e, e, group, f.params, AlignmentVariant::parse("coarse-feature-equal"));
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(fine.at(i), coarse.at(i), 1e-14);
  // Identical text and vision rows give a coarse score of 1 on the diagonal.
  CommonEmbeddings same = e;
  same.vision = e.text;
  const Tensor s = group_similarity(same, same, group, f.params, AlignmentVariant::parse("coarse-feature-equal"));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(s.at(i * 4), 1.0, 1e-14);
}

TEST(GroupSimilarity, NonTextQueries) {
  Fixture f;
  for (const char* name : {"V-A", "A-TV", "V-TA"}) {
    EXPECT_EQ(group_similarity(f.emb, f.emb, ModalityGroup::parse(name), f.params).shape(), (Shape{3, 3}));
  }
}

TEST(ContrastiveLoss, AnalyticValues) {
  EXPECT_EQ(contrastive_loss(Tensor({1, 1}, {0.3}), 0.07).item(), 0.0);
  const Tensor identity({2, 2}, {1, 0, 0, 1});
  EXPECT_NEAR(contrastive_loss(identity, 1.0).item(), std::log(1.0 + std::exp(-1.0)), 1e-12);
  EXPECT_THROW(contrastive_loss(Tensor::zeros({2, 3}), 1.0), ContractError);
}

TEST(ContrastiveLoss, MatchesReference) {
  std::mt19937_64 gen(8);
  const Tensor s = random_tensor({5, 5}, gen, 0.5);
  std::vector<std::vector<double>> m(5, std::vector<double>(5));
  for (std::size_t i = 0; i < 25; ++i) m[i / 5][i % 5] = s.at(i);
  EXPECT_NEAR(contrastive_loss(s, 0.2).item(), testing::contrastive_reference(m, 0.2), 1e-12);
}

TEST(ContrastiveLoss, InvariantToJointPermutation) {
  std::mt19937_64 gen(9);
  const Tensor s = random_tensor({4, 4}, gen, 0.5);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  std::vector<double> permuted(16);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) permuted[i * 4 + j] = s.at(perm[i] * 4 + perm[j]);
  }
  EXPECT_NEAR(contrastive_loss(Tensor({4, 4}, permuted), 0.1).item(), contrastive_loss(s, 0.1).item(), 1e-13);
}

TEST(MgaLoss, MeanOfGroupLosses) {
  Fixture f;
  const auto groups = ModalityGroup::parse_list({"T-V", "T-AV"});
  const Tensor inv = f.params.inverse_temperature();
  const double a = contrastive_loss(group_similarity(f.emb, f.emb, groups[0], f.params), inv).item();
  const double b = contrastive_loss(group_similarity(f.emb, f.emb, groups[1], f.params), inv).item();
  EXPECT_NEAR(mga_loss(f.emb, groups, f.params).item(), 0.5 * (a + b), 1e-12);
}

TEST(MgaLoss, SingleGroupAndAllSixGroups) {
  Fixture f;
  const Tensor inv = f.params.inverse_temperature();
  const auto single = ModalityGroup::parse_list({"T-A"});
  EXPECT_NEAR(mga_loss(f.emb, single, f.params).item(),
              contrastive_loss(group_similarity(f.emb, f.emb, single[0], f.params), inv).item(), 1e-14);
  const auto six = ModalityGroup::parse_list({"T-V", "T-A", "T-AV", "V-A", "A-TV", "V-TA"});
  double total = 0.0;
  for (const auto& g : six) total += contrastive_loss(group_similarity(f.emb, f.emb, g, f.params), inv).item();
  EXPECT_NEAR(mga_loss(f.emb, six, f.params).item(), total / 6.0, 1e-12);
}

TEST(MgaLoss, Errors) {
  Fixture f;
  EXPECT_THROW(mga_loss(f.emb, {}, f.params), ConfigError);
  CommonEmbeddings no_audio = f.emb;
  no_audio.audio = Tensor();
  EXPECT_THROW(mga_loss(no_audio, ModalityGroup::parse_list({"T-A"}), f.params), ConfigError);
}

TEST(MgaLoss, Gradients) {
  Fixture f(2);
  std::vector<Tensor> inputs{f.emb.text, f.emb.vision, f.emb.audio, f.params.weight_text.weight,
                             f.params.weight_audio.weight, f.params.log_temperature};
  const auto groups = ModalityGroup::parse_list({"T-V", "T-A", "T-AV"});
  const auto r = testing::check_gradients([&] { return mga_loss(f.emb, groups, f.params); }, inputs);
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst;
}

TEST(PoolAndProject, RowsAreUnitNorm) {
  Fixture f;
  std::mt19937_64 gen(2);
  const Tensor text = random_tensor({3, 4, kC}, gen), vision = random_tensor({3, 2, 5, kC}, gen);
  const CommonEmbeddings e = pool_and_project(text, f.emb.text_mask, vision, Tensor(), f.params);
  EXPECT_EQ(e.vision.shape(), (Shape{3, 2, kC}));
  EXPECT_FALSE(e.audio.defined());
  for (std::size_t r = 0; r < 6; ++r) {
    double n = 0.0;
    for (std::size_t k = 0; k < kC; ++k) n += e.vision.at(r * kC + k) * e.vision.at(r * kC + k);
    EXPECT_NEAR(n, 1.0, 1e-12);
  }
}

}  // namespace
}  // namespace triad
