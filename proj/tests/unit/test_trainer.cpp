// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "support/oracles.hpp"
#include "triad/error.hpp"
#include "triad/trainer.hpp"

namespace triad {
namespace {

namespace fs = std::filesystem;

TrainConfig tiny() {
  TrainConfig c;
  c.hidden = 16;
  c.heads = 2;
  c.layers = 1;
  c.ffn_multiple = 2;
  c.common = 16;
  c.batch_size = 4;
  c.total_steps = 6;
  c.warmup_steps = 2;
  c.eval_interval = 0;
  c.eval_splits = 1;
  c.generation_length = 10;
  c.beam_size = 1;
  c.finetune_steps = 3;
  c.finetune_warmup = 1;
  return c;
}

std::vector<std::vector<double>> snapshot(const ParameterSet& set) {
  std::vector<std::vector<double>> out;
  for (const auto& e : set.entries()) out.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
  return out;
}

ParameterSet alignment_params(const Trainer& t) {
  ParameterSet s;
  t.model().alignment().collect(s, "align");
  return s;
}

ParameterSet decoder_own_params(const Trainer& t) {
  ParameterSet s;
  t.model().decoder().collect_own(s, "decoder");
  return s;
}

TEST(ConfigFile, ParsesTypedValues) {
  const auto f = ConfigFile::parse("# comment\nalpha = 0.5\nflag = true\nsteps=12\ngroups = [T-V, T-A]\n");
  EXPECT_EQ(f.get_double("alpha"), 0.5);
  EXPECT_TRUE(f.get_bool("flag"));
  EXPECT_EQ(f.get_uint("steps"), 12u);
  EXPECT_EQ(f.get_list("groups"), (std::vector<std::string>{"T-V", "T-A"}));
  EXPECT_THROW(ConfigFile::parse("a = 1\na = 2\n"), ConfigError);
  EXPECT_THROW(ConfigFile::parse("just words\n"), ConfigError);
  EXPECT_THROW(ConfigFile::parse("x = 1.5abc").get_double("x"), ConfigError);
  EXPECT_THROW(ConfigFile::parse("x = -3").get_uint("x"), ConfigError);
  EXPECT_THROW(ConfigFile::parse("x = maybe").get_bool("x"), ConfigError);
}

TEST(TrainConfig, TextRoundTripAndUnknownKeys) {
  TrainConfig c = tiny();
  c.mga_groups = {"T-V"};
  c.alpha = 0.25;
  const TrainConfig back = TrainConfig::parse(c.to_text());
  EXPECT_EQ(back.to_text(), c.to_text());
  EXPECT_THROW(TrainConfig::parse("learning_rat = 0.1\n"), ConfigError);
}

TEST(TrainConfig, ValidationRejectsBadValues) {
  auto expect_invalid = [](auto mutate) {
    TrainConfig c = tiny();
    mutate(c);
    EXPECT_THROW(c.validate(), ConfigError);
  };
  expect_invalid([](TrainConfig& c) { c.alpha = -1.0; });
  expect_invalid([](TrainConfig& c) { c.mask_prob = 1.0; });
  expect_invalid([](TrainConfig& c) { c.warmup_steps = c.total_steps; });
  expect_invalid([](TrainConfig& c) { c.batch_size = 1; });
  expect_invalid([](TrainConfig& c) { c.mga_groups.clear(), c.mgc_groups.clear(); });
  expect_invalid([](TrainConfig& c) { c.mga_groups = {"T-X"}; });
  expect_invalid([](TrainConfig& c) { c.fusion = "stacked"; });
  expect_invalid([](TrainConfig& c) { c.frames_per_example = 2; });
  expect_invalid([](TrainConfig& c) { c.finetune_task = "translate"; });
  expect_invalid([](TrainConfig& c) { c.beam_size = 0; });
  expect_invalid([](TrainConfig& c) { c.dual_softmax_temperature = 0.0; });
  EXPECT_NO_THROW(tiny().validate());
}

TEST(Schedule, WarmupThenLinearDecay) {
  EXPECT_DOUBLE_EQ(scheduled_learning_rate(0, 1.0, 10, 110), 0.0);
  EXPECT_DOUBLE_EQ(scheduled_learning_rate(5, 1.0, 10, 110), 0.5);
  EXPECT_DOUBLE_EQ(scheduled_learning_rate(10, 1.0, 10, 110), 1.0);
  EXPECT_DOUBLE_EQ(scheduled_learning_rate(60, 1.0, 10, 110), 0.5);
  EXPECT_DOUBLE_EQ(scheduled_learning_rate(110, 1.0, 10, 110), 0.0);
  EXPECT_DOUBLE_EQ(scheduled_learning_rate(0, 2.0, 0, 4), 2.0);
}

TEST(Optimizer, ClipScalesGlobalNorm) {
  Tensor a({2}, {0.0, 0.0}, true), b({1}, {0.0}, true);
  backward(sum(add(scale(a, 3.0), Tensor({2}, {0.0, 0.0}))));
  backward(scale(sum(b), 4.0));
  ParameterSet set;
  set.add("a", a);
  set.add("b", b);
  // Gradients (3, 3, 4): norm sqrt(34).
  EXPECT_NEAR(clip_gradients(set, 1.0), std::sqrt(34.0), 1e-12);
  EXPECT_NEAR(a.grad()[0], 3.0 / std::sqrt(34.0), 1e-12);
  EXPECT_NEAR(clip_gradients(set, 10.0), 1.0, 1e-12);
  EXPECT_NEAR(b.grad()[0], 4.0 / std::sqrt(34.0), 1e-12);
}

TEST(Optimizer, AdamFirstStepAndSkipsUnreached) {
  Tensor used({1}, {1.0}, true), unused({1}, {1.0}, true);
  ParameterSet set;
  set.add("used", used);
  set.add("unused", unused);
  Adam adam(set, AdamConfig{});
  backward(scale(sum(used), 0.3));
  adam.step(0.1);
  // Bias-corrected first step moves by lr * g / (|g| + eps).
  EXPECT_NEAR(used.at(0), 1.0 - 0.1 * 0.3 / (0.3 + 1e-8), 1e-12);
  EXPECT_EQ(unused.at(0), 1.0);
  EXPECT_EQ(adam.state()[0].t, 1u);
  EXPECT_EQ(adam.state()[1].t, 0u);
}

TEST(Trainer, MetricsLineFormat) {
  EvalResult r;
  r.step = 7;
  r.retrieval.push_back({"T-AV", {}, 0.5, 0.75, 1.0});
  r.caption_accuracy = 0.25;
  const std::string line = format_metrics(r);
  EXPECT_EQ(line.rfind("step=7 ", 0), 0u);
  EXPECT_NE(line.find("T-AV.r1=0.5"), std::string::npos);
  EXPECT_NE(line.find("caption_accuracy=0.25"), std::string::npos);
}

TEST(Trainer, EvalSplitsAreFixedAndDistinct) {
  const TrainConfig c = tiny();
  const auto a = eval_split(c, 0), b = eval_split(c, 0), other = eval_split(c, 1);
  ASSERT_EQ(a.size(), 64u);
  EXPECT_EQ(a[5].frames.at(0), b[5].frames.at(0));
  EXPECT_NE(a[5].frames.at(0), other[5].frames.at(0));
}

TEST(Trainer, DeterministicGivenSeed) {
  Trainer a(tiny()), b(tiny());
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(a.train_step().loss, b.train_step().loss);
  }
  EXPECT_EQ(snapshot(a.parameters()), snapshot(b.parameters()));
  TrainConfig other = tiny();
  other.seed = 99;
  Trainer c(other);
  EXPECT_NE(c.train_step().loss, Trainer(tiny()).train_step().loss);
}

TEST(Trainer, AlphaZeroLeavesAlignmentUntouched) {
  TrainConfig c = tiny();
  c.alpha = 0.0;
  Trainer t(c);
  const auto before = snapshot(alignment_params(t));
  const StepResult r = t.train_step();
  EXPECT_FALSE(r.mga.has_value());
  EXPECT_EQ(snapshot(alignment_params(t)), before);
}

TEST(Trainer, RetrievalFinetuneLeavesDecoderUntouched) {
  Trainer t(tiny());
  t.begin_finetune(Task::Retrieval, "T-AV");
  EXPECT_EQ(t.step(), 0u);
  const auto before = snapshot(decoder_own_params(t));
  const StepResult r = t.train_step();
  EXPECT_FALSE(r.mgc.has_value());
  EXPECT_TRUE(r.mga.has_value());
  EXPECT_EQ(snapshot(decoder_own_params(t)), before);
}

TEST(Trainer, VisionCaptionFinetuneIgnoresAudio) {
  Trainer t(tiny());
  t.begin_finetune(Task::Caption, "T-V");
  const Batch b = t.batch_for_step(0);
  EXPECT_FALSE(b.has_audio);
  for (const auto& caption : b.caption_text) EXPECT_EQ(caption.find("heard"), std::string::npos);
  ParameterSet audio;
  t.model().audio_encoder().collect(audio, "audio");
  const auto before = snapshot(audio);
  t.train_step();
  EXPECT_EQ(snapshot(audio), before);
}

TEST(Trainer, FinetuneRejectsIncompatibleCombinations) {
  Trainer t(tiny());
  EXPECT_THROW(t.begin_finetune(Task::Pretrain, "T-AV"), ConfigError);
  EXPECT_THROW(t.begin_finetune(Task::Caption, "V-A"), ConfigError);
  EXPECT_THROW(t.begin_finetune(Task::Retrieval, "T-Q"), ConfigError);
  TrainConfig vision_only = tiny();
  vision_only.datasets = {"captions:1:v"};
  Trainer v(vision_only);
  EXPECT_THROW(v.begin_finetune(Task::Retrieval, "T-A"), ConfigError);
}

TEST(Trainer, QaStepsTrainOnQuestionsAndAnswers) {
  Trainer t(tiny());
  t.begin_finetune(Task::Qa, "T-AV");
  const StepResult r = t.train_step();
  EXPECT_TRUE(r.mgc.has_value());
  EXPECT_TRUE(std::isfinite(r.loss));
  const double acc = t.qa_accuracy("T-AV");
  EXPECT_GE(acc, 0.0);
  EXPECT_LE(acc, 1.0);
}

ObjectiveConfig objective_with_alpha(double alpha) {
  ObjectiveConfig o;
  o.alpha = alpha;
  o.mga_groups = default_groups();
  o.mgc_groups = default_groups();
  o.mask.include_terminal_sep = true;
  return o;
}

TEST(JointLoss, AlphaWeightsOnlyTheAlignmentTerm) {
  const TrainConfig c = tiny();
  const Trainer t(c);
  const Batch batch = t.batch_for_step(0);
  auto loss_at = [&](double alpha) {
    Rng rng(31);
    return joint_loss(t.model(), batch, objective_with_alpha(alpha), rng);
  };
  const LossBreakdown zero = loss_at(0.0);
  EXPECT_FALSE(zero.mga.defined());
  EXPECT_EQ(zero.total.item(), zero.mgc.item());
  const LossBreakdown mid = loss_at(1.5);
  EXPECT_EQ(mid.mgc.item(), zero.mgc.item());
  const double h = 1e-3;
  const double slope = (loss_at(1.5 + h).total.item() - loss_at(1.5 - h).total.item()) / (2.0 * h);
  EXPECT_NEAR(slope, mid.mga.item(), 1e-9);
}

TEST(JointLoss, AudioGroupOnVisionOnlyBatchIsAConfigError) {
  const Trainer t(tiny());
  Rng rng(3);
  const Batch batch = build_batch(DatasetSpec::parse({"captions:1:v"}), t.config().synth_config(), t.vocabulary(),
                                  t.config().batch_options(), 4, rng);
  ObjectiveConfig o = objective_with_alpha(1.0);
  o.mga_groups = ModalityGroup::parse_list({"T-A"});
  o.mgc_groups = ModalityGroup::parse_list({"T-V"});
  EXPECT_THROW(joint_loss(t.model(), batch, o, rng), ConfigError);
}

TEST(Trainer, SmoothedLossDecreasesOnAFixedPool) {
  TrainConfig c = tiny();
  c.total_steps = 200;
  c.warmup_steps = 20;
  c.batch_size = 8;
  c.train_pool = 32;
  Trainer t(c);
  std::vector<double> losses;
  while (!t.finished()) losses.push_back(t.train_step().loss);
  // Window-20 moving average: the last window sits below the first.
  const double first = std::accumulate(losses.begin(), losses.begin() + 20, 0.0) / 20.0;
  const double last = std::accumulate(losses.end() - 20, losses.end(), 0.0) / 20.0;
  EXPECT_LT(last, first);
}

TEST(Trainer, MetricLogsRepeatForAFixedSeed) {
  TrainConfig c = tiny();
  c.eval_interval = 3;
  std::ostringstream a, b;
  Trainer(c).run(&a);
  Trainer(c).run(&b);
  EXPECT_FALSE(a.str().empty());
  EXPECT_EQ(a.str(), b.str());
}

TEST(Trainer, RetrievalRecallMatchesBruteForceOracle) {
  TrainConfig c = tiny();
  c.total_steps = 40;
  c.warmup_steps = 4;
  c.batch_size = 16;
  Trainer t(c);
  while (!t.finished()) t.train_step();
  const double reported = t.evaluate_retrieval({"T-V"}).front().r1;
  EXPECT_GT(reported, 2.0 / 64.0);  // trained past chance, so the comparison is not vacuous

  NoGradGuard guard;
  const auto examples = eval_split(c, 0);
  Rng rng(0);
  const Batch batch = assemble_batch(examples, t.vocabulary(), c.batch_options(), rng);
  const CommonEmbeddings e = t.model().embed(t.model().encode(&batch.captions, batch.frames, batch.spectrograms));
  const std::size_t n = examples.size(), nt = e.text.dim(1), nv = e.vision.dim(1), dim = e.text.dim(2);
  const auto wt = testing::vector_of(t.model().alignment().weight_text.weight);
  const auto wv = testing::vector_of(t.model().alignment().weight_vision.weight);
  std::size_t hits = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const std::vector<int> mask(batch.captions.mask.begin() + static_cast<std::ptrdiff_t>(q * nt),
                                batch.captions.mask.begin() + static_cast<std::ptrdiff_t>((q + 1) * nt));
    const auto text = testing::rows_of(e.text, q * nt * dim, nt, dim);
    std::size_t best = 0;
    double best_score = -1e300;
    for (std::size_t k = 0; k < n; ++k) {
      const double score =
          testing::fine_similarity_reference(text, mask, testing::rows_of(e.vision, k * nv * dim, nv, dim), wt, wv);
      if (score > best_score) best_score = score, best = k;
    }
    hits += best == q;
  }
  EXPECT_DOUBLE_EQ(reported, static_cast<double>(hits) / static_cast<double>(n));
}

TEST(Trainer, RetrievalFinetuneBeatsZeroShot) {
  TrainConfig c = tiny();
  c.total_steps = 40;
  c.warmup_steps = 4;
  c.batch_size = 16;
  c.finetune_steps = 120;
  c.finetune_warmup = 10;
  c.finetune_learning_rate = 1e-3;
  Trainer t(c);
  while (!t.finished()) t.train_step();
  const double zero_shot = t.evaluate_retrieval({"T-AV"}).front().r1;
  t.begin_finetune(Task::Retrieval, "T-AV");
  while (!t.finished()) t.train_step();
  const double tuned = t.evaluate_retrieval({"T-AV"}).front().r1;
  EXPECT_GT(tuned, zero_shot);
}

TEST(Trainer, NonFiniteParameterIsReported) {
  Trainer t(tiny());
  Tensor first = t.parameters().entries().front().tensor;
  first.mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(t.train_step(), NumericError);
}

TEST(Checkpoint, ResumeIsBitwiseIdentical) {
  Trainer straight(tiny());
  for (int i = 0; i < 5; ++i) straight.train_step();

  Trainer first(tiny());
  for (int i = 0; i < 3; ++i) first.train_step();
  std::stringstream buffer;
  first.save(buffer);
  Trainer resumed = Trainer::load(buffer);
  EXPECT_EQ(resumed.step(), 3u);
  for (int i = 0; i < 2; ++i) resumed.train_step();
  EXPECT_EQ(snapshot(resumed.parameters()), snapshot(straight.parameters()));
}

TEST(Checkpoint, LoadErrorsAreDistinct) {
  Trainer t(tiny());
  std::stringstream good;
  t.save(good);
  const std::string bytes = good.str();

  std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(Trainer::load(truncated), CheckpointTruncatedError);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::stringstream magic(bad_magic);
  EXPECT_THROW(Trainer::load(magic), CheckpointMagicError);
  std::string bad_version = bytes;
  bad_version[std::string(kCheckpointMagic).size()] ^= 0x7f;
  std::stringstream version(bad_version);
  EXPECT_THROW(Trainer::load(version), CheckpointVersionError);
  std::stringstream trailing(bytes + "x");
  EXPECT_THROW(Trainer::load(trailing), CheckpointError);

  // A checkpoint from a wider model does not fit this configuration.
  TrainConfig wide = tiny();
  wide.hidden = 32;
  wide.common = 32;
  auto records = Trainer(wide).checkpoint_records();
  auto mine = t.checkpoint_records();
  for (auto& r : records) {
    if (r.name == "__config__") {
      for (const auto& m : mine) {
        if (m.name == "__config__") r = m;
      }
    }
  }
  EXPECT_THROW(Trainer::from_records(records), CheckpointShapeError);
}

TEST(Checkpoint, FailedRestoreKeepsState) {
  Trainer t(tiny());
  t.train_step();
  const auto before = snapshot(t.parameters());
  const fs::path path = fs::temp_directory_path() / "triad_bad.ckpt";
  {
    std::ofstream out(path, std::ios::binary);
    out << "not a checkpoint";
  }
  EXPECT_THROW(t.restore(path), CheckpointError);
  EXPECT_EQ(snapshot(t.parameters()), before);
  EXPECT_EQ(t.step(), 1u);
  fs::remove(path);
}

TEST(Checkpoint, LoadedModelForwardIsBitwiseIdentical) {
  Trainer t(tiny());
  t.train_step();
  std::stringstream buffer;
  t.save(buffer);
  const Trainer back = Trainer::load(buffer);
  const Batch batch = t.batch_for_step(4);
  Rng a(5), b(5);
  const ObjectiveConfig o = objective_with_alpha(1.5);
  EXPECT_EQ(joint_loss(t.model(), batch, o, a).total.item(), joint_loss(back.model(), batch, o, b).total.item());
  const auto x = t.model().embed(t.model().encode(&batch.captions, batch.frames, batch.spectrograms));
  const auto y = back.model().embed(back.model().encode(&batch.captions, batch.frames, batch.spectrograms));
  for (std::size_t i = 0; i < x.text.size(); ++i) ASSERT_EQ(x.text.at(i), y.text.at(i));
}

TEST(Checkpoint, VersionEditOnRestoreLeavesStateUnchanged) {
  Trainer t(tiny());
  t.train_step();
  const fs::path path = fs::temp_directory_path() / "triad_version.ckpt";
  t.save(path);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  bytes[std::string(kCheckpointMagic).size()] ^= 0x01;
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << bytes;
  }
  Trainer other(tiny());
  const auto before = snapshot(other.parameters());
  EXPECT_THROW(other.restore(path), CheckpointVersionError);
  EXPECT_EQ(snapshot(other.parameters()), before);
  EXPECT_EQ(other.step(), 0u);
  fs::remove(path);
}

TEST(Ablation, PresetsAndTable) {
  const auto names = ablation_preset_names();
  EXPECT_EQ(std::count(names.begin(), names.end(), "M6"), 1);
  const TrainConfig m1 = apply_ablation_preset(tiny(), "M1");
  EXPECT_EQ(m1.mga_groups, (std::vector<std::string>{"T-V"}));
  EXPECT_TRUE(m1.mgc_groups.empty());
  EXPECT_EQ(apply_ablation_preset(tiny(), "shared-a3").alpha, 3.0);
  EXPECT_FALSE(apply_ablation_preset(tiny(), "separate-a1").share_weights);
  EXPECT_THROW(apply_ablation_preset(tiny(), "M9"), ConfigError);

  TrainConfig c = tiny();
  c.total_steps = 3;
  c.warmup_steps = 1;
  c.ablation = {"M1", "M6"};
  c.ablation_benchmarks = {"T-V", "T-AV"};
  const AblationTable table = run_ablation(c);
  EXPECT_EQ(table.cell_count(), 4u);
  for (const auto& row : table.cells) {
    for (const auto& cell : row) {
      ASSERT_TRUE(cell.zero_shot.has_value());
      EXPECT_FALSE(cell.finetune.has_value());
    }
  }
  const std::string text = format_ablation_table(table);
  EXPECT_EQ(text.rfind("| config | T-V zero-shot | T-V finetune | T-AV zero-shot | T-AV finetune |", 0), 0u);
  EXPECT_NE(text.find("| M6 |"), std::string::npos);
}

TEST(Ablation, TableFormatting) {
  AblationTable t;
  t.configs = {"M6"};
  t.benchmarks = {"T-A"};
  t.cells = {{AblationCell{0.1234, std::nullopt}}};
  const std::string text = format_ablation_table(t);
  EXPECT_NE(text.find("| M6 | 12.3 | - |"), std::string::npos);
}

TEST(Ablation, DefaultBenchmarkHeader) {
  AblationTable t;
  t.configs = {"M6"};
  t.benchmarks = TrainConfig{}.ablation_benchmarks;
  t.cells = {std::vector<AblationCell>(3)};
  const std::string text = format_ablation_table(t);
  EXPECT_EQ(text.rfind("| config | T-V zero-shot | T-V finetune | T-A zero-shot | T-A finetune | T-AV zero-shot | "
                       "T-AV finetune |",
                       0),
            0u);
}

TEST(Pipeline, PretrainThenFinetuneWritesArtifacts) {
  const fs::path dir = fs::temp_directory_path() / "triad_pipeline";
  fs::remove_all(dir);
  TrainConfig c = tiny();
  c.total_steps = 3;
  c.warmup_steps = 1;
  const Trainer t = pretrain(c, dir / "pre");
  EXPECT_TRUE(t.finished());
  for (const char* f : {"config.txt", "metrics.log", "checkpoint.ckpt"}) EXPECT_TRUE(fs::exists(dir / "pre" / f)) << f;
  const Trainer ft = finetune(dir / "pre" / "checkpoint.ckpt", Task::Caption, "T-AV", dir / "ft");
  EXPECT_EQ(ft.phase().task, Task::Caption);
  EXPECT_TRUE(ft.finished());
  const Trainer back = Trainer::load(dir / "ft" / "checkpoint.ckpt");
  EXPECT_EQ(back.phase().group, "T-AV");
  EXPECT_EQ(snapshot(back.parameters()), snapshot(ft.parameters()));
  fs::remove_all(dir);
}

}  // namespace
}  // namespace triad
