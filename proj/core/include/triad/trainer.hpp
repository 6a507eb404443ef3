// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0
//
// Optimization, the training/fine-tuning loop, evaluation drivers,
// checkpointing and the ablation runner.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "triad/checkpoint.hpp"
#include "triad/config.hpp"
#include "triad/generation.hpp"
#include "triad/retrieval.hpp"

namespace triad {

/// Linear warmup from 0 to `peak` at step == warmup, then linear decay to 0 at
/// step == total.
double scheduled_learning_rate(std::size_t step, double peak, std::size_t warmup, std::size_t total);

/// Scales all present gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_gradients(const ParameterSet& params, double max_norm);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with per-parameter bias correction. Parameters whose gradient was
/// never reached in a step are left untouched, moments included.
class Adam {
 public:
  Adam() = default;
  Adam(const ParameterSet& params, AdamConfig config);

  void step(double learning_rate);

  const ParameterSet& parameters() const { return params_; }
  struct State {
    std::vector<double> m, v;
    std::uint64_t t = 0;
  };
  const std::vector<State>& state() const { return state_; }
  std::vector<State>& mutable_state() { return state_; }

 private:
  ParameterSet params_;
  AdamConfig config_;
  std::vector<State> state_;
};

enum class Task { Pretrain, Retrieval, Caption, Qa };

std::string task_name(Task task);
Task parse_task(const std::string& name);

/// What the current phase optimizes and with which schedule.
struct Phase {
  Task task = Task::Pretrain;
  std::string group;  // fine-tuning group; empty for pretraining
  double peak_learning_rate = 1e-3;
  std::size_t warmup = 0;
  std::size_t total = 1;
};

struct StepResult {
  std::size_t step = 0;  // step index within the phase, before increment
  double learning_rate = 0.0;
  double loss = 0.0;
  std::optional<double> mga;
  std::optional<double> mgc;
  double grad_norm = 0.0;
};

struct EvalResult {
  std::size_t step = 0;
  std::vector<RetrievalReport> retrieval;
  std::optional<double> caption_accuracy;
  std::optional<double> qa_accuracy;
  // Mean training loss components since the previous evaluation.
  std::optional<double> loss, mga, mgc;
};

/// One `key=value` record per evaluation, space separated.
std::string format_metrics(const EvalResult& result);

/// Held-out evaluation data: split s holds every (vision, audio) event pair once.
std::vector<TriModalExample> eval_split(const TrainConfig& config, std::size_t split);

class Trainer {
 public:
  explicit Trainer(TrainConfig config);

  const TrainConfig& config() const { return config_; }
  const TriadModel& model() const { return model_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  const ParameterSet& parameters() const { return params_; }
  const Phase& phase() const { return phase_; }
  std::size_t step() const { return step_; }
  bool finished() const { return step_ >= phase_.total; }

  /// Switches to single-objective fine-tuning with a fresh optimizer and
  /// schedule. Incompatible task/group combinations raise ConfigError.
  void begin_finetune(Task task, const std::string& group);

  /// The batch drawn for a given step of the current phase.
  Batch batch_for_step(std::size_t step) const;

  /// One optimization step on the current phase's batch. Non-finite losses or
  /// gradients raise NumericError naming the component.
  StepResult train_step();
  StepResult train_step(const Batch& batch);

  /// Runs to the end of the phase. Evaluates every eval_interval steps and at
  /// the end; each evaluation is appended to `metrics` and, if `checkpoint` is
  /// non-empty, followed by a checkpoint write.
  std::vector<EvalResult> run(std::ostream* metrics = nullptr, const std::filesystem::path& checkpoint = {});

  /// Retrieval over eval_splits held-out splits (64 candidates each by default),
  /// optionally re-ranked with dual softmax per split.
  std::vector<RetrievalReport> evaluate_retrieval(const std::vector<std::string>& groups,
                                                  bool use_dual_softmax = false) const;
  /// Exact-match captions over split 0 conditioned on `group`. Search settings
  /// come from the config (beam_size 1 is greedy); `generation` supplies the rest.
  double caption_accuracy(const std::string& group, const GenerationConfig& generation = {}) const;
  /// Exact-match answers over every QA pair of split 0, searched the same way.
  double qa_accuracy(const std::string& group, const GenerationConfig& generation = {}) const;
  EvalResult evaluate() const;

  std::vector<CheckpointRecord> checkpoint_records() const;
  void save(const std::filesystem::path& path) const;
  void save(std::ostream& out) const;
  static Trainer load(const std::filesystem::path& path);
  static Trainer load(std::istream& in);
  static Trainer from_records(const std::vector<CheckpointRecord>& records);
  /// Replaces this trainer's state with a checkpoint; on any error the
  /// current state is left as it was.
  void restore(const std::filesystem::path& path);

 private:
  ObjectiveConfig phase_objective() const;
  Rng step_rng(std::size_t step, std::uint64_t stream) const;
  GenerationConfig generation_config(const GenerationConfig& base) const;

  TrainConfig config_;
  Vocabulary vocab_;
  TriadModel model_;
  ParameterSet params_;
  Adam adam_;
  Phase phase_;
  std::size_t step_ = 0;
  std::vector<TriModalExample> pool_;
  // Loss sums since the last evaluation.
  double loss_sum_ = 0.0, mga_sum_ = 0.0, mgc_sum_ = 0.0;
  std::size_t loss_count_ = 0, mga_count_ = 0, mgc_count_ = 0;
};

/// Pretrains from scratch, writing metrics.log, config.txt and checkpoint.ckpt
/// under `out`.
Trainer pretrain(const TrainConfig& config, const std::filesystem::path& out);

/// Fine-tunes a checkpoint into `out` (same files as pretrain).
Trainer finetune(const std::filesystem::path& checkpoint, Task task, const std::string& group,
                 const std::filesystem::path& out, const std::optional<TrainConfig>& overrides = std::nullopt);

/// Applies a named ablation configuration to a base config:
///   M1..M7      alignment-only group sets
///   C1..C6      captioning-only group sets over T-V, T-A, T-AV
///   coarse-score, coarse-feature, fine-score, fine-feature, fine-feature-weighted
///               alignment variants trained on T-AV alone
///   merge-attention, audio-visual-cross, visual-audio-cross, parallel-cross,
///   concatenate-cross   decoder fusion variants trained on T-AV captioning
///   separate-a1, shared-a1, shared-a0.5, shared-a1.5, shared-a3
///               weight sharing and alpha for the joint objective
///   default     the base config unchanged
TrainConfig apply_ablation_preset(const TrainConfig& base, const std::string& name);
std::vector<std::string> ablation_preset_names();

struct AblationCell {
  std::optional<double> zero_shot;
  std::optional<double> finetune;
};

struct AblationTable {
  std::vector<std::string> configs;
  std::vector<std::string> benchmarks;
  std::vector<std::vector<AblationCell>> cells;  // [config][benchmark]

  std::size_t cell_count() const { return configs.size() * benchmarks.size(); }
};

/// Benchmarks are retrieval groups ("T-AV"), "caption:<group>" (exact-match
/// caption accuracy) or "qa:<group>". Metrics are R@1 or accuracy in [0, 1].
/// Every configuration trains from scratch with the base seed and budget.
/// Fine-tuned values are filled only when ablation_finetune_steps > 0.
AblationTable run_ablation(const TrainConfig& base, std::ostream* progress = nullptr);

/// Pipe table with one zero-shot and one finetune column per benchmark,
/// values in percent with one decimal ("-" when absent).
std::string format_ablation_table(const AblationTable& table);

}  // namespace triad
