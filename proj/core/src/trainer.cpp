// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0

#include "triad/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "triad/error.hpp"

namespace triad {

double scheduled_learning_rate(std::size_t step, double peak, std::size_t warmup, std::size_t total) {
  if (total <= warmup) throw ConfigError("total steps must exceed warmup steps");
  if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  if (step >= total) return 0.0;
  return peak * static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

double clip_gradients(const ParameterSet& params, double max_norm) {
  double sq = 0.0;
  for (const auto& e : params.entries()) {
    for (double g : e.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (const auto& e : params.entries()) {
      for (double& g : e.tensor.node()->grad) g *= factor;
    }
  }
  return norm;
}

Adam::Adam(const ParameterSet& params, AdamConfig config) : params_(params), config_(config) {
  for (const auto& e : params_.entries()) {
    state_.push_back({std::vector<double>(e.tensor.size(), 0.0), std::vector<double>(e.tensor.size(), 0.0), 0});
  }
}

void Adam::step(double learning_rate) {
  const auto& entries = params_.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Tensor& p = entries[i].tensor;
    if (!p.has_grad()) continue;
    State& s = state_[i];
    ++s.t;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(s.t));
    const auto g = p.grad();
    auto w = p.node()->data.data();
    for (std::size_t j = 0; j < g.size(); ++j) {
      s.m[j] = config_.beta1 * s.m[j] + (1.0 - config_.beta1) * g[j];
      s.v[j] = config_.beta2 * s.v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      w[j] -= learning_rate * (s.m[j] / c1) / (std::sqrt(s.v[j] / c2) + config_.eps);
    }
  }
}

std::string task_name(Task task) {
  switch (task) {
    case Task::Pretrain: return "pretrain";
    case Task::Retrieval: return "retrieval";
    case Task::Caption: return "caption";
    case Task::Qa: return "qa";
  }
  return "unknown";
}

Task parse_task(const std::string& name) {
  for (Task t : {Task::Pretrain, Task::Retrieval, Task::Caption, Task::Qa}) {
    if (task_name(t) == name) return t;
  }
  throw ConfigError("unknown task '" + name + "' (pretrain, retrieval, caption, qa)");
}

namespace {

void append_metric(std::ostringstream& out, const std::string& key, double value) { out << ' ' << key << '=' << value; }

std::uint32_t low32(std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); }
std::uint32_t high32(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }

constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kMaskStream = 2;
constexpr std::uint32_t kEvalTag = 0xE7A1u;
constexpr std::uint32_t kPoolTag = 0x9001u;

bool finite(double v) { return std::isfinite(v); }

// Rows of [B, ...] tensor t at `row`, keeping a leading batch axis of 1.
Tensor batch_row(const Tensor& t, std::size_t row) {
  if (!t.defined()) return t;
  return slice(t, 0, row, row + 1);
}

std::vector<TokenId> caption_words(const std::string& caption, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  for (const auto& w : split_words(normalize_text(caption))) ids.push_back(vocab.id(w));
  return ids;
}

// Bidirectional prefix per row: up to and including the first [SEP].
std::vector<std::size_t> question_prefixes(const TokenBatch& tokens) {
  std::vector<std::size_t> prefix;
  for (std::size_t b = 0; b < tokens.batch; ++b) {
    std::size_t p = 0;
    for (std::size_t i = 0; i < tokens.length; ++i) {
      if (tokens.ids[b * tokens.length + i] == Vocabulary::kSep) {
        p = i + 1;
        break;
      }
    }
    if (p == 0) throw ContractError("QA row without a question [SEP]");
    prefix.push_back(p);
  }
  return prefix;
}

bool spec_has_audio(const DatasetSpec& spec) {
  return std::any_of(spec.datasets.begin(), spec.datasets.end(), [](const DatasetEntry& d) { return d.has_audio; });
}

DatasetSpec audio_only(const DatasetSpec& spec) {
  DatasetSpec out;
  for (const auto& d : spec.datasets) {
    if (d.has_audio) out.datasets.push_back(d);
  }
  return out;
}

}  // namespace

std::string format_metrics(const EvalResult& r) {
  std::ostringstream out;
  out.precision(10);
  out << "step=" << r.step;
  for (const auto& rep : r.retrieval) {
    append_metric(out, rep.group + ".r1", rep.r1);
    append_metric(out, rep.group + ".r5", rep.r5);
    append_metric(out, rep.group + ".r10", rep.r10);
  }
  if (r.caption_accuracy) append_metric(out, "caption_accuracy", *r.caption_accuracy);
  if (r.qa_accuracy) append_metric(out, "qa_accuracy", *r.qa_accuracy);
  if (r.loss) append_metric(out, "loss", *r.loss);
  if (r.mga) append_metric(out, "mga", *r.mga);
  if (r.mgc) append_metric(out, "mgc", *r.mgc);
  return out.str();
}

std::vector<TriModalExample> eval_split(const TrainConfig& config, std::size_t split) {
  std::seed_seq seq{low32(config.seed), high32(config.seed), kEvalTag, static_cast<std::uint32_t>(split)};
  Rng rng(seq);
  return all_combinations(config.synth_config(), rng);
}

Trainer::Trainer(TrainConfig config)
    : config_(std::move(config)), vocab_(synthetic_vocabulary()) {
  config_.validate();
  model_ = TriadModel(config_.model_config(), config_.seed);
  params_ = model_.parameters();
  adam_ = Adam(params_, {config_.adam_beta1, config_.adam_beta2, config_.adam_eps});
  phase_ = {Task::Pretrain, "", config_.learning_rate, config_.warmup_steps, config_.total_steps};
  if (config_.train_pool > 0) {
    std::seed_seq seq{low32(config_.seed), high32(config_.seed), kPoolTag};
    Rng rng(seq);
    const SynthConfig synth = config_.synth_config();
    for (std::size_t i = 0; i < config_.train_pool; ++i) pool_.push_back(generate_example(synth, rng, true));
  }
}

void Trainer::begin_finetune(Task task, const std::string& group_name) {
  if (task == Task::Pretrain) throw ConfigError("fine-tuning needs a retrieval, caption or qa task");
  const ModalityGroup group = ModalityGroup::parse(group_name);
  if (group.uses(Modality::Audio) && !spec_has_audio(config_.dataset_spec())) {
    throw ConfigError("group " + group_name + " needs audio but no configured dataset has audio");
  }
  if (task != Task::Retrieval && group.query != Modality::Text) {
    throw ConfigError(task_name(task) + " fine-tuning needs a text-query group (T-V, T-A or T-AV), got " + group_name);
  }
  if (config_.finetune_steps <= config_.finetune_warmup) throw ConfigError("finetune_steps must exceed finetune_warmup");
  phase_ = {task, group.name(), config_.finetune_learning_rate, config_.finetune_warmup, config_.finetune_steps};
  step_ = 0;
  adam_ = Adam(params_, {config_.adam_beta1, config_.adam_beta2, config_.adam_eps});
  loss_sum_ = mga_sum_ = mgc_sum_ = 0.0;
  loss_count_ = mga_count_ = mgc_count_ = 0;
}

Rng Trainer::step_rng(std::size_t step, std::uint64_t stream) const {
  std::vector<std::uint32_t> seeds{low32(config_.seed), high32(config_.seed), static_cast<std::uint32_t>(phase_.task),
                                   low32(step), high32(step), static_cast<std::uint32_t>(stream)};
  for (char c : phase_.group) seeds.push_back(static_cast<unsigned char>(c));
  std::seed_seq seq(seeds.begin(), seeds.end());
  return Rng(seq);
}

Batch Trainer::batch_for_step(std::size_t step) const {
  Rng rng = step_rng(step, kDataStream);
  DatasetSpec spec = config_.dataset_spec();
  if (phase_.task != Task::Pretrain) {
    const ModalityGroup g = ModalityGroup::parse(phase_.group);
    if (g.uses(Modality::Audio)) {
      spec = audio_only(spec);
    } else if (phase_.task == Task::Caption) {
      spec = DatasetSpec{{DatasetEntry{"vision-captions", 1.0, false}}};
    }
  }
  Batch batch = pool_.empty()
                    ? build_batch(spec, config_.synth_config(), vocab_, config_.batch_options(), config_.batch_size, rng)
                    : build_batch_from_pool(spec, pool_, vocab_, config_.batch_options(), config_.batch_size, rng);
  if (phase_.task == Task::Qa) {
    std::vector<std::pair<std::string, std::string>> pairs;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      // Audio questions only when the group conditions on audio.
      const bool audio = batch.has_audio && ModalityGroup::parse(phase_.group).uses(Modality::Audio);
      const auto usable = qa_pairs(batch.vision_events[b], batch.audio_events[b], audio);
      std::uniform_int_distribution<std::size_t> pick(0, usable.size() - 1);
      const auto& p = usable[pick(rng)];
      pairs.emplace_back(p.question, p.answer);
    }
    batch.captions = tokenize_qa(pairs, vocab_, config_.text_length).tokens;
    batch.caption_text.clear();
    for (const auto& [q, a] : pairs) batch.caption_text.push_back(q + " " + a);
  }
  return batch;
}

ObjectiveConfig Trainer::phase_objective() const {
  ObjectiveConfig o = config_.objective();
  switch (phase_.task) {
    case Task::Pretrain:
      break;
    case Task::Retrieval:
      o.alpha = 1.0;
      o.mga_groups = {ModalityGroup::parse(phase_.group)};
      o.mgc_groups.clear();
      break;
    case Task::Caption:
    case Task::Qa:
      o.alpha = 0.0;
      o.mga_groups.clear();
      o.mgc_groups = {ModalityGroup::parse(phase_.group)};
      o.mask.include_terminal_sep = true;
      break;
  }
  return o;
}

StepResult Trainer::train_step() { return train_step(batch_for_step(step_)); }

StepResult Trainer::train_step(const Batch& batch) {
  if (finished()) throw ContractError("phase already ran all " + std::to_string(phase_.total) + " steps");
  ObjectiveConfig objective = phase_objective();
  objective.mga_groups = active_groups(objective.mga_groups, batch.has_audio);
  objective.mgc_groups = active_groups(objective.mgc_groups, batch.has_audio);
  Rng mask_rng = step_rng(step_, kMaskStream);

  params_.zero_grad();
  LossBreakdown loss;
  if (phase_.task == Task::Qa) {
    const ModalityGroup& g = objective.mgc_groups.front();
    const EncodedBatch enc = model_.encode(nullptr, g.uses(Modality::Vision) ? batch.frames : Tensor(),
                                           g.uses(Modality::Audio) ? batch.spectrograms : Tensor());
    const auto prefix = question_prefixes(batch.captions);
    const MaskedBatch masked = mask_tokens(batch.captions, objective.mask, mask_rng, prefix);
    const ConditionalFeatures cond = model_.decoder().build_conditions(enc.vision, enc.audio);
    loss.mgc = grouped_mgc_loss(model_.decoder(), masked, cond, objective.mgc_groups, prefix);
    loss.total = loss.mgc;
  } else {
    loss = joint_loss(model_, batch, objective, mask_rng);
  }

  StepResult r;
  r.step = step_;
  if (loss.mga.defined()) {
    r.mga = loss.mga.item();
    if (!finite(*r.mga)) throw NumericError("non-finite alignment (MGA) loss at step " + std::to_string(step_));
  }
  if (loss.mgc.defined()) {
    r.mgc = loss.mgc.item();
    if (!finite(*r.mgc)) throw NumericError("non-finite captioning (MGC) loss at step " + std::to_string(step_));
  }
  r.loss = loss.total.item();
  if (!finite(r.loss)) throw NumericError("non-finite joint loss at step " + std::to_string(step_));

  backward(loss.total);
  for (const auto& e : params_.entries()) {
    for (double g : e.tensor.grad()) {
      if (!finite(g)) throw NumericError("non-finite gradient in " + e.name + " at step " + std::to_string(step_));
    }
  }
  r.grad_norm = clip_gradients(params_, config_.clip_norm);
  r.learning_rate = scheduled_learning_rate(step_, phase_.peak_learning_rate, phase_.warmup, phase_.total);
  adam_.step(r.learning_rate);
  params_.zero_grad();
  ++step_;

  loss_sum_ += r.loss;
  ++loss_count_;
  if (r.mga) mga_sum_ += *r.mga, ++mga_count_;
  if (r.mgc) mgc_sum_ += *r.mgc, ++mgc_count_;
  return r;
}

std::vector<EvalResult> Trainer::run(std::ostream* metrics, const std::filesystem::path& checkpoint) {
  std::vector<EvalResult> out;
  while (!finished()) {
    train_step();
    const bool periodic = config_.eval_interval > 0 && step_ % config_.eval_interval == 0;
    if (periodic || finished()) {
      out.push_back(evaluate());
      if (metrics != nullptr) *metrics << format_metrics(out.back()) << '\n' << std::flush;
      if (!checkpoint.empty()) save(checkpoint);
    }
  }
  return out;
}

std::vector<RetrievalReport> Trainer::evaluate_retrieval(const std::vector<std::string>& groups,
                                                         bool use_dual_softmax) const {
  NoGradGuard guard;
  const auto parsed = ModalityGroup::parse_list(groups);
  std::vector<RetrievalReport> reports(parsed.size());
  for (std::size_t i = 0; i < parsed.size(); ++i) reports[i].group = parsed[i].name();
  const AlignmentVariant variant = AlignmentVariant::parse(config_.alignment);
  for (std::size_t s = 0; s < config_.eval_splits; ++s) {
    const auto examples = eval_split(config_, s);
    std::seed_seq seq{low32(config_.seed), high32(config_.seed), kEvalTag + 1, static_cast<std::uint32_t>(s)};
    Rng rng(seq);
    const Batch batch = assemble_batch(examples, vocab_, config_.batch_options(), rng);
    const CommonEmbeddings emb = model_.embed(model_.encode(&batch.captions, batch.frames, batch.spectrograms));
    const std::size_t k = examples.size();
    RetrievalIndex index{emb, {}};
    std::vector<std::size_t> ids;
    for (std::size_t j = 0; j < k; ++j) ids.push_back(s * k + j);
    index.ids = ids;
    for (std::size_t g = 0; g < parsed.size(); ++g) {
      Tensor scores = score_matrix(emb, index, parsed[g], model_.alignment(), variant);
      if (use_dual_softmax) scores = dual_softmax(scores, config_.dual_softmax_temperature);
      RetrievalReport split = evaluate_scores(reports[g].group, scores, ids, ids, ids);
      const double n = static_cast<double>(reports[g].queries.size());
      const double m = static_cast<double>(split.queries.size());
      reports[g].r1 = (reports[g].r1 * n + split.r1 * m) / (n + m);
      reports[g].r5 = (reports[g].r5 * n + split.r5 * m) / (n + m);
      reports[g].r10 = (reports[g].r10 * n + split.r10 * m) / (n + m);
      for (auto& q : split.queries) reports[g].queries.push_back(std::move(q));
    }
  }
  return reports;
}

GenerationConfig Trainer::generation_config(const GenerationConfig& base) const {
  GenerationConfig g = base;
  g.strategy = config_.beam_size > 1 ? SearchStrategy::Beam : SearchStrategy::Greedy;
  g.beam_size = config_.beam_size;
  g.length_normalize = config_.length_normalize;
  g.max_length = config_.generation_length;
  return g;
}

double Trainer::caption_accuracy(const std::string& group_name, const GenerationConfig& generation) const {
  NoGradGuard guard;
  const ModalityGroup group = ModalityGroup::parse(group_name);
  const auto examples = eval_split(config_, 0);
  std::seed_seq seq{low32(config_.seed), high32(config_.seed), kEvalTag + 2};
  Rng rng(seq);
  const Batch batch = assemble_batch(examples, vocab_, config_.batch_options(), rng);
  const EncodedBatch enc = model_.encode(nullptr, group.uses(Modality::Vision) ? batch.frames : Tensor(),
                                         group.uses(Modality::Audio) ? batch.spectrograms : Tensor());
  const ConditionalFeatures all = model_.decoder().build_conditions(enc.vision, enc.audio).select(group);
  const GenerationConfig gen = generation_config(generation);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const ConditionalFeatures cond{batch_row(all.vision, i), batch_row(all.audio, i)};
    const auto expected = caption_words(
        compose_caption(examples[i].vision_event, examples[i].audio_event, group.uses(Modality::Audio)), vocab_);
    const GenerationResult r = generate_caption(model_.decoder(), cond, gen);
    if (r.terminated && r.tokens == expected) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

double Trainer::qa_accuracy(const std::string& group_name, const GenerationConfig& generation) const {
  NoGradGuard guard;
  const ModalityGroup group = ModalityGroup::parse(group_name);
  const auto examples = eval_split(config_, 0);
  std::seed_seq seq{low32(config_.seed), high32(config_.seed), kEvalTag + 3};
  Rng rng(seq);
  const Batch batch = assemble_batch(examples, vocab_, config_.batch_options(), rng);
  const EncodedBatch enc = model_.encode(nullptr, group.uses(Modality::Vision) ? batch.frames : Tensor(),
                                         group.uses(Modality::Audio) ? batch.spectrograms : Tensor());
  const ConditionalFeatures all = model_.decoder().build_conditions(enc.vision, enc.audio).select(group);
  const GenerationConfig gen = generation_config(generation);
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const ConditionalFeatures cond{batch_row(all.vision, i), batch_row(all.audio, i)};
    const auto pairs = qa_pairs(examples[i].vision_event, examples[i].audio_event, group.uses(Modality::Audio));
    for (const auto& p : pairs) {
      const GenerationResult r = answer_question(model_.decoder(), encode_question(p.question, vocab_), cond, gen);
      hits += (r.terminated && r.tokens == caption_words(p.answer, vocab_)) ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

EvalResult Trainer::evaluate() const {
  EvalResult r;
  r.step = step_;
  if (phase_.task == Task::Pretrain) {
    r.retrieval = evaluate_retrieval(config_.eval_groups);
    if (!config_.mgc_groups.empty()) r.caption_accuracy = caption_accuracy(config_.mgc_groups.front());
  } else if (phase_.task == Task::Retrieval) {
    r.retrieval = evaluate_retrieval({phase_.group});
  } else if (phase_.task == Task::Caption) {
    r.caption_accuracy = caption_accuracy(phase_.group);
  } else {
    r.qa_accuracy = qa_accuracy(phase_.group);
  }
  if (loss_count_ > 0) r.loss = loss_sum_ / static_cast<double>(loss_count_);
  if (mga_count_ > 0) r.mga = mga_sum_ / static_cast<double>(mga_count_);
  if (mgc_count_ > 0) r.mgc = mgc_sum_ / static_cast<double>(mgc_count_);
  return r;
}

std::vector<CheckpointRecord> Trainer::checkpoint_records() const {
  std::vector<CheckpointRecord> records;
  records.push_back(string_record("__config__", config_.to_text()));
  records.push_back(string_record("__phase__", task_name(phase_.task) + ":" + phase_.group));
  records.push_back({"__schedule__",
                     {3},
                     {phase_.peak_learning_rate, static_cast<double>(phase_.warmup), static_cast<double>(phase_.total)}});
  records.push_back({"__step__", {1}, {static_cast<double>(step_)}});
  records.push_back({"__rng__",
                     {3},
                     {static_cast<double>(low32(config_.seed)), static_cast<double>(high32(config_.seed)),
                      static_cast<double>(step_)}});
  records.push_back({"__loss_sums__",
                     {6},
                     {loss_sum_, mga_sum_, mgc_sum_, static_cast<double>(loss_count_), static_cast<double>(mga_count_),
                      static_cast<double>(mgc_count_)}});
  const auto& entries = params_.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Tensor& t = entries[i].tensor;
    const auto& s = adam_.state()[i];
    records.push_back({"param/" + entries[i].name, t.shape(), std::vector<double>(t.data().begin(), t.data().end())});
    records.push_back({"adam.m/" + entries[i].name, t.shape(), s.m});
    records.push_back({"adam.v/" + entries[i].name, t.shape(), s.v});
    records.push_back({"adam.t/" + entries[i].name, {1}, {static_cast<double>(s.t)}});
  }
  return records;
}

void Trainer::save(const std::filesystem::path& path) const { write_checkpoint(path, checkpoint_records()); }

void Trainer::save(std::ostream& out) const { write_checkpoint(out, checkpoint_records()); }

Trainer Trainer::load(const std::filesystem::path& path) { return from_records(read_checkpoint(path)); }

Trainer Trainer::load(std::istream& in) { return from_records(read_checkpoint(in)); }

Trainer Trainer::from_records(const std::vector<CheckpointRecord>& records) {
  std::map<std::string, const CheckpointRecord*> by_name;
  for (const auto& r : records) {
    if (!by_name.emplace(r.name, &r).second) throw CheckpointError("duplicate record '" + r.name + "'");
  }
  auto require = [&](const std::string& name, const Shape& shape) -> const CheckpointRecord& {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointShapeError("checkpoint lacks record '" + name + "'");
    if (!shape.empty() && it->second->shape != shape) {
      throw CheckpointShapeError("record '" + name + "' has shape " + shape_string(it->second->shape) + ", expected " +
                                 shape_string(shape));
    }
    return *it->second;
  };

  TrainConfig config;
  try {
    config = TrainConfig::parse(record_string(require("__config__", {})));
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config snapshot is invalid: ") + e.what());
  }
  Trainer t(config);

  const std::string phase = record_string(require("__phase__", {}));
  const auto colon = phase.find(':');
  if (colon == std::string::npos) throw CheckpointError("malformed phase record '" + phase + "'");
  const Task task = parse_task(phase.substr(0, colon));
  if (task != Task::Pretrain) t.begin_finetune(task, phase.substr(colon + 1));
  const auto& schedule = require("__schedule__", {3}).data;
  t.phase_.peak_learning_rate = schedule[0];
  t.phase_.warmup = static_cast<std::size_t>(schedule[1]);
  t.phase_.total = static_cast<std::size_t>(schedule[2]);
  t.step_ = static_cast<std::size_t>(require("__step__", {1}).data[0]);
  const auto& rng = require("__rng__", {3}).data;
  if (rng[0] != static_cast<double>(low32(config.seed)) || rng[1] != static_cast<double>(high32(config.seed)) ||
      rng[2] != static_cast<double>(t.step_)) {
    throw CheckpointError("rng state disagrees with the config seed or step counter");
  }
  const auto& sums = require("__loss_sums__", {6}).data;
  t.loss_sum_ = sums[0];
  t.mga_sum_ = sums[1];
  t.mgc_sum_ = sums[2];
  t.loss_count_ = static_cast<std::size_t>(sums[3]);
  t.mga_count_ = static_cast<std::size_t>(sums[4]);
  t.mgc_count_ = static_cast<std::size_t>(sums[5]);

  std::size_t expected_records = 6;
  const auto& entries = t.params_.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& name = entries[i].name;
    const Shape& shape = entries[i].tensor.shape();
    const auto& p = require("param/" + name, shape);
    std::copy(p.data.begin(), p.data.end(), entries[i].tensor.node()->data.begin());
    auto& s = t.adam_.mutable_state()[i];
    s.m = require("adam.m/" + name, shape).data;
    s.v = require("adam.v/" + name, shape).data;
    s.t = static_cast<std::uint64_t>(require("adam.t/" + name, {1}).data[0]);
    expected_records += 4;
  }
  if (records.size() != expected_records) {
    throw CheckpointShapeError("checkpoint has " + std::to_string(records.size()) + " records, the configured model needs " +
                               std::to_string(expected_records));
  }
  return t;
}

void Trainer::restore(const std::filesystem::path& path) {
  Trainer staged = load(path);
  *this = std::move(staged);
}

Trainer pretrain(const TrainConfig& config, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  {
    std::ofstream snapshot(out / "config.txt");
    snapshot << config.to_text();
  }
  Trainer t(config);
  std::ofstream metrics(out / "metrics.log", std::ios::app);
  if (!metrics) throw ConfigError("cannot write " + (out / "metrics.log").string());
  t.run(&metrics, out / "checkpoint.ckpt");
  return t;
}

Trainer finetune(const std::filesystem::path& checkpoint, Task task, const std::string& group,
                 const std::filesystem::path& out, const std::optional<TrainConfig>& overrides) {
  Trainer loaded = Trainer::load(checkpoint);
  TrainConfig config = loaded.config();
  if (overrides) {
    config.finetune_steps = overrides->finetune_steps;
    config.finetune_learning_rate = overrides->finetune_learning_rate;
    config.finetune_warmup = overrides->finetune_warmup;
    config.eval_interval = overrides->eval_interval;
    config.validate();
  }
  // Rebuild around the updated snapshot, then carry the weights over.
  std::stringstream weights;
  loaded.save(weights);
  auto records = read_checkpoint(weights);
  for (auto& r : records) {
    if (r.name == "__config__") r = string_record("__config__", config.to_text());
  }
  Trainer t = Trainer::from_records(records);
  t.begin_finetune(task, group);
  std::filesystem::create_directories(out);
  {
    std::ofstream snapshot(out / "config.txt");
    snapshot << config.to_text();
  }
  std::ofstream metrics(out / "metrics.log", std::ios::app);
  if (!metrics) throw ConfigError("cannot write " + (out / "metrics.log").string());
  t.run(&metrics, out / "checkpoint.ckpt");
  return t;
}

namespace {

const std::map<std::string, std::vector<std::string>>& alignment_rows() {
  static const std::map<std::string, std::vector<std::string>> rows = {
      {"M1", {"T-V"}},
      {"M2", {"T-A"}},
      {"M3", {"T-AV"}},
      {"M4", {"T-V", "T-AV"}},
      {"M5", {"T-A", "T-AV"}},
      {"M6", {"T-V", "T-A", "T-AV"}},
      {"M7", {"T-V", "T-A", "T-AV", "V-A", "A-TV", "V-TA"}},
  };
  return rows;
}

const std::map<std::string, std::vector<std::string>>& captioning_rows() {
  static const std::map<std::string, std::vector<std::string>> rows = {
      {"C1", {"T-V"}},         {"C2", {"T-A"}},         {"C3", {"T-AV"}},
      {"C4", {"T-V", "T-AV"}}, {"C5", {"T-A", "T-AV"}}, {"C6", {"T-V", "T-A", "T-AV"}},
  };
  return rows;
}

const std::map<std::string, std::string>& alignment_variant_rows() {
  static const std::map<std::string, std::string> rows = {
      {"coarse-score", "coarse-score-equal"},
      {"coarse-feature", "coarse-feature-equal"},
      {"fine-score", "fine-score-equal"},
      {"fine-feature", "fine-feature-equal"},
      {"fine-feature-weighted", "fine-feature-learned"},
  };
  return rows;
}

const std::vector<std::pair<std::string, std::pair<bool, double>>>& combine_rows() {
  static const std::vector<std::pair<std::string, std::pair<bool, double>>> rows = {
      {"separate-a1", {false, 1.0}}, {"shared-a1", {true, 1.0}}, {"shared-a0.5", {true, 0.5}},
      {"shared-a1.5", {true, 1.5}},  {"shared-a3", {true, 3.0}},
  };
  return rows;
}

const std::vector<std::string>& fusion_rows() {
  static const std::vector<std::string> rows = {"merge-attention", "audio-visual-cross", "visual-audio-cross",
                                                "parallel-cross", "concatenate-cross"};
  return rows;
}

struct Benchmark {
  Task task;
  std::string group;
};

Benchmark parse_benchmark(const std::string& name) {
  const auto colon = name.find(':');
  if (colon == std::string::npos) return {Task::Retrieval, ModalityGroup::parse(name).name()};
  const std::string kind = name.substr(0, colon);
  const std::string group = ModalityGroup::parse(name.substr(colon + 1)).name();
  if (kind == "caption") return {Task::Caption, group};
  if (kind == "qa") return {Task::Qa, group};
  throw ConfigError("unknown benchmark '" + name + "' (use a group, caption:<group> or qa:<group>)");
}

double benchmark_metric(const Trainer& t, const Benchmark& b) {
  switch (b.task) {
    case Task::Caption: return t.caption_accuracy(b.group);
    case Task::Qa: return t.qa_accuracy(b.group);
    default: return t.evaluate_retrieval({b.group}).front().r1;
  }
}

}  // namespace

std::vector<std::string> ablation_preset_names() {
  std::vector<std::string> names{"default"};
  for (const auto& [k, v] : alignment_rows()) names.push_back(k);
  for (const auto& [k, v] : captioning_rows()) names.push_back(k);
  for (const auto& [k, v] : alignment_variant_rows()) names.push_back(k);
  for (const auto& k : fusion_rows()) names.push_back(k);
  for (const auto& [k, v] : combine_rows()) names.push_back(k);
  return names;
}

TrainConfig apply_ablation_preset(const TrainConfig& base, const std::string& name) {
  TrainConfig c = base;
  if (name == "default") return c;
  if (const auto it = alignment_rows().find(name); it != alignment_rows().end()) {
    c.mga_groups = it->second;
    c.mgc_groups.clear();
  } else if (const auto it2 = captioning_rows().find(name); it2 != captioning_rows().end()) {
    c.mga_groups.clear();
    c.mgc_groups = it2->second;
  } else if (const auto it3 = alignment_variant_rows().find(name); it3 != alignment_variant_rows().end()) {
    c.mga_groups = {"T-AV"};
    c.mgc_groups.clear();
    c.alignment = it3->second;
  } else if (std::find(fusion_rows().begin(), fusion_rows().end(), name) != fusion_rows().end()) {
    c.mga_groups.clear();
    c.mgc_groups = {"T-AV"};
    c.fusion = name;
  } else {
    const auto row = std::find_if(combine_rows().begin(), combine_rows().end(),
                                  [&](const auto& r) { return r.first == name; });
    if (row == combine_rows().end()) throw ConfigError("unknown ablation configuration '" + name + "'");
    c.share_weights = row->second.first;
    c.alpha = row->second.second;
  }
  c.validate();
  return c;
}

AblationTable run_ablation(const TrainConfig& base, std::ostream* progress) {
  AblationTable table;
  table.configs = base.ablation;
  table.benchmarks = base.ablation_benchmarks;
  if (table.configs.empty() || table.benchmarks.empty()) throw ConfigError("ablation grid is empty");
  std::vector<Benchmark> benchmarks;
  for (const auto& b : table.benchmarks) benchmarks.push_back(parse_benchmark(b));

  for (const auto& name : table.configs) {
    TrainConfig config = apply_ablation_preset(base, name);
    config.eval_interval = 0;
    Trainer trainer(config);
    while (!trainer.finished()) trainer.train_step();
    std::vector<AblationCell> row(benchmarks.size());
    for (std::size_t b = 0; b < benchmarks.size(); ++b) row[b].zero_shot = benchmark_metric(trainer, benchmarks[b]);
    if (config.ablation_finetune_steps > 0) {
      std::stringstream snapshot;
      trainer.save(snapshot);
      const auto records = read_checkpoint(snapshot);
      for (std::size_t b = 0; b < benchmarks.size(); ++b) {
        auto adjusted = records;
        TrainConfig ft = config;
        ft.finetune_steps = config.ablation_finetune_steps;
        ft.finetune_warmup = std::min(config.finetune_warmup, ft.finetune_steps / 10);
        for (auto& r : adjusted) {
          if (r.name == "__config__") r = string_record("__config__", ft.to_text());
        }
        Trainer tuned = Trainer::from_records(adjusted);
        tuned.begin_finetune(benchmarks[b].task, benchmarks[b].group);
        while (!tuned.finished()) tuned.train_step();
        row[b].finetune = benchmark_metric(tuned, benchmarks[b]);
      }
    }
    if (progress != nullptr) {
      *progress << "ablation config=" << name;
      for (std::size_t b = 0; b < benchmarks.size(); ++b) {
        *progress << ' ' << table.benchmarks[b] << ".zero_shot=" << *row[b].zero_shot;
        if (row[b].finetune) *progress << ' ' << table.benchmarks[b] << ".finetune=" << *row[b].finetune;
      }
      *progress << '\n' << std::flush;
    }
    table.cells.push_back(std::move(row));
  }
  return table;
}

std::string format_ablation_table(const AblationTable& table) {
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(1);
    out << *v * 100.0;
    return out.str();
  };
  std::ostringstream out;
  out << "| config |";
  for (const auto& b : table.benchmarks) out << ' ' << b << " zero-shot | " << b << " finetune |";
  out << "\n|---|";
  for (std::size_t i = 0; i < table.benchmarks.size(); ++i) out << "---|---|";
  out << '\n';
  for (std::size_t c = 0; c < table.configs.size(); ++c) {
    out << "| " << table.configs[c] << " |";
    for (const auto& v : table.cells[c]) out << ' ' << cell(v.zero_shot) << " | " << cell(v.finetune) << " |";
    out << '\n';
  }
  return out.str();
}

}  // namespace triad
