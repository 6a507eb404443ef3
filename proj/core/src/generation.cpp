// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0

#include "triad/generation.hpp"

#include <algorithm>
#include <cmath>

#include "triad/error.hpp"

namespace triad {

void GenerationConfig::validate() const {
  if (beam_size == 0) throw ConfigError("beam size must be at least 1");
  if (max_length == 0) throw ConfigError("generation length must be at least 1");
}

namespace {

struct Hypothesis {
  std::vector<TokenId> tokens;
  double log_probability = 0.0;
  bool terminated = false;
};

Tensor repeat_rows(const Tensor& t, std::size_t copies) {
  if (!t.defined()) return t;
  if (t.dim(0) != 1) throw ContractError("generation conditions must have batch 1");
  if (copies == 1) return t;
  std::vector<std::size_t> idx;
  idx.reserve(copies * t.size());
  for (std::size_t c = 0; c < copies; ++c) {
    for (std::size_t i = 0; i < t.size(); ++i) idx.push_back(i);
  }
  Shape shape = t.shape();
  shape[0] = copies;
  return gather(t, std::move(idx), shape);
}

// Log-probabilities [H][V] for the token after each hypothesis.
std::vector<std::vector<double>> next_log_probs(const MultimodalDecoder& decoder, const std::vector<TokenId>& prefix,
                                                std::size_t visible_prefix, const std::vector<Hypothesis>& hyps,
                                                const ConditionalFeatures& conditions) {
  const std::size_t h = hyps.size();
  const std::size_t length = prefix.size() + hyps.front().tokens.size() + 1;
  std::vector<TokenId> ids;
  ids.reserve(h * length);
  for (const auto& hyp : hyps) {
    ids.insert(ids.end(), prefix.begin(), prefix.end());
    ids.insert(ids.end(), hyp.tokens.begin(), hyp.tokens.end());
    ids.push_back(Vocabulary::kMask);
  }
  ConditionalFeatures cond{repeat_rows(conditions.vision, h), repeat_rows(conditions.audio, h)};
  std::vector<std::size_t> visible;
  if (visible_prefix > 0) visible.assign(h, visible_prefix);
  const Tensor logits = decoder.forward(ids, h, length, cond, visible);
  const std::size_t vocab = logits.dim(2);
  std::vector<std::vector<double>> out(h, std::vector<double>(vocab));
  for (std::size_t r = 0; r < h; ++r) {
    const auto row = logits.data().subspan((r * length + length - 1) * vocab, vocab);
    const double m = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - m);
    const double lz = m + std::log(z);
    for (std::size_t v = 0; v < vocab; ++v) out[r][v] = row[v] - lz;
  }
  return out;
}

GenerationResult finish(const Hypothesis& h, TokenId end_token) {
  GenerationResult r;
  r.tokens = h.tokens;
  r.terminated = h.terminated;
  if (r.terminated && !r.tokens.empty() && r.tokens.back() == end_token) r.tokens.pop_back();
  r.log_probability = h.log_probability;
  r.normalized_score = h.tokens.empty() ? 0.0 : h.log_probability / static_cast<double>(h.tokens.size());
  return r;
}

GenerationResult decode(const MultimodalDecoder& decoder, const std::vector<TokenId>& prefix, std::size_t visible_prefix,
                        const ConditionalFeatures& conditions, const GenerationConfig& config) {
  config.validate();
  if (conditions.empty() || conditions.batch() != 1) throw ContractError("generation needs conditions with batch 1");
  const std::size_t room = decoder.config().max_length > prefix.size() ? decoder.config().max_length - prefix.size() : 0;
  const std::size_t steps = std::min(config.max_length, room);
  if (steps == 0) throw ConfigError("prefix leaves no room to generate");
  NoGradGuard guard;

  if (config.strategy == SearchStrategy::Greedy) {
    std::vector<Hypothesis> current{Hypothesis{}};
    Hypothesis& h = current.front();
    for (std::size_t step = 0; step < steps && !h.terminated; ++step) {
      const auto lp = next_log_probs(decoder, prefix, visible_prefix, current, conditions).front();
      std::size_t arg = 0;
      for (std::size_t v = 1; v < lp.size(); ++v) {
        if (lp[v] > lp[arg]) arg = v;
      }
      h.tokens.push_back(static_cast<TokenId>(arg));
      h.log_probability += lp[arg];
      h.terminated = static_cast<TokenId>(arg) == config.end_token;
    }
    return finish(h, config.end_token);
  }

  const std::size_t beam = config.beam_size;
  std::vector<Hypothesis> live{Hypothesis{}};
  std::vector<Hypothesis> finished;
  for (std::size_t step = 0; step < steps && !live.empty(); ++step) {
    const auto lp = next_log_probs(decoder, prefix, visible_prefix, live, conditions);
    const std::size_t vocab = lp.front().size();
    struct Candidate {
      std::size_t hyp;
      TokenId token;
      double score;
    };
    std::vector<Candidate> cands;
    cands.reserve(live.size() * vocab);
    for (std::size_t h = 0; h < live.size(); ++h) {
      for (std::size_t v = 0; v < vocab; ++v) {
        cands.push_back({h, static_cast<TokenId>(v), live[h].log_probability + lp[h][v]});
      }
    }
    const std::size_t keep = std::min(beam, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.hyp != b.hyp) return a.hyp < b.hyp;
                        return a.token < b.token;
                      });
    std::vector<Hypothesis> next;
    for (std::size_t i = 0; i < keep; ++i) {
      Hypothesis h = live[cands[i].hyp];
      h.tokens.push_back(cands[i].token);
      h.log_probability = cands[i].score;
      if (cands[i].token == config.end_token) {
        h.terminated = true;
        finished.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
  }

  const auto& pool = finished.empty() ? live : finished;
  std::size_t best = 0;
  for (std::size_t i = 1; i < pool.size(); ++i) {
    const double a = config.length_normalize ? pool[i].log_probability / static_cast<double>(pool[i].tokens.size())
                                             : pool[i].log_probability;
    const double b = config.length_normalize
                         ? pool[best].log_probability / static_cast<double>(pool[best].tokens.size())
                         : pool[best].log_probability;
    if (a > b) best = i;
  }
  return finish(pool[best], config.end_token);
}

}  // namespace

GenerationResult generate_caption(const MultimodalDecoder& decoder, const ConditionalFeatures& conditions,
                                  const GenerationConfig& config) {
  return decode(decoder, {Vocabulary::kCls}, 0, conditions, config);
}

GenerationResult answer_question(const MultimodalDecoder& decoder, const std::vector<TokenId>& question,
                                 const ConditionalFeatures& conditions, const GenerationConfig& config) {
  if (question.size() < 3 || question.front() != Vocabulary::kCls || question.back() != Vocabulary::kSep) {
    throw ContractError("question must be [CLS] words [SEP] with at least one word");
  }
  return decode(decoder, question, question.size(), conditions, config);
}

std::vector<TokenId> encode_question(const std::string& question, const Vocabulary& vocab) {
  std::vector<TokenId> ids{Vocabulary::kCls};
  for (const auto& w : split_words(normalize_text(question))) ids.push_back(vocab.id(w));
  ids.push_back(Vocabulary::kSep);
  return ids;
}

QaTokens tokenize_qa(const std::vector<std::pair<std::string, std::string>>& pairs, const Vocabulary& vocab,
                     std::size_t max_length) {
  if (pairs.empty()) throw ContractError("no question/answer pairs");
  QaTokens out;
  std::vector<TokenizedText> rows;
  for (const auto& [q, a] : pairs) {
    std::vector<TokenId> ids = encode_question(q, vocab);
    if (ids.size() < 3) throw ContractError("question '" + q + "' is empty after normalization");
    out.prefix.push_back(ids.size());
    for (const auto& w : split_words(normalize_text(a))) ids.push_back(vocab.id(w));
    ids.push_back(Vocabulary::kSep);
    if (ids.size() > max_length) throw ConfigError("question and answer exceed " + std::to_string(max_length) + " tokens");
    TokenizedText t;
    t.mask.assign(max_length, 0);
    std::fill_n(t.mask.begin(), ids.size(), 1);
    ids.resize(max_length, Vocabulary::kPad);
    t.ids = std::move(ids);
    rows.push_back(std::move(t));
  }
  out.tokens = TokenBatch::from(rows);
  return out;
}

}  // namespace triad
