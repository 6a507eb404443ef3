// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0
//
// Autoregressive caption generation and generative question answering.

#pragma once

#include <vector>

#include "triad/captioning.hpp"

namespace triad {

enum class SearchStrategy { Greedy, Beam };

struct GenerationConfig {
  SearchStrategy strategy = SearchStrategy::Greedy;
  std::size_t beam_size = 3;
  // Generated tokens, [SEP] included; also capped by the decoder length.
  std::size_t max_length = 16;
  TokenId end_token = Vocabulary::kSep;
  // Beam final selection by log-probability per token; off picks the highest total.
  bool length_normalize = true;

  void validate() const;
};

struct GenerationResult {
  std::vector<TokenId> tokens;  // generated tokens without the closing end token
  bool terminated = false;      // the end token was produced
  double log_probability = 0.0;  // summed over generated tokens, end token included
  double normalized_score = 0.0;  // log_probability / generated token count
};

/// Decodes from "[CLS] [MASK]": each step fills the trailing [MASK] and appends a
/// new one. Greedy takes the argmax (lowest id on ties); beam keeps the
/// beam_size best partial sequences by total log-probability and returns the
/// finished sequence with the best (by default length-normalized) score. conditions has batch 1.
GenerationResult generate_caption(const MultimodalDecoder& decoder, const ConditionalFeatures& conditions,
                                  const GenerationConfig& config);

/// Same loop after a visible question prefix ("[CLS] question [SEP]"), which
/// attends bidirectionally; answer positions are causal.
GenerationResult answer_question(const MultimodalDecoder& decoder, const std::vector<TokenId>& question,
                                 const ConditionalFeatures& conditions, const GenerationConfig& config);

// "[CLS] words [SEP]" without padding.
std::vector<TokenId> encode_question(const std::string& question, const Vocabulary& vocab);

/// QA training rows: "[CLS] question [SEP] answer [SEP] [PAD]..." with the
/// question prefix length of each row.
struct QaTokens {
  TokenBatch tokens;
  std::vector<std::size_t> prefix;
};
QaTokens tokenize_qa(const std::vector<std::pair<std::string, std::string>>& pairs, const Vocabulary& vocab,
                     std::size_t max_length);

}  // namespace triad
