// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace triad {

using TokenId = std::int64_t;

/// Word-level vocabulary. Ids 0..4 are always [PAD], [CLS], [SEP], [MASK], [UNK].
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kCls = 1;
  static constexpr TokenId kSep = 2;
  static constexpr TokenId kMask = 3;
  static constexpr TokenId kUnk = 4;
  static constexpr std::size_t kSpecialCount = 5;

  Vocabulary();
  // Specials followed by `words` in order; duplicates are dropped.
  explicit Vocabulary(const std::vector<std::string>& words);

  // One token per line, line number = id. The first five lines must be the specials.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return tokens_.size(); }
  TokenId id(std::string_view word) const;
  const std::string& token(TokenId id) const;
  bool contains(std::string_view word) const;
  static bool is_special(TokenId id) { return id >= 0 && id < static_cast<TokenId>(kSpecialCount); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  void append(const std::string& word);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Lowercases ASCII letters, drops ASCII punctuation and collapses whitespace.
// Bytes outside ASCII pass through unchanged.
std::string normalize_text(std::string_view text);
std::vector<std::string> split_words(std::string_view normalized);

struct TokenizedText {
  std::vector<TokenId> ids;     // length == max_length
  std::vector<std::uint8_t> mask;  // 1 for [CLS], words and [SEP]; 0 for padding
};

// [CLS] words... [SEP] [PAD]...; words beyond max_length - 2 are truncated.
TokenizedText tokenize(std::string_view text, const Vocabulary& vocab, std::size_t max_length);

// Words between [CLS] and the first [SEP] (or the end), joined by single spaces.
std::string detokenize(const std::vector<TokenId>& ids, const Vocabulary& vocab);

}  // namespace triad
