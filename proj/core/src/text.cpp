// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0

#include "triad/text.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include "triad/error.hpp"

namespace triad {

namespace {
constexpr std::array<const char*, Vocabulary::kSpecialCount> kSpecials = {"[PAD]", "[CLS]", "[SEP]", "[MASK]",
                                                                          "[UNK]"};

bool is_ascii_punct(unsigned char c) {
  return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126);
}

bool is_ascii_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
}  // namespace

Vocabulary::Vocabulary() {
  for (const char* s : kSpecials) append(s);
}

Vocabulary::Vocabulary(const std::vector<std::string>& words) : Vocabulary() {
  for (const auto& w : words) {
    if (!w.empty() && !contains(w)) append(w);
  }
}

void Vocabulary::append(const std::string& word) {
  index_.emplace(word, static_cast<TokenId>(tokens_.size()));
  tokens_.push_back(word);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open vocabulary file " + path.string());
  Vocabulary v;
  v.tokens_.clear();
  v.index_.clear();
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto id = v.tokens_.size();
    if (id < kSpecialCount) {
      if (line != kSpecials[id]) {
        throw InputError("vocabulary line " + std::to_string(id + 1) + " must be " + kSpecials[id] + ", got '" + line +
                         "'");
      }
    } else if (line.empty() || v.contains(line)) {
      throw InputError("vocabulary line " + std::to_string(id + 1) + " is empty or duplicated");
    }
    v.append(line);
  }
  if (v.tokens_.size() < kSpecialCount) throw InputError("vocabulary file " + path.string() + " lacks special tokens");
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write vocabulary file " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

TokenId Vocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("token id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(std::string_view word) const { return index_.count(std::string(word)) != 0; }

std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (is_ascii_punct(c)) continue;
    if (is_ascii_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c));
  }
  return out;
}

std::vector<std::string> split_words(std::string_view normalized) {
  std::vector<std::string> words;
  std::istringstream in{std::string(normalized)};
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

TokenizedText tokenize(std::string_view text, const Vocabulary& vocab, std::size_t max_length) {
  if (max_length < 2) throw ConfigError("max text length must leave room for [CLS] and [SEP]");
  const auto words = split_words(normalize_text(text));
  TokenizedText t;
  t.ids.assign(max_length, Vocabulary::kPad);
  t.mask.assign(max_length, 0);
  std::size_t pos = 0;
  t.ids[pos++] = Vocabulary::kCls;
  for (const auto& w : words) {
    if (pos + 1 >= max_length) break;
    t.ids[pos++] = vocab.id(w);
  }
  t.ids[pos++] = Vocabulary::kSep;
  std::fill_n(t.mask.begin(), pos, 1);
  return t;
}

std::string detokenize(const std::vector<TokenId>& ids, const Vocabulary& vocab) {
  std::string out;
  std::size_t start = (!ids.empty() && ids[0] == Vocabulary::kCls) ? 1 : 0;
  for (std::size_t i = start; i < ids.size(); ++i) {
    if (ids[i] == Vocabulary::kSep || ids[i] == Vocabulary::kPad) break;
    if (!out.empty()) out.push_back(' ');
    out += vocab.token(ids[i]);
  }
  return out;
}

}  // namespace triad
