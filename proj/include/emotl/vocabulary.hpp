#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "emotl/errors.hpp"
#include "emotl/tokenizer.hpp"

namespace emotl {

using TokenList = std::vector<std::string>;
using IdList = std::vector<std::size_t>;

// Token/id bijection. Ids 0, 1, 2 are always <pad>, <unk>, <target>.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kTarget = 2;
  static constexpr std::size_t kReserved = 3;

  Vocabulary() {
    for (std::string_view t : {kPadToken, kUnkToken, kTargetToken}) push(std::string(t), 0);
  }

  static bool is_reserved_token(std::string_view t) { return t == kPadToken || t == kUnkToken || t == kTargetToken; }

  // Ids by descending frequency with lexicographic tie-break. Tokens below
  // `min_count` are dropped; `max_size` caps the non-reserved entries.
  template <class Corpus>
  static Vocabulary build(const Corpus& corpus, std::size_t min_count = 1, std::optional<std::size_t> max_size = {}) {
    if (min_count < 1) throw ConfigError("min_count must be at least 1");
    std::unordered_map<std::string, std::uint64_t> counts;
    for (const auto& tokens : corpus)
      for (const auto& t : tokens)
        if (!is_reserved_token(t)) ++counts[t];
    std::vector<std::pair<std::string, std::uint64_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    Vocabulary v;
    for (const auto& [token, count] : ranked) {
      if (count < min_count) break;
      if (max_size && v.size() - kReserved >= *max_size) break;
      v.push(token, count);
    }
    return v;
  }

  // Rebuilds from an id-ordered token list (as stored in checkpoints).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens, const std::vector<std::uint64_t>& counts = {}) {
    if (tokens.size() < kReserved || tokens[kPad] != kPadToken || tokens[kUnk] != kUnkToken || tokens[kTarget] != kTargetToken)
      throw DataError("vocabulary must start with <pad>, <unk>, <target>");
    Vocabulary v;
    for (std::size_t i = kReserved; i < tokens.size(); ++i) {
      if (v.contains(tokens[i])) throw DataError("duplicate vocabulary token '" + tokens[i] + "'");
      v.push(tokens[i], i < counts.size() ? counts[i] : 0);
    }
    return v;
  }

  // Appends tokens not yet present, in the given order.
  void extend(const std::vector<std::string>& tokens, std::uint64_t count = 0) {
    for (const auto& t : tokens)
      if (!contains(t)) push(t, count);
  }

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& t) const { return index_.count(t) != 0; }
  std::size_t id(const std::string& t) const {
    auto it = index_.find(t);
    return it == index_.end() ? kUnk : it->second;
  }
  const std::string& token(std::size_t id) const {
    if (id >= tokens_.size()) throw DimensionError("token id " + std::to_string(id) + " out of vocabulary");
    return tokens_[id];
  }
  std::uint64_t count(std::size_t id) const { return counts_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }

  IdList encode(const TokenList& tokens) const {
    IdList ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
  }

  TokenList decode(const IdList& ids) const {
    TokenList out;
    out.reserve(ids.size());
    for (std::size_t i : ids) out.push_back(token(i));
    return out;
  }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  void push(std::string token, std::uint64_t count) {
    index_.emplace(token, tokens_.size());
    tokens_.push_back(std::move(token));
    counts_.push_back(count);
  }

  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline Vocabulary build_vocab(const std::vector<TokenList>& corpus, std::size_t min_count = 1,
                              std::optional<std::size_t> max_size = {}) {
  return Vocabulary::build(corpus, min_count, max_size);
}

inline IdList encode(const TokenList& tokens, const Vocabulary& vocab) { return vocab.encode(tokens); }

}  // namespace emotl
