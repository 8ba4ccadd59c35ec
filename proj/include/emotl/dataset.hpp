#pragma once

// Dataset types and their UTF-8 TSV file formats.
//
//   #labels<TAB>anger,disgust,...
//   <label><TAB><raw text>
//
// Cloze datasets require exactly one [#TARGETWORD#] per line; labeled-text
// datasets only require non-empty text. Unlabeled corpora hold one message
// per line.

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "emotl/errors.hpp"
#include "emotl/tokenizer.hpp"
#include "emotl/vocabulary.hpp"

namespace emotl {

struct ClozeExample {
  std::size_t label = 0;
  TokenList tokens;
  std::size_t target_index = 0;

  bool operator==(const ClozeExample&) const = default;
};

struct LabeledText {
  std::size_t label = 0;
  TokenList tokens;

  bool operator==(const LabeledText&) const = default;
};

template <class Example>
struct Dataset {
  std::vector<std::string> labels;
  std::vector<Example> examples;

  std::size_t num_classes() const { return labels.size(); }
  std::size_t size() const { return examples.size(); }
};

using ClozeDataset = Dataset<ClozeExample>;
using LabeledDataset = Dataset<LabeledText>;

// Position of the single <target> token, or a message describing why there
// is not exactly one.
inline std::optional<std::size_t> find_placeholder(const TokenList& tokens, std::string* problem = nullptr) {
  std::size_t found = 0, index = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i] == kTargetToken) {
      if (found++ == 0) index = i;
    }
  if (found == 1) return index;
  if (problem) *problem = "expected exactly one [#TARGETWORD#] placeholder, found " + std::to_string(found);
  return std::nullopt;
}

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

inline std::ifstream open_for_read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

// Calls `row(line_number, label_index, text)` per data line.
template <class Row>
std::vector<std::string> read_labeled_tsv(const std::string& path, Row&& row) {
  auto in = open_for_read(path);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> labels;
  std::map<std::string, std::size_t> label_index;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line_no == 1) {
      const auto fields = split(line, '\t');
      if (fields.size() != 2 || fields[0] != "#labels") throw DataError(path, 1, "missing '#labels<TAB>...' header");
      labels = split(fields[1], ',');
      if (labels.size() < 2) throw DataError(path, 1, "need at least two labels");
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (!label_index.emplace(labels[i], i).second) throw DataError(path, 1, "duplicate label '" + labels[i] + "'");
      continue;
    }
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError(path, line_no, "expected '<label><TAB><text>'");
    const std::string label = line.substr(0, tab);
    auto it = label_index.find(label);
    if (it == label_index.end()) throw DataError(path, line_no, "unknown label '" + label + "'");
    row(line_no, it->second, line.substr(tab + 1));
  }
  if (line_no == 0) throw DataError(path, 1, "empty file");
  return labels;
}

}  // namespace detail

inline ClozeDataset load_cloze_dataset(const std::string& path) {
  ClozeDataset ds;
  ds.labels = detail::read_labeled_tsv(path, [&](std::size_t line_no, std::size_t label, const std::string& text) {
    ClozeExample ex;
    ex.label = label;
    ex.tokens = tokenize(text);
    std::string problem;
    auto idx = find_placeholder(ex.tokens, &problem);
    if (!idx) throw DataError(path, line_no, problem);
    ex.target_index = *idx;
    ds.examples.push_back(std::move(ex));
  });
  return ds;
}

inline LabeledDataset load_labeled_dataset(const std::string& path) {
  LabeledDataset ds;
  ds.labels = detail::read_labeled_tsv(path, [&](std::size_t line_no, std::size_t label, const std::string& text) {
    LabeledText ex{label, tokenize(text)};
    if (ex.tokens.empty()) throw DataError(path, line_no, "empty text");
    ds.examples.push_back(std::move(ex));
  });
  return ds;
}

// Token lists joined by single spaces; tokenizing the written text gives the
// same tokens back.
inline std::string render_text(const TokenList& tokens) {
  TokenList out = tokens;
  for (auto& t : out)
    if (t == kTargetToken) t = std::string(kPlaceholder);
  return join_tokens(out);
}

template <class Example>
void save_dataset(const Dataset<Example>& ds, const std::string& path) {
  auto out = detail::open_for_write(path);
  out << "#labels\t" << join_tokens(ds.labels, ",") << '\n';
  for (const auto& ex : ds.examples) out << ds.labels.at(ex.label) << '\t' << render_text(ex.tokens) << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

// One tokenized message per non-empty line. With `min_tokens`, shorter lines
// are rejected with their line number.
inline std::vector<TokenList> load_corpus(const std::string& path, std::size_t min_tokens = 0) {
  auto in = detail::open_for_read(path);
  std::vector<TokenList> corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_cr(line);
    if (line.empty()) continue;
    TokenList tokens = tokenize(line);
    if (tokens.size() < min_tokens)
      throw DataError(path, line_no, "line has " + std::to_string(tokens.size()) + " tokens, need at least " + std::to_string(min_tokens));
    corpus.push_back(std::move(tokens));
  }
  return corpus;
}

inline void save_corpus(const std::vector<TokenList>& corpus, const std::string& path) {
  auto out = detail::open_for_write(path);
  for (const auto& tokens : corpus) out << render_text(tokens) << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace emotl
