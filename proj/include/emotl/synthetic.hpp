#pragma once

// Desk-scale synthetic corpora. The cloze generator gives each class a
// private set of cue tokens; every example carries at least one cue of its
// class, filler tokens and one <target> placeholder. Matching unlabeled
// text puts the class's emotion word in place of the placeholder.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "emotl/dataset.hpp"
#include "emotl/errors.hpp"
#include "emotl/rng.hpp"

namespace emotl {

enum class CorpusKind {
  emotion,  // every line has class cues and the class's emotion word
  mixed,    // half emotion lines, half generic lines
  generic,  // emotion word in filler-only context
};

inline CorpusKind parse_corpus_kind(const std::string& s) {
  if (s == "emotion") return CorpusKind::emotion;
  if (s == "mixed") return CorpusKind::mixed;
  if (s == "generic") return CorpusKind::generic;
  throw ConfigError("unknown corpus kind '" + s + "' (expected emotion, mixed or generic)");
}

struct SyntheticOptions {
  std::size_t num_classes = 6;
  std::size_t examples_per_class = 400;
  std::size_t vocab_size = 600;
  std::uint64_t seed = 1;
  std::size_t min_length = 6;
  std::size_t max_length = 14;
  std::size_t corpus_lines = 0;  // 0: one line per cloze example
  CorpusKind corpus_kind = CorpusKind::emotion;
};

// Token inventory derived from (num_classes, vocab_size) alone.
struct SyntheticLexicon {
  std::vector<std::string> label_names;
  std::vector<std::vector<std::string>> cues;  // per class, disjoint
  std::vector<std::string> emotion_words;      // per class
  std::vector<std::string> fillers;

  static SyntheticLexicon make(std::size_t num_classes, std::size_t vocab_size) {
    if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
    if (vocab_size < 10 * num_classes) throw ConfigError("vocab_size must be at least 10 × num_classes");
    static const std::vector<std::string> kSix = {"anger", "disgust", "fear", "joy", "sadness", "surprise"};
    SyntheticLexicon lex;
    for (std::size_t c = 0; c < num_classes; ++c) lex.label_names.push_back(num_classes == 6 ? kSix[c] : "class" + std::to_string(c));
    const std::size_t per_class = std::max<std::size_t>(2, vocab_size / (5 * num_classes));
    lex.cues.resize(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
      lex.emotion_words.push_back("emo" + std::to_string(c));
      for (std::size_t j = 0; j < per_class; ++j) lex.cues[c].push_back("cue" + std::to_string(c) + "x" + std::to_string(j));
    }
    const std::size_t used = num_classes * (per_class + 1);
    for (std::size_t j = 0; j < vocab_size - used; ++j) lex.fillers.push_back("w" + std::to_string(j));
    return lex;
  }
};

struct SyntheticData {
  SyntheticLexicon lexicon;
  ClozeDataset cloze;
  LabeledDataset corpus;  // label = class of the emotion word in the line
};

namespace detail {

// Filler sentence of random length with `cues` spread over random slots and
// one slot reserved for `center` (placeholder or emotion word).
inline TokenList synth_sentence(const SyntheticLexicon& lex, std::size_t cls, bool with_cues, const std::string& center,
                                const SyntheticOptions& o, Rng& rng, std::size_t* center_index) {
  const std::size_t length = o.min_length + rng.below(o.max_length - o.min_length + 1);
  TokenList tokens(length);
  for (auto& t : tokens) t = lex.fillers[rng.below(lex.fillers.size())];
  std::vector<std::size_t> slots(length);
  for (std::size_t i = 0; i < length; ++i) slots[i] = i;
  rng.shuffle(slots);
  const std::size_t at = slots[0];
  tokens[at] = center;
  if (with_cues) {
    const std::size_t n_cues = 1 + rng.below(2);
    for (std::size_t k = 0; k < n_cues; ++k) tokens[slots[1 + k]] = lex.cues[cls][rng.below(lex.cues[cls].size())];
  }
  if (center_index) *center_index = at;
  return tokens;
}

}  // namespace detail

inline SyntheticData generate_synthetic_cloze(const SyntheticOptions& o) {
  if (o.examples_per_class < 1) throw ConfigError("examples_per_class must be at least 1");
  if (o.min_length < 4 || o.max_length < o.min_length) throw ConfigError("sentence lengths must satisfy 4 <= min <= max");
  SyntheticData data;
  data.lexicon = SyntheticLexicon::make(o.num_classes, o.vocab_size);
  const auto& lex = data.lexicon;
  Rng root(o.seed);
  Rng rng_examples = root.split(1);
  Rng rng_corpus = root.split(2);

  data.cloze.labels = lex.label_names;
  std::vector<std::size_t> order;
  for (std::size_t c = 0; c < o.num_classes; ++c)
    for (std::size_t i = 0; i < o.examples_per_class; ++i) order.push_back(c);
  rng_examples.shuffle(order);
  for (std::size_t c : order) {
    ClozeExample ex;
    ex.label = c;
    ex.tokens = detail::synth_sentence(lex, c, true, std::string(kTargetToken), o, rng_examples, &ex.target_index);
    data.cloze.examples.push_back(std::move(ex));
  }

  data.corpus.labels = lex.label_names;
  const std::size_t lines = o.corpus_lines ? o.corpus_lines : order.size();
  for (std::size_t i = 0; i < lines; ++i) {
    const std::size_t c = rng_corpus.below(o.num_classes);
    bool cues = true;
    if (o.corpus_kind == CorpusKind::generic) cues = false;
    if (o.corpus_kind == CorpusKind::mixed) cues = (i % 2 == 0);
    data.corpus.examples.push_back(
        {c, detail::synth_sentence(lex, c, cues, lex.emotion_words[c], o, rng_corpus, nullptr)});
  }
  return data;
}

inline SyntheticData generate_synthetic_cloze(std::size_t num_classes, std::size_t examples_per_class,
                                              std::size_t vocab_size, std::uint64_t seed) {
  SyntheticOptions o;
  o.num_classes = num_classes;
  o.examples_per_class = examples_per_class;
  o.vocab_size = vocab_size;
  o.seed = seed;
  return generate_synthetic_cloze(o);
}

// Three-way polarity data over the same lexicon: classes whose name is joy
// or surprise (or even-indexed classes for generic names) are positive, the
// rest negative; neutral lines have no cues.
inline LabeledDataset generate_synthetic_sentiment(const SyntheticOptions& o, std::size_t lines) {
  const auto lex = SyntheticLexicon::make(o.num_classes, o.vocab_size);
  LabeledDataset ds;
  ds.labels = {"positive", "negative", "neutral"};
  Rng rng = Rng(o.seed).split(3);
  for (std::size_t i = 0; i < lines; ++i) {
    const std::size_t pick = rng.below(o.num_classes + o.num_classes / 2);
    if (pick >= o.num_classes) {
      const std::size_t c = rng.below(o.num_classes);
      ds.examples.push_back({2, detail::synth_sentence(lex, c, false, lex.fillers[rng.below(lex.fillers.size())], o, rng, nullptr)});
      continue;
    }
    const std::string& name = lex.label_names[pick];
    const bool positive = o.num_classes == 6 ? (name == "joy" || name == "surprise") : pick % 2 == 0;
    ds.examples.push_back(
        {positive ? 0u : 1u, detail::synth_sentence(lex, pick, true, lex.fillers[rng.below(lex.fillers.size())], o, rng, nullptr)});
  }
  return ds;
}

// Stratified split: the first `dev_per_class` examples of each class (in
// dataset order) go to dev, the rest to train.
template <class Example>
std::pair<Dataset<Example>, Dataset<Example>> stratified_split(const Dataset<Example>& ds, std::size_t dev_per_class) {
  Dataset<Example> train, dev;
  train.labels = dev.labels = ds.labels;
  std::vector<std::size_t> taken(ds.num_classes(), 0);
  for (const auto& ex : ds.examples) {
    if (taken[ex.label] < dev_per_class) {
      ++taken[ex.label];
      dev.examples.push_back(ex);
    } else {
      train.examples.push_back(ex);
    }
  }
  return {std::move(train), std::move(dev)};
}

// The first `per_class` examples of each class.
template <class Example>
Dataset<Example> stratified_subset(const Dataset<Example>& ds, std::size_t per_class) {
  return stratified_split(ds, per_class).second;
}

// Lines drawn from a single topic each; topic t owns words "t<t>_<j>".
struct TopicCorpus {
  std::vector<TokenList> lines;
  std::vector<std::vector<std::string>> topic_words;
};

inline TopicCorpus generate_topic_corpus(std::size_t num_topics, std::size_t words_per_topic, std::size_t lines,
                                         std::size_t line_length, std::uint64_t seed) {
  if (num_topics < 2 || words_per_topic < 2 || line_length < 2) throw ConfigError("topic corpus needs >= 2 topics, words and tokens per line");
  TopicCorpus tc;
  tc.topic_words.resize(num_topics);
  for (std::size_t t = 0; t < num_topics; ++t)
    for (std::size_t j = 0; j < words_per_topic; ++j) tc.topic_words[t].push_back("t" + std::to_string(t) + "_" + std::to_string(j));
  Rng rng(seed);
  for (std::size_t i = 0; i < lines; ++i) {
    const auto& words = tc.topic_words[rng.below(num_topics)];
    TokenList line(line_length);
    for (auto& w : line) w = words[rng.below(words.size())];
    tc.lines.push_back(std::move(line));
  }
  return tc;
}

// Lines following `pattern` cyclically from a random offset.
inline std::vector<TokenList> generate_cyclic_corpus(const std::vector<std::string>& pattern, std::size_t lines,
                                                     std::size_t line_length, std::uint64_t seed) {
  if (pattern.empty() || line_length < 2) throw ConfigError("cyclic corpus needs a pattern and >= 2 tokens per line");
  Rng rng(seed);
  std::vector<TokenList> out;
  for (std::size_t i = 0; i < lines; ++i) {
    const std::size_t offset = rng.below(pattern.size());
    TokenList line;
    for (std::size_t k = 0; k < line_length; ++k) line.push_back(pattern[(offset + k) % pattern.size()]);
    out.push_back(std::move(line));
  }
  return out;
}

// i.i.d. uniform tokens "u0".."u<V-1>".
inline std::vector<TokenList> generate_uniform_corpus(std::size_t vocab, std::size_t lines, std::size_t line_length,
                                                      std::uint64_t seed) {
  if (vocab < 2 || line_length < 2) throw ConfigError("uniform corpus needs >= 2 symbols and >= 2 tokens per line");
  Rng rng(seed);
  std::vector<TokenList> out;
  for (std::size_t i = 0; i < lines; ++i) {
    TokenList line;
    for (std::size_t k = 0; k < line_length; ++k) line.push_back("u" + std::to_string(rng.below(vocab)));
    out.push_back(std::move(line));
  }
  return out;
}

}  // namespace emotl
