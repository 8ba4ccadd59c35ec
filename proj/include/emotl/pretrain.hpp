#pragma once

// Pretraining: skip-gram word embeddings with negative sampling, next-token
// language models and a sentiment classifier.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "emotl/checkpoint.hpp"
#include "emotl/dataset.hpp"
#include "emotl/errors.hpp"
#include "emotl/model.hpp"
#include "emotl/rng.hpp"
#include "emotl/training.hpp"
#include "emotl/transfer.hpp"
#include "emotl/vocabulary.hpp"

namespace emotl {

// ------------------------------------------------------------------ skip-gram

struct SkipGramConfig {
  std::size_t dim = 32;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t min_count = 20;
  std::size_t epochs = 5;
  double lr = 0.025;

  void validate() const {
    if (dim < 1) throw ConfigError("embedding dimension must be positive");
    if (window < 1) throw ConfigError("window must be at least 1");
    if (negatives < 1) throw ConfigError("negatives must be at least 1");
    if (min_count < 1) throw ConfigError("min_count must be at least 1");
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  }
};

inline void to_json(nlohmann::json& j, const SkipGramConfig& c) {
  j = {{"dim", c.dim}, {"window", c.window}, {"negatives", c.negatives}, {"min_count", c.min_count}, {"epochs", c.epochs}, {"lr", c.lr}};
}

// Samples non-reserved ids with probability ∝ count^0.75.
class NegativeTable {
 public:
  explicit NegativeTable(const Vocabulary& vocab, double power = 0.75) {
    double total = 0.0;
    for (std::size_t id = Vocabulary::kReserved; id < vocab.size(); ++id) {
      const double c = static_cast<double>(vocab.count(id));
      if (c <= 0.0) continue;
      total += std::pow(c, power);
      ids_.push_back(id);
      cumulative_.push_back(total);
    }
    if (ids_.size() < 2) throw ConfigError("negative sampling needs at least two counted tokens");
  }

  std::size_t sample(Rng& rng) const {
    const double u = rng.uniform() * cumulative_.back();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    if (it == cumulative_.end()) --it;
    return ids_[static_cast<std::size_t>(it - cumulative_.begin())];
  }

  // Resamples until the draw differs from `positive`.
  std::size_t sample_excluding(std::size_t positive, Rng& rng) const {
    for (;;) {
      const std::size_t id = sample(rng);
      if (id != positive) return id;
    }
  }

  double probability(std::size_t id) const {
    for (std::size_t i = 0; i < ids_.size(); ++i)
      if (ids_[i] == id) return (cumulative_[i] - (i ? cumulative_[i - 1] : 0.0)) / cumulative_.back();
    return 0.0;
  }
  const std::vector<std::size_t>& ids() const { return ids_; }

 private:
  std::vector<std::size_t> ids_;
  std::vector<double> cumulative_;
};

struct WordEmbeddings {
  Vocabulary vocab;
  Tensor matrix;                    // [V×D], rows aligned with vocab ids
  std::vector<double> epoch_loss;   // mean loss per (center, context) pair
};

namespace detail {
inline double log_sigmoid(double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }
}  // namespace detail

// Skip-gram with negative sampling and a linearly decaying learning rate.
// Out-of-vocabulary tokens are dropped before windows are formed; there is
// no frequency subsampling.
inline WordEmbeddings train_word2vec(const std::vector<TokenList>& corpus, const SkipGramConfig& config, std::uint64_t seed) {
  config.validate();
  WordEmbeddings out;
  out.vocab = Vocabulary::build(corpus, config.min_count);
  if (out.vocab.size() <= Vocabulary::kReserved) throw ConfigError("no token reaches min_count " + std::to_string(config.min_count));
  const NegativeTable table(out.vocab);
  const std::size_t v = out.vocab.size(), d = config.dim;

  std::vector<IdList> lines;
  std::size_t total_tokens = 0;
  for (const auto& toks : corpus) {
    IdList ids;
    for (const auto& t : toks) {
      const std::size_t id = out.vocab.id(t);
      if (id >= Vocabulary::kReserved) ids.push_back(id);
    }
    if (ids.size() >= 2) {
      total_tokens += ids.size();
      lines.push_back(std::move(ids));
    }
  }
  if (lines.empty()) throw ConfigError("corpus has no line with two in-vocabulary tokens");

  Rng rng(seed);
  Tensor& in = out.matrix = Tensor({v, d});
  Tensor ctx({v, d});
  for (std::size_t id = Vocabulary::kReserved; id < v; ++id)
    for (std::size_t c = 0; c < d; ++c) in.at(id, c) = (rng.uniform() - 0.5) / static_cast<double>(d);

  const double total_work = static_cast<double>(total_tokens * config.epochs);
  double done = 0.0;
  std::vector<double> grad_center(d);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double loss = 0.0;
    std::size_t pairs = 0;
    for (const auto& ids : lines) {
      for (std::size_t i = 0; i < ids.size(); ++i, done += 1.0) {
        const double lr = config.lr * std::max(1e-4, 1.0 - done / total_work);
        const std::size_t center = ids[i];
        double* vc = &in.at(center, 0);
        const std::size_t lo = i >= config.window ? i - config.window : 0;
        const std::size_t hi = std::min(ids.size() - 1, i + config.window);
        for (std::size_t j = lo; j <= hi; ++j) {
          if (j == i) continue;
          const std::size_t positive = ids[j];
          std::fill(grad_center.begin(), grad_center.end(), 0.0);
          for (std::size_t k = 0; k <= config.negatives; ++k) {
            const std::size_t target = k == 0 ? positive : table.sample_excluding(positive, rng);
            const double label = k == 0 ? 1.0 : 0.0;
            double* u = &ctx.at(target, 0);
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) dot += u[c] * vc[c];
            loss -= detail::log_sigmoid(k == 0 ? dot : -dot);
            const double g = lr * (label - 1.0 / (1.0 + std::exp(-dot)));
            for (std::size_t c = 0; c < d; ++c) {
              grad_center[c] += g * u[c];
              u[c] += g * vc[c];
            }
          }
          for (std::size_t c = 0; c < d; ++c) vc[c] += grad_center[c];
          ++pairs;
        }
      }
    }
    out.epoch_loss.push_back(pairs ? loss / static_cast<double>(pairs) : 0.0);
  }
  return out;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

inline Checkpoint to_checkpoint(const WordEmbeddings& emb, const SkipGramConfig& config) {
  Checkpoint ck;
  ck.metadata["kind"] = kind::embeddings;
  ck.metadata["skipgram"] = config;
  ck.metadata["epoch_loss"] = emb.epoch_loss;
  ck.set_vocabulary(emb.vocab);
  ck.tensors.push_back({"embedding.weight", emb.matrix});
  return ck;
}

inline WordEmbeddings embeddings_from_checkpoint(const Checkpoint& ck) {
  WordEmbeddings emb;
  emb.vocab = ck.vocabulary();
  emb.matrix = ck.at("embedding.weight");
  if (emb.matrix.rows() != emb.vocab.size()) throw DataError("embedding matrix rows do not match the stored vocabulary");
  if (ck.metadata.contains("epoch_loss")) emb.epoch_loss = ck.metadata.at("epoch_loss").get<std::vector<double>>();
  return emb;
}

// Pretrained embeddings can come from an embeddings checkpoint or from any
// model checkpoint carrying an embedding group.
inline WordEmbeddings embeddings_from_any_checkpoint(const Checkpoint& ck) {
  if (ck.kind() == kind::embeddings) return embeddings_from_checkpoint(ck);
  WordEmbeddings emb;
  emb.vocab = ck.vocabulary();
  emb.matrix = ck.at("embedding.weight");
  return emb;
}

// Plain text: one "token v1 … vD" line per vocabulary entry, in id order.
inline void save_embeddings_text(const WordEmbeddings& emb, const std::string& path) {
  auto out = detail::open_for_write(path);
  char buf[32];
  for (std::size_t id = 0; id < emb.vocab.size(); ++id) {
    out << emb.vocab.token(id);
    for (double v : emb.matrix.row_span(id)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ' ' << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline WordEmbeddings load_embeddings_text(const std::string& path) {
  auto in = detail::open_for_read(path);
  std::vector<std::string> tokens;
  std::vector<double> values;
  std::size_t dim = 0, line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_cr(line);
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    std::vector<double> row;
    std::string field;
    while (ss >> field) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw DataError(path, line_no, "bad number '" + field + "'");
      }
    }
    if (row.empty()) throw DataError(path, line_no, "token without a vector");
    if (dim == 0) dim = row.size();
    if (row.size() != dim) throw DataError(path, line_no, "expected " + std::to_string(dim) + " values, got " + std::to_string(row.size()));
    tokens.push_back(tok);
    values.insert(values.end(), row.begin(), row.end());
  }
  if (tokens.size() < Vocabulary::kReserved) throw DataError(path, line_no, "fewer lines than reserved tokens");
  WordEmbeddings emb;
  for (std::size_t i = 0; i < Vocabulary::kReserved; ++i)
    if (tokens[i] != Vocabulary().token(i)) throw DataError(path, i + 1, "expected reserved token '" + Vocabulary().token(i) + "'");
  emb.vocab = Vocabulary::from_tokens(tokens);
  emb.matrix = Tensor({tokens.size(), dim}, std::move(values));
  return emb;
}

// Classifier whose vocabulary is `emb.vocab` extended with the training
// tokens it lacks; known rows come from `emb`, new rows stay random.
struct InitializedClassifier {
  ClassifierModel model;
  Vocabulary vocab;
  std::size_t copied_rows = 0;
};

template <class Example>
InitializedClassifier classifier_with_embeddings(const WordEmbeddings* emb, const Dataset<Example>& train, ModelConfig cfg,
                                                 std::uint64_t seed) {
  InitializedClassifier out;
  std::vector<TokenList> texts;
  for (const auto& ex : train.examples) texts.push_back(ex.tokens);
  if (emb) {
    out.vocab = emb->vocab;
    std::vector<std::string> extra;
    const Vocabulary task = Vocabulary::build(texts, 1);
    for (std::size_t id = Vocabulary::kReserved; id < task.size(); ++id)
      if (!out.vocab.contains(task.token(id))) extra.push_back(task.token(id));
    out.vocab.extend(extra);
    cfg.embedding_dim = emb->matrix.cols();
  } else {
    out.vocab = Vocabulary::build(texts, 1);
  }
  cfg.vocab_size = out.vocab.size();
  cfg.num_classes = train.num_classes();
  out.model = ClassifierModel(cfg, seed);
  if (emb) out.copied_rows = copy_embedding_rows(emb->matrix, emb->vocab, out.model.param("embedding.weight").value, out.vocab);
  return out;
}

// ------------------------------------------------------------ language model

struct LmPretrainConfig {
  ModelConfig model;
  TrainConfig train;
  std::size_t min_count = 1;
  std::size_t max_vocab = 50000;
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"batch_size", c.batch_size}, {"clip_norm", c.clip_norm}, {"max_epochs", c.max_epochs}, {"patience", c.patience},
       {"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}, {"seed", c.seed}};
}

// exp(mean next-token negative log-likelihood), evaluated in eval mode.
inline double perplexity(LanguageModel& lm, const std::vector<IdList>& data, std::size_t batch_size = 64) {
  double nll = 0.0;
  std::size_t events = 0;
  for (std::size_t i = 0; i < data.size(); i += batch_size) {
    std::vector<IdList> seqs(data.begin() + static_cast<std::ptrdiff_t>(i),
                             data.begin() + static_cast<std::ptrdiff_t>(std::min(data.size(), i + batch_size)));
    std::erase_if(seqs, [](const IdList& s) { return s.size() < 2; });
    if (seqs.empty()) continue;
    const IdBatch batch = make_id_batch(seqs);
    const auto targets = lm_targets(batch);
    Graph g;
    const Tensor& logits = lm_logits(g, lm, batch, Mode::eval, nullptr, false).value();
    for (std::size_t r = 0; r < targets.size(); ++r) {
      if (targets[r] < 0) continue;
      auto row = logits.row_span(r);
      const double mx = *std::max_element(row.begin(), row.end());
      double z = 0.0;
      for (double x : row) z += std::exp(x - mx);
      nll += std::log(z) + mx - row[static_cast<std::size_t>(targets[r])];
      ++events;
    }
  }
  if (events == 0) throw ContractViolation("perplexity over zero next-token events");
  return std::exp(nll / static_cast<double>(events));
}

struct LmPretrainResult {
  LanguageModel lm;
  Vocabulary vocab;
  std::vector<EpochMetrics> history;
  double train_perplexity = 0.0;

  Checkpoint checkpoint() const {
    Checkpoint ck = to_checkpoint(lm, vocab);
    ck.metadata["train_perplexity"] = train_perplexity;
    nlohmann::json h = nlohmann::json::array();
    for (const auto& m : history) h.push_back({{"epoch", m.epoch}, {"train_loss", m.train_loss}});
    ck.metadata["history"] = h;
    return ck;
  }
};

// Vocabulary: tokens with count ≥ min_count, at most `max_vocab` of them.
inline LmPretrainResult train_language_model(const std::vector<TokenList>& corpus, const LmPretrainConfig& config,
                                             std::uint64_t seed) {
  if (corpus.empty()) throw ConfigError("language model corpus is empty");
  LmPretrainResult r;
  r.vocab = Vocabulary::build(corpus, config.min_count, config.max_vocab);
  const auto data = encode_corpus(corpus, r.vocab);
  ModelConfig cfg = config.model;
  cfg.vocab_size = r.vocab.size();
  r.lm = LanguageModel(cfg, seed);
  TrainConfig tc = config.train;
  tc.seed = seed;
  tc.validate();
  AdamState adam(tc.adam);
  for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) r.history.push_back(train_lm_epoch(r.lm, data, tc, epoch, adam));
  r.train_perplexity = perplexity(r.lm, data);
  return r;
}

// -------------------------------------------------------------- sentiment

struct SentimentConfig {
  ModelConfig model;
  TrainConfig train;
  bool freeze_embedding = false;
};

struct SentimentResult {
  FineTuneResult fit;
  Vocabulary vocab;
  std::vector<std::string> labels;
  std::size_t copied_rows = 0;
  double train_macro_f1 = 0.0;

  Checkpoint checkpoint() const {
    Checkpoint ck = to_checkpoint(fit.model, vocab, labels);
    ck.metadata["train_macro_f1"] = train_macro_f1;
    ck.metadata["history"] = history_to_json(fit);
    return ck;
  }
};

// Trains the classifier on labeled text. With `embeddings`, rows of known
// tokens start from the pretrained vectors. Without a dev set, training runs
// for max_epochs and keeps the last parameters.
inline SentimentResult train_sentiment(const LabeledDataset& train, const LabeledDataset* dev, const WordEmbeddings* embeddings,
                                       const SentimentConfig& config, std::uint64_t seed) {
  if (train.examples.empty()) throw ConfigError("sentiment dataset is empty");
  for (const auto& ex : train.examples)
    if (ex.label >= train.num_classes()) throw DataError("label " + std::to_string(ex.label) + " out of range");
  SentimentResult r;
  r.labels = train.labels;
  auto init = classifier_with_embeddings(embeddings, train, config.model, seed);
  r.vocab = init.vocab;
  r.copied_rows = init.copied_rows;
  FreezeSchedule schedule;
  if (config.freeze_embedding) schedule.always_frozen.insert("embedding");
  TrainConfig tc = config.train;
  tc.seed = seed;
  const auto enc_train = encode_dataset(train, r.vocab);
  const auto enc_dev = dev ? encode_dataset(*dev, r.vocab) : std::vector<EncodedExample>{};
  r.fit = fine_tune(std::move(init.model), enc_train, enc_dev, schedule, tc);
  r.train_macro_f1 = evaluate_macro_f1(r.fit.model, enc_train);
  return r;
}

}  // namespace emotl
