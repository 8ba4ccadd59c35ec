#pragma once

// Freeze schedules, the mini-batch training loop and fine-tuning for both
// the classifier and the language model.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "emotl/autodiff.hpp"
#include "emotl/dataset.hpp"
#include "emotl/errors.hpp"
#include "emotl/metrics.hpp"
#include "emotl/model.hpp"
#include "emotl/optim.hpp"
#include "emotl/rng.hpp"

namespace emotl {

// Epochs are 1-based. LSTM groups unfreeze at epoch n, the embedding at k.
struct SguSchedule {
  std::size_t n = 3;
  std::size_t k = 5;

  void validate() const {
    if (!(1 < n && n < k)) throw ConfigError("SGU schedule needs 1 < n < k, got n=" + std::to_string(n) + " k=" + std::to_string(k));
  }
};

enum class FineTuneMode { simple, sgu };

inline FineTuneMode parse_fine_tune_mode(const std::string& s) {
  if (s == "simple") return FineTuneMode::simple;
  if (s == "sgu") return FineTuneMode::sgu;
  throw ConfigError("unknown fine-tuning mode '" + s + "' (expected simple or sgu)");
}

struct FreezeSchedule {
  FineTuneMode mode = FineTuneMode::simple;
  SguSchedule sgu;
  std::set<std::string> always_frozen;  // e.g. the embedding under P-Emb

  static FreezeSchedule simple() { return {}; }
  static FreezeSchedule gradual(std::size_t n, std::size_t k) {
    FreezeSchedule s{FineTuneMode::sgu, {n, k}, {}};
    s.sgu.validate();
    return s;
  }
  void validate() const {
    if (mode == FineTuneMode::sgu) sgu.validate();
  }
};

// group name → frozen
using FreezeState = std::map<std::string, bool>;

inline FreezeState apply_freeze_schedule(std::size_t epoch, const FreezeSchedule& schedule) {
  if (epoch < 1) throw ContractViolation("epochs are numbered from 1");
  schedule.validate();
  FreezeState state;
  for (const char* name : kGroupNames) state[name] = false;
  if (schedule.mode == FineTuneMode::sgu) {
    const bool before_n = epoch < schedule.sgu.n;
    const bool before_k = epoch < schedule.sgu.k;
    state["lstm1"] = state["lstm2"] = before_n;
    state["embedding"] = before_k;
  }
  for (const auto& g : schedule.always_frozen) state[g] = true;
  return state;
}

inline void set_freeze_state(ParamStore& store, const FreezeState& state) {
  for (auto& g : store.groups()) {
    auto it = state.find(g.name);
    g.frozen = it != state.end() && it->second;
  }
}

struct TrainConfig {
  std::size_t batch_size = 64;
  double clip_norm = 0.5;
  std::size_t max_epochs = 20;
  std::size_t patience = 5;
  AdamConfig adam;
  std::uint64_t seed = 1;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
    if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
    if (!(adam.lr > 0.0)) throw ConfigError("learning rate must be positive");
  }
};

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
  ClipResult clip;
};

using StepObserver = std::function<void(const StepRecord&)>;

// Classifier input with ids already encoded.
struct EncodedExample {
  IdList ids;
  int label = -1;
  int target_index = -1;
};

inline std::vector<EncodedExample> encode_dataset(const ClozeDataset& ds, const Vocabulary& vocab) {
  std::vector<EncodedExample> out;
  out.reserve(ds.size());
  for (const auto& ex : ds.examples)
    out.push_back({vocab.encode(ex.tokens), static_cast<int>(ex.label), static_cast<int>(ex.target_index)});
  return out;
}

inline std::vector<EncodedExample> encode_dataset(const LabeledDataset& ds, const Vocabulary& vocab) {
  std::vector<EncodedExample> out;
  out.reserve(ds.size());
  for (const auto& ex : ds.examples) {
    EncodedExample e{vocab.encode(ex.tokens), static_cast<int>(ex.label), -1};
    if (auto idx = find_placeholder(ex.tokens)) e.target_index = static_cast<int>(*idx);
    out.push_back(std::move(e));
  }
  return out;
}

inline ClassifierBatch make_classifier_batch(const std::vector<EncodedExample>& data, const std::vector<std::size_t>& rows) {
  ClassifierBatch b;
  std::vector<IdList> seqs;
  for (std::size_t r : rows) {
    seqs.push_back(data[r].ids);
    b.labels.push_back(data[r].label);
    b.target_index.push_back(data[r].target_index);
  }
  b.ids = make_id_batch(seqs);
  return b;
}

namespace detail {

inline std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  return out;
}

// Clip, then Adam on trainable parameters only. Frozen groups are untouched.
inline ClipResult optimizer_step(ParamStore& store, double clip_norm, AdamState& adam) {
  std::vector<Parameter*> params = store.trainable_params();
  std::vector<Tensor*> grads;
  for (Parameter* p : params) {
    if (!p->has_grad()) p->zero_grad();
    grads.push_back(&p->grad);
  }
  ClipResult clip = clip_global_norm(grads, clip_norm);
  if (!params.empty()) adam.update(params);
  return clip;
}

}  // namespace detail

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // example-weighted mean over batches
  std::optional<double> dev_macro_f1;
  std::map<std::string, std::uint64_t> group_hashes;  // after the epoch
  FreezeState frozen;
};

// One pass over `data` in shuffled mini-batches. The shuffle and the dropout
// stream both derive from (config.seed, epoch).
inline EpochMetrics train_epoch(ClassifierModel& model, const std::vector<EncodedExample>& data, const TrainConfig& config,
                                std::size_t epoch, AdamState& adam, const StepObserver& observer = {}) {
  if (data.empty()) throw ContractViolation("training on an empty dataset");
  config.validate();
  Rng root = Rng(config.seed).split(epoch);
  Rng shuffle_rng = root.split(1);
  Rng noise_rng = root.split(2);
  const auto batches = detail::shuffled_batches(data.size(), config.batch_size, shuffle_rng);
  EpochMetrics m;
  m.epoch = epoch;
  m.frozen = model.frozen_state();
  double loss_sum = 0.0;
  std::size_t step = 0;
  for (const auto& rows : batches) {
    const ClassifierBatch batch = make_classifier_batch(data, rows);
    model.zero_grad();
    Graph g;
    auto fwd = classifier_forward(g, model, batch, Mode::train, &noise_rng, true);
    Var loss = cross_entropy(fwd.logits, batch.labels);
    const double lv = loss.value()[0];
    g.backward(loss);
    StepRecord rec{epoch, ++step, lv, detail::optimizer_step(model, config.clip_norm, adam)};
    if (observer) observer(rec);
    loss_sum += lv * static_cast<double>(rows.size());
  }
  m.train_loss = loss_sum / static_cast<double>(data.size());
  m.group_hashes = model.group_hashes();
  return m;
}

// Eval-mode posteriors, one [C] vector per example, in batches.
inline std::vector<std::vector<double>> predict_posteriors(ClassifierModel& model, const std::vector<EncodedExample>& data,
                                                           std::size_t batch_size = 64) {
  std::vector<std::vector<double>> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); i += batch_size) {
    std::vector<std::size_t> rows;
    for (std::size_t r = i; r < std::min(data.size(), i + batch_size); ++r) rows.push_back(r);
    Graph g;
    auto fwd = classifier_forward(g, model, make_classifier_batch(data, rows), Mode::eval, nullptr, false);
    const Tensor& p = fwd.probs.value();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      auto row = p.row_span(r);
      out.emplace_back(row.begin(), row.end());
    }
  }
  return out;
}

inline std::vector<std::size_t> predict_labels(ClassifierModel& model, const std::vector<EncodedExample>& data) {
  std::vector<std::size_t> out;
  for (const auto& p : predict_posteriors(model, data)) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < p.size(); ++c)
      if (p[c] > p[best]) best = c;
    out.push_back(best);
  }
  return out;
}

inline std::vector<std::size_t> gold_labels(const std::vector<EncodedExample>& data) {
  std::vector<std::size_t> out;
  for (const auto& e : data) {
    if (e.label < 0) throw ContractViolation("example without a gold label");
    out.push_back(static_cast<std::size_t>(e.label));
  }
  return out;
}

inline double evaluate_macro_f1(ClassifierModel& model, const std::vector<EncodedExample>& data) {
  return macro_f1(predict_labels(model, data), gold_labels(data), model.config().num_classes);
}

struct FineTuneResult {
  ClassifierModel model;  // best-dev (or last, without a dev set) parameters
  std::size_t best_epoch = 0;
  double best_dev_macro_f1 = 0.0;
  std::map<std::string, std::uint64_t> initial_hashes;
  std::vector<EpochMetrics> history;
};

// Trains with the freeze schedule applied at the start of every epoch and
// early-stops on dev macro-F1. Under SGU no stop happens before epoch k, so
// every group gets to train.
inline FineTuneResult fine_tune(ClassifierModel model, const std::vector<EncodedExample>& train,
                                const std::vector<EncodedExample>& dev, const FreezeSchedule& schedule,
                                const TrainConfig& config, const StepObserver& observer = {}) {
  config.validate();
  schedule.validate();
  FineTuneResult result;
  result.initial_hashes = model.group_hashes();
  AdamState adam(config.adam);
  std::size_t since_best = 0;
  bool have_best = false;
  const std::size_t min_epochs = schedule.mode == FineTuneMode::sgu ? schedule.sgu.k : 1;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    set_freeze_state(model, apply_freeze_schedule(epoch, schedule));
    EpochMetrics m = train_epoch(model, train, config, epoch, adam, observer);
    if (!dev.empty()) {
      m.dev_macro_f1 = evaluate_macro_f1(model, dev);
      if (!have_best || *m.dev_macro_f1 > result.best_dev_macro_f1) {
        have_best = true;
        result.best_dev_macro_f1 = *m.dev_macro_f1;
        result.best_epoch = epoch;
        result.model = model;
        since_best = 0;
      } else {
        ++since_best;
      }
    }
    result.history.push_back(std::move(m));
    if (!dev.empty() && since_best >= config.patience && epoch >= min_epochs) break;
  }
  if (dev.empty()) {
    result.model = model;
    result.best_epoch = result.history.size();
  }
  set_freeze_state(result.model, {});
  return result;
}

inline nlohmann::json history_to_json(const FineTuneResult& r) {
  nlohmann::json h = nlohmann::json::array();
  for (const auto& m : r.history) {
    nlohmann::json e{{"epoch", m.epoch}, {"train_loss", m.train_loss}, {"frozen", m.frozen}};
    if (m.dev_macro_f1) e["dev_macro_f1"] = *m.dev_macro_f1;
    nlohmann::json hashes = nlohmann::json::object();
    for (const auto& [g, v] : m.group_hashes) hashes[g] = v;
    e["group_hashes"] = hashes;
    h.push_back(std::move(e));
  }
  return h;
}

// ------------------------------------------------------------ language model

// Next-token targets in the step-major row order of lm_logits; the final
// position and padding have no target.
inline std::vector<int> lm_targets(const IdBatch& batch) {
  const std::size_t b = batch.batch(), t = batch.steps();
  std::vector<int> out(b * t, -1);
  for (std::size_t s = 0; s + 1 < t; ++s)
    for (std::size_t r = 0; r < b; ++r)
      if (batch.mask.at(r, s + 1) != 0.0) out[s * b + r] = static_cast<int>(batch.ids[r][s + 1]);
  return out;
}

inline std::vector<IdList> encode_corpus(const std::vector<TokenList>& corpus, const Vocabulary& vocab, std::size_t min_tokens = 2) {
  std::vector<IdList> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].size() < min_tokens)
      throw DataError("corpus", i + 1, "line has " + std::to_string(corpus[i].size()) + " tokens, need at least " + std::to_string(min_tokens));
    out.push_back(vocab.encode(corpus[i]));
  }
  return out;
}

inline EpochMetrics train_lm_epoch(LanguageModel& lm, const std::vector<IdList>& data, const TrainConfig& config,
                                   std::size_t epoch, AdamState& adam, const StepObserver& observer = {}) {
  if (data.empty()) throw ContractViolation("training on an empty corpus");
  config.validate();
  Rng root = Rng(config.seed).split(epoch);
  Rng shuffle_rng = root.split(1);
  Rng noise_rng = root.split(2);
  const auto batches = detail::shuffled_batches(data.size(), config.batch_size, shuffle_rng);
  EpochMetrics m;
  m.epoch = epoch;
  m.frozen = lm.frozen_state();
  double nll = 0.0;
  std::size_t events = 0, step = 0;
  for (const auto& rows : batches) {
    std::vector<IdList> seqs;
    for (std::size_t r : rows) seqs.push_back(data[r]);
    const IdBatch batch = make_id_batch(seqs);
    const auto targets = lm_targets(batch);
    std::size_t n = 0;
    for (int t : targets) n += t >= 0;
    if (n == 0) continue;
    lm.zero_grad();
    Graph g;
    Var loss = cross_entropy(lm_logits(g, lm, batch, Mode::train, &noise_rng, true), targets);
    const double lv = loss.value()[0];
    g.backward(loss);
    StepRecord rec{epoch, ++step, lv, detail::optimizer_step(lm, config.clip_norm, adam)};
    if (observer) observer(rec);
    nll += lv * static_cast<double>(n);
    events += n;
  }
  if (events == 0) throw ContractViolation("corpus has no next-token events");
  m.train_loss = nll / static_cast<double>(events);
  m.group_hashes = lm.group_hashes();
  return m;
}

struct LmFineTuneResult {
  std::map<std::string, std::uint64_t> initial_hashes;
  std::vector<EpochMetrics> history;
};

// Continues the next-token objective on task text for `config.max_epochs`
// epochs under a freeze schedule.
inline LmFineTuneResult fine_tune_lm(LanguageModel& lm, const std::vector<IdList>& data, const FreezeSchedule& schedule,
                                     const TrainConfig& config, const StepObserver& observer = {}) {
  config.validate();
  schedule.validate();
  LmFineTuneResult r;
  r.initial_hashes = lm.group_hashes();
  AdamState adam(config.adam);
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    set_freeze_state(lm, apply_freeze_schedule(epoch, schedule));
    r.history.push_back(train_lm_epoch(lm, data, config, epoch, adam, observer));
  }
  set_freeze_state(lm, {});
  return r;
}

}  // namespace emotl
