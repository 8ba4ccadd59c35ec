#pragma once

// Parameter groups and the two network types: the LSTM + self-attention
// classifier and the next-token language model.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "emotl/autodiff.hpp"
#include "emotl/errors.hpp"
#include "emotl/layers.hpp"
#include "emotl/rng.hpp"
#include "emotl/vocabulary.hpp"

namespace emotl {

inline constexpr const char* kGroupNames[] = {"embedding", "lstm1", "lstm2", "attention", "output"};

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embedding_dim = 32;
  std::size_t lstm_size = 64;
  std::size_t num_lstm_layers = 2;
  bool bidirectional = false;
  std::size_t num_classes = 6;
  double embedding_noise = 0.1;
  double embedding_dropout = 0.2;
  double lstm_dropout = 0.4;
  bool use_concat = false;

  void validate() const {
    if (vocab_size == 0 || embedding_dim == 0 || lstm_size == 0 || num_classes == 0)
      throw ConfigError("model dimensions must be positive");
    if (num_lstm_layers != 1 && num_lstm_layers != 2) throw ConfigError("num_lstm_layers must be 1 or 2");
    for (double p : {embedding_dropout, lstm_dropout})
      if (p < 0.0 || p >= 1.0) throw ConfigError("dropout rates must lie in [0, 1)");
    if (embedding_noise < 0.0) throw ConfigError("embedding noise must be non-negative");
    if (bidirectional && use_concat) throw ConfigError("the concatenation method requires a unidirectional LSTM");
  }

  // Width of the LSTM annotations fed to attention.
  std::size_t annotation_width() const { return bidirectional ? 2 * lstm_size : lstm_size; }
  // Width of the representation fed to the output layer.
  std::size_t representation_width() const { return annotation_width() + (use_concat ? lstm_size : 0); }

  bool operator==(const ModelConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"vocab_size", c.vocab_size},           {"embedding_dim", c.embedding_dim},
       {"lstm_size", c.lstm_size},             {"num_lstm_layers", c.num_lstm_layers},
       {"bidirectional", c.bidirectional},     {"num_classes", c.num_classes},
       {"embedding_noise", c.embedding_noise}, {"embedding_dropout", c.embedding_dropout},
       {"lstm_dropout", c.lstm_dropout},       {"use_concat", c.use_concat}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("vocab_size").get_to(c.vocab_size);
  j.at("embedding_dim").get_to(c.embedding_dim);
  j.at("lstm_size").get_to(c.lstm_size);
  j.at("num_lstm_layers").get_to(c.num_lstm_layers);
  j.at("bidirectional").get_to(c.bidirectional);
  j.at("num_classes").get_to(c.num_classes);
  j.at("embedding_noise").get_to(c.embedding_noise);
  j.at("embedding_dropout").get_to(c.embedding_dropout);
  j.at("lstm_dropout").get_to(c.lstm_dropout);
  j.at("use_concat").get_to(c.use_concat);
}

struct ParamGroup {
  std::string name;
  std::vector<Parameter> params;
  bool frozen = false;

  Parameter* find(const std::string& full_name) {
    for (auto& p : params)
      if (p.name == full_name) return &p;
    return nullptr;
  }
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& p : params) h = hash_tensor(p.value, h);
    return h;
  }
};

// Uniform in [-bound, bound].
inline Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

// Ordered set of named parameter groups shared by both model kinds.
class ParamStore {
 public:
  ParamGroup& group(const std::string& name) {
    for (auto& g : groups_)
      if (g.name == name) return g;
    throw ContractViolation("no parameter group '" + name + "'");
  }
  const ParamGroup& group(const std::string& name) const { return const_cast<ParamStore*>(this)->group(name); }
  bool has_group(const std::string& name) const {
    for (const auto& g : groups_)
      if (g.name == name) return true;
    return false;
  }
  std::vector<ParamGroup>& groups() { return groups_; }
  const std::vector<ParamGroup>& groups() const { return groups_; }

  Parameter& param(const std::string& full_name) {
    for (auto& g : groups_)
      if (Parameter* p = g.find(full_name)) return *p;
    throw ContractViolation("no parameter '" + full_name + "'");
  }
  const Parameter& param(const std::string& full_name) const { return const_cast<ParamStore*>(this)->param(full_name); }

  std::vector<Parameter*> all_params() {
    std::vector<Parameter*> out;
    for (auto& g : groups_)
      for (auto& p : g.params) out.push_back(&p);
    return out;
  }
  std::vector<Parameter*> trainable_params() {
    std::vector<Parameter*> out;
    for (auto& g : groups_)
      if (!g.frozen)
        for (auto& p : g.params) out.push_back(&p);
    return out;
  }
  void zero_grad() {
    for (Parameter* p : all_params()) p->zero_grad();
  }
  std::map<std::string, std::uint64_t> group_hashes() const {
    std::map<std::string, std::uint64_t> out;
    for (const auto& g : groups_) out[g.name] = g.hash();
    return out;
  }
  std::map<std::string, bool> frozen_state() const {
    std::map<std::string, bool> out;
    for (const auto& g : groups_) out[g.name] = g.frozen;
    return out;
  }

  // Binds a parameter into `g`, trainable unless its group is frozen or
  // gradients are not wanted.
  Var bind(Graph& g, const std::string& full_name, bool with_grad) {
    for (auto& grp : groups_)
      if (Parameter* p = grp.find(full_name)) return g.param(*p, with_grad && !grp.frozen);
    throw ContractViolation("no parameter '" + full_name + "'");
  }

 protected:
  ParamGroup& add_group(const std::string& name) {
    groups_.push_back(ParamGroup{name, {}, false});
    return groups_.back();
  }

  static void add_lstm_direction(ParamGroup& grp, std::size_t in, std::size_t hidden, const std::string& suffix, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    grp.params.emplace_back(grp.name + ".weight_ih" + suffix, uniform_tensor({4 * hidden, in}, bound, rng));
    grp.params.emplace_back(grp.name + ".weight_hh" + suffix, uniform_tensor({4 * hidden, hidden}, bound, rng));
    grp.params.emplace_back(grp.name + ".bias" + suffix, uniform_tensor({1, 4 * hidden}, bound, rng));
  }

  static Tensor embedding_init(std::size_t vocab, std::size_t dim, Rng& rng) {
    Tensor t({vocab, dim});
    const double sd = 1.0 / std::sqrt(static_cast<double>(dim));
    for (std::size_t r = 1; r < vocab; ++r)
      for (std::size_t c = 0; c < dim; ++c) t.at(r, c) = sd * rng.normal();
    return t;  // row 0 (<pad>) stays zero
  }

  std::vector<ParamGroup> groups_;
};

// Stacked LSTM over embedded steps; returns per-layer annotations.
struct LstmStack {
  std::vector<std::vector<Var>> layers;
  const std::vector<Var>& top() const { return layers.back(); }
};

inline LstmVars bind_lstm(ParamStore& store, Graph& g, const std::string& group, const std::string& suffix, bool with_grad) {
  return {store.bind(g, group + ".weight_ih" + suffix, with_grad), store.bind(g, group + ".weight_hh" + suffix, with_grad),
          store.bind(g, group + ".bias" + suffix, with_grad)};
}

inline LstmStack run_lstm_stack(ParamStore& store, const ModelConfig& cfg, Graph& g, const std::vector<Var>& embedded,
                                const IdBatch& batch, Mode mode, Rng* rng, bool with_grad) {
  LstmStack out;
  std::vector<Var> input = embedded;
  for (std::size_t layer = 1; layer <= cfg.num_lstm_layers; ++layer) {
    const std::string name = "lstm" + std::to_string(layer);
    if (layer > 1) input = dropout_steps(input, cfg.lstm_dropout, mode, rng);
    std::vector<Var> states;
    LstmVars fwd = bind_lstm(store, g, name, "", with_grad);
    if (cfg.bidirectional) {
      LstmVars bwd = bind_lstm(store, g, name, "_reverse", with_grad);
      states = bilstm_forward(input, fwd, bwd, batch.batch(), &batch.mask);
    } else {
      Var h0 = zero_state(g, batch.batch(), cfg.lstm_size);
      Var c0 = zero_state(g, batch.batch(), cfg.lstm_size);
      states = lstm_forward(input, fwd, h0, c0, &batch.mask, false).states;
    }
    out.layers.push_back(states);
    input = std::move(states);
  }
  return out;
}

// Embedding → 1–2 layer (bi)LSTM → self-attention → [concat] → softmax.
class ClassifierModel : public ParamStore {
 public:
  ClassifierModel() = default;
  ClassifierModel(const ModelConfig& cfg, std::uint64_t seed) : config_(cfg) {
    cfg.validate();
    Rng rng(seed);
    add_group("embedding").params.emplace_back("embedding.weight", embedding_init(cfg.vocab_size, cfg.embedding_dim, rng));
    std::size_t in = cfg.embedding_dim;
    for (std::size_t layer = 1; layer <= 2; ++layer) {
      ParamGroup& grp = add_group("lstm" + std::to_string(layer));
      if (layer > cfg.num_lstm_layers) continue;
      add_lstm_direction(grp, in, cfg.lstm_size, "", rng);
      if (cfg.bidirectional) add_lstm_direction(grp, in, cfg.lstm_size, "_reverse", rng);
      in = cfg.annotation_width();
    }
    const std::size_t d = cfg.annotation_width();
    ParamGroup& att = add_group("attention");
    const double att_bound = 1.0 / std::sqrt(static_cast<double>(d));
    att.params.emplace_back("attention.weight", uniform_tensor({1, d}, att_bound, rng));
    att.params.emplace_back("attention.bias", uniform_tensor({1, 1}, att_bound, rng));
    add_group("output");
    reset_output(cfg.num_classes, rng);
  }

  const ModelConfig& config() const { return config_; }
  ModelConfig& mutable_config() { return config_; }

  // Fresh output layer for `num_classes` classes over the current
  // representation width, uniform in [-1/√d, 1/√d].
  void reset_output(std::size_t num_classes, Rng& rng) {
    if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
    config_.num_classes = num_classes;
    const std::size_t d = config_.representation_width();
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    ParamGroup& out = group("output");
    out.params.clear();
    out.params.emplace_back("output.weight", uniform_tensor({num_classes, d}, bound, rng));
    out.params.emplace_back("output.bias", uniform_tensor({1, num_classes}, bound, rng));
  }

 private:
  ModelConfig config_;
};

// Next-token model: embedding → unidirectional LSTM stack → vocabulary softmax.
class LanguageModel : public ParamStore {
 public:
  LanguageModel() = default;
  LanguageModel(const ModelConfig& cfg_in, std::uint64_t seed) : config_(cfg_in) {
    config_.bidirectional = false;
    config_.use_concat = false;
    config_.num_classes = config_.vocab_size;
    config_.validate();
    Rng rng(seed);
    add_group("embedding").params.emplace_back("embedding.weight", embedding_init(config_.vocab_size, config_.embedding_dim, rng));
    std::size_t in = config_.embedding_dim;
    for (std::size_t layer = 1; layer <= 2; ++layer) {
      ParamGroup& grp = add_group("lstm" + std::to_string(layer));
      if (layer > config_.num_lstm_layers) continue;
      add_lstm_direction(grp, in, config_.lstm_size, "", rng);
      in = config_.lstm_size;
    }
    ParamGroup& out = add_group("output");
    const double bound = 1.0 / std::sqrt(static_cast<double>(config_.lstm_size));
    out.params.emplace_back("output.weight", uniform_tensor({config_.vocab_size, config_.lstm_size}, bound, rng));
    out.params.emplace_back("output.bias", uniform_tensor({1, config_.vocab_size}, bound, rng));
  }

  const ModelConfig& config() const { return config_; }

 private:
  ModelConfig config_;
};

// ------------------------------------------------------------------ forward

struct ClassifierBatch {
  IdBatch ids;
  std::vector<int> labels;        // -1 when unknown
  std::vector<int> target_index;  // -1 when the example has no placeholder
};

struct ClassifierGraph {
  Var logits;         // [B×C]
  Var probs;          // [B×C]
  AttentionResult attention;
  Var representation;  // r or r′
  LstmStack lstm;
};

// Builds the classifier forward pass on `g`. `rng` is required in train mode.
inline ClassifierGraph classifier_forward(Graph& g, ClassifierModel& model, const ClassifierBatch& batch, Mode mode,
                                          Rng* rng, bool with_grad) {
  const ModelConfig& cfg = model.config();
  if (batch.ids.steps() == 0) throw ContractViolation("classifier input has no tokens");
  Var table = model.bind(g, "embedding.weight", with_grad);
  auto embedded = embed_forward(table, batch.ids, mode, {cfg.embedding_noise, cfg.embedding_dropout}, rng);
  ClassifierGraph out;
  out.lstm = run_lstm_stack(model, cfg, g, embedded, batch.ids, mode, rng, with_grad);
  out.attention = attention_forward(out.lstm.top(),
                                    {model.bind(g, "attention.weight", with_grad), model.bind(g, "attention.bias", with_grad)},
                                    batch.ids.mask);
  out.representation = out.attention.representation;
  if (cfg.use_concat) {
    for (std::size_t r = 0; r < batch.target_index.size(); ++r) {
      const int t = batch.target_index[r];
      if (t < 0 || batch.ids.mask.at(r, static_cast<std::size_t>(t)) == 0.0)
        throw ContractViolation("concatenation needs a placeholder inside every sequence");
    }
    out.representation = concat_representation(out.representation, out.lstm.top(), batch.target_index);
  }
  out.logits = linear(out.representation, model.bind(g, "output.weight", with_grad), model.bind(g, "output.bias", with_grad));
  out.probs = row_softmax(out.logits);
  return out;
}

struct ClassifierPrediction {
  Tensor probs;                     // [1×C]
  Tensor attention;                 // [1×N]
  Tensor representation;            // [1×d]
  std::vector<Tensor> top_states;   // N × [1×d]
};

// Eval-mode forward of a single sequence.
inline ClassifierPrediction classify(ClassifierModel& model, const IdList& ids, int target_index = -1) {
  Graph g;
  ClassifierBatch b{make_id_batch({ids}), {-1}, {target_index}};
  auto fwd = classifier_forward(g, model, b, Mode::eval, nullptr, false);
  ClassifierPrediction p{fwd.probs.value(), fwd.attention.weights.value(), fwd.representation.value(), {}};
  for (const Var& h : fwd.lstm.top()) p.top_states.push_back(h.value());
  return p;
}

// Next-token logits for every position: rows ordered step-major
// (row t·B + b is step t of sequence b).
inline Var lm_logits(Graph& g, LanguageModel& lm, const IdBatch& batch, Mode mode, Rng* rng, bool with_grad) {
  const ModelConfig& cfg = lm.config();
  if (batch.steps() == 0) throw ContractViolation("language model input is empty");
  Var table = lm.bind(g, "embedding.weight", with_grad);
  auto embedded = embed_forward(table, batch, mode, {cfg.embedding_noise, cfg.embedding_dropout}, rng);
  LstmStack stack = run_lstm_stack(lm, cfg, g, embedded, batch, mode, rng, with_grad);
  return linear(concat_rows(stack.top()), lm.bind(g, "output.weight", with_grad), lm.bind(g, "output.bias", with_grad));
}

// Row t is the distribution over the token following position t.
inline Tensor lm_forward(LanguageModel& lm, const IdList& ids) {
  if (ids.empty()) throw ContractViolation("language model input is empty");
  Graph g;
  Var logits = lm_logits(g, lm, make_id_batch({ids}), Mode::eval, nullptr, false);
  return row_softmax(logits).value();
}

}  // namespace emotl
