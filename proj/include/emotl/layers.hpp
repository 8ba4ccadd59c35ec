#pragma once

// Graph-level building blocks of the classifier: embedding lookup with
// noise and dropout, (bi)LSTM, masked self-attention, softmax output, and
// the missing-word state concatenation.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "emotl/autodiff.hpp"
#include "emotl/errors.hpp"
#include "emotl/rng.hpp"

namespace emotl {

enum class Mode { train, eval };

// B right-padded id sequences of common length T.
struct IdBatch {
  std::vector<std::vector<std::size_t>> ids;  // [B][T]
  Tensor mask;                                // [B×T], 1 = real token
  std::size_t batch() const { return ids.size(); }
  std::size_t steps() const { return ids.empty() ? 0 : ids.front().size(); }
};

inline IdBatch make_id_batch(const std::vector<std::vector<std::size_t>>& sequences, std::size_t pad_id = 0) {
  IdBatch b;
  std::size_t steps = 0;
  for (const auto& s : sequences) steps = std::max(steps, s.size());
  b.ids.assign(sequences.size(), std::vector<std::size_t>(steps, pad_id));
  b.mask = Tensor({sequences.size(), steps});
  for (std::size_t r = 0; r < sequences.size(); ++r)
    for (std::size_t t = 0; t < sequences[r].size(); ++t) {
      b.ids[r][t] = sequences[r][t];
      b.mask.at(r, t) = 1.0;
    }
  return b;
}

struct EmbeddingOptions {
  double noise_std = 0.0;
  double dropout = 0.0;
};

// One [B×W] node per timestep. In train mode adds zero-mean Gaussian noise
// and then applies inverted dropout; eval mode is a pure lookup.
inline std::vector<Var> embed_forward(Var table, const IdBatch& batch, Mode mode, const EmbeddingOptions& opts,
                                      Rng* rng) {
  const std::size_t vocab = table.value().rows();
  const std::size_t width = table.value().cols();
  std::vector<Var> steps;
  steps.reserve(batch.steps());
  const bool noisy = mode == Mode::train && (opts.noise_std > 0.0 || opts.dropout > 0.0);
  if (noisy && !rng) throw ContractViolation("train-mode embedding needs a random generator");
  if (opts.dropout < 0.0 || opts.dropout >= 1.0) throw ConfigError("embedding dropout must be in [0, 1)");
  Graph& g = *table.graph();
  for (std::size_t t = 0; t < batch.steps(); ++t) {
    std::vector<std::size_t> column(batch.batch());
    for (std::size_t r = 0; r < batch.batch(); ++r) {
      column[r] = batch.ids[r][t];
      if (column[r] >= vocab)
        throw DimensionError("token id " + std::to_string(column[r]) + " out of vocabulary of " + std::to_string(vocab));
    }
    Var x = gather_rows(table, column);
    if (noisy) {
      if (opts.noise_std > 0.0) {
        Tensor noise({batch.batch(), width});
        for (double& v : noise.values()) v = opts.noise_std * rng->normal();
        x = add(x, g.constant(std::move(noise)));
      }
      if (opts.dropout > 0.0) {
        Tensor keep({batch.batch(), width});
        const double scale_kept = 1.0 / (1.0 - opts.dropout);
        for (double& v : keep.values()) v = rng->bernoulli(opts.dropout) ? 0.0 : scale_kept;
        x = mul(x, g.constant(std::move(keep)));
      }
    }
    steps.push_back(x);
  }
  return steps;
}

// Inverted dropout applied independently to each timestep node.
inline std::vector<Var> dropout_steps(const std::vector<Var>& steps, double rate, Mode mode, Rng* rng) {
  if (mode != Mode::train || rate <= 0.0 || steps.empty()) return steps;
  if (!rng) throw ContractViolation("train-mode dropout needs a random generator");
  Graph& g = *steps.front().graph();
  std::vector<Var> out;
  const double scale_kept = 1.0 / (1.0 - rate);
  for (const Var& s : steps) {
    Tensor keep({s.rows(), s.cols()});
    for (double& v : keep.values()) v = rng->bernoulli(rate) ? 0.0 : scale_kept;
    out.push_back(mul(s, g.constant(std::move(keep))));
  }
  return out;
}

// Weights of one LSTM direction: w_ih [4L×in], w_hh [4L×L], bias [1×4L],
// gate order input, forget, cell candidate, output.
struct LstmVars {
  Var w_ih;
  Var w_hh;
  Var bias;
  std::size_t hidden() const { return w_hh.value().cols(); }
};

struct LstmOutput {
  std::vector<Var> states;  // h_t per timestep, indexed by position
  Var h_final;
  Var c_final;
};

// Runs one LSTM direction. With `mask`, a padded position keeps the
// previous state, so a reverse pass over right-padded input starts from the
// initial state at each sequence's true end.
inline LstmOutput lstm_forward(const std::vector<Var>& inputs, const LstmVars& w, Var h0, Var c0,
                               const Tensor* mask = nullptr, bool reverse = false) {
  const std::size_t hidden = w.hidden();
  if (w.w_ih.value().rows() != 4 * hidden || w.w_hh.value().rows() != 4 * hidden)
    throw DimensionError("lstm: gate weights must have 4×" + std::to_string(hidden) + " rows");
  if (h0.value().cols() != hidden || c0.value().cols() != hidden)
    throw DimensionError("lstm: initial state width must be " + std::to_string(hidden));
  LstmOutput out;
  out.states.resize(inputs.size());
  Var h = h0, c = c0;
  Graph& g = *h0.graph();
  const std::size_t n = inputs.size();
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t t = reverse ? n - 1 - k : k;
    const Var& x = inputs[t];
    if (x.value().cols() != w.w_ih.value().cols())
      throw DimensionError("lstm: input width " + std::to_string(x.value().cols()) + " does not match weight width " +
                           std::to_string(w.w_ih.value().cols()));
    Var gates = add(linear(x, w.w_ih, w.bias), linear(h, w.w_hh));
    Var in_gate = sigmoid(slice_cols(gates, 0, hidden));
    Var forget_gate = sigmoid(slice_cols(gates, hidden, hidden));
    Var candidate = tanh(slice_cols(gates, 2 * hidden, hidden));
    Var out_gate = sigmoid(slice_cols(gates, 3 * hidden, hidden));
    Var c_new = add(mul(forget_gate, c), mul(in_gate, candidate));
    Var h_new = mul(out_gate, tanh(c_new));
    bool partial = false;
    if (mask) {
      for (std::size_t r = 0; r < mask->rows(); ++r) partial = partial || mask->at(r, t) == 0.0;
    }
    if (partial) {
      Tensor keep({mask->rows(), 1}), hold({mask->rows(), 1});
      for (std::size_t r = 0; r < mask->rows(); ++r) {
        keep[r] = mask->at(r, t);
        hold[r] = 1.0 - keep[r];
      }
      Var keep_v = g.constant(std::move(keep)), hold_v = g.constant(std::move(hold));
      h_new = add(scale_rows(h_new, keep_v), scale_rows(h, hold_v));
      c_new = add(scale_rows(c_new, keep_v), scale_rows(c, hold_v));
    }
    h = h_new;
    c = c_new;
    out.states[t] = h;
  }
  out.h_final = h;
  out.c_final = c;
  return out;
}

inline Var zero_state(Graph& g, std::size_t batch, std::size_t hidden) { return g.constant(Tensor::zeros(batch, hidden)); }

// h_t = forward_t ∥ backward_t, width 2L.
inline std::vector<Var> bilstm_forward(const std::vector<Var>& inputs, const LstmVars& fwd, const LstmVars& bwd,
                                       std::size_t batch, const Tensor* mask = nullptr) {
  if (inputs.empty()) return {};
  Graph& g = *inputs.front().graph();
  LstmOutput f = lstm_forward(inputs, fwd, zero_state(g, batch, fwd.hidden()), zero_state(g, batch, fwd.hidden()), mask, false);
  LstmOutput b = lstm_forward(inputs, bwd, zero_state(g, batch, bwd.hidden()), zero_state(g, batch, bwd.hidden()), mask, true);
  std::vector<Var> out;
  out.reserve(inputs.size());
  for (std::size_t t = 0; t < inputs.size(); ++t) out.push_back(concat_cols({f.states[t], b.states[t]}));
  return out;
}

struct AttentionVars {
  Var weight;  // [1×d]
  Var bias;    // [1×1]
};

struct AttentionResult {
  Var representation;  // r [B×d]
  Var weights;         // a [B×T]
  Var scores;          // e [B×T]
};

// e_t = tanh(W_h h_t + b_h); a = softmax of e over unmasked positions;
// r = Σ a_t h_t.
inline AttentionResult attention_forward(const std::vector<Var>& annotations, const AttentionVars& w, const Tensor& mask) {
  if (annotations.empty()) throw ContractViolation("attention over an empty sequence");
  if (mask.rows() != annotations.front().rows() || mask.cols() != annotations.size())
    throw DimensionError("attention: mask " + to_string(mask.shape()) + " does not match " +
                         std::to_string(annotations.front().rows()) + "×" + std::to_string(annotations.size()) + " annotations");
  std::vector<Var> scores;
  scores.reserve(annotations.size());
  for (const Var& h : annotations) scores.push_back(tanh(linear(h, w.weight, w.bias)));
  AttentionResult out;
  out.scores = concat_cols(scores);
  out.weights = row_softmax(out.scores, &mask);
  Var r;
  for (std::size_t t = 0; t < annotations.size(); ++t) {
    Var term = scale_rows(annotations[t], slice_cols(out.weights, t, 1));
    r = t == 0 ? term : add(r, term);
  }
  out.representation = r;
  return out;
}

// r′ = r ∥ h_implicit where h_implicit is the top-layer state just before
// the placeholder, or the zero initial state when the placeholder opens the
// sequence.
inline Var concat_representation(Var representation, const std::vector<Var>& top_states,
                                 const std::vector<int>& target_index) {
  if (top_states.empty()) throw ContractViolation("concat representation needs hidden states");
  std::vector<int> previous(target_index.size());
  for (std::size_t r = 0; r < target_index.size(); ++r) {
    if (target_index[r] < 0 || static_cast<std::size_t>(target_index[r]) >= top_states.size())
      throw ContractViolation("target index " + std::to_string(target_index[r]) + " outside a sequence of " +
                              std::to_string(top_states.size()) + " steps");
    previous[r] = target_index[r] - 1;
  }
  return concat_cols({representation, select_rows(top_states, previous)});
}

}  // namespace emotl
