#pragma once

// Finite-difference checks of every layer's analytic gradients on small
// random instances.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "emotl/autodiff.hpp"
#include "emotl/gradcheck.hpp"
#include "emotl/layers.hpp"
#include "emotl/model.hpp"
#include "emotl/rng.hpp"

namespace emotl {

inline constexpr const char* kGradcheckLayers[] = {"embedding", "lstm", "bilstm", "attention", "output", "concat"};

struct GradcheckOptions {
  std::size_t seeds = 20;
  double tolerance = 1e-4;
  double eps = 1e-5;
  std::string inject_fault;  // layer whose backward gets a sign flip
};

struct LayerGradcheck {
  std::string layer;
  std::size_t seeds = 0;
  double max_relative_error = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<LayerGradcheck> layers;
  bool passed() const {
    return std::all_of(layers.begin(), layers.end(), [](const LayerGradcheck& l) { return l.passed; });
  }
};

namespace detail {

// Identity forward; backward passes the gradient through, negated when
// `flip` is set.
inline Var gradient_gate(Var x, bool flip) {
  if (!flip) return x;
  Graph& g = *x.graph();
  const std::size_t ix = x.id();
  Tensor out = x.value();
  return g.op(std::move(out), {ix}, [ix](Graph& g, std::size_t self) {
    Tensor upstream = g.grad_buffer(self);
    accumulate(g, ix, [&](Tensor& gx) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] -= upstream[i];
    });
  });
}

inline Tensor random_tensor(Shape shape, double sd, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = sd * rng.normal();
  return t;
}

// Right-padded mask: row 0 full length, later rows shorter but non-empty.
inline Tensor random_mask(std::size_t batch, std::size_t steps, Rng& rng) {
  Tensor m({batch, steps});
  for (std::size_t r = 0; r < batch; ++r) {
    const std::size_t len = r == 0 ? steps : 1 + rng.below(steps);
    for (std::size_t t = 0; t < len; ++t) m.at(r, t) = 1.0;
  }
  return m;
}

// Σ x ⊙ R for a fixed random R, so every output coordinate matters.
inline Var projected_sum(Var x, const Tensor& r) { return sum(mul(x, x.graph()->constant(r))); }

struct GradcheckCase {
  std::vector<std::unique_ptr<Parameter>> owned;
  std::vector<Parameter*> params;
  std::shared_ptr<ClassifierModel> model;  // owns params for whole-model cases
  std::function<Var(Graph&, bool flip)> loss;

  Parameter& add(std::string name, Tensor value) {
    owned.push_back(std::make_unique<Parameter>(std::move(name), std::move(value)));
    params.push_back(owned.back().get());
    return *owned.back();
  }
};

inline std::vector<Var> bind_steps(Graph& g, const std::vector<Parameter*>& steps) {
  std::vector<Var> out;
  for (Parameter* p : steps) out.push_back(g.param(*p));
  return out;
}

inline LstmVars bind_lstm_params(Graph& g, Parameter& ih, Parameter& hh, Parameter& b, bool flip) {
  return {gradient_gate(g.param(ih), flip), g.param(hh), g.param(b)};
}

inline std::shared_ptr<GradcheckCase> make_case(const std::string& layer, std::uint64_t seed) {
  auto c = std::make_shared<GradcheckCase>();
  std::uint64_t salt = 0;
  for (char ch : layer) salt = salt * 131 + static_cast<unsigned char>(ch);
  Rng rng = Rng(seed).split(salt);
  const std::size_t b = 2, t = 4, in = 3, hid = 3, classes = 3;
  Tensor mask = random_mask(b, t, rng);

  if (layer == "embedding") {
    const std::size_t vocab = 6;
    Parameter& table = c->add("embedding.weight", random_tensor({vocab, in}, 0.5, rng));
    std::vector<std::vector<std::size_t>> seqs(b);
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t k = 0; k < t; ++k) seqs[r].push_back(rng.below(vocab));
    IdBatch batch = make_id_batch(seqs);
    std::vector<Tensor> proj;
    for (std::size_t k = 0; k < t; ++k) proj.push_back(random_tensor({b, in}, 1.0, rng));
    c->loss = [&table, batch, proj](Graph& g, bool flip) {
      Rng unused(0);
      auto steps = embed_forward(gradient_gate(g.param(table), flip), batch, Mode::train, {0.0, 0.0}, &unused);
      Var total;
      for (std::size_t k = 0; k < steps.size(); ++k) {
        Var term = projected_sum(tanh(steps[k]), proj[k]);
        total = k == 0 ? term : add(total, term);
      }
      return total;
    };
    return c;
  }

  if (layer == "lstm" || layer == "bilstm") {
    const bool bi = layer == "bilstm";
    std::vector<Parameter*> xs;
    for (std::size_t k = 0; k < t; ++k) xs.push_back(&c->add("x" + std::to_string(k), random_tensor({b, in}, 1.0, rng)));
    Parameter& ih = c->add("weight_ih", random_tensor({4 * hid, in}, 0.5, rng));
    Parameter& hh = c->add("weight_hh", random_tensor({4 * hid, hid}, 0.5, rng));
    Parameter& bias = c->add("bias", random_tensor({1, 4 * hid}, 0.5, rng));
    Parameter* ih_r = nullptr;
    Parameter* hh_r = nullptr;
    Parameter* bias_r = nullptr;
    Parameter* h0 = nullptr;
    Parameter* c0 = nullptr;
    if (bi) {
      ih_r = &c->add("weight_ih_reverse", random_tensor({4 * hid, in}, 0.5, rng));
      hh_r = &c->add("weight_hh_reverse", random_tensor({4 * hid, hid}, 0.5, rng));
      bias_r = &c->add("bias_reverse", random_tensor({1, 4 * hid}, 0.5, rng));
    } else {
      h0 = &c->add("h0", random_tensor({b, hid}, 0.5, rng));
      c0 = &c->add("c0", random_tensor({b, hid}, 0.5, rng));
    }
    const std::size_t width = bi ? 2 * hid : hid;
    std::vector<Tensor> proj;
    for (std::size_t k = 0; k < t; ++k) proj.push_back(random_tensor({b, width}, 1.0, rng));
    const Tensor final_proj = random_tensor({b, hid}, 1.0, rng);
    c->loss = [=, &ih, &hh, &bias](Graph& g, bool flip) {
      auto inputs = bind_steps(g, xs);
      LstmVars fwd = bind_lstm_params(g, ih, hh, bias, flip);
      std::vector<Var> states;
      Var extra;
      if (bi) {
        LstmVars bwd = bind_lstm_params(g, *ih_r, *hh_r, *bias_r, false);
        states = bilstm_forward(inputs, fwd, bwd, b, &mask);
      } else {
        LstmOutput o = lstm_forward(inputs, fwd, g.param(*h0), g.param(*c0), &mask, false);
        states = o.states;
        extra = projected_sum(o.c_final, final_proj);
      }
      Var total = extra;
      for (std::size_t k = 0; k < states.size(); ++k) {
        Var term = projected_sum(states[k], proj[k]);
        total = total.valid() ? add(total, term) : term;
      }
      return total;
    };
    return c;
  }

  if (layer == "attention") {
    const std::size_t d = 4;
    std::vector<Parameter*> hs;
    for (std::size_t k = 0; k < t; ++k) hs.push_back(&c->add("h" + std::to_string(k), random_tensor({b, d}, 1.0, rng)));
    Parameter& w = c->add("attention.weight", random_tensor({1, d}, 0.7, rng));
    Parameter& bias = c->add("attention.bias", random_tensor({1, 1}, 0.5, rng));
    const Tensor proj = random_tensor({b, d}, 1.0, rng);
    const Tensor weight_proj = random_tensor({b, t}, 1.0, rng);
    c->loss = [=, &w, &bias](Graph& g, bool flip) {
      AttentionResult a = attention_forward(bind_steps(g, hs), {gradient_gate(g.param(w), flip), g.param(bias)}, mask);
      return add(projected_sum(a.representation, proj), projected_sum(a.weights, weight_proj));
    };
    return c;
  }

  if (layer == "output") {
    const std::size_t d = 4;
    Parameter& r = c->add("r", random_tensor({b, d}, 1.0, rng));
    Parameter& w = c->add("output.weight", random_tensor({classes, d}, 0.7, rng));
    Parameter& bias = c->add("output.bias", random_tensor({1, classes}, 0.5, rng));
    std::vector<int> labels;
    for (std::size_t i = 0; i < b; ++i) labels.push_back(static_cast<int>(rng.below(classes)));
    const Tensor proj = random_tensor({b, classes}, 1.0, rng);
    c->loss = [=, &r, &w, &bias](Graph& g, bool flip) {
      Var logits = linear(g.param(r), gradient_gate(g.param(w), flip), g.param(bias));
      return add(cross_entropy(logits, labels), projected_sum(row_softmax(logits), proj));
    };
    return c;
  }

  if (layer == "concat") {
    // Whole unidirectional classifier with the concatenation method, in
    // eval mode so the loss is deterministic.
    ModelConfig cfg;
    cfg.vocab_size = 7;
    cfg.embedding_dim = in;
    cfg.lstm_size = hid;
    cfg.num_lstm_layers = 2;
    cfg.num_classes = classes;
    cfg.use_concat = true;
    auto model = std::make_shared<ClassifierModel>(cfg, rng.next());
    ClassifierBatch batch;
    std::vector<std::vector<std::size_t>> seqs(b);
    for (std::size_t r = 0; r < b; ++r) {
      std::size_t len = 0;
      for (std::size_t k = 0; k < t; ++k) len += mask.at(r, k) != 0.0;
      for (std::size_t k = 0; k < len; ++k) seqs[r].push_back(1 + rng.below(cfg.vocab_size - 1));
      batch.target_index.push_back(static_cast<int>(rng.below(len)));
      batch.labels.push_back(static_cast<int>(rng.below(classes)));
    }
    batch.ids = make_id_batch(seqs);
    c->model = model;
    c->params = model->all_params();
    // The output layer sits behind classifier_forward, so a fault here flips
    // the gradient of the logits instead.
    c->loss = [model, batch](Graph& g, bool flip) {
      auto fwd = classifier_forward(g, *model, batch, Mode::eval, nullptr, true);
      return cross_entropy(detail::gradient_gate(fwd.logits, flip), batch.labels);
    };
    return c;
  }

  throw ConfigError("no gradient check for layer '" + layer + "'");
}

}  // namespace detail

inline LayerGradcheck gradcheck_layer(const std::string& layer, const GradcheckOptions& opts) {
  LayerGradcheck res{layer, 0, 0.0, true};
  const bool flip = opts.inject_fault == layer;
  for (std::size_t s = 0; s < opts.seeds; ++s) {
    auto c = detail::make_case(layer, 1000 + s);
    const std::vector<Parameter*>& params = c->params;
    auto loss_value = [&]() {
      Graph g;
      return c->loss(g, flip).value()[0];
    };
    for (Parameter* p : params) p->zero_grad();
    Graph g;
    GradientSet analytic = g.backward(c->loss(g, flip));
    GradientSet numeric = finite_difference_gradient(loss_value, params, opts.eps);
    res.max_relative_error = std::max(res.max_relative_error, max_relative_error(analytic, numeric));
    ++res.seeds;
  }
  res.passed = res.max_relative_error < opts.tolerance;
  return res;
}

inline GradcheckReport run_gradcheck_suite(const GradcheckOptions& opts = {}) {
  GradcheckReport report;
  for (const char* layer : kGradcheckLayers) report.layers.push_back(gradcheck_layer(layer, opts));
  return report;
}

}  // namespace emotl
