#pragma once

// Copying parameter groups between checkpoints and models.

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "emotl/checkpoint.hpp"
#include "emotl/errors.hpp"
#include "emotl/model.hpp"
#include "emotl/rng.hpp"
#include "emotl/vocabulary.hpp"

namespace emotl {

// (source group, target group) pairs.
using LayerMap = std::vector<std::pair<std::string, std::string>>;

inline LayerMap identity_map(std::initializer_list<const char*> groups) {
  LayerMap m;
  for (const char* g : groups) m.emplace_back(g, g);
  return m;
}

// Copies every tensor of each mapped source group onto the tensor with the
// same suffix in the target group. All pairs are validated before anything
// is written, so a failed transfer leaves the model untouched.
inline void transfer_weights(const Checkpoint& source, ParamStore& target, const LayerMap& map) {
  std::vector<std::pair<Parameter*, const Tensor*>> plan;
  for (const auto& [src, dst] : map) {
    const auto tensors = source.group(src);
    if (tensors.empty()) throw TransferError("source checkpoint has no group '" + src + "'");
    if (!target.has_group(dst)) throw TransferError("target model has no group '" + dst + "'");
    ParamGroup& group = target.group(dst);
    if (group.params.size() != tensors.size())
      throw TransferError("group '" + dst + "': source has " + std::to_string(tensors.size()) + " tensors, target has " +
                          std::to_string(group.params.size()));
    for (Parameter& p : group.params) {
      const std::string suffix = p.name.substr(dst.size());
      const Tensor* t = source.find(src + suffix);
      if (!t) throw TransferError("group '" + src + "': missing tensor '" + src + suffix + "'");
      if (!t->same_shape(p.value))
        throw TransferError("group '" + dst + "': shape mismatch for '" + p.name + "' (source " + to_string(t->shape()) +
                            ", target " + to_string(p.value.shape()) + ")");
      plan.emplace_back(&p, t);
    }
  }
  for (auto [p, t] : plan) p->value = *t;
}

inline void transfer_weights(const ParamStore& source, ParamStore& target, const LayerMap& map) {
  Checkpoint ck;
  append_params(ck, source);
  transfer_weights(ck, target, map);
}

// Fresh task-specific output layer; every other group is left as is.
inline void replace_output_layer(ClassifierModel& model, std::size_t num_classes, std::uint64_t seed) {
  Rng rng(seed);
  model.reset_output(num_classes, rng);
}

// Switches the concatenation method on or off. The output layer input
// width changes, so it is re-initialized.
inline void set_concat(ClassifierModel& model, bool use_concat, std::uint64_t seed) {
  if (model.config().use_concat == use_concat) return;
  ModelConfig cfg = model.config();
  cfg.use_concat = use_concat;
  cfg.validate();
  model.mutable_config() = cfg;
  replace_output_layer(model, cfg.num_classes, seed);
}

// Classifier whose embedding and LSTM stack come from `lm`. Architecture
// fields are taken from the LM; `cfg` supplies the classes, concat flag and
// regularization. Attention and output start fresh from `seed`.
inline ClassifierModel classifier_from_language_model(const LanguageModel& lm, ModelConfig cfg, std::uint64_t seed) {
  const ModelConfig& lc = lm.config();
  cfg.vocab_size = lc.vocab_size;
  cfg.embedding_dim = lc.embedding_dim;
  cfg.lstm_size = lc.lstm_size;
  cfg.num_lstm_layers = lc.num_lstm_layers;
  cfg.bidirectional = false;
  ClassifierModel model(cfg, seed);
  LayerMap map = identity_map({"embedding", "lstm1"});
  if (lc.num_lstm_layers == 2) map.emplace_back("lstm2", "lstm2");
  transfer_weights(lm, model, map);
  return model;
}

// Copies embedding rows by token from `src` (aligned with `src_vocab`) into
// `table` (aligned with `dst_vocab`). Returns the number of rows copied.
// Rows without a source token keep their current values.
inline std::size_t copy_embedding_rows(const Tensor& src, const Vocabulary& src_vocab, Tensor& table,
                                       const Vocabulary& dst_vocab) {
  if (src.cols() != table.cols())
    throw TransferError("group 'embedding': dimension " + std::to_string(src.cols()) + " vs " + std::to_string(table.cols()));
  if (src.rows() != src_vocab.size()) throw TransferError("group 'embedding': matrix rows do not match its vocabulary");
  std::size_t copied = 0;
  for (std::size_t id = Vocabulary::kReserved; id < dst_vocab.size(); ++id) {
    const std::string& tok = dst_vocab.token(id);
    if (!src_vocab.contains(tok)) continue;
    auto from = src.row_span(src_vocab.id(tok));
    auto to = table.row_span(id);
    std::copy(from.begin(), from.end(), to.begin());
    ++copied;
  }
  return copied;
}

}  // namespace emotl
