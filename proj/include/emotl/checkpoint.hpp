#pragma once

// Named-tensor checkpoint file:
//
//   "NTCK"                      4 bytes magic
//   version                     uint32 LE
//   metadata length             uint64 LE, then that many bytes of UTF-8 JSON
//   tensor records until EOF:
//     name length               uint32 LE, then the name bytes
//     rank                      uint32 LE
//     extents                   rank × uint64 LE
//     values                    float32 LE (IEEE-754), row-major

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "emotl/errors.hpp"
#include "emotl/model.hpp"
#include "emotl/tensor.hpp"
#include "emotl/vocabulary.hpp"

namespace emotl {

inline constexpr std::array<char, 4> kCheckpointMagic = {'N', 'T', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace kind {
inline constexpr const char* classifier = "classifier";
inline constexpr const char* language_model = "language_model";
inline constexpr const char* embeddings = "embeddings";
}  // namespace kind

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  std::string kind() const { return metadata.value("kind", std::string()); }

  const Tensor* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t.value;
    return nullptr;
  }
  const Tensor& at(const std::string& name) const {
    if (const Tensor* t = find(name)) return *t;
    throw DataError("checkpoint has no tensor '" + name + "'");
  }
  // Tensors whose name starts with "<group>.".
  std::vector<const NamedTensor*> group(const std::string& name) const {
    std::vector<const NamedTensor*> out;
    for (const auto& t : tensors)
      if (t.name.rfind(name + ".", 0) == 0) out.push_back(&t);
    return out;
  }

  Vocabulary vocabulary() const {
    if (!metadata.contains("vocab")) throw DataError("checkpoint carries no vocabulary");
    const auto& v = metadata.at("vocab");
    return Vocabulary::from_tokens(v.at("tokens").get<std::vector<std::string>>(),
                                   v.value("counts", std::vector<std::uint64_t>{}));
  }
  void set_vocabulary(const Vocabulary& v) { metadata["vocab"] = {{"tokens", v.tokens()}, {"counts", v.counts()}}; }
};

namespace detail {

template <class T>
void put_le(std::string& out, T v) {
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}
  bool at_end() const { return pos_ == bytes_.size(); }
  template <class T>
  T get() {
    need(sizeof(T));
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }
  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError(source_ + ": truncated checkpoint");
  }
  const std::string& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  const std::string meta = ck.metadata.dump();
  detail::put_le<std::uint64_t>(out, meta.size());
  out += meta;
  for (const auto& [name, t] : ck.tensors) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) detail::put_le<std::uint64_t>(out, e);
    for (double v : t.values()) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& source = "checkpoint") {
  detail::Reader in(bytes, source);
  const std::string magic = in.take(4);
  if (magic != std::string(kCheckpointMagic.begin(), kCheckpointMagic.end()))
    throw DataError(source + ": not a checkpoint (bad magic)");
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw DataError(source + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const auto meta_len = in.get<std::uint64_t>();
  try {
    ck.metadata = nlohmann::json::parse(in.take(meta_len));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(source + ": malformed metadata: " + e.what());
  }
  while (!in.at_end()) {
    NamedTensor nt;
    nt.name = in.take(in.get<std::uint32_t>());
    const auto rank = in.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& e : shape) e = in.get<std::uint64_t>();
    std::vector<double> values(element_count(shape));
    for (double& v : values) v = std::bit_cast<float>(in.get<std::uint32_t>());
    nt.value = Tensor(std::move(shape), std::move(values));
    ck.tensors.push_back(std::move(nt));
  }
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  const std::string bytes = serialize_checkpoint(ck);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str(), path);
}

// Rounds every parameter to the 32-bit precision of the file format, so an
// in-memory model equals what a save/load round trip would give.
inline void round_to_storage_precision(ParamStore& store) {
  for (Parameter* p : store.all_params())
    for (double& v : p->value.values()) v = static_cast<float>(v);
}

inline void append_params(Checkpoint& ck, const ParamStore& store) {
  for (const auto& g : store.groups())
    for (const auto& p : g.params) ck.tensors.push_back({p.name, p.value});
}

inline void load_params(ParamStore& store, const Checkpoint& ck) {
  for (Parameter* p : store.all_params()) {
    const Tensor& src = ck.at(p->name);
    if (!src.same_shape(p->value))
      throw DataError("checkpoint tensor '" + p->name + "' has shape " + to_string(src.shape()) + ", model expects " +
                      to_string(p->value.shape()));
    p->value = src;
  }
}

inline Checkpoint to_checkpoint(const ClassifierModel& model, const Vocabulary& vocab, const std::vector<std::string>& labels) {
  Checkpoint ck;
  ck.metadata["kind"] = kind::classifier;
  ck.metadata["config"] = model.config();
  ck.metadata["labels"] = labels;
  ck.set_vocabulary(vocab);
  append_params(ck, model);
  return ck;
}

inline Checkpoint to_checkpoint(const LanguageModel& lm, const Vocabulary& vocab) {
  Checkpoint ck;
  ck.metadata["kind"] = kind::language_model;
  ck.metadata["config"] = lm.config();
  ck.set_vocabulary(vocab);
  append_params(ck, lm);
  return ck;
}

inline void require_kind(const Checkpoint& ck, const char* expected) {
  if (ck.kind() != expected)
    throw TransferError("expected a " + std::string(expected) + " checkpoint, got '" + ck.kind() + "'");
}

inline ClassifierModel classifier_from_checkpoint(const Checkpoint& ck) {
  require_kind(ck, kind::classifier);
  ClassifierModel model(ck.metadata.at("config").get<ModelConfig>(), 0);
  load_params(model, ck);
  return model;
}

inline LanguageModel language_model_from_checkpoint(const Checkpoint& ck) {
  require_kind(ck, kind::language_model);
  LanguageModel lm(ck.metadata.at("config").get<ModelConfig>(), 0);
  load_params(lm, ck);
  return lm;
}

}  // namespace emotl
