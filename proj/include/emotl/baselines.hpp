#pragma once

// Bag-of-words (TF-IDF) and bag-of-embeddings baselines with a one-vs-rest
// linear max-margin classifier trained by stochastic subgradient descent
// on the L2-regularized hinge loss.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "emotl/errors.hpp"
#include "emotl/rng.hpp"
#include "emotl/tensor.hpp"
#include "emotl/vocabulary.hpp"

namespace emotl {

// Sorted (index, weight) pairs without stored zeros.
class SparseVector {
 public:
  SparseVector() = default;
  explicit SparseVector(std::map<std::size_t, double> entries) {
    for (auto [i, w] : entries)
      if (w != 0.0) entries_.emplace_back(i, w);
  }
  const std::vector<std::pair<std::size_t, double>>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  double norm() const {
    double s = 0.0;
    for (auto [i, w] : entries_) s += w * w;
    return std::sqrt(s);
  }
  double dot(const double* dense) const {
    double s = 0.0;
    for (auto [i, w] : entries_) s += w * dense[i];
    return s;
  }
  void axpy(double a, double* dense) const {
    for (auto [i, w] : entries_) dense[i] += a * w;
  }
  double squared_norm() const { return norm() * norm(); }
  std::size_t max_index() const { return entries_.empty() ? 0 : entries_.back().first; }

 private:
  std::vector<std::pair<std::size_t, double>> entries_;
};

using DenseVector = std::vector<double>;

// TF-IDF with raw term counts, smoothed idf = ln((1+N)/(1+df)) + 1 and L2
// normalization. Reserved vocabulary ids (including <unk>) carry no weight.
class TfidfVectorizer {
 public:
  TfidfVectorizer() = default;
  explicit TfidfVectorizer(Vocabulary vocab) : vocab_(std::move(vocab)) {}

  void fit(const std::vector<TokenList>& docs) {
    std::vector<std::size_t> df(vocab_.size(), 0);
    for (const auto& doc : docs) {
      std::map<std::size_t, bool> seen;
      for (const auto& t : doc) {
        const std::size_t id = vocab_.id(t);
        if (id >= Vocabulary::kReserved) seen[id] = true;
      }
      for (auto [id, _] : seen) ++df[id];
    }
    const double n = static_cast<double>(docs.size());
    idf_.assign(vocab_.size(), 0.0);
    for (std::size_t i = Vocabulary::kReserved; i < vocab_.size(); ++i)
      idf_[i] = std::log((1.0 + n) / (1.0 + static_cast<double>(df[i]))) + 1.0;
  }

  SparseVector transform(const TokenList& doc) const {
    std::map<std::size_t, double> tf;
    for (const auto& t : doc) {
      const std::size_t id = vocab_.id(t);
      if (id >= Vocabulary::kReserved) tf[id] += 1.0;
    }
    double norm = 0.0;
    for (auto& [id, w] : tf) {
      w *= idf_.at(id);
      norm += w * w;
    }
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (auto& [id, w] : tf) w /= norm;
    return SparseVector(std::move(tf));
  }

  std::vector<SparseVector> transform(const std::vector<TokenList>& docs) const {
    std::vector<SparseVector> out;
    out.reserve(docs.size());
    for (const auto& d : docs) out.push_back(transform(d));
    return out;
  }

  const std::vector<double>& idf() const { return idf_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  std::size_t dimension() const { return vocab_.size(); }

 private:
  Vocabulary vocab_;
  std::vector<double> idf_;
};

struct TfidfResult {
  std::vector<SparseVector> vectors;
  std::vector<double> idf;
};

inline TfidfResult bow_tfidf(const std::vector<TokenList>& corpus, const Vocabulary& vocab) {
  TfidfVectorizer v(vocab);
  v.fit(corpus);
  return {v.transform(corpus), v.idf()};
}

// Mean embedding row of the tokens; OOV tokens use the <unk> row.
inline DenseVector boe_centroid(const TokenList& tokens, const Tensor& embeddings, const Vocabulary& vocab) {
  const std::size_t dim = embeddings.cols();
  DenseVector out(dim, 0.0);
  if (tokens.empty()) return out;
  for (const auto& t : tokens) {
    const auto row = embeddings.row_span(vocab.id(t));
    for (std::size_t c = 0; c < dim; ++c) out[c] += row[c];
  }
  for (double& v : out) v /= static_cast<double>(tokens.size());
  return out;
}

namespace detail {
inline double feature_dot(const DenseVector& x, const double* w) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * w[i];
  return s;
}
inline void feature_axpy(const DenseVector& x, double a, double* w) {
  for (std::size_t i = 0; i < x.size(); ++i) w[i] += a * x[i];
}
inline std::size_t feature_width(const DenseVector& x) { return x.size(); }
inline double feature_dot(const SparseVector& x, const double* w) { return x.dot(w); }
inline void feature_axpy(const SparseVector& x, double a, double* w) { x.axpy(a, w); }
inline std::size_t feature_width(const SparseVector& x) { return x.empty() ? 0 : x.max_index() + 1; }
}  // namespace detail

// One weight row per class over `dimension` features plus a trailing bias
// column (the bias acts as a constant feature 1 and is regularized with the
// rest).
struct LinearModel {
  Tensor weights;  // [C × (D+1)]

  std::size_t num_classes() const { return weights.rows(); }
  std::size_t dimension() const { return weights.cols() - 1; }

  template <class Features>
  std::vector<double> scores(const Features& x) const {
    if (detail::feature_width(x) > dimension())
      throw DimensionError("feature width " + std::to_string(detail::feature_width(x)) + " exceeds model dimension " +
                           std::to_string(dimension()));
    std::vector<double> s(num_classes());
    for (std::size_t c = 0; c < num_classes(); ++c) {
      const double* w = weights.data() + c * weights.cols();
      s[c] = detail::feature_dot(x, w) + w[dimension()];
    }
    return s;
  }
};

// Argmax of the per-class scores, lowest class index on ties.
template <class Features>
std::size_t predict_linear(const Features& x, const LinearModel& model) {
  const auto s = model.scores(x);
  std::size_t best = 0;
  for (std::size_t c = 1; c < s.size(); ++c)
    if (s[c] > s[best]) best = c;
  return best;
}

template <class Features>
  requires(!std::is_arithmetic_v<Features>)
std::vector<std::size_t> predict_linear(const std::vector<Features>& xs, const LinearModel& model) {
  std::vector<std::size_t> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(predict_linear(x, model));
  return out;
}

struct MaxMarginOptions {
  double c = 0.6;
  std::size_t epochs = 20;
  std::uint64_t seed = 1;
};

// One-vs-rest Pegasos: minimizes λ/2‖w‖² + (1/N) Σ hinge with λ = 1/(C·N),
// step 1/(λt), and projection onto the ball of radius 1/√λ.
template <class Features>
LinearModel train_linear_maxmargin(const std::vector<Features>& features, const std::vector<std::size_t>& labels,
                                   std::size_t dimension, std::size_t num_classes, const MaxMarginOptions& opts = {}) {
  if (features.size() != labels.size() || features.empty())
    throw ContractViolation("features and labels must be non-empty and aligned");
  if (!(opts.c > 0.0)) throw ConfigError("C must be positive");
  std::vector<bool> present(num_classes, false);
  std::size_t distinct = 0;
  for (std::size_t y : labels) {
    if (y >= num_classes) throw DataError("label " + std::to_string(y) + " out of " + std::to_string(num_classes) + " classes");
    if (!present[y]) ++distinct;
    present[y] = true;
  }
  if (distinct < 2) throw DataError("max-margin training needs at least two classes in the data");
  for (const auto& x : features)
    if (detail::feature_width(x) > dimension) throw DimensionError("feature vector wider than the declared dimension");

  const std::size_t n = features.size();
  const double lambda = 1.0 / (opts.c * static_cast<double>(n));
  const std::size_t width = dimension + 1;
  LinearModel model{Tensor({num_classes, width})};
  Rng rng(opts.seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (std::size_t c = 0; c < num_classes; ++c) {
    // w = scale · v keeps the shrink step O(1).
    std::vector<double> v(width, 0.0);
    double scale = 1.0, sq_norm = 0.0;  // sq_norm tracks ‖v‖²
    std::uint64_t t = 0;
    Rng class_rng = rng.split(c);
    for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
      class_rng.shuffle(order);
      for (std::size_t i : order) {
        ++t;
        const double eta = 1.0 / (lambda * static_cast<double>(t));
        const double y = labels[i] == c ? 1.0 : -1.0;
        const double margin = y * scale * (detail::feature_dot(features[i], v.data()) + v[dimension]);
        const double shrink = 1.0 - eta * lambda;
        if (shrink <= 0.0) {
          std::fill(v.begin(), v.end(), 0.0);
          scale = 1.0;
          sq_norm = 0.0;
        } else {
          scale *= shrink;
        }
        if (margin < 1.0) {
          const double a = eta * y / scale;
          // ‖v + a x‖² = ‖v‖² + 2a⟨v,x⟩ + a²‖x‖²
          const double vx = detail::feature_dot(features[i], v.data()) + v[dimension];
          double xx = 1.0;
          if constexpr (std::is_same_v<Features, SparseVector>)
            xx += features[i].squared_norm();
          else
            for (double xv : features[i]) xx += xv * xv;
          sq_norm += 2.0 * a * vx + a * a * xx;
          detail::feature_axpy(features[i], a, v.data());
          v[dimension] += a;
        }
        const double w_norm = scale * std::sqrt(std::max(sq_norm, 0.0));
        const double radius = 1.0 / std::sqrt(lambda);
        if (w_norm > radius) scale *= radius / w_norm;
        if (scale < 1e-100) {
          for (double& x : v) x *= scale;
          sq_norm *= scale * scale;
          scale = 1.0;
        }
      }
    }
    double* w = model.weights.data() + c * width;
    for (std::size_t k = 0; k < width; ++k) w[k] = scale * v[k];
  }
  return model;
}

}  // namespace emotl
