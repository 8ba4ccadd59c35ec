#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "emotl/baselines.hpp"
#include "emotl/rng.hpp"

using namespace emotl;

TEST(Tfidf, TokenInEveryDocumentHasUnitIdf) {
  const std::vector<TokenList> docs = {{"a", "b"}, {"a", "c"}, {"a"}};
  Vocabulary v = build_vocab(docs);
  TfidfResult r = bow_tfidf(docs, v);
  EXPECT_EQ(r.idf[v.id("a")], 1.0);
  EXPECT_NEAR(r.idf[v.id("b")], std::log(4.0 / 2.0) + 1.0, 1e-15);
}

TEST(Tfidf, EmptyDocumentIsZeroVector) {
  const std::vector<TokenList> docs = {{"a"}, {}};
  TfidfResult r = bow_tfidf(docs, build_vocab(docs));
  EXPECT_TRUE(r.vectors[1].empty());
  EXPECT_EQ(r.vectors[1].norm(), 0.0);
}

TEST(Tfidf, UnknownOnlyDocumentIsZeroVector) {
  TfidfVectorizer tv(build_vocab({{"a"}}));
  tv.fit({{"a"}});
  EXPECT_TRUE(tv.transform(TokenList{"zzz", "<target>"}).empty());
}

TEST(Tfidf, NormsAreOneOrZero) {
  Rng rng(3);
  std::vector<TokenList> docs;
  for (int i = 0; i < 50; ++i) {
    TokenList d;
    const std::size_t n = rng.below(6);
    for (std::size_t k = 0; k < n; ++k) d.push_back("t" + std::to_string(rng.below(12)));
    docs.push_back(d);
  }
  TfidfResult r = bow_tfidf(docs, build_vocab(docs));
  for (const auto& x : r.vectors) {
    const double n = x.norm();
    EXPECT_TRUE(n == 0.0 || std::abs(n - 1.0) < 1e-12) << n;
  }
}

TEST(Boe, SingleTokenIsItsRow) {
  Vocabulary v = Vocabulary::from_tokens({"<pad>", "<unk>", "<target>", "x", "y"});
  Tensor m({5, 2}, std::vector<double>{0, 0, 9, 9, 0, 0, 1, 2, 3, 5});
  EXPECT_EQ(boe_centroid({"x"}, m, v), (DenseVector{1, 2}));
  EXPECT_EQ(boe_centroid({"x", "y"}, m, v), (DenseVector{2, 3.5}));
  EXPECT_EQ(boe_centroid({"y", "x"}, m, v), boe_centroid({"x", "y"}, m, v));
  EXPECT_EQ(boe_centroid({"never"}, m, v), (DenseVector{9, 9}));
  EXPECT_EQ(boe_centroid({}, m, v), (DenseVector{0, 0}));
}

TEST(Boe, PermutationInvariant) {
  Rng rng(2);
  Vocabulary v = build_vocab({{"a", "b", "c", "d", "e"}});
  Tensor m({v.size(), 4});
  for (double& x : m.values()) x = rng.normal();
  TokenList toks = {"a", "b", "c", "d", "e", "a"};
  const DenseVector ref = boe_centroid(toks, m, v);
  for (int i = 0; i < 10; ++i) {
    rng.shuffle(toks);
    const DenseVector c = boe_centroid(toks, m, v);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(c[k], ref[k], 1e-14);
  }
}

TEST(MaxMargin, SeparableTwoDimensionalPoints) {
  Rng rng(5);
  std::vector<DenseVector> xs;
  std::vector<std::size_t> ys;
  for (int i = 0; i < 60; ++i) {
    const bool pos = i % 2 == 0;
    const double x = rng.uniform(0.5, 2.0) * (pos ? 1.0 : -1.0);
    const double y = rng.uniform(-1.0, 1.0);
    xs.push_back({x + 0.2 * y, y});
    ys.push_back(pos ? 1 : 0);
  }
  LinearModel m = train_linear_maxmargin(xs, ys, 2, 2);
  EXPECT_EQ(predict_linear(xs, m), ys);
}

TEST(MaxMargin, DuplicatedDataGivesSameDecisions) {
  Rng rng(8);
  std::vector<DenseVector> xs, grid;
  std::vector<std::size_t> ys;
  for (int i = 0; i < 40; ++i) {
    const std::size_t c = i % 3;
    xs.push_back({rng.normal() + 3.0 * (c == 0), rng.normal() + 3.0 * (c == 1)});
    ys.push_back(c);
  }
  for (double a = -2; a <= 5; a += 0.5)
    for (double b = -2; b <= 5; b += 0.5) grid.push_back({a, b});
  std::vector<DenseVector> xs2 = xs;
  std::vector<std::size_t> ys2 = ys;
  xs2.insert(xs2.end(), xs.begin(), xs.end());
  ys2.insert(ys2.end(), ys.begin(), ys.end());
  // lambda = 1/(C*N): halving C keeps lambda fixed when N doubles
  MaxMarginOptions o;
  o.epochs = 200;
  const auto p1 = predict_linear(grid, train_linear_maxmargin(xs, ys, 2, 3, o));
  o.c /= 2.0;
  const auto p2 = predict_linear(grid, train_linear_maxmargin(xs2, ys2, 2, 3, o));
  std::size_t agree = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) agree += p1[i] == p2[i];
  EXPECT_GE(static_cast<double>(agree) / static_cast<double>(grid.size()), 0.99);
}

TEST(MaxMargin, ZeroEpochsPredictsClassZero) {
  std::vector<DenseVector> xs = {{1.0}, {-1.0}};
  MaxMarginOptions o;
  o.epochs = 0;
  LinearModel m = train_linear_maxmargin(xs, {0, 1}, 1, 2, o);
  for (double v : m.weights.values()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(predict_linear(DenseVector{5.0}, m), 0u);
  EXPECT_EQ(predict_linear(DenseVector{-5.0}, m), 0u);
}

TEST(MaxMargin, SparseFeaturesSeparateCueTokens) {
  std::vector<TokenList> docs;
  std::vector<std::size_t> ys;
  Rng rng(4);
  for (int i = 0; i < 90; ++i) {
    const std::size_t c = i % 3;
    TokenList d = {"cue" + std::to_string(c) + "_" + std::to_string(rng.below(4))};
    for (int k = 0; k < 5; ++k) d.push_back("w" + std::to_string(rng.below(30)));
    docs.push_back(d);
    ys.push_back(c);
  }
  Vocabulary v = build_vocab(docs);
  TfidfResult r = bow_tfidf(docs, v);
  LinearModel m = train_linear_maxmargin(r.vectors, ys, v.size(), 3);
  EXPECT_EQ(predict_linear(r.vectors, m), ys);
}

TEST(MaxMargin, Validation) {
  std::vector<DenseVector> xs = {{1.0}, {2.0}};
  EXPECT_THROW(train_linear_maxmargin(xs, {1, 1}, 1, 2), DataError);
  EXPECT_THROW(train_linear_maxmargin(xs, {0}, 1, 2), ContractViolation);
  EXPECT_THROW(train_linear_maxmargin(xs, {0, 5}, 1, 2), DataError);
  MaxMarginOptions bad;
  bad.c = 0.0;
  EXPECT_THROW(train_linear_maxmargin(xs, {0, 1}, 1, 2, bad), ConfigError);
}

TEST(PredictLinear, ArgmaxAndTies) {
  LinearModel m{Tensor({3, 2}, std::vector<double>{0, 0.2, 0, 0.9, 0, 0.1})};
  EXPECT_EQ(predict_linear(DenseVector{1.0}, m), 1u);
  LinearModel flat{Tensor({3, 2}, 0.0)};
  EXPECT_EQ(predict_linear(DenseVector{1.0}, flat), 0u);
  EXPECT_THROW(m.scores(DenseVector{1.0, 2.0}), DimensionError);
}

TEST(PredictLinear, MatchesBruteForceScores) {
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    LinearModel m{Tensor({4, 6})};
    for (double& w : m.weights.values()) w = rng.normal();
    DenseVector x(5);
    for (double& v : x) v = rng.normal();
    std::size_t best = 0;
    double best_s = -1e300;
    for (std::size_t c = 0; c < 4; ++c) {
      double s = m.weights.at(c, 5);
      for (std::size_t k = 0; k < 5; ++k) s += m.weights.at(c, k) * x[k];
      if (s > best_s) {
        best_s = s;
        best = c;
      }
    }
    EXPECT_EQ(predict_linear(x, m), best);
  }
}
