#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "emotl/ensemble.hpp"
#include "emotl/metrics.hpp"
#include "emotl/rng.hpp"

using namespace emotl;
namespace fs = std::filesystem;

namespace {

using Labels = std::vector<std::size_t>;

Posterior random_posterior(std::size_t c, Rng& rng) {
  Posterior p(c);
  double s = 0.0;
  for (double& v : p) s += (v = rng.uniform(0.01, 1.0));
  for (double& v : p) v /= s;
  return p;
}

std::string temp_path(const std::string& name) { return (fs::temp_directory_path() / ("emotl_ens_" + name)).string(); }

}  // namespace

TEST(UnweightedAverage, SingleModelIsItsArgmax) {
  EXPECT_EQ(ensemble_ua({{0.1, 0.7, 0.2}}), 1u);
}

TEST(UnweightedAverage, AveragesBeforeArgmax) {
  EXPECT_EQ(ensemble_ua({{0.6, 0.4}, {0.2, 0.8}}), 1u);
  EXPECT_EQ(ensemble_ua({{0.5, 0.5}, {0.5, 0.5}}), 0u);
}

TEST(UnweightedAverage, RoundingDoesNotBreakExactTies) {
  std::vector<std::array<int, 3>> grid;
  for (int a = 0; a <= 10; ++a)
    for (int b = 0; a + b <= 10; ++b) grid.push_back({a, b, 10 - a - b});
  auto tenths = [](const std::array<int, 3>& x) { return Posterior{x[0] / 10.0, x[1] / 10.0, x[2] / 10.0}; };
  std::size_t mismatches = 0;
  for (const auto& p : grid)
    for (const auto& q : grid)
      for (const auto& r : grid) {
        const int s0 = p[0] + q[0] + r[0], s1 = p[1] + q[1] + r[1], s2 = p[2] + q[2] + r[2];
        const std::size_t expect = s0 >= s1 && s0 >= s2 ? 0 : (s1 >= s2 ? 1 : 2);
        mismatches += ensemble_ua({tenths(p), tenths(q), tenths(r)}) != expect;
      }
  EXPECT_EQ(mismatches, 0u);
}

TEST(UnweightedAverage, DuplicatingEveryModelChangesNothing) {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    std::vector<Posterior> ps;
    for (int m = 0; m < 3; ++m) ps.push_back(random_posterior(4, rng));
    std::vector<Posterior> doubled = ps;
    doubled.insert(doubled.end(), ps.begin(), ps.end());
    EXPECT_EQ(ensemble_ua(ps), ensemble_ua(doubled));
  }
}

TEST(UnweightedAverage, RejectsBadInput) {
  EXPECT_THROW(ensemble_ua({}), ContractViolation);
  EXPECT_THROW(ensemble_ua({{0.5, 0.5}, {1.0}}), ContractViolation);
  EXPECT_THROW(ensemble_ua({{0.7, 0.7}}), ContractViolation);
  EXPECT_THROW(ensemble_ua({{1.5, -0.5}}), ContractViolation);
}

TEST(MajorityVote, PluralityWithLowestTieBreak) {
  EXPECT_EQ(ensemble_mv({2, 2, 5}, 6), 2u);
  EXPECT_EQ(ensemble_mv({1, 0}, 2), 0u);
  EXPECT_EQ(ensemble_mv({3, 1, 3, 1}, 4), 1u);
  EXPECT_EQ(ensemble_mv({4, 4, 4}, 6), 4u);
}

TEST(MajorityVote, PermutationInvariant) {
  Rng rng(7);
  for (int t = 0; t < 200; ++t) {
    Labels votes(5);
    for (auto& v : votes) v = rng.below(3);
    const std::size_t ref = ensemble_mv(votes, 3);
    rng.shuffle(votes);
    EXPECT_EQ(ensemble_mv(votes, 3), ref);
  }
}

TEST(MajorityVote, RejectsBadInput) {
  EXPECT_THROW(ensemble_mv({}, 3), ContractViolation);
  EXPECT_THROW(ensemble_mv({3}, 3), ContractViolation);
}

TEST(MacroF1, HandWorkedCase) {
  const Labels gold = {0, 0, 1, 1, 2};
  const Labels pred = {0, 1, 1, 1, 0};
  // F1: class0 0.5, class1 0.8, class2 0
  EXPECT_NEAR(macro_f1(pred, gold, 3), (0.5 + 0.8 + 0.0) / 3.0, 1e-15);
}

TEST(MacroF1, PerfectAndConstantPredictions) {
  const Labels gold = {0, 1, 2, 0, 1, 2};
  EXPECT_EQ(macro_f1(gold, gold, 3), 1.0);
  // all-0: precision 1/3, recall 1 -> F1 0.5 for class 0 only
  EXPECT_NEAR(macro_f1(Labels(6, 0), gold, 3), 0.5 / 3.0, 1e-15);
}

TEST(MacroF1, AbsentClassCountsAsZero) {
  EXPECT_NEAR(macro_f1(Labels{0, 1}, Labels{0, 1}, 3), 2.0 / 3.0, 1e-15);
}

TEST(MacroF1, InvariantUnderConsistentRelabeling) {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    Labels gold(30), pred(30);
    for (std::size_t i = 0; i < 30; ++i) {
      gold[i] = rng.below(4);
      pred[i] = rng.below(4);
    }
    std::vector<std::size_t> perm(4);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    Labels g2(30), p2(30);
    for (std::size_t i = 0; i < 30; ++i) {
      g2[i] = perm[gold[i]];
      p2[i] = perm[pred[i]];
    }
    EXPECT_NEAR(macro_f1(pred, gold, 4), macro_f1(p2, g2, 4), 1e-12);
  }
}

TEST(ConfusionMatrix, CountsMatchBruteForce) {
  Rng rng(5);
  Labels gold(100), pred(100);
  for (std::size_t i = 0; i < 100; ++i) {
    gold[i] = rng.below(3);
    pred[i] = rng.below(3);
  }
  const auto cm = confusion_matrix(pred, gold, 3);
  EXPECT_EQ(cm.total(), 100u);
  for (std::size_t g = 0; g < 3; ++g)
    for (std::size_t p = 0; p < 3; ++p) {
      std::size_t n = 0;
      for (std::size_t i = 0; i < 100; ++i) n += gold[i] == g && pred[i] == p;
      EXPECT_EQ(cm.counts[g][p], n);
    }
}

TEST(Metrics, RejectMisalignedInput) {
  EXPECT_THROW(macro_f1(Labels{0}, Labels{0, 1}, 2), ContractViolation);
  EXPECT_THROW(macro_f1(Labels{}, Labels{}, 2), ContractViolation);
  EXPECT_THROW(macro_f1(Labels{2}, Labels{0}, 2), ContractViolation);
  EXPECT_EQ(accuracy(Labels{0, 1, 1}, Labels{0, 1, 0}), 2.0 / 3.0);
}

TEST(PredictionFiles, PosteriorRoundTrip) {
  PredictionFile pf;
  pf.labels = {"joy", "fear", "anger"};
  pf.rows.push_back({"a", 0, Posterior{0.2, 0.5, 0.3}, 1});
  pf.rows.push_back({"b", 2, Posterior{0.1, 0.1, 0.8}, 2});
  const auto path = temp_path("rt.tsv");
  save_predictions(pf, path);
  PredictionFile back = load_predictions(path);
  EXPECT_EQ(back.labels, pf.labels);
  ASSERT_EQ(back.rows.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back.rows[i].id, pf.rows[i].id);
    EXPECT_EQ(back.rows[i].gold, pf.rows[i].gold);
    EXPECT_EQ(back.rows[i].predicted, pf.rows[i].predicted);
    EXPECT_EQ(*back.rows[i].posterior, *pf.rows[i].posterior);
  }
}

TEST(PredictionFiles, LabelRowsLoad) {
  const auto path = temp_path("labels.tsv");
  std::ofstream(path) << "#predictions\tv1\tjoy,fear\nx\tjoy\tfear\n";
  PredictionFile pf = load_predictions(path);
  ASSERT_EQ(pf.rows.size(), 1u);
  EXPECT_FALSE(pf.rows[0].posterior.has_value());
  EXPECT_EQ(pf.rows[0].predicted, 1u);
}

TEST(PredictionFiles, MalformedRowsNameTheLine) {
  const auto path = temp_path("bad.tsv");
  std::ofstream(path) << "#predictions\tv1\tjoy,fear\nx\tjoy\t0.5\t0.5\ny\tjoy\tzz\t0.5\n";
  try {
    load_predictions(path);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(PredictionFiles, EnsembleOfOneEqualsItself) {
  PredictionFile pf;
  pf.labels = {"a", "b"};
  pf.rows.push_back({"1", 0, Posterior{0.3, 0.7}, 1});
  pf.rows.push_back({"2", 1, Posterior{0.9, 0.1}, 0});
  for (auto m : {EnsembleMethod::ua, EnsembleMethod::mv}) {
    PredictionFile out = ensemble_files({pf}, m);
    ASSERT_EQ(out.rows.size(), 2u);
    EXPECT_EQ(out.rows[0].predicted, 1u);
    EXPECT_EQ(out.rows[1].predicted, 0u);
  }
}

TEST(PredictionFiles, EnsembleCombinesAndChecksAlignment) {
  PredictionFile a, b, c;
  a.labels = b.labels = c.labels = {"x", "y"};
  a.rows.push_back({"1", 0, Posterior{0.6, 0.4}, 0});
  b.rows.push_back({"1", 0, Posterior{0.2, 0.8}, 1});
  EXPECT_EQ(ensemble_files({a, b}, EnsembleMethod::ua).rows[0].predicted, 1u);
  EXPECT_EQ(ensemble_files({a, b}, EnsembleMethod::mv).rows[0].predicted, 0u);
  c.rows.push_back({"2", 0, Posterior{0.2, 0.8}, 1});
  EXPECT_THROW(ensemble_files({a, c}, EnsembleMethod::ua), DataError);
  c.rows.push_back({"3", 0, std::nullopt, 1});
  EXPECT_THROW(ensemble_files({a, c}, EnsembleMethod::mv), DataError);
  EXPECT_THROW(ensemble_files({}, EnsembleMethod::mv), ConfigError);
}

TEST(PredictionFiles, MethodNames) {
  EXPECT_EQ(parse_ensemble_method("ua"), EnsembleMethod::ua);
  EXPECT_EQ(parse_ensemble_method("mv"), EnsembleMethod::mv);
  EXPECT_THROW(parse_ensemble_method("avg"), ConfigError);
}
