#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "emotl/checkpoint.hpp"
#include "emotl/pretrain.hpp"
#include "emotl/synthetic.hpp"
#include "emotl/training.hpp"
#include "emotl/transfer.hpp"

using namespace emotl;
namespace fs = std::filesystem;

namespace {

ModelConfig small_config(std::size_t vocab, std::size_t classes) {
  ModelConfig cfg;
  cfg.vocab_size = vocab;
  cfg.embedding_dim = 8;
  cfg.lstm_size = 8;
  cfg.num_classes = classes;
  cfg.embedding_noise = 0.0;
  cfg.embedding_dropout = 0.0;
  cfg.lstm_dropout = 0.0;
  return cfg;
}

struct SmallTask {
  SyntheticData data;
  Vocabulary vocab;
  std::vector<EncodedExample> train, dev;
};

SmallTask small_task(std::size_t per_class = 30, std::uint64_t seed = 1) {
  SmallTask t;
  t.data = generate_synthetic_cloze(3, per_class, 60, seed);
  auto [train, dev] = stratified_split(t.data.cloze, per_class / 3);
  std::vector<TokenList> texts;
  for (const auto& ex : train.examples) texts.push_back(ex.tokens);
  t.vocab = build_vocab(texts);
  t.train = encode_dataset(train, t.vocab);
  t.dev = encode_dataset(dev, t.vocab);
  return t;
}

double batch_loss(ClassifierModel& m, const std::vector<EncodedExample>& data) {
  std::vector<std::size_t> rows(data.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  ClassifierBatch b = make_classifier_batch(data, rows);
  Graph g;
  auto fwd = classifier_forward(g, m, b, Mode::eval, nullptr, false);
  return cross_entropy(fwd.logits, b.labels).value()[0];
}

bool same_params(const ParamStore& a, const ParamStore& b) {
  if (a.groups().size() != b.groups().size()) return false;
  for (std::size_t i = 0; i < a.groups().size(); ++i) {
    const auto& pa = a.groups()[i].params;
    const auto& pb = b.groups()[i].params;
    if (pa.size() != pb.size()) return false;
    for (std::size_t j = 0; j < pa.size(); ++j)
      if (pa[j].name != pb[j].name || !pa[j].value.bitwise_equal(pb[j].value)) return false;
  }
  return true;
}

}  // namespace

// ------------------------------------------------------------------ freezing

TEST(FreezeSchedule, SguEpochTwo) {
  auto s = apply_freeze_schedule(2, FreezeSchedule::gradual(3, 5));
  EXPECT_EQ(s, (FreezeState{{"embedding", true}, {"lstm1", true}, {"lstm2", true}, {"attention", false}, {"output", false}}));
}

TEST(FreezeSchedule, SguEpochFour) {
  auto s = apply_freeze_schedule(4, FreezeSchedule::gradual(3, 5));
  EXPECT_EQ(s, (FreezeState{{"embedding", true}, {"lstm1", false}, {"lstm2", false}, {"attention", false}, {"output", false}}));
}

TEST(FreezeSchedule, SimpleNeverFreezes) {
  for (std::size_t e : {1u, 2u, 7u, 50u})
    for (const auto& [g, frozen] : apply_freeze_schedule(e, FreezeSchedule::simple())) EXPECT_FALSE(frozen) << g;
}

TEST(FreezeSchedule, TrainableSetGrowsMonotonically) {
  const auto sched = FreezeSchedule::gradual(2, 6);
  FreezeState prev = apply_freeze_schedule(1, sched);
  for (std::size_t e = 2; e <= 10; ++e) {
    FreezeState cur = apply_freeze_schedule(e, sched);
    for (const auto& [g, frozen] : cur)
      if (!prev[g]) {
        EXPECT_FALSE(frozen) << g << " refroze at epoch " << e;
      }
    prev = cur;
  }
}

TEST(FreezeSchedule, ValidatesBounds) {
  EXPECT_THROW(FreezeSchedule::gradual(1, 5), ConfigError);
  EXPECT_THROW(FreezeSchedule::gradual(5, 5), ConfigError);
  EXPECT_THROW(apply_freeze_schedule(0, FreezeSchedule::simple()), ContractViolation);
  EXPECT_THROW(parse_fine_tune_mode("fast"), ConfigError);
}

TEST(FreezeSchedule, AlwaysFrozenWins) {
  FreezeSchedule s = FreezeSchedule::simple();
  s.always_frozen.insert("embedding");
  EXPECT_TRUE(apply_freeze_schedule(9, s).at("embedding"));
}

// ------------------------------------------------------------------ training

TEST(TrainEpoch, AllFrozenLeavesParametersUnchanged) {
  SmallTask t = small_task();
  ClassifierModel m(small_config(t.vocab.size(), 3), 2);
  const ClassifierModel before = m;
  FreezeState all;
  for (const char* g : kGroupNames) all[g] = true;
  set_freeze_state(m, all);
  AdamState adam;
  TrainConfig cfg;
  EpochMetrics em = train_epoch(m, t.train, cfg, 1, adam);
  EXPECT_TRUE(same_params(m, before));
  EXPECT_GT(em.train_loss, 0.0);
  EXPECT_TRUE(std::isfinite(em.train_loss));
}

TEST(TrainEpoch, OneStepReducesLossOnMostSeeds) {
  SmallTask t = small_task(10);
  std::vector<EncodedExample> one_batch(t.train.begin(), t.train.begin() + 16);
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ClassifierModel m(small_config(t.vocab.size(), 3), seed);
    const double before = batch_loss(m, one_batch);
    TrainConfig cfg;
    cfg.batch_size = 64;
    cfg.adam.lr = 0.01;
    cfg.seed = seed;
    AdamState adam(cfg.adam);
    train_epoch(m, one_batch, cfg, 1, adam);
    improved += batch_loss(m, one_batch) < before;
  }
  EXPECT_GE(improved, 9);
}

TEST(TrainEpoch, Deterministic) {
  SmallTask t = small_task();
  ModelConfig cfg_model = small_config(t.vocab.size(), 3);
  cfg_model.embedding_noise = 0.1;
  cfg_model.embedding_dropout = 0.2;
  cfg_model.lstm_dropout = 0.4;
  auto run = [&] {
    ClassifierModel m(cfg_model, 5);
    AdamState adam;
    train_epoch(m, t.train, TrainConfig{}, 1, adam);
    train_epoch(m, t.train, TrainConfig{}, 2, adam);
    return m;
  };
  EXPECT_TRUE(same_params(run(), run()));
}

TEST(TrainEpoch, ObserverSeesClippedSteps) {
  SmallTask t = small_task();
  ClassifierModel m(small_config(t.vocab.size(), 3), 1);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.clip_norm = 0.05;
  AdamState adam;
  std::size_t steps = 0;
  train_epoch(m, t.train, cfg, 1, adam, [&](const StepRecord& r) {
    ++steps;
    if (r.clip.norm_before > cfg.clip_norm) {
      EXPECT_LE(r.clip.norm_after, cfg.clip_norm + 1e-12);
    }
  });
  EXPECT_EQ(steps, (t.train.size() + 15) / 16);
}

TEST(FineTune, SguHashesFollowSchedule) {
  SmallTask t = small_task();
  ClassifierModel m(small_config(t.vocab.size(), 3), 3);
  TrainConfig cfg;
  cfg.max_epochs = 6;
  FineTuneResult r = fine_tune(m, t.train, t.dev, FreezeSchedule::gradual(3, 5), cfg);
  ASSERT_EQ(r.history.size(), 6u);
  for (const auto& h : r.history) {
    const bool emb_same = h.group_hashes.at("embedding") == r.initial_hashes.at("embedding");
    const bool lstm_same = h.group_hashes.at("lstm1") == r.initial_hashes.at("lstm1") &&
                           h.group_hashes.at("lstm2") == r.initial_hashes.at("lstm2");
    EXPECT_EQ(emb_same, h.epoch < 5) << "epoch " << h.epoch;
    EXPECT_EQ(lstm_same, h.epoch < 3) << "epoch " << h.epoch;
    EXPECT_NE(h.group_hashes.at("attention"), r.initial_hashes.at("attention"));
    EXPECT_NE(h.group_hashes.at("output"), r.initial_hashes.at("output"));
  }
}

TEST(FineTune, SimpleChangesEveryGroupAtEpochOne) {
  SmallTask t = small_task();
  ClassifierModel m(small_config(t.vocab.size(), 3), 3);
  TrainConfig cfg;
  cfg.max_epochs = 1;
  FineTuneResult r = fine_tune(m, t.train, t.dev, FreezeSchedule::simple(), cfg);
  for (const char* g : kGroupNames) EXPECT_NE(r.history[0].group_hashes.at(g), r.initial_hashes.at(g)) << g;
}

TEST(FineTune, ReturnsBestDevModelAndUnfreezes) {
  SmallTask t = small_task();
  ClassifierModel m(small_config(t.vocab.size(), 3), 3);
  TrainConfig cfg;
  cfg.max_epochs = 8;
  cfg.adam.lr = 0.01;
  FineTuneResult r = fine_tune(m, t.train, t.dev, FreezeSchedule::gradual(2, 3), cfg);
  EXPECT_NEAR(evaluate_macro_f1(r.model, t.dev), r.best_dev_macro_f1, 1e-12);
  for (const auto& g : r.model.groups()) EXPECT_FALSE(g.frozen);
  double best = 0.0;
  for (const auto& h : r.history) best = std::max(best, *h.dev_macro_f1);
  EXPECT_EQ(best, r.best_dev_macro_f1);
}

TEST(FineTune, ConcatOutputWidth) {
  SmallTask t = small_task();
  ModelConfig cfg = small_config(t.vocab.size(), 3);
  ClassifierModel m(cfg, 1);
  set_concat(m, true, 9);
  EXPECT_EQ(m.param("output.weight").value.cols(), 16u);
  TrainConfig tc;
  tc.max_epochs = 1;
  FineTuneResult r = fine_tune(m, t.train, t.dev, FreezeSchedule::simple(), tc);
  EXPECT_TRUE(r.model.config().use_concat);
}

// ------------------------------------------------------------------ transfer

TEST(Transfer, LanguageModelGroupsCopiedBitwise) {
  ModelConfig cfg = small_config(20, 3);
  LanguageModel lm(cfg, 11);
  ClassifierModel clf(cfg, 12);
  const auto before = clf.group_hashes();
  Checkpoint src = to_checkpoint(lm, Vocabulary());
  transfer_weights(src, clf, identity_map({"embedding", "lstm1", "lstm2"}));
  for (const char* g : {"embedding", "lstm1", "lstm2"})
    for (const auto& p : clf.group(g).params) EXPECT_TRUE(p.value.bitwise_equal(lm.param(p.name).value)) << p.name;
  const auto after = clf.group_hashes();
  EXPECT_EQ(after.at("attention"), before.at("attention"));
  EXPECT_EQ(after.at("output"), before.at("output"));
}

TEST(Transfer, ClassifierFromLanguageModelTakesArchitecture) {
  ModelConfig lm_cfg = small_config(20, 3);
  lm_cfg.num_lstm_layers = 1;
  LanguageModel lm(lm_cfg, 5);
  ModelConfig task;
  task.num_classes = 4;
  task.use_concat = true;
  task.bidirectional = true;
  ClassifierModel clf = classifier_from_language_model(lm, task, 6);
  EXPECT_EQ(clf.config().lstm_size, lm_cfg.lstm_size);
  EXPECT_EQ(clf.config().num_lstm_layers, 1u);
  EXPECT_FALSE(clf.config().bidirectional);
  EXPECT_EQ(clf.param("output.weight").value.rows(), 4u);
  EXPECT_EQ(clf.param("output.weight").value.cols(), 2 * lm_cfg.lstm_size);
  EXPECT_TRUE(clf.param("embedding.weight").value.bitwise_equal(lm.param("embedding.weight").value));
  for (const auto& p : clf.group("lstm1").params) EXPECT_TRUE(p.value.bitwise_equal(lm.param(p.name).value)) << p.name;
}

TEST(Transfer, EmptyMapIsNoOp) {
  ModelConfig cfg = small_config(20, 3);
  ClassifierModel clf(cfg, 12);
  const ClassifierModel before = clf;
  transfer_weights(to_checkpoint(LanguageModel(cfg, 1), Vocabulary()), clf, {});
  EXPECT_TRUE(same_params(clf, before));
}

TEST(Transfer, MismatchedLstmNamesGroupAndLeavesTargetUntouched) {
  ModelConfig src_cfg = small_config(20, 3);
  ModelConfig dst_cfg = src_cfg;
  dst_cfg.lstm_size = 6;
  LanguageModel lm(src_cfg, 1);
  ClassifierModel clf(dst_cfg, 2);
  const ClassifierModel before = clf;
  try {
    transfer_weights(to_checkpoint(lm, Vocabulary()), clf, identity_map({"embedding", "lstm1", "lstm2"}));
    FAIL() << "expected TransferError";
  } catch (const TransferError& e) {
    EXPECT_NE(std::string(e.what()).find("lstm1"), std::string::npos) << e.what();
  }
  EXPECT_TRUE(same_params(clf, before));
}

TEST(Transfer, MissingGroupsReported) {
  ModelConfig cfg = small_config(20, 3);
  ClassifierModel clf(cfg, 2);
  Checkpoint lm_ck = to_checkpoint(LanguageModel(cfg, 1), Vocabulary());
  EXPECT_THROW(transfer_weights(lm_ck, clf, identity_map({"attention"})), TransferError);
  EXPECT_THROW(transfer_weights(lm_ck, clf, {{"embedding", "decoder"}}), TransferError);
}

TEST(Transfer, SentimentToEmotionKeepsBodyAndResizesOutput) {
  ModelConfig cfg = small_config(20, 3);
  ClassifierModel sent(cfg, 4);
  ClassifierModel emo = sent;
  replace_output_layer(emo, 6, 77);
  EXPECT_EQ(emo.param("output.weight").value.shape(), (Shape{6, 8}));
  EXPECT_EQ(emo.param("output.bias").value.shape(), (Shape{1, 6}));
  EXPECT_EQ(emo.config().num_classes, 6u);
  for (const char* g : {"embedding", "lstm1", "lstm2", "attention"})
    EXPECT_EQ(emo.group(g).hash(), sent.group(g).hash()) << g;
  ClassifierModel again = sent;
  replace_output_layer(again, 6, 77);
  EXPECT_EQ(again.group("output").hash(), emo.group("output").hash());
}

TEST(Transfer, EmbeddingRowsCopiedByToken) {
  Vocabulary src = Vocabulary::from_tokens({"<pad>", "<unk>", "<target>", "a", "b"});
  Vocabulary dst = Vocabulary::from_tokens({"<pad>", "<unk>", "<target>", "b", "c"});
  Tensor m({5, 2}, std::vector<double>{0, 0, 1, 1, 2, 2, 3, 3, 4, 4});
  Tensor table({5, 2}, 9.0);
  EXPECT_EQ(copy_embedding_rows(m, src, table, dst), 1u);
  EXPECT_EQ(table.at(3, 0), 4.0);
  EXPECT_EQ(table.at(4, 0), 9.0);
  Tensor narrow({5, 3});
  EXPECT_THROW(copy_embedding_rows(m, src, narrow, dst), TransferError);
}

// ------------------------------------------------------------------ skip-gram

TEST(NegativeTable, NeverReturnsPositive) {
  Vocabulary v = build_vocab({{"a", "a", "a", "a", "b", "c"}});
  NegativeTable t(v);
  Rng rng(1);
  const std::size_t pos = v.id("a");
  for (int i = 0; i < 2000; ++i) EXPECT_NE(t.sample_excluding(pos, rng), pos);
  EXPECT_NEAR(t.probability(pos), std::pow(4.0, 0.75) / (std::pow(4.0, 0.75) + 2.0), 1e-12);
}

TEST(NegativeTable, NeedsTwoTokens) { EXPECT_THROW(NegativeTable(build_vocab({{"a"}})), ConfigError); }

TEST(Word2Vec, DeterministicAndLossFalls) {
  TopicCorpus tc = generate_topic_corpus(2, 10, 300, 8, 4);
  SkipGramConfig cfg;
  cfg.dim = 8;
  cfg.min_count = 1;
  cfg.epochs = 10;
  WordEmbeddings a = train_word2vec(tc.lines, cfg, 3);
  WordEmbeddings b = train_word2vec(tc.lines, cfg, 3);
  EXPECT_TRUE(a.matrix.bitwise_equal(b.matrix));
  ASSERT_EQ(a.epoch_loss.size(), 10u);
  EXPECT_LT(a.epoch_loss.back(), 0.9 * a.epoch_loss.front());
}

TEST(Word2Vec, TopicsSeparate) {
  TopicCorpus tc = generate_topic_corpus(2, 10, 400, 8, 6);
  SkipGramConfig cfg;
  cfg.dim = 16;
  cfg.min_count = 1;
  cfg.epochs = 5;
  WordEmbeddings e = train_word2vec(tc.lines, cfg, 1);
  double intra = 0.0, inter = 0.0;
  std::size_t ni = 0, nx = 0;
  for (std::size_t t1 = 0; t1 < 2; ++t1)
    for (std::size_t t2 = 0; t2 < 2; ++t2)
      for (const auto& w1 : tc.topic_words[t1])
        for (const auto& w2 : tc.topic_words[t2]) {
          if (w1 == w2) continue;
          const double c = cosine(e.matrix.row_span(e.vocab.id(w1)), e.matrix.row_span(e.vocab.id(w2)));
          (t1 == t2 ? intra : inter) += c;
          ++(t1 == t2 ? ni : nx);
        }
  EXPECT_GT(intra / ni - inter / nx, 0.1);
}

TEST(Word2Vec, TextExportRoundTrips) {
  TopicCorpus tc = generate_topic_corpus(2, 5, 50, 6, 1);
  SkipGramConfig cfg;
  cfg.dim = 4;
  cfg.min_count = 1;
  cfg.epochs = 1;
  WordEmbeddings e = train_word2vec(tc.lines, cfg, 2);
  const auto path = (fs::temp_directory_path() / "emotl_emb.txt").string();
  save_embeddings_text(e, path);
  WordEmbeddings back = load_embeddings_text(path);
  EXPECT_EQ(back.vocab, e.vocab);
  for (std::size_t i = 0; i < e.matrix.size(); ++i) EXPECT_NEAR(back.matrix[i], e.matrix[i], 1e-6);
  WordEmbeddings via_ck = embeddings_from_checkpoint(deserialize_checkpoint(serialize_checkpoint(to_checkpoint(e, cfg))));
  EXPECT_EQ(via_ck.vocab, e.vocab);
  for (std::size_t i = 0; i < e.matrix.size(); ++i) EXPECT_NEAR(via_ck.matrix[i], e.matrix[i], 1e-6);
}

TEST(Word2Vec, ValidatesMinCount) {
  SkipGramConfig cfg;
  EXPECT_THROW(train_word2vec({{"a", "b"}}, cfg, 1), ConfigError);
}

// ------------------------------------------------------------ language model

TEST(Perplexity, MatchesBruteForceLikelihood) {
  ModelConfig cfg = small_config(9, 9);
  LanguageModel lm(cfg, 21);
  const IdList line = {3, 5, 4, 8, 6};
  const Tensor p = lm_forward(lm, line);
  double log_lik = 0.0;
  for (std::size_t t = 0; t + 1 < line.size(); ++t) log_lik += std::log(p.at(t, line[t + 1]));
  const double expected = std::exp(-log_lik / 4.0);
  EXPECT_NEAR(perplexity(lm, {line}), expected, 1e-9);
  EXPECT_GE(perplexity(lm, {line}), 1.0);
}

TEST(Perplexity, ZeroOutputLayerGivesVocabularySize) {
  ModelConfig cfg = small_config(17, 17);
  LanguageModel lm(cfg, 2);
  lm.param("output.weight").value.fill(0.0);
  lm.param("output.bias").value.fill(0.0);
  EXPECT_NEAR(perplexity(lm, {{3, 4, 5}, {6, 7, 8, 9, 10}}), 17.0, 1e-12);
}

TEST(LanguageModelTraining, CyclicCorpusPredictsSuccessor) {
  const auto corpus = generate_cyclic_corpus({"a", "b", "c"}, 120, 9, 1);
  LmPretrainConfig cfg;
  cfg.model = small_config(1, 1);
  cfg.model.lstm_size = 16;
  cfg.train.max_epochs = 12;
  cfg.train.batch_size = 8;
  cfg.train.adam.lr = 0.01;
  LmPretrainResult r = train_language_model(corpus, cfg, 4);
  EXPECT_LT(r.train_perplexity, 1.1);
  const Tensor p = lm_forward(r.lm, r.vocab.encode({"c", "a"}));
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.cols(); ++i)
    if (p.at(1, i) > p.at(1, best)) best = i;
  EXPECT_EQ(r.vocab.token(best), "b");
  LmPretrainResult again = train_language_model(corpus, cfg, 4);
  EXPECT_EQ(serialize_checkpoint(again.checkpoint()), serialize_checkpoint(r.checkpoint()));
}

TEST(LanguageModelTraining, LmTargetsAreNextTokens) {
  IdBatch b = make_id_batch({{3, 4, 5}, {6, 7}});
  EXPECT_EQ(lm_targets(b), (std::vector<int>{4, 7, 5, -1, -1, -1}));
}

TEST(LanguageModelTraining, ShortCorpusLineRejected) {
  Vocabulary v = build_vocab({{"a", "b"}});
  EXPECT_THROW(encode_corpus({{"a", "b"}, {"a"}}, v), DataError);
}

// ----------------------------------------------------------------- sentiment

TEST(Sentiment, InitialRowsEqualPretrained) {
  SyntheticOptions o;
  o.num_classes = 6;
  o.vocab_size = 120;
  LabeledDataset sent = generate_synthetic_sentiment(o, 60);
  std::vector<TokenList> texts;
  for (const auto& ex : sent.examples) texts.push_back(ex.tokens);
  SkipGramConfig sg;
  sg.dim = 6;
  sg.min_count = 1;
  sg.epochs = 1;
  WordEmbeddings emb = train_word2vec(texts, sg, 1);
  InitializedClassifier init = classifier_with_embeddings(&emb, sent, small_config(1, 3), 7);
  EXPECT_EQ(init.model.config().embedding_dim, 6u);
  EXPECT_GT(init.copied_rows, 0u);
  const Tensor& table = init.model.param("embedding.weight").value;
  for (std::size_t id = Vocabulary::kReserved; id < emb.vocab.size(); ++id) {
    const std::size_t dst = init.vocab.id(emb.vocab.token(id));
    for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(table.at(dst, c), emb.matrix.at(id, c));
  }
}

TEST(Sentiment, LearnsSeparableTaskAndIsDeterministic) {
  SyntheticOptions o;
  o.num_classes = 6;
  o.vocab_size = 120;
  LabeledDataset sent = generate_synthetic_sentiment(o, 300);
  SentimentConfig cfg;
  cfg.model = small_config(1, 3);
  cfg.model.lstm_size = 16;
  cfg.train.max_epochs = 20;
  cfg.train.adam.lr = 0.01;
  SentimentResult r = train_sentiment(sent, nullptr, nullptr, cfg, 3);
  EXPECT_GE(r.train_macro_f1, 0.95);
  SentimentResult again = train_sentiment(sent, nullptr, nullptr, cfg, 3);
  EXPECT_EQ(serialize_checkpoint(again.checkpoint()), serialize_checkpoint(r.checkpoint()));
}
