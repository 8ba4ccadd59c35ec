// emotl: command-line pipeline for pretraining, transfer, evaluation and
// ensembling.
//
// Every subcommand accepts --config FILE with key=value lines (same names as
// the long flags, without dashes). Flags given on the command line win.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "emotl/emotl.hpp"

namespace fs = std::filesystem;
using namespace emotl;

namespace {

// ---------------------------------------------------------------- helpers

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path + "'");
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

struct ModelFlags {
  ModelConfig cfg;
  void add(CLI::App* app) {
    app->add_option("--embedding-dim", cfg.embedding_dim, "Embedding width W")->capture_default_str();
    app->add_option("--lstm-size", cfg.lstm_size, "LSTM size L")->capture_default_str();
    app->add_option("--layers", cfg.num_lstm_layers, "Number of LSTM layers (1 or 2)")->capture_default_str();
    app->add_option("--noise", cfg.embedding_noise, "Embedding Gaussian noise std")->capture_default_str();
    app->add_option("--emb-dropout", cfg.embedding_dropout, "Embedding dropout")->capture_default_str();
    app->add_option("--lstm-dropout", cfg.lstm_dropout, "Dropout between LSTM layers")->capture_default_str();
  }
};

struct TrainFlags {
  TrainConfig cfg;
  void add(CLI::App* app) {
    app->add_option("--epochs", cfg.max_epochs, "Maximum epochs")->capture_default_str();
    app->add_option("--batch-size", cfg.batch_size, "Mini-batch size")->capture_default_str();
    app->add_option("--clip", cfg.clip_norm, "Global gradient norm clip")->capture_default_str();
    app->add_option("--lr", cfg.adam.lr, "Adam learning rate")->capture_default_str();
    app->add_option("--patience", cfg.patience, "Early-stopping patience in epochs")->capture_default_str();
  }
};

void print_epoch(const EpochMetrics& m) {
  std::cout << "epoch " << m.epoch << "  loss " << fixed(m.train_loss);
  if (m.dev_macro_f1) std::cout << "  dev macro-F1 " << fixed(*m.dev_macro_f1);
  std::cout << '\n';
}

nlohmann::json metrics_json(const std::vector<std::size_t>& preds, const std::vector<std::size_t>& golds,
                            const std::vector<std::string>& labels) {
  const std::size_t c = labels.size();
  const auto cm = confusion_matrix(preds, golds, c);
  nlohmann::json j;
  j["labels"] = labels;
  j["examples"] = golds.size();
  j["macro_f1"] = macro_f1(preds, golds, c);
  j["accuracy"] = accuracy(preds, golds);
  j["per_class_f1"] = per_class_f1(cm);
  j["confusion"] = cm.counts;
  return j;
}

void print_metrics(const nlohmann::json& m) {
  const auto labels = m.at("labels").get<std::vector<std::string>>();
  const auto counts = m.at("confusion").get<std::vector<std::vector<std::size_t>>>();
  std::cout << "examples   " << m.at("examples").get<std::size_t>() << '\n';
  std::cout << "macro-F1   " << fixed(m.at("macro_f1").get<double>()) << '\n';
  std::cout << "accuracy   " << fixed(m.at("accuracy").get<double>()) << '\n';
  std::size_t width = 4;
  for (const auto& l : labels) width = std::max(width, l.size());
  std::cout << "confusion (rows gold, columns predicted)\n" << std::setw(static_cast<int>(width)) << "";
  for (const auto& l : labels) std::cout << ' ' << std::setw(static_cast<int>(width)) << l;
  std::cout << '\n';
  for (std::size_t g = 0; g < labels.size(); ++g) {
    std::cout << std::setw(static_cast<int>(width)) << labels[g];
    for (std::size_t v : counts[g]) std::cout << ' ' << std::setw(static_cast<int>(width)) << v;
    std::cout << '\n';
  }
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
  std::string out_dir = "data";
  std::string kind = "cloze";
  SyntheticOptions synth;
  std::size_t dev_per_class = 100;
  std::size_t sentiment_lines = 0;
  std::string corpus_kind = "emotion";
  std::string pattern = "a b c";
  std::size_t lines = 1000;
  std::size_t line_length = 12;
  std::size_t symbols = 20;
  std::size_t topics = 2;
  std::size_t words_per_topic = 20;
};

void cmd_gen_data(const GenDataArgs& a) {
  ensure_dir(a.out_dir);
  const fs::path dir(a.out_dir);
  if (a.kind == "cloze") {
    SyntheticOptions o = a.synth;
    o.corpus_kind = parse_corpus_kind(a.corpus_kind);
    if (a.dev_per_class >= o.examples_per_class) throw ConfigError("--dev-per-class must be smaller than --per-class");
    SyntheticData data = generate_synthetic_cloze(o);
    auto [train, dev] = stratified_split(data.cloze, a.dev_per_class);
    save_dataset(train, (dir / "train.tsv").string());
    save_dataset(dev, (dir / "dev.tsv").string());
    std::vector<TokenList> corpus;
    for (const auto& ex : data.corpus.examples) corpus.push_back(ex.tokens);
    save_corpus(corpus, (dir / "corpus.txt").string());
    std::cout << "classes " << o.num_classes << ", train " << train.size() << ", dev " << dev.size() << ", corpus lines "
              << corpus.size() << '\n';
    for (std::size_t c = 0; c < o.num_classes; ++c)
      std::cout << "  " << data.lexicon.label_names[c] << ": " << data.lexicon.cues[c].size() << " cue tokens ("
                << data.lexicon.cues[c].front() << " … " << data.lexicon.cues[c].back() << "), emotion word "
                << data.lexicon.emotion_words[c] << '\n';
    if (a.sentiment_lines > 0) {
      save_dataset(generate_synthetic_sentiment(o, a.sentiment_lines), (dir / "sentiment.tsv").string());
      std::cout << "sentiment lines " << a.sentiment_lines << '\n';
    }
  } else if (a.kind == "cyclic") {
    std::istringstream ss(a.pattern);
    std::vector<std::string> pattern;
    for (std::string t; ss >> t;) pattern.push_back(t);
    save_corpus(generate_cyclic_corpus(pattern, a.lines, a.line_length, a.synth.seed), (dir / "corpus.txt").string());
    std::cout << "cyclic corpus: " << a.lines << " lines over a " << pattern.size() << "-token cycle\n";
  } else if (a.kind == "uniform") {
    save_corpus(generate_uniform_corpus(a.symbols, a.lines, a.line_length, a.synth.seed), (dir / "corpus.txt").string());
    std::cout << "uniform corpus: " << a.lines << " lines over " << a.symbols << " symbols\n";
  } else if (a.kind == "topics") {
    auto tc = generate_topic_corpus(a.topics, a.words_per_topic, a.lines, a.line_length, a.synth.seed);
    save_corpus(tc.lines, (dir / "corpus.txt").string());
    std::cout << "topic corpus: " << a.lines << " lines, " << a.topics << " topics of " << a.words_per_topic << " words\n";
  } else {
    throw ConfigError("unknown --kind '" + a.kind + "' (expected cloze, cyclic, uniform or topics)");
  }
}

// ---------------------------------------------------------------- pretrain

struct PretrainEmbArgs {
  std::string corpus, out, text_out;
  SkipGramConfig cfg;
  std::uint64_t seed = 1;
};

void cmd_pretrain_emb(const PretrainEmbArgs& a) {
  const auto corpus = load_corpus(a.corpus);
  WordEmbeddings emb = train_word2vec(corpus, a.cfg, a.seed);
  for (std::size_t e = 0; e < emb.epoch_loss.size(); ++e) std::cout << "epoch " << e + 1 << "  loss " << fixed(emb.epoch_loss[e]) << '\n';
  save_checkpoint(to_checkpoint(emb, a.cfg), a.out);
  if (!a.text_out.empty()) save_embeddings_text(emb, a.text_out);
  std::cout << "vocabulary " << emb.vocab.size() << ", dimension " << emb.matrix.cols() << " -> " << a.out << '\n';
}

struct PretrainLmArgs {
  std::string corpus, out;
  ModelFlags model;
  TrainFlags train;
  std::size_t min_count = 1, max_vocab = 50000;
  std::uint64_t seed = 1;
};

void cmd_pretrain_lm(PretrainLmArgs a) {
  const auto corpus = load_corpus(a.corpus, 2);
  if (corpus.empty()) throw ConfigError("corpus '" + a.corpus + "' has no lines");
  a.model.cfg.vocab_size = 1;  // replaced by the corpus vocabulary
  LmPretrainConfig cfg{a.model.cfg, a.train.cfg, a.min_count, a.max_vocab};
  LmPretrainResult r = train_language_model(corpus, cfg, a.seed);
  for (const auto& m : r.history) print_epoch(m);
  Checkpoint ck = r.checkpoint();
  ck.metadata["train_config"] = cfg.train;
  save_checkpoint(ck, a.out);
  std::cout << "vocabulary " << r.vocab.size() << ", perplexity " << fixed(r.train_perplexity) << " -> " << a.out << '\n';
}

struct PretrainSentArgs {
  std::string train, dev, embeddings, out;
  ModelFlags model;
  TrainFlags train_flags;
  bool bidirectional = false;
  bool freeze_embedding = false;
  std::uint64_t seed = 1;
};

void cmd_pretrain_sent(PretrainSentArgs a) {
  const LabeledDataset train = load_labeled_dataset(a.train);
  std::optional<LabeledDataset> dev;
  if (!a.dev.empty()) dev = load_labeled_dataset(a.dev);
  std::optional<WordEmbeddings> emb;
  if (!a.embeddings.empty()) emb = embeddings_from_any_checkpoint(load_checkpoint(a.embeddings));
  a.model.cfg.bidirectional = a.bidirectional;
  a.model.cfg.vocab_size = 1;
  SentimentConfig cfg{a.model.cfg, a.train_flags.cfg, a.freeze_embedding};
  SentimentResult r = train_sentiment(train, dev ? &*dev : nullptr, emb ? &*emb : nullptr, cfg, a.seed);
  for (const auto& m : r.fit.history) print_epoch(m);
  save_checkpoint(r.checkpoint(), a.out);
  std::cout << (emb ? "pretrained rows " + std::to_string(r.copied_rows) : std::string("random embeddings")) << ", train macro-F1 "
            << fixed(r.train_macro_f1) << " -> " << a.out << '\n';
}

// ---------------------------------------------------------------- finetune

struct FinetuneArgs {
  std::string scheme = "none";
  std::string source, train, dev, out, history;
  std::string ft_mode = "simple";
  std::size_t n = 3, k = 5;
  bool concat = false;
  bool bidirectional = false;
  std::size_t lm_epochs = 0;
  ModelFlags model;
  TrainFlags train_flags;
  std::uint64_t seed = 1;
};

void validate_finetune(const FinetuneArgs& a) {
  if (a.concat && a.bidirectional) throw ConfigError("--concat requires a unidirectional LSTM (drop --bidirectional)");
  if (a.scheme != "none" && a.scheme != "p-emb" && a.scheme != "p-sent" && a.scheme != "p-lm")
    throw ConfigError("unknown --scheme '" + a.scheme + "' (expected none, p-emb, p-sent or p-lm)");
  if (a.scheme != "none" && a.source.empty()) throw ConfigError("--scheme " + a.scheme + " needs --source");
  if (a.scheme == "p-lm" && a.bidirectional) throw ConfigError("p-lm transfers a unidirectional language model; drop --bidirectional");
  FreezeSchedule s;
  s.mode = parse_fine_tune_mode(a.ft_mode);
  s.sgu = {a.n, a.k};
  s.validate();
  a.train_flags.cfg.validate();
}

void cmd_finetune(FinetuneArgs a) {
  validate_finetune(a);
  const ClozeDataset train = load_cloze_dataset(a.train);
  std::optional<ClozeDataset> dev;
  if (!a.dev.empty()) {
    dev = load_cloze_dataset(a.dev);
    if (dev->labels != train.labels) throw DataError("train and dev files declare different label sets");
  }
  FreezeSchedule schedule;
  schedule.mode = parse_fine_tune_mode(a.ft_mode);
  schedule.sgu = {a.n, a.k};
  TrainConfig tc = a.train_flags.cfg;
  tc.seed = a.seed;

  ModelConfig cfg = a.model.cfg;
  cfg.bidirectional = a.bidirectional;
  cfg.use_concat = a.concat;
  cfg.num_classes = train.num_classes();
  ClassifierModel model;
  Vocabulary vocab;
  nlohmann::json transfer_info;

  if (a.scheme == "none" || a.scheme == "p-emb") {
    std::optional<WordEmbeddings> emb;
    if (a.scheme == "p-emb") emb = embeddings_from_any_checkpoint(load_checkpoint(a.source));
    cfg.vocab_size = 1;
    auto init = classifier_with_embeddings(emb ? &*emb : nullptr, train, cfg, a.seed);
    model = std::move(init.model);
    vocab = std::move(init.vocab);
    if (emb) {
      schedule.always_frozen.insert("embedding");
      transfer_info["pretrained_rows"] = init.copied_rows;
    }
  } else if (a.scheme == "p-sent") {
    const Checkpoint ck = load_checkpoint(a.source);
    model = classifier_from_checkpoint(ck);
    vocab = ck.vocabulary();
    if (model.config().bidirectional && a.concat) throw ConfigError("--concat requires a unidirectional source model");
    replace_output_layer(model, train.num_classes(), a.seed);
    set_concat(model, a.concat, a.seed + 1);
    transfer_info["source_labels"] = ck.metadata.value("labels", nlohmann::json::array());
  } else {  // p-lm
    const Checkpoint ck = load_checkpoint(a.source);
    LanguageModel lm = language_model_from_checkpoint(ck);
    vocab = ck.vocabulary();
    if (a.lm_epochs > 0) {
      std::vector<TokenList> texts;
      for (const auto& ex : train.examples) texts.push_back(ex.tokens);
      TrainConfig lm_tc = tc;
      lm_tc.max_epochs = a.lm_epochs;
      auto lm_ft = fine_tune_lm(lm, encode_corpus(texts, vocab), schedule, lm_tc);
      for (const auto& m : lm_ft.history) std::cout << "lm fine-tune epoch " << m.epoch << "  loss " << fixed(m.train_loss) << '\n';
      transfer_info["lm_fine_tune_epochs"] = a.lm_epochs;
    }
    model = classifier_from_language_model(lm, cfg, a.seed);
  }

  const auto enc_train = encode_dataset(train, vocab);
  const auto enc_dev = dev ? encode_dataset(*dev, vocab) : std::vector<EncodedExample>{};
  std::size_t steps = 0, clipped = 0;
  FineTuneResult r = fine_tune(std::move(model), enc_train, enc_dev, schedule, tc, [&](const StepRecord& s) {
    ++steps;
    clipped += s.clip.clipped;
  });
  for (const auto& m : r.history) print_epoch(m);

  Checkpoint ck = to_checkpoint(r.model, vocab, train.labels);
  ck.metadata["scheme"] = a.scheme;
  ck.metadata["ft_mode"] = a.ft_mode;
  if (schedule.mode == FineTuneMode::sgu) ck.metadata["sgu"] = {{"n", a.n}, {"k", a.k}};
  ck.metadata["best_epoch"] = r.best_epoch;
  ck.metadata["best_dev_macro_f1"] = r.best_dev_macro_f1;
  ck.metadata["transfer"] = transfer_info;
  ck.metadata["history"] = history_to_json(r);
  save_checkpoint(ck, a.out);

  nlohmann::json hist;
  hist["initial_group_hashes"] = r.initial_hashes;
  hist["epochs"] = history_to_json(r);
  hist["best_epoch"] = r.best_epoch;
  hist["best_dev_macro_f1"] = r.best_dev_macro_f1;
  hist["steps"] = steps;
  hist["clipped_steps"] = clipped;
  write_text(a.history.empty() ? a.out + ".history.json" : a.history, hist.dump(2) + "\n");
  std::cout << "best epoch " << r.best_epoch << ", dev macro-F1 " << fixed(r.best_dev_macro_f1) << " -> " << a.out << '\n';
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string model, data, predictions, metrics;
};

void cmd_evaluate(const EvaluateArgs& a) {
  const Checkpoint ck = load_checkpoint(a.model);
  ClassifierModel model = classifier_from_checkpoint(ck);
  const Vocabulary vocab = ck.vocabulary();
  const auto labels = ck.metadata.at("labels").get<std::vector<std::string>>();

  LabeledDataset ds;
  if (model.config().use_concat) {
    const ClozeDataset cloze = load_cloze_dataset(a.data);
    ds.labels = cloze.labels;
    for (const auto& ex : cloze.examples) ds.examples.push_back({ex.label, ex.tokens});
  } else {
    ds = load_labeled_dataset(a.data);
  }
  std::map<std::string, std::size_t> model_index;
  for (std::size_t i = 0; i < labels.size(); ++i) model_index[labels[i]] = i;
  for (auto& ex : ds.examples) {
    auto it = model_index.find(ds.labels[ex.label]);
    if (it == model_index.end()) throw DataError(a.data + ": label '" + ds.labels[ex.label] + "' is unknown to the model");
    ex.label = it->second;
  }
  ds.labels = labels;

  const auto enc = encode_dataset(ds, vocab);
  const auto posteriors = predict_posteriors(model, enc);
  PredictionFile pf;
  pf.labels = labels;
  std::vector<std::size_t> preds, golds;
  for (std::size_t i = 0; i < enc.size(); ++i) {
    PredictionRow row;
    row.id = std::to_string(i + 1);
    row.gold = static_cast<std::size_t>(enc[i].label);
    row.posterior = posteriors[i];
    row.predicted = argmax_lowest(posteriors[i]);
    preds.push_back(row.predicted);
    golds.push_back(row.gold);
    pf.rows.push_back(std::move(row));
  }
  if (!a.predictions.empty()) save_predictions(pf, a.predictions);
  const auto m = metrics_json(preds, golds, labels);
  if (!a.metrics.empty()) write_text(a.metrics, m.dump(2) + "\n");
  print_metrics(m);
}

// ---------------------------------------------------------------- ensemble

struct EnsembleArgs {
  std::vector<std::string> inputs;
  std::string method = "ua";
  std::string out, metrics;
};

void cmd_ensemble(const EnsembleArgs& a) {
  const EnsembleMethod method = parse_ensemble_method(a.method);
  std::vector<PredictionFile> files;
  for (const auto& p : a.inputs) files.push_back(load_predictions(p));
  const PredictionFile combined = ensemble_files(files, method);
  std::vector<std::size_t> preds, golds;
  for (const auto& r : combined.rows) {
    preds.push_back(r.predicted);
    golds.push_back(r.gold);
  }
  if (!a.out.empty()) save_predictions(combined, a.out);
  const auto m = metrics_json(preds, golds, combined.labels);
  if (!a.metrics.empty()) write_text(a.metrics, m.dump(2) + "\n");
  print_metrics(m);
}

// ---------------------------------------------------------------- gradcheck

int cmd_gradcheck(const GradcheckOptions& opts) {
  const GradcheckReport report = run_gradcheck_suite(opts);
  for (const auto& l : report.layers) {
    char err[32];
    std::snprintf(err, sizeof err, "%.3e", l.max_relative_error);
    std::cout << (l.passed ? "PASS " : "FAIL ") << std::left << std::setw(10) << l.layer << " seeds " << l.seeds
              << "  max relative error " << err << '\n';
  }
  std::cout << (report.passed() ? "all gradient checks passed" : "gradient check failed") << '\n';
  return report.passed() ? 0 : 1;
}

// Expands "--config FILE" into "--key=value" arguments placed before the
// command-line ones, so explicit flags take precedence.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> from_file;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    if (path.empty()) continue;
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    for (const auto& item : CLI::ConfigINI().from_config(in)) {
      std::string value;
      for (const auto& v : item.inputs) value += (value.empty() ? "" : " ") + v;
      from_file.push_back("--" + item.name + "=" + value);
    }
  }
  if (from_file.empty() || args.empty()) return args;
  std::vector<std::string> out{args.front()};
  out.insert(out.end(), from_file.begin(), from_file.end());
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transfer-learning toolkit for cloze-style emotion classification"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  std::string config_path;
  auto add_config = [&](CLI::App* sub) { sub->add_option("--config", config_path, "key=value file; flags override it"); };

  GenDataArgs gen;
  auto* sub_gen = app.add_subcommand("gen-data", "Write synthetic datasets and corpora");
  add_config(sub_gen);
  sub_gen->add_option("--out-dir", gen.out_dir, "Output directory")->capture_default_str();
  sub_gen->add_option("--kind", gen.kind, "cloze, cyclic, uniform or topics")->capture_default_str();
  sub_gen->add_option("--classes", gen.synth.num_classes, "Number of classes")->capture_default_str();
  sub_gen->add_option("--per-class", gen.synth.examples_per_class, "Examples per class")->capture_default_str();
  sub_gen->add_option("--vocab", gen.synth.vocab_size, "Synthetic vocabulary size")->capture_default_str();
  sub_gen->add_option("--dev-per-class", gen.dev_per_class, "Dev examples per class")->capture_default_str();
  sub_gen->add_option("--corpus-lines", gen.synth.corpus_lines, "Unlabeled corpus lines (0: one per example)")->capture_default_str();
  sub_gen->add_option("--corpus-kind", gen.corpus_kind, "emotion, mixed or generic")->capture_default_str();
  sub_gen->add_option("--sentiment-lines", gen.sentiment_lines, "Also write a 3-class sentiment set")->capture_default_str();
  sub_gen->add_option("--pattern", gen.pattern, "Cycle for --kind cyclic")->capture_default_str();
  sub_gen->add_option("--lines", gen.lines, "Lines for cyclic/uniform/topics")->capture_default_str();
  sub_gen->add_option("--line-length", gen.line_length, "Tokens per line for cyclic/uniform/topics")->capture_default_str();
  sub_gen->add_option("--symbols", gen.symbols, "Alphabet size for --kind uniform")->capture_default_str();
  sub_gen->add_option("--topics", gen.topics, "Topics for --kind topics")->capture_default_str();
  sub_gen->add_option("--words-per-topic", gen.words_per_topic, "Words per topic")->capture_default_str();
  sub_gen->add_option("--seed", gen.synth.seed, "Random seed")->capture_default_str();

  PretrainEmbArgs emb;
  auto* sub_emb = app.add_subcommand("pretrain-emb", "Train skip-gram word embeddings");
  add_config(sub_emb);
  sub_emb->add_option("--corpus", emb.corpus, "Unlabeled corpus")->required();
  sub_emb->add_option("--out", emb.out, "Output checkpoint")->required();
  sub_emb->add_option("--text-out", emb.text_out, "Also write 'token v1 ... vD' text");
  sub_emb->add_option("--dim", emb.cfg.dim, "Embedding dimension")->capture_default_str();
  sub_emb->add_option("--window", emb.cfg.window, "Context window")->capture_default_str();
  sub_emb->add_option("--negatives", emb.cfg.negatives, "Negative samples per pair")->capture_default_str();
  sub_emb->add_option("--min-count", emb.cfg.min_count, "Minimum token count")->capture_default_str();
  sub_emb->add_option("--epochs", emb.cfg.epochs, "Epochs")->capture_default_str();
  sub_emb->add_option("--lr", emb.cfg.lr, "Initial learning rate")->capture_default_str();
  sub_emb->add_option("--seed", emb.seed, "Random seed")->capture_default_str();

  PretrainLmArgs lm;
  lm.train.cfg.max_epochs = 10;
  auto* sub_lm = app.add_subcommand("pretrain-lm", "Train a next-token language model");
  add_config(sub_lm);
  sub_lm->add_option("--corpus", lm.corpus, "Unlabeled corpus")->required();
  sub_lm->add_option("--out", lm.out, "Output checkpoint")->required();
  lm.model.add(sub_lm);
  lm.train.add(sub_lm);
  sub_lm->add_option("--min-count", lm.min_count, "Minimum token count")->capture_default_str();
  sub_lm->add_option("--max-vocab", lm.max_vocab, "Most frequent tokens kept")->capture_default_str();
  sub_lm->add_option("--seed", lm.seed, "Random seed")->capture_default_str();

  PretrainSentArgs sent;
  auto* sub_sent = app.add_subcommand("pretrain-sent", "Train a sentiment classifier");
  add_config(sub_sent);
  sub_sent->add_option("--train", sent.train, "Labeled training set")->required();
  sub_sent->add_option("--dev", sent.dev, "Labeled dev set for early stopping");
  sub_sent->add_option("--embeddings", sent.embeddings, "Pretrained embeddings checkpoint");
  sub_sent->add_option("--out", sent.out, "Output checkpoint")->required();
  sent.model.add(sub_sent);
  sent.train_flags.add(sub_sent);
  sub_sent->add_flag("--bidirectional", sent.bidirectional, "Bidirectional LSTM");
  sub_sent->add_flag("--freeze-embedding", sent.freeze_embedding, "Keep the embedding layer fixed");
  sub_sent->add_option("--seed", sent.seed, "Random seed")->capture_default_str();

  FinetuneArgs ft;
  auto* sub_ft = app.add_subcommand("finetune", "Train the emotion classifier, optionally from a pretrained source");
  add_config(sub_ft);
  sub_ft->add_option("--scheme", ft.scheme, "none, p-emb, p-sent or p-lm")->capture_default_str();
  sub_ft->add_option("--source", ft.source, "Pretrained checkpoint");
  sub_ft->add_option("--train", ft.train, "Cloze training set")->required();
  sub_ft->add_option("--dev", ft.dev, "Cloze dev set");
  sub_ft->add_option("--out", ft.out, "Output checkpoint")->required();
  sub_ft->add_option("--history", ft.history, "Per-epoch history JSON (default: <out>.history.json)");
  sub_ft->add_option("--ft-mode", ft.ft_mode, "simple or sgu")->capture_default_str();
  sub_ft->add_option("--n", ft.n, "SGU epoch unfreezing the LSTM layers")->capture_default_str();
  sub_ft->add_option("--k", ft.k, "SGU epoch unfreezing the embedding")->capture_default_str();
  sub_ft->add_flag("--concat", ft.concat, "Append the hidden state before the placeholder");
  sub_ft->add_flag("--bidirectional", ft.bidirectional, "Bidirectional LSTM");
  sub_ft->add_option("--lm-epochs", ft.lm_epochs, "p-lm: next-token fine-tuning epochs on the task text")->capture_default_str();
  ft.model.add(sub_ft);
  ft.train_flags.add(sub_ft);
  sub_ft->add_option("--seed", ft.seed, "Random seed")->capture_default_str();

  EvaluateArgs ev;
  auto* sub_ev = app.add_subcommand("evaluate", "Score a classifier and write posteriors");
  add_config(sub_ev);
  sub_ev->add_option("--model", ev.model, "Classifier checkpoint")->required();
  sub_ev->add_option("--data", ev.data, "Labeled dataset")->required();
  sub_ev->add_option("--predictions", ev.predictions, "Prediction file to write");
  sub_ev->add_option("--metrics", ev.metrics, "Metrics JSON to write");

  EnsembleArgs ens;
  auto* sub_ens = app.add_subcommand("ensemble", "Combine prediction files");
  add_config(sub_ens);
  sub_ens->add_option("inputs", ens.inputs, "Prediction files")->required()->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  sub_ens->add_option("--method", ens.method, "ua or mv")->capture_default_str();
  sub_ens->add_option("--out", ens.out, "Combined prediction file");
  sub_ens->add_option("--metrics", ens.metrics, "Metrics JSON to write");

  GradcheckOptions gc;
  auto* sub_gc = app.add_subcommand("gradcheck", "Check analytic gradients against finite differences");
  add_config(sub_gc);
  sub_gc->add_option("--seeds", gc.seeds, "Random instances per layer")->capture_default_str();
  sub_gc->add_option("--tolerance", gc.tolerance, "Maximum relative error")->capture_default_str();
  sub_gc->add_option("--inject-fault", gc.inject_fault, "Flip the sign of one layer's backward")->group("");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.user_facing() ? 1 : 2;
  }

  try {
    if (sub_gen->parsed()) cmd_gen_data(gen);
    else if (sub_emb->parsed()) cmd_pretrain_emb(emb);
    else if (sub_lm->parsed()) cmd_pretrain_lm(lm);
    else if (sub_sent->parsed()) cmd_pretrain_sent(sent);
    else if (sub_ft->parsed()) cmd_finetune(ft);
    else if (sub_ev->parsed()) cmd_evaluate(ev);
    else if (sub_ens->parsed()) cmd_ensemble(ens);
    else if (sub_gc->parsed()) return cmd_gradcheck(gc);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.user_facing() ? 1 : 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed metadata: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
