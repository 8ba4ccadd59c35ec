#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "emotl/dataset.hpp"
#include "emotl/ensemble.hpp"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("emotl_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(const std::string& args) {
  const std::string cmd = std::string(EMOTL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kSmallModel = " --embedding-dim 6 --lstm-size 6 --layers 1 --epochs 2 --batch-size 16";

}  // namespace

TEST(Cli, GenDataIsDeterministic) {
  const fs::path a = scratch("gen_a"), b = scratch("gen_b");
  ASSERT_EQ(run("gen-data --per-class 10 --dev-per-class 3 --seed 4 --out-dir " + a.string()), 0);
  ASSERT_EQ(run("gen-data --per-class 10 --dev-per-class 3 --seed 4 --out-dir " + b.string()), 0);
  for (const char* f : {"train.tsv", "dev.tsv", "corpus.txt"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  EXPECT_EQ(emotl::load_cloze_dataset((a / "train.tsv").string()).size(), 6u * 7u);
}

TEST(Cli, UserErrorsExitOne) {
  const fs::path d = scratch("errors");
  EXPECT_EQ(run("gen-data --classes 1 --out-dir " + d.string()), 1);
  EXPECT_EQ(run("no-such-command"), 1);
  EXPECT_EQ(run("finetune --train /nonexistent/train.tsv --out " + (d / "m.ntck").string()), 1);
  ASSERT_EQ(run("gen-data --classes 3 --per-class 8 --dev-per-class 2 --vocab 60 --out-dir " + d.string()), 0);
  EXPECT_EQ(run("finetune --concat --bidirectional --train " + (d / "train.tsv").string() + " --out " +
                (d / "m.ntck").string() + kSmallModel),
            1);
  EXPECT_FALSE(fs::exists(d / "m.ntck"));
}

TEST(Cli, ConfigFileIsOverriddenByFlags) {
  const fs::path d = scratch("config");
  std::ofstream(d / "gen.cfg") << "classes=3\nper-class=6\ndev-per-class=2\nvocab=60\n";
  ASSERT_EQ(run("gen-data --config " + (d / "gen.cfg").string() + " --out-dir " + d.string()), 0);
  auto ds = emotl::load_cloze_dataset((d / "train.tsv").string());
  EXPECT_EQ(ds.labels.size(), 3u);
  EXPECT_EQ(ds.size(), 12u);
  ASSERT_EQ(run("gen-data --config " + (d / "gen.cfg").string() + " --per-class 9 --out-dir " + d.string()), 0);
  EXPECT_EQ(emotl::load_cloze_dataset((d / "train.tsv").string()).size(), 21u);
  EXPECT_EQ(run("gen-data --config " + (d / "missing.cfg").string() + " --out-dir " + d.string()), 1);
}

TEST(Cli, SingleFileEnsembleMatchesEvaluate) {
  const fs::path d = scratch("ens");
  ASSERT_EQ(run("gen-data --classes 3 --per-class 12 --dev-per-class 4 --vocab 60 --seed 2 --out-dir " + d.string()), 0);
  const std::string train = (d / "train.tsv").string(), dev = (d / "dev.tsv").string();
  ASSERT_EQ(run("finetune --train " + train + " --dev " + dev + " --out " + (d / "m.ntck").string() + kSmallModel), 0);
  ASSERT_EQ(run("evaluate --model " + (d / "m.ntck").string() + " --data " + dev + " --predictions " +
                (d / "pred.tsv").string() + " --metrics " + (d / "eval.json").string()),
            0);
  ASSERT_EQ(run("ensemble " + (d / "pred.tsv").string() + " --method ua --out " + (d / "ens.tsv").string() +
                " --metrics " + (d / "ens.json").string()),
            0);
  auto pred = emotl::load_predictions((d / "pred.tsv").string());
  auto ens = emotl::load_predictions((d / "ens.tsv").string());
  ASSERT_EQ(pred.rows.size(), ens.rows.size());
  for (std::size_t i = 0; i < pred.rows.size(); ++i) EXPECT_EQ(pred.rows[i].predicted, ens.rows[i].predicted);
  EXPECT_EQ(slurp(d / "eval.json"), slurp(d / "ens.json"));
}

TEST(Cli, GradcheckSubcommand) {
  EXPECT_EQ(run("gradcheck --seeds 1"), 0);
  EXPECT_EQ(run("gradcheck --seeds 1 --inject-fault attention"), 1);
}
