#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>

#include "test_util.hpp"

using namespace deepel;
using namespace deepel::testing;

namespace {

struct RunResult {
  int code;
  std::string out, err;
};

// Runs the CLI with `args` (already shell-quoted where needed).
RunResult Cli(const TempDir& dir, const std::string& args, const std::string& data_dir = "") {
  const std::string out = dir.File("stdout.txt"), err = dir.File("stderr.txt");
  std::string cmd = data_dir.empty() ? "env -u DEEPEL_DATA_DIR " : "env DEEPEL_DATA_DIR='" + data_dir + "' ";
  cmd += std::string("'") + DEEPEL_CLI_PATH + "' --quiet " + args + " >'" + out + "' 2>'" + err + "'";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ReadFile(out), ReadFile(err)};
}

const char* kSmall =
    "--kb-size 30 --docs 24 --topics 3 --vocab 500 --dim 12 --context 10";

std::size_t Lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  TempDir dir;
  EXPECT_EQ(Cli(dir, "--help").code, 0);
  EXPECT_EQ(Cli(dir, "").code, 1);
  EXPECT_EQ(Cli(dir, "no-such-command").code, 1);
  EXPECT_EQ(Cli(dir, "generate-synthetic --kb-size notanumber").code, 1);
  const auto gc_help = Cli(dir, "grad-check --help");
  EXPECT_EQ(gc_help.code, 0);
  EXPECT_EQ(Cli(dir, "--help").out.find("grad-check"), std::string::npos);
}

TEST(Cli, ValidationErrorIsOneIoErrorIsTwo) {
  TempDir dir;
  auto r = Cli(dir, "generate-synthetic --coherence 2 --out '" + dir.File("g") + "'");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("coherence"), std::string::npos) << r.err;
  r = Cli(dir, "eval-relatedness --data-dir '" + dir.File("absent") + "'");
  EXPECT_EQ(r.code, 2) << r.err;
  WriteFile(dir.File("bad.jsonl"), "{not json\n");
  r = Cli(dir, "evaluate --corpus '" + dir.File("bad.jsonl") + "'");
  EXPECT_EQ(r.code, 1) << r.err;
}

TEST(Cli, DataDirFromEnvironment) {
  TempDir dir;
  const std::string data = dir.File("envdata");
  const auto r = Cli(dir, std::string("generate-synthetic ") + kSmall, data);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(data + "/train.jsonl"));
  // An explicit flag beats the environment.
  const std::string flag = dir.File("flagdata");
  ASSERT_EQ(Cli(dir, "--data-dir '" + flag + "' generate-synthetic " + kSmall, data).code, 0);
  EXPECT_TRUE(std::filesystem::exists(flag + "/train.jsonl"));
}

TEST(Cli, ConfigFileAndFlagPrecedence) {
  TempDir dir;
  WriteFile(dir.File("c.ini"), "kb-size = 30\ndocs = 24\ntopics = 3\nvocab = 500\ndim = 12\n");
  const std::string a = dir.File("a"), b = dir.File("b");
  ASSERT_EQ(Cli(dir, "--config '" + dir.File("c.ini") + "' generate-synthetic --out '" + a + "'").code, 0);
  EXPECT_EQ(Lines(ReadFile(a + "/signatures.tsv")), 30u);
  ASSERT_EQ(Cli(dir, "--config '" + dir.File("c.ini") + "' generate-synthetic --kb-size 36 --out '" + b + "'").code, 0);
  EXPECT_EQ(Lines(ReadFile(b + "/signatures.tsv")), 36u);
  WriteFile(dir.File("bad.ini"), "kb-size = 30\nfrobnicate = 1\n");
  const auto r = Cli(dir, "--config '" + dir.File("bad.ini") + "' generate-synthetic --out '" + a + "'");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("frobnicate"), std::string::npos) << r.err;
  EXPECT_EQ(Cli(dir, "--config '" + dir.File("none.ini") + "' generate-synthetic").code, 2);
}

TEST(Cli, EndToEndPipeline) {
  TempDir dir;
  const std::string d = dir.File("data");
  auto step = [&](const std::string& args) {
    const auto r = Cli(dir, args, d);
    EXPECT_EQ(r.code, 0) << args << "\n" << r.err;
    return r;
  };
  step(std::string("generate-synthetic ") + kSmall);
  step("train-embeddings --description-iterations 50 --hyperlink-iterations 50");
  EXPECT_TRUE(std::filesystem::exists(d + "/entities.txt"));
  EXPECT_EQ(step("eval-relatedness").out.find("MAP") != std::string::npos, true);
  step("inspect-neighbors --entity ent0003 --k 5");
  step("build-prior");
  const auto sel = step("select-candidates --corpus '" + d + "/test.jsonl' --out '" + d +
                        "/test_cands.jsonl' --k 10");
  EXPECT_NE(sel.out.find("gold recall 100.00%"), std::string::npos) << sel.out;
  step("train-local --prior '" + d + "/prior.tsv' --k 10 --hidden 8 --r 5 --epochs 3");
  EXPECT_TRUE(std::filesystem::exists(d + "/local.model.txt"));
  step("train-global --prior '" + d + "/prior.tsv' --k 10 --hidden 8 --r 5 --t 2 --epochs 2 "
       "--init-local '" + d + "/local.model'");
  step("predict --model global --corpus '" + d + "/test_cands.jsonl' --attention '" + d +
       "/att.tsv'");
  const auto ev = step("evaluate --corpus '" + d + "/test_cands.jsonl' --out '" + d + "/m.tsv'");
  EXPECT_NE(ev.out.find("predictions"), std::string::npos);
  step("breakdown --corpus '" + d + "/test_cands.jsonl'");
  // Same seed, same predictions.
  const auto first = ReadFile(d + "/predictions.tsv");
  step("predict --model global --corpus '" + d + "/test_cands.jsonl'");
  EXPECT_EQ(ReadFile(d + "/predictions.tsv"), first);
  EXPECT_EQ(Cli(dir, "predict --model global --model-file '" + d + "/local.model' --corpus '" +
                         d + "/test_cands.jsonl'", d).code,
            1);
}

TEST(Cli, GradCheckPasses) {
  TempDir dir;
  const auto r = Cli(dir, "grad-check --instances 2");
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("global: max relative error"), std::string::npos);
}
