#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "match/errors.hpp"
#include "match_cli/pipeline.hpp"
#include "match_cli/run_config.hpp"
#include "temp_dir.hpp"

namespace {

using namespace match;
using namespace match::cli;
namespace fs = std::filesystem;

struct CommandResult {
  int exit_code = -1;
  std::string output;
};

CommandResult run_match(const std::string& args, const fs::path& scratch) {
  const fs::path log = scratch / "cli-output.txt";
  const std::string command = std::string(MATCH_BINARY) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(command.c_str());
  CommandResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

TEST(ParseConfig, EmptyFileGivesDefaults) {
  match::testing::TempDir dir;
  write_file(dir / "empty.conf", "# nothing here\n\n");
  const auto c = parse_config(dir / "empty.conf");
  EXPECT_EQ(c.pretraining.gamma, 0.3);
  EXPECT_EQ(c.encoder.heads, 2u);
  EXPECT_EQ(c.encoder.cls_tokens, 8u);
  EXPECT_EQ(c.encoder.layers, 3u);
  EXPECT_EQ(c.encoder.dropout, 0.1);
  EXPECT_EQ(c.encoder.dim, 100u);
  EXPECT_EQ(c.pretraining.dim, 100u);
  EXPECT_EQ(c.train.lambda_param, 1e-3);
  EXPECT_EQ(c.train.lambda_output, 1e-2);
  EXPECT_EQ(c.top_k, 5u);
}

TEST(ParseConfig, OverridesBeatTheFile) {
  match::testing::TempDir dir;
  write_file(dir / "a.conf", "gamma = 0.3\ndim=16  # inline comment\nseed = 4\n");
  const std::pair<std::string, std::string> over[] = {{"gamma", "0.5"}};
  const auto c = parse_config(dir / "a.conf", over);
  EXPECT_EQ(c.pretraining.gamma, 0.5);
  EXPECT_EQ(c.encoder.dim, 16u);
  EXPECT_EQ(c.pretraining.seed, 4u);
  EXPECT_EQ(c.train.seed, 4u);
}

TEST(ParseConfig, InvalidValuesAreConfigErrors) {
  match::testing::TempDir dir;
  write_file(dir / "bad.conf", "gamma = -1\n");
  EXPECT_THROW(parse_config(dir / "bad.conf"), ConfigError);
  write_file(dir / "type.conf", "layers = three\n");
  EXPECT_THROW(parse_config(dir / "type.conf"), ConfigError);
  write_file(dir / "heads.conf", "dim = 10\nheads = 3\n");
  EXPECT_THROW(parse_config(dir / "heads.conf"), ConfigError);
}

TEST(ParseConfig, UnknownKeyListsValidKeys) {
  RunConfig c;
  try {
    set_key(c, "gamme", "0.3");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("gamme"), std::string::npos);
    for (const char* key : {"gamma", "lambda_param", "cls_tokens", "output_dir"}) {
      EXPECT_NE(msg.find(key), std::string::npos) << key;
    }
  }
}

TEST(ParseConfig, ManifestReloadsToTheSameConfig) {
  match::testing::TempDir dir;
  RunConfig c;
  set_key(c, "dim", "12");
  set_key(c, "heads", "3");
  set_key(c, "lambda_output", "7.25");
  set_key(c, "drop_metadata", "venue");
  set_key(c, "seed", "99");
  write_manifest(dir / "manifest.txt", c, "train");
  const auto back = parse_config(dir / "manifest.txt");
  EXPECT_EQ(back.entries(), c.entries());
}

TEST(Fingerprint, Fnv1aKnownValues) {
  EXPECT_EQ(text_fingerprint(""), "cbf29ce484222325");
  EXPECT_EQ(text_fingerprint("a"), "af63dc4c8601ec8c");
}

TEST(Binary, GammaFlagOverridesFile) {
  match::testing::TempDir dir;
  write_file(dir / "c.conf", "gamma = 0.3\n");
  auto r = run_match("synth -c " + (dir / "c.conf").string() + " --gamma -1 --output-dir " +
                         (dir / "out").string(),
                     dir.path());
  EXPECT_EQ(r.exit_code, 1) << r.output;
  EXPECT_NE(r.output.find("gamma"), std::string::npos) << r.output;
}

TEST(Binary, UnknownFlagIsUsageError) {
  match::testing::TempDir dir;
  auto r = run_match("synth --gammma 0.5", dir.path());
  EXPECT_EQ(r.exit_code, 1) << r.output;
}

TEST(Binary, EvalWithoutCheckpointNamesTheFile) {
  match::testing::TempDir dir;
  const auto out = (dir / "out").string();
  const std::string common = " --output-dir " + out + " --synth-documents 60 --dim 8";
  ASSERT_EQ(run_match("synth" + common, dir.path()).exit_code, 0);
  auto r = run_match("eval" + common, dir.path());
  EXPECT_EQ(r.exit_code, 2) << r.output;
  EXPECT_NE(r.output.find("model.ckpt"), std::string::npos) << r.output;
}

TEST(Binary, TrainWithoutEmbeddingsNamesTheFile) {
  match::testing::TempDir dir;
  const auto out = (dir / "out").string();
  const std::string common = " --output-dir " + out + " --synth-documents 60 --dim 8";
  ASSERT_EQ(run_match("synth" + common, dir.path()).exit_code, 0);
  auto r = run_match("train" + common, dir.path());
  EXPECT_NE(r.exit_code, 0);
  EXPECT_NE(r.output.find("embeddings.txt"), std::string::npos) << r.output;
}

TEST(Binary, NoHierarchyManifestShowsZeroLambdas) {
  match::testing::TempDir dir;
  const auto out = dir / "out";
  const std::string common = " --output-dir " + out.string() +
                             " --synth-documents 60 --dim 8 --layers 1 --cls-tokens 2"
                             " --max-length 24 --epochs 1 --batch-size 16";
  ASSERT_EQ(run_match("synth" + common, dir.path()).exit_code, 0);
  auto r = run_match("train --no-pretrain --no-hierarchy" + common, dir.path());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto manifest = read_file(out / "manifest-train.txt");
  EXPECT_NE(manifest.find("lambda_param = 0\n"), std::string::npos) << manifest;
  EXPECT_NE(manifest.find("lambda_output = 0\n"), std::string::npos) << manifest;
  EXPECT_NE(manifest.find("pretrain = false\n"), std::string::npos) << manifest;
  EXPECT_TRUE(fs::exists(out / "model.ckpt"));
}

TEST(Binary, FullPipelineWritesReport) {
  match::testing::TempDir dir;
  const auto out = dir / "out";
  auto r = run_match("all --no-author --output-dir " + out.string() +
                         " --synth-documents 150 --dim 8 --layers 1 --cls-tokens 2"
                         " --max-length 24 --epochs 2 --batch-size 16 --pretrain-epochs 1",
                     dir.path());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  for (const char* name : {"corpus.jsonl", "hierarchy.tsv", "embeddings.txt", "model.ckpt",
                           "report.csv", "per_doc.csv", "train.log", "match.log",
                           "manifest-synth.txt", "manifest-pretrain.txt", "manifest-train.txt", "manifest-eval.txt", "vocab.txt", "split.txt"}) {
    EXPECT_TRUE(fs::exists(out / name)) << name;
  }
  const auto report = read_file(out / "report.csv");
  EXPECT_NE(report.find("NDCG@3,"), std::string::npos) << report;
  EXPECT_NE(read_file(out / "manifest-eval.txt").find("drop_metadata = authors"),
            std::string::npos);

  // predict works from the saved artifacts alone.
  auto p = run_match("predict --output-dir " + out.string() +
                         " --synth-documents 150 --dim 8 --layers 1 --cls-tokens 2"
                         " --max-length 24 --no-author",
                     dir.path());
  EXPECT_EQ(p.exit_code, 0) << p.output;
  EXPECT_TRUE(fs::exists(out / "predictions.tsv"));
}

}  // namespace
