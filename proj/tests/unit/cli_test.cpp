#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include "ptx/synthgen.hpp"
#include "tempdir.hpp"

namespace {

struct Run {
  int code;
  std::string err;
};

Run ptx_cli(const std::string& args, const oracle::TempDir& dir) {
  const auto err = dir / "stderr.txt";
  const std::string cmd = std::string(PTX_CLI_PATH) + " " + args + " >/dev/null 2>" + err.string();
  const int status = std::system(cmd.c_str());
  std::ifstream in(err);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, std::string((std::istreambuf_iterator<char>(in)), {})};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Cli, UsageErrorsExitWithTwo) {
  oracle::TempDir dir;
  EXPECT_EQ(ptx_cli("", dir).code, 2);
  EXPECT_EQ(ptx_cli("frobnicate", dir).code, 2);
  EXPECT_EQ(ptx_cli("prepare-folds --k 5", dir).code, 2);
  EXPECT_EQ(ptx_cli("plot-roc", dir).code, 2);
  const auto bad = ptx_cli("train svm --manifest m.csv --folds f.tsv", dir);
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("svm"), std::string::npos) << bad.err;
}

TEST(Cli, PrepareFoldsIsDeterministicAndEvaluateListsMissingCheckpoints) {
  oracle::TempDir dir;
  ptx::SynthSpec spec;
  spec.n_cases = 20;
  spec.image_side = 64;
  ptx::generate(spec, dir / "data");
  const std::string manifest = (dir / "data" / "manifest.csv").string();
  ASSERT_EQ(ptx_cli("prepare-folds --manifest " + manifest + " --seed 3 --out " + (dir / "a.tsv").string(), dir).code, 0);
  ASSERT_EQ(ptx_cli("prepare-folds --manifest " + manifest + " --seed 3 --out " + (dir / "b.tsv").string(), dir).code, 0);
  EXPECT_EQ(slurp(dir / "a.tsv"), slurp(dir / "b.tsv"));

  std::filesystem::create_directories(dir / "ckpt");
  const auto r = ptx_cli("evaluate --manifest " + manifest + " --folds " + (dir / "a.tsv").string() + " --checkpoints " +
                             (dir / "ckpt").string() + " --only-folds 0 --out " + (dir / "eval").string(),
                         dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("cnn fold 0"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("fcn fold 0"), std::string::npos) << r.err;
  EXPECT_FALSE(std::filesystem::exists(dir / "eval" / "report.json"));
}
