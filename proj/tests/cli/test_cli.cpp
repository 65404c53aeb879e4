#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code = -1;
  std::string out;
};

// Runs the CLI through the shell with stderr folded into the output.
CliRun run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + std::string(L2S_CLI) + " " + args + " 2>&1";
  CliRun r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::map<std::string, std::string> parse_report(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    if (tab != std::string::npos) kv[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return kv;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "l2s_cli_test";
    fs::remove_all(root_);
    fs::create_directories(root_);
    const CliRun g = run("gen --L 1000 --d 16 --N 2000 --r-true 5 --seed 7 --eval-n 300 --out-dir " +
                      (root_ / "data").string());
    ASSERT_EQ(g.code, 0) << g.out;
    gen_out_ = g.out;
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::string data(const std::string& f) { return (root_ / "data" / f).string(); }
  static std::string path(const std::string& f) { return (root_ / f).string(); }
  static std::string train_args(int outer = 3) {
    return "--layer " + data("layer.bin") + " --contexts " + data("contexts.bin") +
           " --r 8 --budget 40 --seed 1 --T " + std::to_string(outer);
  }

  static fs::path root_;
  static std::string gen_out_;
};
fs::path Cli::root_;
std::string Cli::gen_out_;

TEST_F(Cli, GenIsDeterministicAndWritesThreeFilesPlusEval) {
  const CliRun g = run("gen --L 1000 --d 16 --N 2000 --r-true 5 --seed 7 --eval-n 300 --out-dir " +
                    path("again"));
  ASSERT_EQ(g.code, 0) << g.out;
  for (const char* f : {"layer.bin", "contexts.bin", "meta.txt", "eval.bin"})
    EXPECT_EQ(slurp(data(f)), slurp(path(std::string("again/") + f))) << f;
}

TEST_F(Cli, GenRefusesToOverwriteWithoutForce) {
  const std::string args = "gen --L 200 --d 8 --N 300 --r-true 3 --subset 20 --seed 1 --out-dir " +
                           path("overwrite");
  EXPECT_EQ(run(args).code, 0);
  const CliRun again = run(args);
  EXPECT_EQ(again.code, 2);
  EXPECT_NE(again.out.find("--force"), std::string::npos) << again.out;
  EXPECT_EQ(run(args + " --force").code, 0);
}

TEST_F(Cli, PrintedContainmentMatchesMetadata) {
  const auto printed = parse_report(gen_out_);
  const auto meta = parse_report(slurp(data("meta.txt")));
  ASSERT_TRUE(printed.count("planted_containment"));
  EXPECT_NEAR(std::stod(printed.at("planted_containment")), std::stod(meta.at("planted_containment")),
              1e-6);
  EXPECT_GE(std::stod(printed.at("planted_containment")), 0.95);
}

TEST_F(Cli, KmeansModeEqualsZeroIterations) {
  ASSERT_EQ(run("train " + train_args() + " --mode kmeans --out " + path("km.bin")).code, 0);
  ASSERT_EQ(run("train " + train_args(0) + " --out " + path("t0.bin")).code, 0);
  EXPECT_EQ(slurp(path("km.bin")), slurp(path("t0.bin")));
}

TEST_F(Cli, L2sLossNoWorseThanKmeans) {
  const CliRun km = run("train " + train_args() + " --mode kmeans --out " + path("km2.bin"));
  const CliRun l2s = run("train " + train_args() + " --out " + path("l2s2.bin") + " --log " +
                      path("l2s2.tsv"));
  ASSERT_EQ(km.code, 0) << km.out;
  ASSERT_EQ(l2s.code, 0) << l2s.out;
  EXPECT_LE(std::stod(parse_report(l2s.out).at("final_mismatch_loss")),
            std::stod(parse_report(km.out).at("final_mismatch_loss")));
  EXPECT_EQ(slurp(path("l2s2.tsv")).rfind("# step\t", 0), 0u);
}

TEST_F(Cli, TrainIsByteIdenticalAcrossRuns) {
  ASSERT_EQ(run("train " + train_args() + " --out " + path("a.bin") + " --log " + path("a.tsv")).code, 0);
  ASSERT_EQ(run("train " + train_args() + " --out " + path("b.bin") + " --log " + path("b.tsv")).code, 0);
  EXPECT_EQ(slurp(path("a.bin")), slurp(path("b.bin")));
  EXPECT_EQ(slurp(path("a.tsv")), slurp(path("b.tsv")));
}

TEST_F(Cli, BenchFullModelIsExact) {
  const CliRun b = run("bench --layer " + data("layer.bin") + " --eval " + data("eval.bin") +
                    " --model full --k 1,5");
  ASSERT_EQ(b.code, 0) << b.out;
  const auto kv = parse_report(b.out);
  EXPECT_EQ(kv.at("p_at_1"), "1.000000");
  EXPECT_EQ(kv.at("p_at_5"), "1.000000");
}

TEST_F(Cli, BenchTrainedModelReportsBothPrecisionsAndConsistentSpeedups) {
  ASSERT_EQ(run("train " + train_args() + " --out " + path("bench.bin")).code, 0);
  const CliRun b = run("bench --layer " + data("layer.bin") + " --eval " + data("eval.bin") +
                    " --model " + path("bench.bin") + " --k 1,5 --reps 5");
  ASSERT_EQ(b.code, 0) << b.out;
  const auto kv = parse_report(b.out);
  ASSERT_TRUE(kv.count("p_at_1") && kv.count("p_at_5"));
  const double logit = std::stod(kv.at("logit_count_speedup"));
  const double counter = std::stod(kv.at("counter_speedup"));
  EXPECT_NEAR(counter, logit, 0.05 * logit);
  const double expect = 1000.0 / (8.0 + std::stod(kv.at("mean_candidate_size")));
  EXPECT_NEAR(logit, expect, 1e-4 * expect);
}

TEST_F(Cli, BenchShapeMismatchExitsOne) {
  ASSERT_EQ(run("gen --L 1000 --d 8 --N 200 --r-true 2 --seed 3 --out-dir " + path("d8")).code, 0);
  const CliRun b = run("bench --layer " + data("layer.bin") + " --contexts " + path("d8/contexts.bin"));
  EXPECT_EQ(b.code, 1) << b.out;
}

TEST_F(Cli, PerplexityFullRankHasNoGap) {
  ASSERT_EQ(run("train " + train_args() + " --out " + path("ppl.bin")).code, 0);
  const CliRun p = run("ppl --layer " + data("layer.bin") + " --eval " + data("eval.bin") + " --model " +
                    path("ppl.bin") + " --rank full");
  ASSERT_EQ(p.code, 0) << p.out;
  EXPECT_LE(std::stod(parse_report(p.out).at("relative_gap")), 1e-6);
  const CliRun q = run("ppl --layer " + data("layer.bin") + " --eval " + data("eval.bin") + " --model " +
                    path("ppl.bin") + " --rank d/4");
  ASSERT_EQ(q.code, 0) << q.out;
  EXPECT_EQ(parse_report(q.out).at("svd_rank"), "4");
}

TEST_F(Cli, PerplexityErrors) {
  const CliRun missing = run("ppl --layer " + data("layer.bin") + " --eval " + path("nope.bin"));
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.out.find("nope.bin"), std::string::npos) << missing.out;
  const CliRun rank = run("ppl --layer " + data("layer.bin") + " --eval " + data("eval.bin") + " --rank 99");
  EXPECT_EQ(rank.code, 1) << rank.out;
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("train --bogus 1").code, 2);
  EXPECT_EQ(run("train --layer " + data("layer.bin")).code, 2);
  EXPECT_EQ(run("bench --layer " + data("layer.bin") + " --mode fancy").code, 2);
}

TEST_F(Cli, SeedFromEnvironmentAndConfigFile) {
  const std::string base = "gen --L 200 --d 8 --N 300 --r-true 3 --subset 20 --out-dir ";
  ASSERT_EQ(run(base + path("env"), "L2S_SEED=5").code, 0);
  ASSERT_EQ(run(base + path("flag") + " --seed 5").code, 0);
  EXPECT_EQ(slurp(path("env/contexts.bin")), slurp(path("flag/contexts.bin")));

  {
    std::ofstream cfg(path("gen.ini"));
    cfg << "[gen]\nseed = 5\nsubset = 20\n";
  }
  ASSERT_EQ(run("--config " + path("gen.ini") + " gen --L 200 --d 8 --N 300 --r-true 3 --out-dir " +
                path("cfg")).code, 0);
  EXPECT_EQ(slurp(path("cfg/contexts.bin")), slurp(path("flag/contexts.bin")));

  // A flag on the command line beats the file.
  ASSERT_EQ(run("--config " + path("gen.ini") + " gen --L 200 --d 8 --N 300 --r-true 3 --seed 6 --out-dir " +
                path("cfg6")).code, 0);
  EXPECT_NE(slurp(path("cfg6/contexts.bin")), slurp(path("flag/contexts.bin")));
}

}  // namespace
