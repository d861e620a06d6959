#include "segattr/harness.hpp"
#include "segattr/netpbm.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#ifndef SEGATTR_CLI
#error "SEGATTR_CLI must name the segattr executable"
#endif

namespace segattr {
namespace {

namespace fs = std::filesystem;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("segattr_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
    const Sample s = synth_sample(17, 32);
    write_ppm(dir_ / "img.ppm", s.image);
    write_pgm_labels(dir_ / "img_mask.pgm", s.labels);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& args) {
    const std::string cmd = std::string("'") + SEGATTR_CLI + "' " + args + " > '" + (dir_ / "stdout").string() +
                            "' 2> '" + (dir_ / "stderr").string() + "'";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
  }
  std::string explain(const std::string& method, const std::string& extra, const std::string& out) {
    EXPECT_EQ(run("explain --image " + (dir_ / "img.ppm").string() + " --mask " + (dir_ / "img_mask.pgm").string() +
                  " --method " + method + " --grid 8 " + extra + " --out " + (dir_ / out).string()),
              0)
        << slurp(dir_ / "stderr");
    return slurp(dir_ / out);
  }

  fs::path dir_;
};

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("run"), 1);
  EXPECT_NE(slurp(dir_ / "stderr").find("--config"), std::string::npos);
  EXPECT_EQ(run("run --config " + (dir_ / "missing.json").string()), 1);
  EXPECT_NE(slurp(dir_ / "stderr").find("Usage"), std::string::npos);
  std::ofstream(dir_ / "bad.json") << R"({"colour": "red"})";
  EXPECT_EQ(run("run --config " + (dir_ / "bad.json").string()), 1);
  std::ofstream(dir_ / "badk.json") << R"({"k": 3})";
  EXPECT_EQ(run("run --config " + (dir_ / "badk.json").string()), 1);
  EXPECT_EQ(run("explain --image a --mask b --method lime --out c"), 1);
  EXPECT_EQ(run("frobnicate"), 1);
}

TEST_F(Cli, RuntimeErrors) {
  EXPECT_EQ(run("explain --image " + (dir_ / "nope.ppm").string() + " --mask " + (dir_ / "img_mask.pgm").string() +
                " --method ega --out " + (dir_ / "o.pgm").string()),
            2);
}

TEST_F(Cli, Selftest) {
  EXPECT_EQ(run("selftest"), 0);
  EXPECT_NE(slurp(dir_ / "stdout").find("PASS"), std::string::npos);
  EXPECT_EQ(slurp(dir_ / "stdout").find("FAIL"), std::string::npos);
}

TEST_F(Cli, ExplainFusionIdentities) {
  const std::string ega = explain("ega", "", "ega.pgm");
  const std::string ria = explain("ria", "", "ria.pgm");
  EXPECT_EQ(explain("dea", "--alpha 1 --beta 0", "dea_10.pgm"), ega);
  EXPECT_EQ(explain("dea", "--alpha 0 --beta 0", "dea_00.pgm"), ria);
  EXPECT_EQ(explain("dea", "--alpha 0 --beta 0.35", "dea_0x.pgm"), ria);
  EXPECT_NE(ega, ria);
  EXPECT_EQ(explain("gpa", "", "gpa_a.pgm"), explain("gpa", "", "gpa_b.pgm"));
}

TEST_F(Cli, RunAndAggregate) {
  std::ofstream(dir_ / "cfg.json") << R"({"seed": 2, "grid": 4, "methods": ["gpa", "ria"],
    "dataset": {"count": 3, "size": 24}, "output": ")"
                                   << (dir_ / "out" / "r.jsonl").string() << "\"}";
  ASSERT_EQ(run("run --config " + (dir_ / "cfg.json").string()), 0) << slurp(dir_ / "stderr");
  const RunFile first = read_run_file(dir_ / "out" / "r.jsonl");
  EXPECT_EQ(first.records.size(), 6u);
  EXPECT_TRUE(fs::exists(dir_ / "out" / "r.jsonl.skipped.jsonl"));

  ASSERT_EQ(run("run --config " + (dir_ / "cfg.json").string() + " --seed 3 --out " + (dir_ / "r3.jsonl").string()), 0);
  EXPECT_EQ(read_run_file(dir_ / "r3.jsonl").records.front().run_id, "synthetic-s3");

  ASSERT_EQ(run("aggregate " + (dir_ / "out" / "r.jsonl").string() + " " + (dir_ / "r3.jsonl").string() + " --out " +
                (dir_ / "agg.csv").string()),
            0);
  std::istringstream csv(slurp(dir_ / "agg.csv"));
  std::string header, row;
  std::getline(csv, header);
  EXPECT_EQ(header, "dataset,method,metric,mean,std,runs");
  int rows = 0;
  while (std::getline(csv, row)) {
    ++rows;
    EXPECT_EQ(row.back(), '2');
  }
  EXPECT_EQ(rows, 2 * 8);
}

}  // namespace
}  // namespace segattr
