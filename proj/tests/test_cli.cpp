#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "sparsecap/checkpoint.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(SPARSECAP_CLI) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) out.append(buf, n);
  const int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("sparsecap_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
  fs::path dir;
};

// Small model and dataset so a CLI training run takes a few seconds.
const char* kTinyConfig =
    "frames = 4\nheight = 16\nwidth = 16\npatch_s = 8\nvideo_width = 8\nvideo_heads = 2\n"
    "hidden = 16\nlayers = 1\nheads = 2\nffn = 32\ntext_len = 8\nradius = 2\nmax_speed = 1\n"
    "steps = 10\nbatch = 2\ntrain_clips = 8\nval_clips = 3\nlog_interval = 5\neval_interval = 10\n";

}  // namespace

TEST_F(Cli, GenDataIsByteIdentical) {
  ASSERT_EQ(run("gen-data --seed 7 --out " + path("a") + " --clips 20").code, 0);
  ASSERT_EQ(run("gen-data --seed 7 --out " + path("b") + " --clips 20").code, 0);
  for (const char* split : {"train", "val"})
    for (const char* f : {"clips.bin", "captions.txt", "vocab.txt"}) {
      const std::string a = slurp(dir / "a" / split / f);
      EXPECT_FALSE(a.empty());
      EXPECT_EQ(a, slurp(dir / "b" / split / f)) << split << "/" << f;
    }
  ASSERT_EQ(run("gen-data --seed 8 --out " + path("c") + " --clips 20").code, 0);
  EXPECT_NE(slurp(dir / "a" / "train" / "clips.bin"), slurp(dir / "c" / "train" / "clips.bin"));
}

TEST_F(Cli, EvalIdenticalFiles) {
  std::ofstream(path("p.txt")) << "a red square moves left\na blue circle moves up\n";
  const auto r = run("eval --pred " + path("p.txt") + " --ref " + path("p.txt") + " --out " + path("m.csv"));
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "metric,value\nbleu4,1.0000\nrouge_l,1.0000\ncider_d,10.0000\n");
  EXPECT_EQ(slurp(path("m.csv")), r.out);
}

TEST_F(Cli, EvalLineMismatchIsRuntimeError) {
  std::ofstream(path("p.txt")) << "a\nb\nc\n";
  std::ofstream(path("r.txt")) << "a\nb\nc\nd\n";
  const auto r = run("eval --pred " + path("p.txt") + " --ref " + path("r.txt"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find('3'), std::string::npos);
  EXPECT_NE(r.out.find('4'), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("no-such-command").code, 1);
  EXPECT_EQ(run("eval --pred x").code, 1);
  EXPECT_EQ(run("gen-data --seed 1 --out x --bogus").code, 1);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, TrainDecodeAndMaskTools) {
  std::ofstream(path("run.cfg")) << kTinyConfig;
  ASSERT_EQ(run("gen-data --config " + path("run.cfg") + " --seed 3 --out " + path("data") + " --clips 8 --val-clips 3").code, 0);
  std::ofstream(path("run.cfg"), std::ios::app) << "data = " << path("data") << "\n";
  const auto t = run("train --config " + path("run.cfg") + " --out " + path("run"));
  ASSERT_EQ(t.code, 0) << t.out;
  EXPECT_TRUE(fs::exists(dir / "run" / "metrics.csv"));
  ASSERT_TRUE(fs::exists(dir / "run" / "final.bin"));

  ASSERT_EQ(run("decode --checkpoint " + path("run/final.bin") + " --data " + path("data/val") + " --out " + path("pred.txt")).code, 0);
  std::ifstream pred(path("pred.txt"));
  std::size_t lines = 0;
  for (std::string l; std::getline(pred, l);) ++lines;
  EXPECT_EQ(lines, 3u);

  const auto st = run("mask stats --in " + path("run/final.bin"));
  EXPECT_EQ(st.code, 0);
  EXPECT_NE(st.out.find("grid,2,2,2"), std::string::npos);
  EXPECT_EQ(run("mask export --in " + path("run/final.bin") + " --out " + path("m.pgm")).code, 0);
  EXPECT_EQ(slurp(path("m.pgm")).substr(0, 11), "P5\n8 8\n255\n");
  EXPECT_EQ(run("mask export --in " + path("run/final.bin") + " --out " + path("m.csv")).code, 0);
  EXPECT_EQ(slurp(path("m.csv")).substr(0, 13), "# grid 2,2,2\n");

  ASSERT_EQ(run("mask binarize --in " + path("run/final.bin") + " --out " + path("bin.bin")).code, 0);
  const auto ck = sparsecap::load_checkpoint(path("bin.bin"));
  for (float v : ck.find(sparsecap::kMaskParam)->f32) EXPECT_TRUE(v == 40.0f || v == -40.0f);
  EXPECT_EQ(run("mask binarize --in " + path("run/final.bin") + " --out " + path("x.bin") + " --threshold 1.5").code, 2);

  EXPECT_EQ(run("decode --checkpoint " + path("missing.bin") + " --data " + path("data/val") + " --out " + path("p2.txt")).code, 2);
}

TEST_F(Cli, MaskInterpDoublesTemporalGrid) {
  // t=16 grid: 32 frames with temporal patch 2 at 32x32 (one spatial token).
  std::ofstream(path("m.cfg")) << "frames = 32\nheight = 32\nwidth = 32\nhidden = 16\nlayers = 1\nheads = 2\nffn = 16\n"
                                  "video_width = 8\nvideo_heads = 2\n";
  const auto rc = sparsecap::parse_run_config(slurp(path("m.cfg")));
  sparsecap::save_checkpoint(path("ck.bin"), sparsecap::make_checkpoint(sparsecap::CaptionModel<float>(rc.model, 1)));
  const auto r = run("mask interp --in " + path("ck.bin") + " --t-new 32 --out " + path("ck2.bin"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("t=32"), std::string::npos);
  const auto ck = sparsecap::load_checkpoint(path("ck2.bin"));
  EXPECT_EQ(ck.model_config().grid().t, 32u);
  EXPECT_EQ(ck.find(sparsecap::kMaskParam)->shape, (sparsecap::Shape{32, 32}));
  const auto st = run("mask stats --in " + path("ck2.bin"));
  EXPECT_NE(st.out.find("grid,32,1,1"), std::string::npos);
  // The resampled checkpoint loads as a working model.
  EXPECT_NO_THROW(sparsecap::model_from_checkpoint<float>(ck));
}

TEST_F(Cli, GradcheckPasses) {
  const auto r = run("gradcheck --seed 1 --points 1");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("module training"), std::string::npos);
}
