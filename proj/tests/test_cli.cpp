#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "aldk/checkpoint.hpp"
#include "aldk/dataset.hpp"
#include "aldk/metrics.hpp"
#include "aldk/vol_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int status = -1;
  std::string out;
  json doc() const { return json::parse(out); }
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(ALDK_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int raw = pclose(p);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

const char* kTiny =
    " --batch 1 --n-gen 1 --base-channels 4 --disc-extent 16 --disc-channels 8,16,16,16 --seed 3";

class Cli : public ::testing::Test {
 protected:
  static fs::path dir() { return fs::temp_directory_path() / "aldk_cli_test"; }
  static void SetUpTestSuite() {
    fs::remove_all(dir());
    ASSERT_EQ(cli("gen-data --extent 16 --count 2 --seed 4 --out-dir " + (dir() / "data").string()).status, 0);
  }
  static void TearDownTestSuite() { fs::remove_all(dir()); }
  static std::string manifest() { return (dir() / "data" / "manifest.json").string(); }
  static std::string p(const std::string& name) { return (dir() / name).string(); }
};

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(cli("").status, 1);
  EXPECT_EQ(cli("frobnicate").status, 1);
  EXPECT_EQ(cli("bench --no-such-flag").status, 1);
  EXPECT_EQ(cli("evaluate --checkpoint " + p("absent.ckpt") + " --manifest " + manifest()).status, 1);
  EXPECT_EQ(cli("bench --extent 24 --repetitions 1").status, 1);
  EXPECT_EQ(cli("gen-data --extent 12 --count 1 --out-dir " + p("bad")).status, 1);
}

TEST_F(Cli, GenDataIsByteReproducible) {
  const auto r = cli("gen-data --extent 16 --count 2 --seed 4 --out-dir " + p("again"));
  ASSERT_EQ(r.status, 0);
  EXPECT_EQ(r.doc().at("count"), 2);
  for (const auto& e : fs::directory_iterator(dir() / "data"))
    EXPECT_EQ(aldk::read_file(e.path()), aldk::read_file(dir() / "again" / e.path().filename())) << e.path();
}

TEST_F(Cli, TrainIsDeterministicAndResumable) {
  for (const char* name : {"a", "b"})
    ASSERT_EQ(cli("train --manifest " + manifest() + kTiny + " --iterations 2 --checkpoint-out " +
                  p(std::string(name) + ".ckpt") + " --loss-log-out " + p(std::string(name) + ".json"))
                  .status,
              0);
  auto log_of = [](const std::string& path) {
    std::ifstream in(path);
    return json::parse(in).at("log");
  };
  EXPECT_EQ(log_of(p("a.json")), log_of(p("b.json")));
  EXPECT_EQ(aldk::read_file(p("a.ckpt")), aldk::read_file(p("b.ckpt")));

  ASSERT_EQ(cli("train --manifest " + manifest() + kTiny + " --iterations 1 --checkpoint-out " + p("h.ckpt") +
                " --loss-log-out " + p("h.json"))
                .status,
            0);
  ASSERT_EQ(cli("train --manifest " + manifest() + " --resume " + p("h.ckpt") + " --iterations 2 --checkpoint-out " +
                p("t.ckpt") + " --loss-log-out " + p("t.json"))
                .status,
            0);
  json joined = log_of(p("h.json"));
  for (const auto& r : log_of(p("t.json"))) joined.push_back(r);
  EXPECT_EQ(joined, log_of(p("a.json")));
  EXPECT_EQ(aldk::read_file(p("t.ckpt")), aldk::read_file(p("a.ckpt")));

  // Resuming to an earlier iteration is a validation error.
  EXPECT_EQ(cli("train --manifest " + manifest() + " --resume " + p("a.ckpt") + " --iterations 1 --checkpoint-out " +
                p("x.ckpt"))
                .status,
            1);
}

TEST_F(Cli, RegisterAgreesWithEvaluate) {
  ASSERT_EQ(cli("train --manifest " + manifest() + kTiny + " --iterations 2 --checkpoint-out " + p("r.ckpt")).status, 0);
  auto m = aldk::read_manifest(manifest());
  m.records.resize(1);
  m.base_dir = dir() / "data";
  aldk::write_manifest(dir() / "data" / "one.json", m);

  const auto& rec = m.records[0];
  const auto reg = cli("register --checkpoint " + p("r.ckpt") + " --moving " + (dir() / "data" / rec.moving).string() +
                       " --fixed " + (dir() / "data" / rec.fixed).string() + " --field-out " + p("f.vol") +
                       " --warped-out " + p("w.vol"));
  ASSERT_EQ(reg.status, 0);
  const auto ev = cli("evaluate --repetitions 1 --checkpoint " + p("r.ckpt") + " --manifest " +
                      (dir() / "data" / "one.json").string() + " --report-out " + p("report.json"));
  ASSERT_EQ(ev.status, 0);
  const json report = ev.doc();
  ASSERT_EQ(report.at("pairs").size(), 1u);

  const auto data = aldk::load_dataset(m);
  const auto warped = aldk::warp(data.pairs[0].moving_mask, aldk::read_field(p("f.vol")));
  EXPECT_EQ(report.at("pairs")[0].at("dice").get<double>(), aldk::dice(warped, data.pairs[0].fixed_mask));
  EXPECT_EQ(report.at("pairs")[0].at("folding_count"), reg.doc().at("folding_count"));
  EXPECT_EQ(report.at("schema"), 1);

  // Checkpoint/manifest extent mismatch and corrupt checkpoints are validation errors.
  ASSERT_EQ(cli("gen-data --extent 32 --count 1 --out-dir " + p("big")).status, 0);
  EXPECT_EQ(cli("evaluate --checkpoint " + p("r.ckpt") + " --manifest " + p("big/manifest.json")).status, 1);
  std::vector<std::uint8_t> junk{'n', 'o', 'p', 'e'};
  aldk::write_file(p("junk.ckpt"), junk);
  EXPECT_EQ(cli("evaluate --checkpoint " + p("junk.ckpt") + " --manifest " + manifest()).status, 1);
}

TEST_F(Cli, GradcheckPasses) {
  const auto r = cli("gradcheck --seeds 1");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_TRUE(r.doc().at("passed").get<bool>());
  EXPECT_GT(r.doc().at("cases").size(), 10u);
}

TEST_F(Cli, BenchReportsParameters) {
  const auto r = cli("bench --extent 16 --repetitions 1 --base-channels 4");
  ASSERT_EQ(r.status, 0);
  EXPECT_GT(r.doc().at("param_count").get<std::int64_t>(), 0);
  EXPECT_GT(r.doc().at("latency_seconds").get<double>(), 0.0);
}

}  // namespace
