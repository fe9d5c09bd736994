#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "m2fcn/cli.hpp"
#include "m2fcn/m2fcn.hpp"

using namespace m2fcn;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("m2fcn_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct CliResult {
  int code;
  std::string out, err;
};

CliResult run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST(Config, ParsesSectionsCommentsAndOverrides) {
  const KeyValues kvs = parse_config_text("seed = 4  # top\n\n[schedule]\nphase1_lr = 3e-5\n[network]\nrecursive=single:2\n");
  EXPECT_EQ(kvs.at("seed"), "4");
  EXPECT_EQ(kvs.at("schedule.phase1_lr"), "3e-5");
  const RunConfig cfg = build_config(kvs, {{"schedule.phase1_lr", "1e-4"}});
  EXPECT_EQ(cfg.seed, 4u);
  EXPECT_EQ(cfg.schedule.seed, 4u);
  EXPECT_EQ(cfg.schedule.phase1_lr, 1e-4);
  EXPECT_EQ(cfg.network.recursive, RecursiveInputs::single(2));
  EXPECT_EQ(build_config(kvs, {}, std::string("17")).seed, 17u);
}

TEST(Config, ProfilesSetTheirDefaults) {
  const RunConfig toy = build_config({}, {});
  EXPECT_EQ(toy.network, toy_network_config());
  const RunConfig paper = build_config({{"profile", "paper"}}, {});
  EXPECT_EQ(paper.network.stages, 3u);
  EXPECT_EQ(paper.network.levels(), 5u);
  EXPECT_EQ(paper.schedule.phase1_iterations, 20000u);
  EXPECT_EQ(paper.schedule.phase1_lr, 1e-8);
  EXPECT_EQ(paper.schedule.phase2_iterations, 10000u);
  EXPECT_EQ(paper.schedule.phase2_lr, 1e-9);
  EXPECT_TRUE(paper.schedule.augment);
  EXPECT_THROW(build_config({{"profile", "huge"}}, {}), ConfigError);
}

TEST(Config, ErrorsNameTheOffendingKey) {
  auto message = [](const KeyValues& kvs) {
    try {
      build_config(kvs, {});
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message({{"schedule.bogus", "1"}}).find("schedule.bogus"), std::string::npos);
  EXPECT_NE(message({{"network.stages", "0"}}).find("network.stages"), std::string::npos);
  EXPECT_NE(message({{"schedule.phase1_lr", "fast"}}).find("schedule.phase1_lr"), std::string::npos);
  EXPECT_NE(message({{"network.recursive", "single:9"}}).find("network.recursive"), std::string::npos);
  EXPECT_NE(message({{"eval.threshold_max", "2"}}).find("eval.threshold"), std::string::npos);
  EXPECT_THROW(parse_config_text("[schedule\n"), ConfigError);
  EXPECT_THROW(parse_config_text("novalue\n"), ConfigError);
  EXPECT_THROW(parse_override("=3"), ConfigError);
}

TEST(Config, TextFormRoundTrips) {
  RunConfig cfg = build_config({{"network.recursive", "single:3"}, {"schedule.mode", "stepwise"}, {"data.dir", "d"}},
                               {{"network.alpha_fuse", "1,0.5"}});
  const RunConfig back = build_config(parse_config_text(config_to_text(cfg)), {});
  EXPECT_EQ(config_to_text(back), config_to_text(cfg));
  EXPECT_EQ(back.network, cfg.network);
  EXPECT_EQ(back.schedule.mode, TrainMode::Stepwise);
}

TEST(Cli, UsageAndBadArguments) {
  EXPECT_EQ(run({}).code, 2);
  const CliResult unknown = run({"frobnicate"});
  EXPECT_EQ(unknown.code, 2);
  EXPECT_NE(unknown.err.find("usage"), std::string::npos);
  EXPECT_EQ(run({"synth", "--no-such-flag"}).code, 2);
  EXPECT_EQ(run({"synth", "--set", "schedule.bogus=1"}).code, 1);
  EXPECT_EQ(run({"predict", "--set", "data.dir=/nonexistent"}).code, 1);
}

TEST(Cli, SynthTrainPredictEvalPipeline) {
  const fs::path dir = scratch_dir("pipeline");
  const fs::path data = dir / "data";
  const std::vector<std::string> common{"--set", "data.height=32",        "--set", "data.width=32",
                                        "--set", "data.cells=3",          "--set", "data.train_count=2",
                                        "--set", "data.test_count=1",     "--set", "schedule.phase1_iterations=3",
                                        "--set", "schedule.phase2_iterations=2", "--set", "schedule.snapshot_every=2",
                                        "--set", "data.dir=" + data.string()};
  auto with = [&](std::vector<std::string> head) {
    head.insert(head.end(), common.begin(), common.end());
    return head;
  };
  ASSERT_EQ(run(with({"synth", "--out", data.string()})).code, 0);
  EXPECT_TRUE(fs::exists(data / "manifest.txt"));
  EXPECT_TRUE(fs::exists(data / "images" / "002.pgm"));
  const Dataset loaded = load_dataset(data);
  EXPECT_EQ(loaded.samples(Split::Train).size(), 2u);
  EXPECT_EQ(loaded.stems(Split::Test), (std::vector<std::string>{"002"}));

  const fs::path model = dir / "model";
  const CliResult trained = run(with({"train", "--out", model.string()}));
  ASSERT_EQ(trained.code, 0) << trained.err;
  for (const char* f : {"config.txt", "stage1.ckpt", "model.ckpt", "loss.csv", "loss_phase1.csv",
                        "snapshots/phase1_iter000002.ckpt", "snapshots/phase2_iter000002.ckpt"}) {
    EXPECT_TRUE(fs::exists(model / f)) << f;
  }

  const fs::path ckpt = model / "model.ckpt";
  ASSERT_EQ(run(with({"predict", "--checkpoint", ckpt.string(), "--out", (dir / "p").string()})).code, 0);
  EXPECT_TRUE(fs::exists(dir / "p" / "pred" / "002.pgm"));

  const CliResult direct = run(with({"eval", "--checkpoint", ckpt.string(), "--out", (dir / "e1").string()}));
  ASSERT_EQ(direct.code, 0) << direct.err;
  EXPECT_NE(direct.out.find("fscore"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "e1" / "pr_curve.csv"));
  EXPECT_TRUE(fs::exists(dir / "e1" / "seg" / "002.pgm"));
  const CliResult from_maps =
      run(with({"eval", "--pred", (dir / "p" / "pred").string(), "--out", (dir / "e2").string(), "--threads", "2"}));
  ASSERT_EQ(from_maps.code, 0) << from_maps.err;

  EXPECT_EQ(run(with({"eval", "--out", (dir / "e3").string()})).code, 1);
  fs::remove_all(dir);
}

TEST(Cli, TrainingIsReproducibleFromTheCommandLine) {
  const fs::path dir = scratch_dir("repro");
  const std::vector<std::string> common{"--set", "data.height=32", "--set", "data.width=32", "--set", "data.cells=3",
                                        "--set", "data.train_count=2", "--set", "data.test_count=1",
                                        "--set", "schedule.phase1_iterations=2", "--set", "schedule.phase2_iterations=2",
                                        "--set", "data.dir=" + (dir / "data").string()};
  auto with = [&](std::vector<std::string> head) {
    head.insert(head.end(), common.begin(), common.end());
    return head;
  };
  ASSERT_EQ(run(with({"synth", "--out", (dir / "data").string()})).code, 0);
  ASSERT_EQ(run(with({"train", "--out", (dir / "a").string()})).code, 0);
  ASSERT_EQ(run(with({"train", "--out", (dir / "b").string()})).code, 0);
  EXPECT_EQ(read_file(dir / "a" / "model.ckpt"), read_file(dir / "b" / "model.ckpt"));
  EXPECT_EQ(read_file(dir / "a" / "loss.csv"), read_file(dir / "b" / "loss.csv"));
  fs::remove_all(dir);
}
