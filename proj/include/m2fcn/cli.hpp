#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "m2fcn/checkpoint.hpp"
#include "m2fcn/config.hpp"
#include "m2fcn/dataset.hpp"
#include "m2fcn/grad_suite.hpp"

namespace m2fcn {

struct CliOptions {
  std::string command;
  std::optional<std::string> config_path;
  std::vector<std::string> overrides;
  std::string out = "out";
  std::string checkpoint;
  std::string pred;
  std::string split = "test";
  std::size_t threads = 0;  // 0 keeps eval.threads
  std::size_t seeds = 1;
};

inline const char* kUsage =
    "usage: m2fcn <command> [options]\n"
    "commands:\n"
    "  synth      generate a synthetic dataset into --out\n"
    "  train      pretrain stage 1, train all stages, write checkpoints and loss CSVs\n"
    "  predict    write boundary probability maps for a dataset split\n"
    "  eval       threshold sweep with Rand scores, PR curve and segmentations\n"
    "  gradcheck  run the gradient-check suite\n"
    "  ablate     compare recursive-input and training-mode variants\n"
    "options:\n"
    "  --config FILE        key = value config with [network] [schedule] [data] [eval]\n"
    "  --set SECTION.KEY=V  override one config value (repeatable)\n"
    "  --out DIR            output directory (default: out)\n"
    "  --checkpoint FILE    model for predict/eval\n"
    "  --pred DIR           existing probability maps for eval\n"
    "  --split NAME         train | test | all (predict/eval, default test)\n"
    "  --threads N          eval worker threads\n"
    "  --seeds N            gradcheck seeds starting at the config seed\n"
    "environment: M2FCN_SEED overrides the config seed\n";

namespace cli_detail {

namespace fs = std::filesystem;

inline std::vector<DatasetEntry> select(const Dataset& data, const std::string& split) {
  std::vector<DatasetEntry> out;
  for (const auto& e : data.entries) {
    if (split == "all" || (split == "train") == (e.split == Split::Train)) out.push_back(e);
  }
  if (split != "all" && split != "train" && split != "test") throw ConfigError("--split: expected train, test or all");
  if (out.empty()) throw ConfigError("dataset has no '" + split + "' samples");
  return out;
}

inline Dataset require_dataset(const RunConfig& cfg) {
  if (cfg.data.dir.empty()) throw ConfigError("data.dir: required for this command");
  return load_dataset(cfg.data.dir);
}

inline std::string scores_line(const RandScores& s) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "merge %.6f split %.6f fscore %.6f", s.merge, s.split, s.fscore);
  return buf;
}

inline int synth(const RunConfig& cfg, const CliOptions& opt, std::ostream& out) {
  const std::size_t total = cfg.data.train_count + cfg.data.test_count;
  if (total == 0) throw ConfigError("data.train_count + data.test_count must be > 0");
  const auto samples = synth_corpus(cfg.seed, total, cfg.data.synth);
  Dataset data;
  for (std::size_t i = 0; i < total; ++i) {
    data.entries.push_back({numbered_stem(i), i < cfg.data.train_count ? Split::Train : Split::Test, samples[i]});
  }
  save_dataset(opt.out, data);
  out << "wrote " << cfg.data.train_count << " train + " << cfg.data.test_count << " test samples to " << opt.out
      << "\n";
  return 0;
}

inline int train(const RunConfig& cfg, const CliOptions& opt, std::ostream& out, std::ostream& err) {
  const Dataset data = require_dataset(cfg);
  const std::vector<Sample> samples = data.samples(Split::Train);
  const fs::path dir = opt.out;
  fs::create_directories(dir);
  write_file_atomic(dir / "config.txt", config_to_text(cfg));
  auto snapshots = [&](const std::string& phase) -> SnapshotFn {
    return [dir, phase](std::size_t it, const M2FCN& net) {
      char name[64];
      std::snprintf(name, sizeof name, "%s_iter%06zu.ckpt", phase.c_str(), it);
      fs::create_directories(dir / "snapshots");
      save_checkpoint(dir / "snapshots" / name, net);
    };
  };

  TrainLog phase1;
  M2FCN stage1 = pretrain_stage1(cfg.network, samples, cfg.schedule, &phase1, snapshots("phase1"));
  save_checkpoint(dir / "stage1.ckpt", stage1);
  write_file_atomic(dir / "loss_phase1.csv", phase1.to_csv());
  out << "phase 1: " << phase1.records.size() << " iterations\n";
  if (phase1.diverged) {
    err << "error: phase-1 training diverged; best checkpoint kept in " << (dir / "stage1.ckpt").string() << "\n";
    return 1;
  }
  M2FCN net = stage1;
  if (cfg.network.stages > 1) {
    net = M2FCN::build(cfg.network, cfg.schedule.seed);
    net.adopt_stage1(stage1);
    const TrainLog phase2 = m2fcn::train(net, samples, cfg.schedule, snapshots("phase2"));
    write_file_atomic(dir / "loss.csv", phase2.to_csv());
    out << "phase 2: " << phase2.records.size() << " iterations\n";
    save_checkpoint(dir / "model.ckpt", net);
    if (phase2.diverged) {
      err << "error: phase-2 training diverged; best checkpoint kept in " << (dir / "model.ckpt").string() << "\n";
      return 1;
    }
  } else {
    write_file_atomic(dir / "loss.csv", phase1.to_csv());
    save_checkpoint(dir / "model.ckpt", net);
  }
  const DatasetLoss loss = evaluate_loss(net, samples);
  out << "final mean training loss " << kv::format_real(loss.total) << "\n";
  out << "checkpoint " << (dir / "model.ckpt").string() << "\n";
  return 0;
}

inline int predict(const RunConfig& cfg, const CliOptions& opt, std::ostream& out) {
  if (opt.checkpoint.empty()) throw ConfigError("--checkpoint: required for predict");
  M2FCN net = load_checkpoint(opt.checkpoint);
  const auto entries = select(require_dataset(cfg), opt.split);
  const fs::path dir = fs::path(opt.out) / "pred";
  fs::create_directories(dir);
  for (const auto& e : entries) save_image(dir / (e.stem + ".pgm"), m2fcn::predict(net, e.sample.image), 65535);
  out << "wrote " << entries.size() << " probability maps to " << dir.string() << "\n";
  return 0;
}

inline int eval(const RunConfig& cfg, const CliOptions& opt, std::ostream& out) {
  if (opt.checkpoint.empty() == opt.pred.empty()) throw ConfigError("eval: give exactly one of --checkpoint or --pred");
  const auto entries = select(require_dataset(cfg), opt.split);
  std::optional<M2FCN> net;
  if (!opt.checkpoint.empty()) net = load_checkpoint(opt.checkpoint);
  std::vector<Tensor> probs;
  std::vector<LabelImage> truths;
  for (const auto& e : entries) {
    if (!e.sample.segments) throw IoError("eval: sample '" + e.stem + "' has no segs/ ground truth");
    probs.push_back(net ? m2fcn::predict(*net, e.sample.image) : load_image(fs::path(opt.pred) / (e.stem + ".pgm")));
    truths.push_back(interior_ground_truth(*e.sample.segments));
  }
  const std::vector<Real> grid = cfg.eval.grid();
  const SweepResult sweep = best_fscore_sweep(probs, truths, grid, opt.threads ? opt.threads : cfg.eval.threads);

  const fs::path dir = opt.out;
  fs::create_directories(dir / "seg");
  std::string csv = "threshold,rand_split,rand_merge,fscore\n";
  for (const auto& p : sweep.curve) {
    csv += kv::format_real(p.threshold) + "," + kv::format_real(p.scores.split) + "," +
           kv::format_real(p.scores.merge) + "," + kv::format_real(p.scores.fscore) + "\n";
  }
  write_file_atomic(dir / "pr_curve.csv", csv);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    save_labels(dir / "seg" / (entries[k].stem + ".pgm"), segment_from_boundary(probs[k], sweep.best_threshold));
  }
  const std::string line = scores_line(sweep.best) + " threshold " + kv::format_real(sweep.best_threshold);
  write_file_atomic(dir / "scores.txt", line + "\n");
  out << line << "\n";
  return 0;
}

inline int gradcheck(const RunConfig& cfg, const CliOptions& opt, std::ostream& out) {
  Real worst = 0;
  for (std::size_t k = 0; k < std::max<std::size_t>(1, opt.seeds); ++k) {
    for (const auto& e : run_gradient_suite(cfg.seed + k)) {
      char buf[200];
      std::snprintf(buf, sizeof buf, "seed %llu  %-28s max rel. error %.3e  (%zu checked, %zu at kinks)\n",
                    static_cast<unsigned long long>(cfg.seed + k), e.name.c_str(), e.report.max_rel_error,
                    e.report.checked, e.report.skipped);
      out << buf;
      worst = std::max(worst, e.report.max_rel_error);
    }
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "max relative error %.3e (limit 1e-4)\n", worst);
  out << buf;
  return worst <= 1e-4 ? 0 : 1;
}

inline int ablate(const RunConfig& cfg, std::ostream& out) {
  const Dataset data = require_dataset(cfg);
  const auto train_set = data.samples(Split::Train);
  const auto test_entries = select(data, "test");
  std::vector<LabelImage> truths;
  for (const auto& e : test_entries) {
    if (!e.sample.segments) throw IoError("ablate: sample '" + e.stem + "' has no segs/ ground truth");
    truths.push_back(interior_ground_truth(*e.sample.segments));
  }
  const std::vector<Real> grid = cfg.eval.grid();
  auto score = [&](M2FCN& net) {
    std::vector<Tensor> probs;
    for (const auto& e : test_entries) probs.push_back(m2fcn::predict(net, e.sample.image));
    return best_fscore_sweep(probs, truths, grid, cfg.eval.threads).best;
  };

  NetworkConfig base = cfg.network;
  base.stages = 2;
  const std::size_t n = base.levels();
  M2FCN stage1 = pretrain_stage1(base, train_set, cfg.schedule);

  struct Row {
    std::string name;
    RecursiveInputs recursive;
    TrainMode mode;
  };
  std::vector<Row> rows{{"2-stage all, end-to-end", RecursiveInputs::all(), TrainMode::EndToEnd},
                        {"2-stage all, stepwise", RecursiveInputs::all(), TrainMode::Stepwise},
                        {"2-stage single(" + std::to_string(n) + "), end-to-end", RecursiveInputs::single(n),
                         TrainMode::EndToEnd}};
  if (n >= 2) {
    rows.push_back({"2-stage single(" + std::to_string(n - 1) + "), end-to-end",
                    RecursiveInputs::single(n - 1), TrainMode::EndToEnd});
  }

  auto print = [&](const std::string& name, const RandScores& s) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "%-38s %8.4f %8.4f %8.4f\n", name.c_str(), s.merge, s.split, s.fscore);
    out << buf;
  };
  char head[200];
  std::snprintf(head, sizeof head, "%-38s %8s %8s %8s\n", "design", "merge", "split", "fscore");
  out << head;
  print("baseline 1-stage (pretrained)", score(stage1));
  for (const Row& r : rows) {
    NetworkConfig nc = base;
    nc.recursive = r.recursive;
    TrainSchedule sc = cfg.schedule;
    sc.mode = r.mode;
    M2FCN net = M2FCN::build(nc, sc.seed);
    net.adopt_stage1(stage1);
    m2fcn::train(net, train_set, sc);
    print(r.name, score(net));
  }
  return 0;
}

}  // namespace cli_detail

/// Parses `args` (without the program name) and runs one command. Returns
/// the process exit status.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  static const std::vector<std::string> commands{"synth", "train", "predict", "eval", "gradcheck", "ablate"};
  if (args.empty() || std::find(commands.begin(), commands.end(), args.front()) == commands.end()) {
    if (!args.empty() && args.front() != "--help" && args.front() != "-h") {
      err << "unknown command '" << args.front() << "'\n";
    }
    err << kUsage;
    return 2;
  }

  CliOptions opt;
  opt.command = args.front();
  CLI::App app{"m2fcn " + opt.command};
  app.set_help_flag();
  std::string config_path;
  app.add_option("--config", config_path);
  app.add_option("--set", opt.overrides);
  app.add_option("--out", opt.out);
  app.add_option("--checkpoint", opt.checkpoint);
  app.add_option("--pred", opt.pred);
  app.add_option("--split", opt.split);
  app.add_option("--threads", opt.threads);
  app.add_option("--seeds", opt.seeds);
  try {
    std::vector<std::string> rest(args.begin() + 1, args.end());
    std::reverse(rest.begin(), rest.end());
    app.parse(rest);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << kUsage;
    return 2;
  }
  if (!config_path.empty()) opt.config_path = config_path;

  try {
    const RunConfig cfg = parse_config(opt.config_path, opt.overrides);
    if (opt.command == "synth") return cli_detail::synth(cfg, opt, out);
    if (opt.command == "train") return cli_detail::train(cfg, opt, out, err);
    if (opt.command == "predict") return cli_detail::predict(cfg, opt, out);
    if (opt.command == "eval") return cli_detail::eval(cfg, opt, out);
    if (opt.command == "gradcheck") return cli_detail::gradcheck(cfg, opt, out);
    return cli_detail::ablate(cfg, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace m2fcn
