#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "m2fcn/fileio.hpp"
#include "m2fcn/rand_score.hpp"
#include "m2fcn/synth.hpp"
#include "m2fcn/trainer.hpp"

namespace m2fcn {

struct DataConfig {
  std::string dir;  // dataset directory (images/, labels/, segs/, manifest.txt)
  std::size_t train_count = 20;
  std::size_t test_count = 5;
  SynthParams synth;
};

struct EvalConfig {
  std::size_t thresholds = 33;
  Real threshold_min = 0.02;
  Real threshold_max = 0.98;
  std::size_t threads = 1;

  std::vector<Real> grid() const { return threshold_grid(thresholds, threshold_min, threshold_max); }
};

struct RunConfig {
  std::string profile = "toy";
  std::uint64_t seed = 1;
  NetworkConfig network;
  TrainSchedule schedule;
  DataConfig data;
  EvalConfig eval;
};

/// Desk-scale defaults.
inline RunConfig toy_run_config() {
  RunConfig cfg;
  cfg.network = toy_network_config();
  return cfg;
}

/// Network and schedule at the published scale: 3 stages of the VGG-shaped
/// sub-net, 20k phase-1 iterations at 1e-8, 10k phase-2 at 1e-9, ×36 data.
inline RunConfig paper_run_config() {
  RunConfig cfg;
  cfg.profile = "paper";
  cfg.network = paper_network_config();
  cfg.schedule.phase1_iterations = 20000;
  cfg.schedule.phase1_lr = 1e-8;
  cfg.schedule.phase2_iterations = 10000;
  cfg.schedule.phase2_lr = 1e-9;
  cfg.schedule.augment = true;
  return cfg;
}

using KeyValues = std::map<std::string, std::string>;  // "section.key" -> value

/// Flat "key = value" lines grouped under [section] headers; '#' starts a
/// comment. Keys before the first header are top-level.
inline KeyValues parse_config_text(const std::string& text, const std::string& source = "config") {
  KeyValues out;
  std::string section;
  std::size_t line_no = 0;
  for (const std::string& raw : kv::split(text, '\n')) {
    ++line_no;
    std::string line = raw.substr(0, raw.find('#'));
    line = kv::trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = kv::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = kv::trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    out[section.empty() ? key : section + "." + key] = kv::trim(line.substr(eq + 1));
  }
  return out;
}

/// Parses "section.key=value".
inline std::pair<std::string, std::string> parse_override(const std::string& item) {
  const auto eq = item.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + item + "': expected key=value");
  return {kv::trim(item.substr(0, eq)), kv::trim(item.substr(eq + 1))};
}

namespace detail {

inline TrainMode mode_from_string(const std::string& key, const std::string& v) {
  if (v == "end-to-end") return TrainMode::EndToEnd;
  if (v == "stepwise") return TrainMode::Stepwise;
  throw ConfigError(key + ": expected 'end-to-end' or 'stepwise', got '" + v + "'");
}

inline void apply_schedule(TrainSchedule& s, const std::string& key, const std::string& v) {
  const std::string name = "schedule." + key;
  if (key == "phase1_iterations") s.phase1_iterations = kv::to_size(name, v);
  else if (key == "phase1_lr") s.phase1_lr = kv::to_real(name, v);
  else if (key == "phase2_iterations") s.phase2_iterations = kv::to_size(name, v);
  else if (key == "phase2_lr") s.phase2_lr = kv::to_real(name, v);
  else if (key == "mode") s.mode = mode_from_string(name, v);
  else if (key == "snapshot_every") s.snapshot_every = kv::to_size(name, v);
  else if (key == "momentum") s.momentum = kv::to_real(name, v);
  else if (key == "weight_decay") s.weight_decay = kv::to_real(name, v);
  else if (key == "augment") s.augment = kv::to_bool(name, v);
  else throw ConfigError("unknown key '" + name + "'");
}

inline void apply_data(DataConfig& d, const std::string& key, const std::string& v) {
  const std::string name = "data." + key;
  if (key == "dir") d.dir = v;
  else if (key == "train_count") d.train_count = kv::to_size(name, v);
  else if (key == "test_count") d.test_count = kv::to_size(name, v);
  else if (key == "height") d.synth.height = kv::to_size(name, v);
  else if (key == "width") d.synth.width = kv::to_size(name, v);
  else if (key == "cells") d.synth.cells = kv::to_size(name, v);
  else if (key == "distractor_rate") d.synth.distractor_rate = kv::to_real(name, v);
  else throw ConfigError("unknown key '" + name + "'");
}

inline void apply_eval(EvalConfig& e, const std::string& key, const std::string& v) {
  const std::string name = "eval." + key;
  if (key == "thresholds") e.thresholds = kv::to_size(name, v);
  else if (key == "threshold_min") e.threshold_min = kv::to_real(name, v);
  else if (key == "threshold_max") e.threshold_max = kv::to_real(name, v);
  else if (key == "threads") e.threads = kv::to_size(name, v);
  else throw ConfigError("unknown key '" + name + "'");
}

inline std::uint64_t to_seed(const std::string& key, const std::string& v) {
  return static_cast<std::uint64_t>(kv::to_size(key, v));
}

}  // namespace detail

inline void validate(const RunConfig& cfg) {
  validate(cfg.network);
  validate(cfg.schedule);
  if (cfg.eval.thresholds == 0) throw ConfigError("eval.thresholds must be >= 1");
  if (!(cfg.eval.threshold_min >= 0 && cfg.eval.threshold_max <= 1 && cfg.eval.threshold_min <= cfg.eval.threshold_max)) {
    throw ConfigError("eval.threshold_min/threshold_max must satisfy 0 <= min <= max <= 1");
  }
  if (cfg.eval.threads == 0) throw ConfigError("eval.threads must be >= 1");
}

/// Profile defaults, then `file_values`, then `overrides`; M2FCN_SEED (when
/// `env_seed` is given) replaces the seed last.
inline RunConfig build_config(const KeyValues& file_values, const KeyValues& overrides,
                              const std::optional<std::string>& env_seed = std::nullopt) {
  KeyValues merged = file_values;
  for (const auto& [k, v] : overrides) merged[k] = v;

  std::string profile = "toy";
  if (auto it = merged.find("profile"); it != merged.end()) profile = it->second;
  RunConfig cfg;
  if (profile == "toy") cfg = toy_run_config();
  else if (profile == "paper") cfg = paper_run_config();
  else throw ConfigError("profile: expected 'toy' or 'paper', got '" + profile + "'");

  std::map<std::string, std::string> network;
  for (const auto& [key, value] : merged) {
    const auto dot = key.find('.');
    const std::string section = dot == std::string::npos ? "" : key.substr(0, dot);
    const std::string name = dot == std::string::npos ? key : key.substr(dot + 1);
    if (section.empty()) {
      if (name == "profile") continue;
      if (name == "seed") cfg.seed = detail::to_seed("seed", value);
      else throw ConfigError("unknown key '" + key + "'");
    } else if (section == "network") {
      const auto& keys = network_keys();
      if (std::find(keys.begin(), keys.end(), name) == keys.end()) throw ConfigError("unknown key '" + key + "'");
      network[name] = value;
    } else if (section == "schedule") {
      detail::apply_schedule(cfg.schedule, name, value);
    } else if (section == "data") {
      detail::apply_data(cfg.data, name, value);
    } else if (section == "eval") {
      detail::apply_eval(cfg.eval, name, value);
    } else {
      throw ConfigError("unknown section in key '" + key + "'");
    }
  }
  apply_network_kv(cfg.network, network);
  if (env_seed) cfg.seed = detail::to_seed("M2FCN_SEED", *env_seed);
  cfg.schedule.seed = cfg.seed;
  validate(cfg);
  return cfg;
}

/// Reads the optional config file at `path`, applies `--set` style
/// overrides and the M2FCN_SEED environment variable.
inline RunConfig parse_config(const std::optional<std::filesystem::path>& path,
                              const std::vector<std::string>& overrides = {}) {
  KeyValues file_values;
  if (path) file_values = parse_config_text(read_file(*path), path->string());
  KeyValues flag_values;
  for (const auto& item : overrides) flag_values.insert_or_assign(parse_override(item).first, parse_override(item).second);
  std::optional<std::string> env_seed;
  if (const char* s = std::getenv("M2FCN_SEED"); s != nullptr && *s != '\0') env_seed = s;
  return build_config(file_values, flag_values, env_seed);
}

/// The resolved configuration in the file format accepted by parse_config.
inline std::string config_to_text(const RunConfig& cfg) {
  std::string out = "profile = " + cfg.profile + "\nseed = " + std::to_string(cfg.seed) + "\n\n[network]\n";
  for (const auto& [k, v] : network_to_kv(cfg.network)) out += k + " = " + v + "\n";
  const TrainSchedule& s = cfg.schedule;
  out += "\n[schedule]\n";
  out += "phase1_iterations = " + std::to_string(s.phase1_iterations) + "\n";
  out += "phase1_lr = " + kv::format_real(s.phase1_lr) + "\n";
  out += "phase2_iterations = " + std::to_string(s.phase2_iterations) + "\n";
  out += "phase2_lr = " + kv::format_real(s.phase2_lr) + "\n";
  out += std::string("mode = ") + (s.mode == TrainMode::EndToEnd ? "end-to-end" : "stepwise") + "\n";
  out += "snapshot_every = " + std::to_string(s.snapshot_every) + "\n";
  out += "momentum = " + kv::format_real(s.momentum) + "\n";
  out += "weight_decay = " + kv::format_real(s.weight_decay) + "\n";
  out += std::string("augment = ") + (s.augment ? "true" : "false") + "\n";
  const DataConfig& d = cfg.data;
  out += "\n[data]\ndir = " + d.dir + "\n";
  out += "train_count = " + std::to_string(d.train_count) + "\n";
  out += "test_count = " + std::to_string(d.test_count) + "\n";
  out += "height = " + std::to_string(d.synth.height) + "\n";
  out += "width = " + std::to_string(d.synth.width) + "\n";
  out += "cells = " + std::to_string(d.synth.cells) + "\n";
  out += "distractor_rate = " + kv::format_real(d.synth.distractor_rate) + "\n";
  const EvalConfig& e = cfg.eval;
  out += "\n[eval]\nthresholds = " + std::to_string(e.thresholds) + "\n";
  out += "threshold_min = " + kv::format_real(e.threshold_min) + "\n";
  out += "threshold_max = " + kv::format_real(e.threshold_max) + "\n";
  out += "threads = " + std::to_string(e.threads) + "\n";
  return out;
}

}  // namespace m2fcn
