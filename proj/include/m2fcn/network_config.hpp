#pragma once

#include <charconv>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "m2fcn/objective.hpp"
#include "m2fcn/subnet.hpp"

namespace m2fcn {

/// Which previous-stage side outputs feed the next stage.
struct RecursiveInputs {
  enum class Kind { All, Single };
  Kind kind = Kind::All;
  std::size_t level = 0;  // 1-based, used by Single

  static RecursiveInputs all() { return {Kind::All, 0}; }
  static RecursiveInputs single(std::size_t level) { return {Kind::Single, level}; }
  friend bool operator==(const RecursiveInputs&, const RecursiveInputs&) = default;
};

/// Whether recursive inputs are passed as σ(S) or as raw logits S.
enum class RecursiveActivation { Sigmoid, Logit };

struct NetworkConfig {
  std::size_t stages = 2;
  SubNetConfig subnet = toy_subnet_config();
  RecursiveInputs recursive = RecursiveInputs::all();
  RecursiveActivation recursive_activation = RecursiveActivation::Sigmoid;
  // Side weights flattened as m·N + n; empty means every weight is 1 and a
  // single value is broadcast. Same for the per-stage fused weights.
  std::vector<Real> alpha_side;
  std::vector<Real> alpha_fuse;
  BetaMode beta_mode = BetaMode::Fraction;

  std::size_t levels() const { return subnet.levels.size(); }
  std::size_t image_channels() const { return subnet.input_channels; }

  Real side_weight(std::size_t m, std::size_t n) const {
    if (alpha_side.empty()) return 1.0;
    if (alpha_side.size() == 1) return alpha_side[0];
    return alpha_side.at(m * levels() + n);
  }
  Real fuse_weight(std::size_t m) const {
    if (alpha_fuse.empty()) return 1.0;
    if (alpha_fuse.size() == 1) return alpha_fuse[0];
    return alpha_fuse.at(m);
  }

  std::size_t recursive_channels() const { return recursive.kind == RecursiveInputs::Kind::All ? levels() : 1; }
  std::size_t stage_input_channels(std::size_t m) const {
    return m == 0 ? image_channels() : image_channels() + recursive_channels();
  }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Desk-scale profile: 2 stages of the 3-level toy sub-net.
inline NetworkConfig toy_network_config() { return NetworkConfig{}; }

/// 3 stages of the 5-level VGG-16-shaped sub-net.
inline NetworkConfig paper_network_config() {
  NetworkConfig cfg;
  cfg.stages = 3;
  cfg.subnet = paper_subnet_config();
  return cfg;
}

inline void validate(const NetworkConfig& cfg) {
  if (cfg.stages == 0) throw ConfigError("network.stages must be >= 1");
  validate(cfg.subnet);
  const std::size_t n = cfg.levels();
  if (cfg.recursive.kind == RecursiveInputs::Kind::Single && (cfg.recursive.level < 1 || cfg.recursive.level > n)) {
    throw ConfigError("network.recursive: single level " + std::to_string(cfg.recursive.level) + " outside [1," +
                      std::to_string(n) + "]");
  }
  auto check = [](const std::vector<Real>& a, std::size_t expected, const char* key) {
    if (a.size() > 1 && a.size() != expected) {
      throw ConfigError(std::string("network.") + key + ": expected 1 or " + std::to_string(expected) +
                        " values, got " + std::to_string(a.size()));
    }
    for (Real v : a) {
      if (!(v >= 0)) throw ConfigError(std::string("network.") + key + ": loss weights must be >= 0");
    }
  };
  check(cfg.alpha_side, cfg.stages * n, "alpha_side");
  check(cfg.alpha_fuse, cfg.stages, "alpha_fuse");
}

// ---------------------------------------------------------------------------
// Flat key/value form, shared by config files and checkpoints.

namespace kv {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  return out;
}

inline std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || v.empty()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

inline Real to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const Real out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

inline std::vector<Real> to_reals(const std::string& key, const std::string& v) {
  std::vector<Real> out;
  if (trim(v).empty()) return out;
  for (const auto& item : split(v, ',')) out.push_back(to_real(key, item));
  return out;
}

inline std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& item : split(v, ',')) out.push_back(to_size(key, item));
  return out;
}

inline std::string format_real(Real v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string join_reals(const std::vector<Real>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + format_real(values[i]);
  return out;
}

inline std::string join_sizes(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
  return out;
}

}  // namespace kv

/// Keys accepted in the network section.
inline const std::vector<std::string>& network_keys() {
  static const std::vector<std::string> keys{
      "stages", "convs", "widths", "kernel", "input_channels", "learn_upsample", "recursive",
      "recursive_activation", "alpha_side", "alpha_fuse", "beta"};
  return keys;
}

inline std::string recursive_to_string(const RecursiveInputs& r) {
  return r.kind == RecursiveInputs::Kind::All ? "all" : "single:" + std::to_string(r.level);
}

inline RecursiveInputs recursive_from_string(const std::string& key, const std::string& v) {
  if (v == "all") return RecursiveInputs::all();
  if (v.rfind("single:", 0) == 0) return RecursiveInputs::single(kv::to_size(key, v.substr(7)));
  throw ConfigError(key + ": expected 'all' or 'single:<level>', got '" + v + "'");
}

inline std::map<std::string, std::string> network_to_kv(const NetworkConfig& cfg) {
  std::vector<std::size_t> convs, widths;
  for (const auto& l : cfg.subnet.levels) {
    convs.push_back(l.convs);
    widths.push_back(l.channels);
  }
  std::map<std::string, std::string> out;
  out["stages"] = std::to_string(cfg.stages);
  out["convs"] = kv::join_sizes(convs);
  out["widths"] = kv::join_sizes(widths);
  out["kernel"] = std::to_string(cfg.subnet.levels.empty() ? 3 : cfg.subnet.levels.front().kernel);
  out["input_channels"] = std::to_string(cfg.subnet.input_channels);
  out["learn_upsample"] = cfg.subnet.learn_upsample ? "true" : "false";
  out["recursive"] = recursive_to_string(cfg.recursive);
  out["recursive_activation"] = cfg.recursive_activation == RecursiveActivation::Sigmoid ? "sigmoid" : "logit";
  out["alpha_side"] = kv::join_reals(cfg.alpha_side);
  out["alpha_fuse"] = kv::join_reals(cfg.alpha_fuse);
  out["beta"] = cfg.beta_mode == BetaMode::Fraction ? "fraction" : "ratio";
  return out;
}

/// Applies `values` on top of `cfg`. `prefix` only decorates error messages.
inline void apply_network_kv(NetworkConfig& cfg, const std::map<std::string, std::string>& values,
                             const std::string& prefix = "network.") {
  std::vector<std::size_t> convs, widths;
  for (const auto& l : cfg.subnet.levels) {
    convs.push_back(l.convs);
    widths.push_back(l.channels);
  }
  std::size_t kernel = cfg.subnet.levels.empty() ? 3 : cfg.subnet.levels.front().kernel;
  for (const auto& [key, value] : values) {
    const std::string name = prefix + key;
    if (key == "stages") cfg.stages = kv::to_size(name, value);
    else if (key == "convs") convs = kv::to_sizes(name, value);
    else if (key == "widths") widths = kv::to_sizes(name, value);
    else if (key == "kernel") kernel = kv::to_size(name, value);
    else if (key == "input_channels") cfg.subnet.input_channels = kv::to_size(name, value);
    else if (key == "learn_upsample") cfg.subnet.learn_upsample = kv::to_bool(name, value);
    else if (key == "recursive") cfg.recursive = recursive_from_string(name, value);
    else if (key == "recursive_activation") {
      if (value == "sigmoid") cfg.recursive_activation = RecursiveActivation::Sigmoid;
      else if (value == "logit") cfg.recursive_activation = RecursiveActivation::Logit;
      else throw ConfigError(name + ": expected 'sigmoid' or 'logit', got '" + value + "'");
    } else if (key == "alpha_side") cfg.alpha_side = kv::to_reals(name, value);
    else if (key == "alpha_fuse") cfg.alpha_fuse = kv::to_reals(name, value);
    else if (key == "beta") {
      if (value == "fraction") cfg.beta_mode = BetaMode::Fraction;
      else if (value == "ratio") cfg.beta_mode = BetaMode::Ratio;
      else throw ConfigError(name + ": expected 'fraction' or 'ratio', got '" + value + "'");
    } else {
      throw ConfigError("unknown key '" + name + "'");
    }
  }
  if (convs.size() != widths.size()) {
    throw ConfigError(prefix + "convs and " + prefix + "widths must list the same number of levels");
  }
  cfg.subnet.levels.clear();
  for (std::size_t n = 0; n < convs.size(); ++n) cfg.subnet.levels.push_back({convs[n], widths[n], kernel});
  validate(cfg);
}

}  // namespace m2fcn
