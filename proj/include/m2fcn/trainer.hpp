#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "m2fcn/augment.hpp"
#include "m2fcn/network.hpp"

namespace m2fcn {

struct OptimState {
  std::map<std::string, Tensor> velocity;  // by parameter name
  Real lr = 1e-3;
  Real momentum = 0.9;
  Real weight_decay = 2e-4;
};

/// v ← μv − lr(g + λp); p ← p + v for every trainable parameter.
inline void sgd_step(std::span<Parameter* const> params, const Gradients& grads, OptimState& state) {
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    const Tensor g = grads.of(*p);
    if (!g.all_finite()) throw NumericError("non-finite gradient for parameter '" + p->name + "'");
    auto [it, fresh] = state.velocity.try_emplace(p->name, Tensor::zeros_like(p->value));
    Tensor& v = it->second;
    if (v.shape() != p->value.shape()) throw ShapeError("optimizer velocity shape mismatch for '" + p->name + "'");
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = state.momentum * v[i] - state.lr * (g[i] + state.weight_decay * p->value[i]);
      p->value[i] += v[i];
    }
  }
}

enum class TrainMode { EndToEnd, Stepwise };

struct TrainSchedule {
  std::size_t phase1_iterations = 400;
  Real phase1_lr = 2e-5;
  std::size_t phase2_iterations = 800;
  Real phase2_lr = 1e-5;
  TrainMode mode = TrainMode::EndToEnd;
  std::uint64_t seed = 1;
  std::size_t snapshot_every = 0;  // 0 disables snapshots
  Real momentum = 0.9;
  Real weight_decay = 2e-4;
  bool augment = false;  // cycle the ×36 augmented set instead of the raw images
};

inline void validate(const TrainSchedule& s) {
  if (!(s.phase1_lr > 0) || !(s.phase2_lr > 0)) throw ConfigError("schedule: learning rates must be > 0");
  if (!(s.momentum >= 0 && s.momentum < 1)) throw ConfigError("schedule.momentum must be in [0,1)");
  if (!(s.weight_decay >= 0)) throw ConfigError("schedule.weight_decay must be >= 0");
}

struct LossRecord {
  std::size_t iteration = 0;
  std::vector<Real> fused;  // per stage
  Real total = 0;
};

struct TrainLog {
  std::vector<LossRecord> records;
  bool diverged = false;

  std::string to_csv() const {
    std::string out = "iteration";
    const std::size_t stages = records.empty() ? 0 : records.front().fused.size();
    for (std::size_t m = 0; m < stages; ++m) out += ",fused_" + std::to_string(m + 1);
    out += ",total\n";
    for (const auto& r : records) {
      out += std::to_string(r.iteration);
      for (Real f : r.fused) out += "," + kv::format_real(f);
      out += "," + kv::format_real(r.total) + "\n";
    }
    return out;
  }
};

using SnapshotFn = std::function<void(std::size_t iteration, const M2FCN& net)>;

struct DatasetLoss {
  Real total = 0;
  std::vector<Real> fused;  // per stage
};

/// Mean losses of `net` over `data`.
inline DatasetLoss evaluate_loss(M2FCN& net, std::span<const Sample> data) {
  if (data.empty()) throw ConfigError("evaluate_loss: empty dataset");
  DatasetLoss out;
  out.fused.assign(net.stage_count(), 0.0);
  for (const Sample& s : data) {
    Graph g;
    const LossTerms terms = total_loss(forward_all(net, g, s.image), s.labels, net.config());
    out.total += terms.total.value().item();
    for (std::size_t m = 0; m < out.fused.size(); ++m) out.fused[m] += terms.fused[m];
  }
  const auto n = static_cast<Real>(data.size());
  out.total /= n;
  for (Real& f : out.fused) f /= n;
  return out;
}

namespace detail {

inline std::vector<Tensor> parameter_values(M2FCN& net) {
  std::vector<Tensor> out;
  for (Parameter* p : net.parameters()) out.push_back(p->value);
  return out;
}

inline void restore_values(M2FCN& net, const std::vector<Tensor>& values) {
  auto params = net.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = values[k];
}

// Runs `iterations` single-image SGD steps over `data` in a per-epoch shuffled
// order drawn from `seed`.
inline TrainLog run_sgd(M2FCN& net, std::span<const Sample> data, std::size_t iterations, Real lr,
                        const TrainSchedule& schedule, std::uint64_t seed, const SnapshotFn& snapshot) {
  if (data.empty()) throw ConfigError("training data is empty");
  std::vector<Sample> augmented;
  if (schedule.augment) {
    for (const Sample& s : data) {
      auto v = augment36(s);
      augmented.insert(augmented.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
    }
    data = augmented;
  }

  OptimState state{{}, lr, schedule.momentum, schedule.weight_decay};
  const auto params = net.parameters();
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(data.size());
  std::size_t cursor = order.size();

  TrainLog log;
  std::vector<Tensor> best = parameter_values(net);
  Real best_loss = std::numeric_limits<Real>::infinity();
  for (std::size_t it = 1; it <= iterations; ++it) {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const Sample& s = data[order[cursor++]];
    try {
      Graph g;
      const LossTerms terms = total_loss(forward_all(net, g, s.image), s.labels, net.config());
      const Real loss = terms.total.value().item();
      if (loss < best_loss) {
        best_loss = loss;
        best = parameter_values(net);
      }
      log.records.push_back({it, terms.fused, loss});
      sgd_step(params, g.backward(terms.total), state);
    } catch (const NumericError&) {
      restore_values(net, best);
      log.diverged = true;
      return log;
    }
    bool finite = true;
    for (const Parameter* p : params) finite = finite && p->value.all_finite();
    if (!finite) {
      restore_values(net, best);
      log.diverged = true;
      return log;
    }
    if (snapshot && schedule.snapshot_every != 0 && it % schedule.snapshot_every == 0) snapshot(it, net);
  }
  return log;
}

}  // namespace detail

/// Phase 1: trains a single-stage network on `data`; its stage seeds the
/// first stage of the multi-stage network built from the same seed.
inline M2FCN pretrain_stage1(const NetworkConfig& cfg, std::span<const Sample> data, const TrainSchedule& schedule,
                             TrainLog* log = nullptr, const SnapshotFn& snapshot = {}) {
  validate(schedule);
  if (data.empty()) throw ConfigError("pretrain_stage1: dataset is empty");
  NetworkConfig single = cfg;
  single.stages = 1;
  if (single.alpha_side.size() > 1) single.alpha_side.resize(cfg.levels());
  if (single.alpha_fuse.size() > 1) single.alpha_fuse.resize(1);
  M2FCN net = M2FCN::build(single, schedule.seed);
  TrainLog l = detail::run_sgd(net, data, schedule.phase1_iterations, schedule.phase1_lr, schedule,
                               detail::splitmix64(schedule.seed ^ 0x9a5e1ULL), snapshot);
  if (log) *log = std::move(l);
  return net;
}

/// Phase 2: trains every stage of `net`; stepwise mode holds stage 1 fixed.
inline TrainLog train(M2FCN& net, std::span<const Sample> data, const TrainSchedule& schedule,
                      const SnapshotFn& snapshot = {}) {
  validate(schedule);
  std::vector<Parameter*> frozen;
  if (schedule.mode == TrainMode::Stepwise && net.stage_count() > 1) {
    for (Parameter* p : net.stage_parameters(0)) {
      if (p->trainable) {
        p->trainable = false;
        frozen.push_back(p);
      }
    }
  }
  struct Unfreeze {
    std::vector<Parameter*>& ps;
    ~Unfreeze() {
      for (Parameter* p : ps) p->trainable = true;
    }
  } unfreeze{frozen};
  return detail::run_sgd(net, data, schedule.phase2_iterations, schedule.phase2_lr, schedule,
                         detail::splitmix64(schedule.seed ^ 0x9a5e2ULL), snapshot);
}

struct TrainingRun {
  M2FCN net;
  TrainLog phase1;
  TrainLog phase2;
};

/// Both phases: pretrain stage 1, copy it into a freshly seeded M-stage
/// network and train that. A single-stage network only runs phase 1.
inline TrainingRun train_network(const NetworkConfig& cfg, std::span<const Sample> data, const TrainSchedule& schedule,
                                 const SnapshotFn& snapshot = {}) {
  TrainingRun run;
  M2FCN stage1 = pretrain_stage1(cfg, data, schedule, &run.phase1, snapshot);
  if (cfg.stages == 1) {
    run.net = std::move(stage1);
    return run;
  }
  run.net = M2FCN::build(cfg, schedule.seed);
  run.net.adopt_stage1(stage1);
  run.phase2 = train(run.net, data, schedule, snapshot);
  return run;
}

}  // namespace m2fcn
