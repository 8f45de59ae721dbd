#pragma once

// Per-layer clip-threshold tuning by iterative interval search over the AUC resilience score.
//
// Each iteration splits the search interval S into three equal sub-intervals, scores the four
// boundaries T1..T4, and keeps the neighbourhood of the best boundary:
//   best == T4      -> [T3, T4]
//   best == T1      -> [T1, T2]
//   best == Tk else -> [T(k-1), T(k+1)]
// The search starts from S = [0, act_max] and stops after max_iterations, or earlier once the
// largest gap between adjacent boundary scores is <= delta and min_iterations have run.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ftclip/dataset.hpp"
#include "ftclip/fault.hpp"
#include "ftclip/model.hpp"
#include "ftclip/philox.hpp"
#include "ftclip/profiler.hpp"
#include "ftclip/resilience.hpp"

namespace ftclip {

struct SearchInterval {
  double lo = 0.0;
  double hi = 0.0;

  double width() const noexcept { return hi - lo; }
  bool contains(const SearchInterval& inner) const noexcept { return lo <= inner.lo && inner.hi <= hi; }

  /// T1 = lo, T2 = T1 + w/3, T3 = T2 + w/3, T4 = hi.
  std::array<double, 4> boundaries() const noexcept {
    const double third = (hi - lo) / 3.0;
    const double t2 = lo + third;
    return {lo, t2, std::min(t2 + third, hi), hi};
  }
};

struct IntervalStep {
  SearchInterval next;
  double best = 0.0;
  std::size_t index = 0;  // 0-based position of the best boundary
};

/// Index of the highest score; the lowest index wins ties and NaN never wins.
inline std::size_t argmax_boundary(const std::array<double, 4>& auc) {
  std::size_t idx = 0;
  for (std::size_t i = 1; i < 4; ++i)
    if (auc[i] > auc[idx] || (std::isnan(auc[idx]) && !std::isnan(auc[i]))) idx = i;
  return idx;
}

inline IntervalStep interval_search_step(const std::array<double, 4>& thresholds, const std::array<double, 4>& auc) {
  const std::size_t idx = argmax_boundary(auc);
  IntervalStep step;
  step.index = idx;
  step.best = thresholds[idx];
  if (idx == 3) step.next = {thresholds[2], thresholds[3]};
  else if (idx == 0) step.next = {thresholds[0], thresholds[1]};
  else step.next = {thresholds[idx - 1], thresholds[idx + 1]};
  return step;
}

enum class ExitReason { max_iters, plateau, inactive };

inline const char* to_string(ExitReason r) {
  switch (r) {
    case ExitReason::max_iters: return "max_iters";
    case ExitReason::plateau: return "plateau";
    case ExitReason::inactive: return "inactive";
  }
  return "?";
}

enum class TuneScope {
  layer,    // inject into the parametric layer feeding the activation being tuned
  network,  // inject into every parametric layer
};

struct TuneConfig {
  int max_iterations = 10;  // N
  int min_iterations = 3;   // M
  double delta = 0.01;
  SweepConfig sweep = [] {
    SweepConfig s;
    s.trials_per_rate = 10;
    return s;
  }();
  std::vector<std::size_t> layer_order;  // activation ordinals; empty = input to output
  TuneScope scope = TuneScope::layer;

  void validate() const {
    if (max_iterations < 1) throw ConfigError("max_iterations (N) must be >= 1");
    if (min_iterations < 0 || min_iterations >= max_iterations) throw ConfigError("min_iterations (M) must satisfy 0 <= M < N");
    if (!(delta >= 0.0)) throw ConfigError("delta must be >= 0");
    sweep.validate();
    if (sweep.fault_rates.size() < 2) throw ConfigError("tuning needs at least two fault rates");
  }
};

struct TuneIteration {
  int counter = 0;
  SearchInterval interval;
  std::array<double, 4> thresholds{};
  std::array<double, 4> auc{};
  std::array<double, 3> deltas{};
  std::optional<double> chosen;  // T picked by the interval step that produced this interval
};

struct TuneTrace {
  std::size_t activation = 0;  // activation ordinal
  std::string layer_name;
  double act_max = 0.0;
  double threshold = 0.0;  // result
  ExitReason exit_reason = ExitReason::max_iters;
  std::vector<TuneIteration> iterations;
  std::vector<std::string> warnings;
};

/// Interval search for the threshold maximizing `auc_quad`, which maps an interval to the AUC
/// of its four boundaries. Scalar stubs can be wrapped with `quad_of`.
template <class AucQuad>
TuneTrace search_threshold(double act_max, const TuneConfig& cfg, AucQuad&& auc_quad) {
  if (cfg.max_iterations < 1) throw ConfigError("max_iterations (N) must be >= 1");
  if (cfg.min_iterations < 0 || cfg.min_iterations >= cfg.max_iterations)
    throw ConfigError("min_iterations (M) must satisfy 0 <= M < N");
  TuneTrace trace;
  trace.act_max = act_max;
  if (!(act_max > 0.0)) {
    trace.threshold = std::isfinite(act_max) ? std::max(act_max, 0.0) : 0.0;
    trace.exit_reason = ExitReason::inactive;
    trace.warnings.push_back("layer-inactive: act_max <= 0, threshold left at act_max");
    return trace;
  }

  SearchInterval interval{0.0, act_max};
  std::array<double, 4> bounds{};
  std::array<double, 4> auc{};
  std::optional<double> chosen;
  int counter = 1;
  while (counter <= cfg.max_iterations) {
    TuneIteration it;
    if (counter == 1) {
      interval = {0.0, act_max};
    } else {
      const IntervalStep step = interval_search_step(bounds, auc);
      interval = step.next;
      chosen = step.best;
      it.chosen = step.best;
    }
    bounds = interval.boundaries();
    auc = auc_quad(interval);
    it.counter = counter;
    it.interval = interval;
    it.thresholds = bounds;
    it.auc = auc;
    ++counter;
    double max_delta = 0.0;
    for (int i = 0; i < 3; ++i) {
      it.deltas[i] = std::abs(auc[i + 1] - auc[i]);
      max_delta = std::max(max_delta, it.deltas[i]);
    }
    trace.iterations.push_back(it);
    if (max_delta <= cfg.delta && counter >= cfg.min_iterations) {
      trace.exit_reason = ExitReason::plateau;
      trace.threshold = chosen.value_or(bounds[argmax_boundary(auc)]);
      return trace;
    }
  }
  trace.exit_reason = ExitReason::max_iters;
  trace.threshold = chosen.value_or(bounds[argmax_boundary(auc)]);
  return trace;
}

/// Adapts a scalar objective auc(T) to the four-boundary form. Holds `f` by reference.
template <class Scalar>
auto quad_of(Scalar&& f) {
  return [&f](const SearchInterval& s) {
    const auto t = s.boundaries();
    return std::array<double, 4>{f(t[0]), f(t[1]), f(t[2]), f(t[3])};
  };
}

/// Graph index of the parametric layer feeding activation `activation` (by ordinal).
inline std::size_t feeding_param_layer(const Model& model, std::size_t activation) {
  const auto acts = model.activation_layers();
  if (activation >= acts.size()) throw ConfigError("activation layer " + std::to_string(activation) + " out of range");
  for (std::size_t li = acts[activation]; li-- > 0;)
    if (model.layers[li].has_params()) return li;
  throw ConfigError("activation layer " + std::to_string(activation) + " has no parametric layer before it");
}

/// Fault campaign used while tuning one activation layer: scope per cfg.scope, seed keyed on
/// the activation so every threshold of that layer sees the same masks.
inline SweepConfig tuning_sweep(const Model& model, std::size_t activation, const TuneConfig& cfg) {
  SweepConfig s = cfg.sweep;
  s.scope = cfg.scope == TuneScope::layer ? FaultScope::single(feeding_param_layer(model, activation))
                                          : FaultScope::network();
  s.base_seed = mix64(cfg.sweep.base_seed, activation);
  return s;
}

/// AUC of `model` with activation `activation` clipped at T, memoized per float threshold.
class LayerAucObjective {
 public:
  LayerAucObjective(const Model& model, std::size_t activation, const Dataset& data, SweepConfig sweep,
                    unsigned threads = 0)
      : model_(&model), activation_(activation), data_(&data), sweep_(std::move(sweep)), threads_(threads) {}

  double operator()(double threshold) {
    const float t = static_cast<float>(threshold);
    const auto key = std::bit_cast<std::uint32_t>(t);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    const Model variant = with_threshold(*model_, activation_, t);
    const double auc = compute_auc(run_sweep(variant, sweep_, *data_, threads_), sweep_.x_scale).auc;
    ++evaluations_;
    memo_.emplace(key, auc);
    return auc;
  }

  std::size_t evaluations() const noexcept { return evaluations_; }

 private:
  const Model* model_;
  std::size_t activation_;
  const Dataset* data_;
  SweepConfig sweep_;
  unsigned threads_;
  std::map<std::uint32_t, double> memo_;
  std::size_t evaluations_ = 0;
};

/// AUC at the four boundaries of `interval` for activation `activation`; other layers keep
/// their current thresholds and `model` itself is never modified.
inline std::array<double, 4> auc_calculation(const Model& model, std::size_t activation, const SearchInterval& interval,
                                             const SweepConfig& sweep, const Dataset& data, unsigned threads = 0) {
  LayerAucObjective objective(model, activation, data, sweep, threads);
  return quad_of(objective)(interval);
}

/// Tunes one activation layer of `model` (which should already carry clipped activations).
inline TuneTrace tune_layer(const Model& model, std::size_t activation, double act_max, const TuneConfig& cfg,
                            const Dataset& calibration, unsigned threads = 0) {
  cfg.validate();
  LayerAucObjective objective(model, activation, calibration, tuning_sweep(model, activation, cfg), threads);
  TuneTrace trace = search_threshold(act_max, cfg, quad_of(objective));
  trace.activation = activation;
  trace.layer_name = model.layers[model.activation_layers()[activation]].name;
  return trace;
}

struct TunedNetwork {
  Model model;
  std::vector<TuneTrace> traces;  // in tuning order
};

/// Clips every activation at its profiled act_max, then tunes layers one at a time in
/// cfg.layer_order, committing each tuned threshold before moving on.
inline TunedNetwork tune_network(const Model& model, const ActivationProfile& prof, const TuneConfig& cfg,
                                 const Dataset& calibration, unsigned threads = 0) {
  cfg.validate();
  const auto acts = model.activation_layers();
  if (prof.layers.size() != acts.size()) {
    throw ConfigError("profile covers " + std::to_string(prof.layers.size()) + " activation layers, model has " +
                      std::to_string(acts.size()));
  }
  std::vector<std::size_t> order = cfg.layer_order;
  if (order.empty()) {
    for (std::size_t k = 0; k < acts.size(); ++k) order.push_back(k);
  }
  std::vector<std::size_t> sorted = order;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    if (sorted.size() != acts.size() || sorted[k] != k) throw ConfigError("layer_order must be a permutation of activation layers");
  }
  std::vector<float> act_max = prof.act_max();
  for (auto& t : act_max) t = std::max(t, 0.0f);
  TunedNetwork out{set_thresholds(model, act_max), {}};
  for (auto k : order) {
    TuneTrace trace = tune_layer(out.model, k, prof.layers[k].act_max, cfg, calibration, threads);
    out.model = with_threshold(out.model, k, static_cast<float>(trace.threshold));
    out.traces.push_back(std::move(trace));
  }
  return out;
}

inline nlohmann::json to_json(const TuneTrace& t) {
  nlohmann::json its = nlohmann::json::array();
  for (const auto& it : t.iterations) {
    its.push_back({{"counter", it.counter},
                   {"interval", {it.interval.lo, it.interval.hi}},
                   {"thresholds", it.thresholds},
                   {"auc", it.auc},
                   {"deltas", it.deltas},
                   {"chosen", it.chosen ? nlohmann::json(*it.chosen) : nlohmann::json(nullptr)}});
  }
  return {{"activation", t.activation},
          {"layer", t.layer_name},
          {"act_max", t.act_max},
          {"threshold", t.threshold},
          {"exit_reason", to_string(t.exit_reason)},
          {"iterations", its},
          {"warnings", t.warnings}};
}

}  // namespace ftclip
