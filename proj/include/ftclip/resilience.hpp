#pragma once

// Accuracy under fault campaigns, accuracy-vs-fault-rate sweeps, and the normalized trapezoidal
// AUC resilience score.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ftclip/dataset.hpp"
#include "ftclip/fault.hpp"
#include "ftclip/model.hpp"
#include "ftclip/parallel.hpp"

namespace ftclip {

struct AccuracyReport {
  std::size_t correct = 0;
  std::size_t total = 0;
  std::size_t degenerate = 0;  // samples whose logits were all NaN
  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

/// Fraction of samples classified correctly by `model` with `mask` (if any) applied to its words.
inline AccuracyReport evaluate_accuracy(const Model& model, const FaultMask* mask, const Dataset& data,
                                        unsigned threads = 0) {
  if (data.empty()) throw std::invalid_argument("evaluate_accuracy: evaluation set is empty");
  const Model faulty = mask ? apply_mask(model, *mask) : model;
  const InferenceModel net(faulty);
  std::vector<Classification> preds(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) { preds[i] = net.predict(data[i].image); });
  AccuracyReport r;
  r.total = data.size();
  for (std::size_t i = 0; i < data.size(); ++i) {
    r.correct += preds[i].index == data[i].label;
    r.degenerate += preds[i].degenerate;
  }
  return r;
}

/// Repeated-evaluation helper for one clean model over one dataset. Caches every sample's clean
/// input to each parametric layer, so a faulty pass only recomputes from the first layer the
/// mask touches. Results are bit-identical to evaluate_accuracy.
class AccuracyEvaluator {
 public:
  static constexpr std::size_t kCacheLimitFloats = std::size_t{1} << 27;

  AccuracyEvaluator(const Model& model, const Dataset& data, unsigned threads = 0)
      : model_(&model), data_(&data), clean_(model) {
    if (data.empty()) throw std::invalid_argument("evaluate_accuracy: evaluation set is empty");
    slot_.assign(model.layers.size(), npos);
    const auto params = model.param_layers();
    for (std::size_t k = 0; k < params.size(); ++k) slot_[params[k]] = k;

    const auto shapes = infer_shapes(model);
    std::size_t per_sample = 0;
    for (auto li : params) per_sample += li == 0 ? shape_product(model.input_shape) : shape_product(shapes[li - 1]);
    const bool cache = per_sample * data.size() <= kCacheLimitFloats;

    std::vector<Classification> preds(data.size());
    if (cache) inputs_.assign(data.size(), std::vector<Tensor>(params.size()));
    parallel_for(data.size(), threads, [&](std::size_t i) {
      Tensor x = clean_.preprocess(data[i].image);
      if (!cache) {
        preds[i] = classify(clean_.forward_from(0, std::move(x)));
        return;
      }
      if (slot_[0] != npos) inputs_[i][slot_[0]] = x;
      Tensor out = clean_.forward_from(0, std::move(x), [&](std::size_t li, const Tensor& y) {
        if (li + 1 < slot_.size() && slot_[li + 1] != npos) inputs_[i][slot_[li + 1]] = y;
      });
      preds[i] = classify(out);
    });
    baseline_ = tally(preds);
  }

  const AccuracyReport& baseline() const noexcept { return baseline_; }

  /// Accuracy with `mask` applied. Single-threaded unless `threads` != 1.
  AccuracyReport evaluate(const FaultMask& mask, unsigned threads = 1) const {
    if (mask.empty()) return baseline_;
    const Model faulty = apply_mask(*model_, mask);
    const InferenceModel net(faulty);
    std::size_t first = mask.flips.front().layer;
    for (const auto& f : mask.flips) first = std::min(first, f.layer);
    std::vector<Classification> preds(data_->size());
    parallel_for(data_->size(), threads, [&](std::size_t i) {
      if (inputs_.empty()) {
        preds[i] = net.predict((*data_)[i].image);
      } else {
        preds[i] = classify(net.forward_from(first, inputs_[i][slot_[first]]));
      }
    });
    return tally(preds);
  }

 private:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  AccuracyReport tally(const std::vector<Classification>& preds) const {
    AccuracyReport r;
    r.total = preds.size();
    for (std::size_t i = 0; i < preds.size(); ++i) {
      r.correct += preds[i].index == (*data_)[i].label;
      r.degenerate += preds[i].degenerate;
    }
    return r;
  }

  const Model* model_;
  const Dataset* data_;
  InferenceModel clean_;
  std::vector<std::size_t> slot_;
  std::vector<std::vector<Tensor>> inputs_;  // [sample][param layer slot]
  AccuracyReport baseline_;
};

/// Maps fault rates to the AUC x axis.
enum class XScale {
  linear,  // x_i = r_i / r_max
  index,   // x_i = i / (n - 1), equispaced grid points
};

inline const char* to_string(XScale s) { return s == XScale::linear ? "linear" : "index"; }

inline XScale parse_xscale(const std::string& s) {
  if (s == "linear") return XScale::linear;
  if (s == "index") return XScale::index;
  throw ConfigError("unknown x scale '" + s + "' (expected linear or index)");
}

inline std::vector<double> default_fault_rates() { return {0, 1e-8, 5e-8, 1e-7, 5e-7, 1e-6, 5e-6, 1e-5}; }

struct SweepConfig {
  std::vector<double> fault_rates = default_fault_rates();
  std::size_t trials_per_rate = 50;
  FaultScope scope;
  std::uint64_t base_seed = 1;
  bool weights_only = false;
  XScale x_scale = XScale::linear;

  void validate() const {
    if (fault_rates.empty()) throw ConfigError("sweep needs at least one fault rate");
    if (fault_rates.front() != 0.0) throw ConfigError("sweep grid must start at rate 0");
    for (std::size_t i = 0; i < fault_rates.size(); ++i) {
      if (!(fault_rates[i] >= 0.0 && fault_rates[i] <= 1.0)) throw ConfigError("fault rates must lie in [0, 1]");
      if (i && !(fault_rates[i] > fault_rates[i - 1])) throw ConfigError("fault rates must be strictly ascending");
    }
    if (trials_per_rate == 0) throw ConfigError("trials_per_rate must be >= 1");
  }
};

struct RateSummary {
  double mean = 0, min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

/// Linear-interpolation quantile (R type 7) of sorted values.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline RateSummary summarize(std::vector<double> values) {
  RateSummary s;
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  double sum = 0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  s.min = values.front();
  s.max = values.back();
  s.q1 = quantile_sorted(values, 0.25);
  s.median = quantile_sorted(values, 0.5);
  s.q3 = quantile_sorted(values, 0.75);
  return s;
}

struct SweepResult {
  std::vector<double> rates;
  std::vector<std::vector<double>> accuracy;  // [rate][trial]
  std::vector<std::vector<std::size_t>> flips;  // realized mask size per [rate][trial]
  std::vector<RateSummary> summary;
  double baseline = 0.0;
  std::size_t degenerate = 0;  // all-NaN logit samples over the whole sweep

  std::vector<double> mean_curve() const {
    std::vector<double> out;
    for (const auto& s : summary) out.push_back(s.mean);
    return out;
  }
};

/// For every rate r and trial t, evaluates the model under draw_mask(rate r, seed base_seed,
/// trial t). Deterministic given cfg; trials run in parallel.
inline SweepResult run_sweep(const AccuracyEvaluator& eval, const Model& model, const SweepConfig& cfg,
                             unsigned threads = 0) {
  cfg.validate();
  scope_layers(model, cfg.scope);
  const std::size_t R = cfg.fault_rates.size(), T = cfg.trials_per_rate;
  std::vector<AccuracyReport> reports(R * T);
  std::vector<std::size_t> flips(R * T);
  parallel_for(R * T, threads, [&](std::size_t job) {
    const std::size_t r = job / T, t = job % T;
    const FaultMask mask = draw_mask(model, {cfg.fault_rates[r], cfg.scope, cfg.base_seed, t, cfg.weights_only});
    flips[job] = mask.size();
    reports[job] = eval.evaluate(mask);
  });
  SweepResult res;
  res.rates = cfg.fault_rates;
  res.baseline = eval.baseline().accuracy();
  res.accuracy.assign(R, std::vector<double>(T));
  res.flips.assign(R, std::vector<std::size_t>(T));
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t t = 0; t < T; ++t) {
      res.accuracy[r][t] = reports[r * T + t].accuracy();
      res.flips[r][t] = flips[r * T + t];
      res.degenerate += reports[r * T + t].degenerate;
    }
    res.summary.push_back(summarize(res.accuracy[r]));
  }
  return res;
}

inline SweepResult run_sweep(const Model& model, const SweepConfig& cfg, const Dataset& eval_set,
                             unsigned threads = 0) {
  const AccuracyEvaluator eval(model, eval_set, threads);
  return run_sweep(eval, model, cfg, threads);
}

struct AucResult {
  double auc = 0.0;
  std::vector<double> x;  // normalized fault rate
  std::vector<double> y;  // accuracy as a fraction of 100%
};

/// Trapezoidal area under accuracy vs normalized fault rate. Both axes are normalized so that
/// 100% accuracy at every rate scores exactly 1.
inline AucResult compute_auc(std::span<const double> rates, std::span<const double> accuracy,
                             XScale scale = XScale::linear) {
  if (rates.size() != accuracy.size()) throw std::invalid_argument("compute_auc: rates/accuracy length mismatch");
  if (rates.size() < 2) throw std::invalid_argument("compute_auc: need at least two points");
  for (std::size_t i = 1; i < rates.size(); ++i) {
    if (!(rates[i] > rates[i - 1])) throw std::invalid_argument("compute_auc: rates must be strictly ascending");
  }
  if (!(rates.front() >= 0.0)) throw std::invalid_argument("compute_auc: rates must be >= 0");
  const std::size_t n = rates.size();
  AucResult res;
  res.x.resize(n);
  res.y.assign(accuracy.begin(), accuracy.end());
  for (std::size_t i = 0; i < n; ++i) {
    res.x[i] = scale == XScale::linear ? rates[i] / rates.back()
                                       : static_cast<double>(i) / static_cast<double>(n - 1);
  }
  for (std::size_t i = 0; i + 1 < n; ++i) res.auc += 0.5 * (res.y[i] + res.y[i + 1]) * (res.x[i + 1] - res.x[i]);
  return res;
}

/// AUC of the sweep's mean-accuracy curve.
inline AucResult compute_auc(const SweepResult& sweep, XScale scale = XScale::linear) {
  const auto mean = sweep.mean_curve();
  return compute_auc(sweep.rates, mean, scale);
}

/// Shortest decimal that reads back to the same double.
inline std::string format_rate(double r) {
  char buf[32];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, r);
    if (std::strtod(buf, nullptr) == r) break;
  }
  return buf;
}

/// rate,trial,accuracy rows; accuracy with 6 decimals.
inline void write_sweep_csv(std::ostream& os, const SweepResult& s) {
  os << "rate,trial,accuracy\n";
  char buf[32];
  for (std::size_t r = 0; r < s.rates.size(); ++r) {
    for (std::size_t t = 0; t < s.accuracy[r].size(); ++t) {
      std::snprintf(buf, sizeof buf, "%.6f", s.accuracy[r][t]);
      os << format_rate(s.rates[r]) << ',' << t << ',' << buf << '\n';
    }
  }
}

inline nlohmann::json to_json(const SweepResult& s) {
  nlohmann::json rates = nlohmann::json::array();
  for (std::size_t r = 0; r < s.rates.size(); ++r) {
    const auto& m = s.summary[r];
    std::size_t flips = 0;
    for (auto f : s.flips[r]) flips += f;
    rates.push_back({{"rate", s.rates[r]},
                     {"trials", s.accuracy[r].size()},
                     {"mean", m.mean},
                     {"min", m.min},
                     {"q1", m.q1},
                     {"median", m.median},
                     {"q3", m.q3},
                     {"max", m.max},
                     {"mean_flips", static_cast<double>(flips) / static_cast<double>(s.flips[r].size())}});
  }
  return {{"baseline_accuracy", s.baseline}, {"degenerate_logits", s.degenerate}, {"rates", rates}};
}

inline nlohmann::json to_json(const AucResult& a) { return {{"auc", a.auc}, {"x", a.x}, {"y", a.y}}; }

}  // namespace ftclip
