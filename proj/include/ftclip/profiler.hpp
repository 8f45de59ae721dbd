#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "ftclip/dataset.hpp"
#include "ftclip/fault.hpp"
#include "ftclip/model.hpp"
#include "ftclip/parallel.hpp"

namespace ftclip {

/// Fixed linear bins over [lo, hi]. Values above hi and non-finite values land in `overflow`,
/// values below lo in `underflow`; counts + overflow + underflow is the element count.
struct Histogram {
  std::vector<double> edges;  // bins + 1 entries
  std::vector<std::uint64_t> counts;
  std::uint64_t overflow = 0;
  std::uint64_t underflow = 0;

  static Histogram linear(double lo, double hi, std::size_t bins) {
    if (bins == 0) throw std::invalid_argument("histogram needs at least one bin");
    if (!(hi >= lo)) throw std::invalid_argument("histogram range must satisfy lo <= hi");
    Histogram h;
    h.edges.resize(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
    h.edges.back() = hi;
    h.counts.assign(bins, 0);
    return h;
  }

  void add(float v) {
    const double lo = edges.front(), hi = edges.back();
    if (!std::isfinite(v) || v > hi) {
      ++overflow;
    } else if (v < lo) {
      ++underflow;
    } else {
      const std::size_t bins = counts.size();
      std::size_t b = hi > lo ? static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins)) : 0;
      ++counts[std::min(b, bins - 1)];
    }
  }

  void merge(const Histogram& other) {
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
    overflow += other.overflow;
    underflow += other.underflow;
  }

  std::uint64_t total() const {
    std::uint64_t n = overflow + underflow;
    for (auto c : counts) n += c;
    return n;
  }
};

struct LayerProfile {
  std::size_t layer = 0;  // graph index of the activation layer
  std::string name;
  float act_max = 0.0f;
  float p999 = 0.0f;  // 99.9th percentile (nearest rank); recorded, not used by tuning
  std::size_t sample_count = 0;
  std::size_t activations_per_sample = 0;
  Histogram histogram;  // 100 bins over [0, act_max]
};

struct ActivationProfile {
  std::vector<LayerProfile> layers;  // one per activation layer, in graph order

  std::vector<float> act_max() const {
    std::vector<float> out;
    for (const auto& l : layers) out.push_back(l.act_max);
    return out;
  }
};

inline constexpr std::size_t kProfileBins = 100;

/// Runs the fault-free model over `calibration` and records per-activation-layer statistics of
/// the activation outputs. The result does not depend on sample order or thread count.
inline ActivationProfile profile(const Model& model, const Dataset& calibration, unsigned threads = 0,
                                 std::size_t bins = kProfileBins) {
  if (calibration.empty()) throw std::invalid_argument("profile: calibration set is empty");
  const InferenceModel net(model);
  const auto acts = model.activation_layers();
  std::vector<std::size_t> slot(model.layers.size(), acts.size());
  for (std::size_t k = 0; k < acts.size(); ++k) slot[acts[k]] = k;

  // values[sample][activation] -> that sample's outputs
  std::vector<std::vector<std::vector<float>>> values(calibration.size());
  parallel_for(calibration.size(), threads, [&](std::size_t i) {
    auto& mine = values[i];
    mine.resize(acts.size());
    net.forward(calibration[i].image, [&](std::size_t li, const Tensor& out) {
      if (slot[li] < acts.size()) mine[slot[li]] = out.values();
    });
  });

  ActivationProfile prof;
  for (std::size_t k = 0; k < acts.size(); ++k) {
    LayerProfile lp;
    lp.layer = acts[k];
    lp.name = model.layers[acts[k]].name;
    lp.sample_count = calibration.size();
    lp.activations_per_sample = values[0][k].size();
    std::vector<float> all;
    all.reserve(lp.sample_count * lp.activations_per_sample);
    for (const auto& per_sample : values) all.insert(all.end(), per_sample[k].begin(), per_sample[k].end());
    float mx = -std::numeric_limits<float>::infinity();
    for (float v : all) mx = std::max(mx, v);
    lp.act_max = mx;
    const std::size_t rank = static_cast<std::size_t>(std::ceil(0.999 * static_cast<double>(all.size())));
    auto nth = all.begin() + static_cast<std::ptrdiff_t>(std::max<std::size_t>(rank, 1) - 1);
    std::nth_element(all.begin(), nth, all.end());
    lp.p999 = *nth;
    lp.histogram = Histogram::linear(0.0, std::max(0.0, static_cast<double>(mx)), bins);
    for (const auto& per_sample : values)
      for (float v : per_sample[k]) lp.histogram.add(v);
    prof.layers.push_back(std::move(lp));
  }
  return prof;
}

/// Histogram of one activation layer's outputs (by activation ordinal) over `inputs`, with an
/// optional fault mask applied to the parameters first.
inline Histogram activation_histogram(const Model& model, const Dataset& inputs, const FaultMask* mask,
                                      std::size_t activation, double lo, double hi, std::size_t bins,
                                      unsigned threads = 0) {
  const auto acts = model.activation_layers();
  if (activation >= acts.size()) {
    throw std::out_of_range("activation layer " + std::to_string(activation) + " out of range (model has " +
                            std::to_string(acts.size()) + ")");
  }
  const Model faulty = mask ? apply_mask(model, *mask) : model;
  const InferenceModel net(faulty);
  const std::size_t target = acts[activation];
  std::vector<Histogram> parts(inputs.size(), Histogram::linear(lo, hi, bins));
  parallel_for(inputs.size(), threads, [&](std::size_t i) {
    net.forward(inputs[i].image, [&](std::size_t li, const Tensor& out) {
      if (li == target)
        for (float v : out.data()) parts[i].add(v);
    });
  });
  Histogram h = Histogram::linear(lo, hi, bins);
  for (const auto& p : parts) h.merge(p);
  return h;
}

inline nlohmann::json to_json(const Histogram& h) {
  return {{"edges", h.edges}, {"counts", h.counts}, {"overflow", h.overflow}, {"underflow", h.underflow}};
}

/// {"layers": [{"name", "layer", "act_max", "p999", "sample_count", "activations_per_sample",
/// "histogram"}...]}. Keyed by position so duplicate layer names stay distinct.
inline nlohmann::json to_json(const ActivationProfile& p) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : p.layers) {
    layers.push_back({{"name", l.name},
                      {"layer", l.layer},
                      {"act_max", l.act_max},
                      {"p999", l.p999},
                      {"sample_count", l.sample_count},
                      {"activations_per_sample", l.activations_per_sample},
                      {"histogram", to_json(l.histogram)}});
  }
  return {{"layers", layers}};
}

inline ActivationProfile profile_from_json(const nlohmann::json& j) {
  ActivationProfile p;
  for (const auto& l : j.at("layers")) {
    LayerProfile lp;
    lp.name = l.value("name", "");
    lp.layer = l.at("layer").get<std::size_t>();
    lp.act_max = l.at("act_max").get<float>();
    lp.p999 = l.value("p999", 0.0f);
    lp.sample_count = l.value("sample_count", std::size_t{0});
    lp.activations_per_sample = l.value("activations_per_sample", std::size_t{0});
    if (l.contains("histogram")) {
      const auto& h = l["histogram"];
      lp.histogram.edges = h.at("edges").get<std::vector<double>>();
      lp.histogram.counts = h.at("counts").get<std::vector<std::uint64_t>>();
      lp.histogram.overflow = h.value("overflow", std::uint64_t{0});
      lp.histogram.underflow = h.value("underflow", std::uint64_t{0});
    }
    p.layers.push_back(std::move(lp));
  }
  return p;
}

}  // namespace ftclip
