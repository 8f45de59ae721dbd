#pragma once

// Bit-flip fault model over stored parameter words.
//
// Fault rate is the independent per-bit flip probability for one trial. A trial's mask is a
// pure function of (seed, trial_id, layer, word): each word reads its own Philox stream, so
// masks are identical regardless of thread count or evaluation order.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "ftclip/model.hpp"
#include "ftclip/philox.hpp"

namespace ftclip {

class FaultError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

struct FaultScope {
  enum class Kind { network, layer };
  Kind kind = Kind::network;
  std::size_t layer = 0;  // graph index of a conv2d / fully_connected layer when kind == layer

  static FaultScope network() { return {}; }
  static FaultScope single(std::size_t layer) { return {Kind::layer, layer}; }

  std::string to_string() const {
    return kind == Kind::network ? "network" : "layer:" + std::to_string(layer);
  }
  friend bool operator==(const FaultScope&, const FaultScope&) = default;
};

struct FaultSpec {
  double rate = 0.0;  // per-bit flip probability
  FaultScope scope;
  std::uint64_t seed = 0;
  std::uint64_t trial_id = 0;
  bool weights_only = false;  // exclude bias words
};

struct BitFlip {
  std::size_t layer = 0;  // graph index
  std::size_t word = 0;   // index into the layer's words (weights first, then bias)
  unsigned bit = 0;       // 0 = LSB, 31 = MSB

  friend auto operator<=>(const BitFlip&, const BitFlip&) = default;
};

/// Realized set of flipped bits, sorted by (layer, word, bit) without duplicates.
struct FaultMask {
  std::vector<BitFlip> flips;

  bool empty() const noexcept { return flips.empty(); }
  std::size_t size() const noexcept { return flips.size(); }
  friend bool operator==(const FaultMask&, const FaultMask&) = default;
};

/// Layers targeted by a scope, validated against the model.
inline std::vector<std::size_t> scope_layers(const Model& model, const FaultScope& scope) {
  if (scope.kind == FaultScope::Kind::network) return model.param_layers();
  if (scope.layer >= model.layers.size() || !model.layers[scope.layer].has_params()) {
    throw FaultError("fault scope layer " + std::to_string(scope.layer) +
                     " is not a conv2d/fully_connected layer of the model");
  }
  return {scope.layer};
}

/// Number of stored bits a spec can touch.
inline std::size_t bits_in_scope(const Model& model, const FaultScope& scope, bool weights_only = false) {
  std::size_t n = 0;
  for (auto li : scope_layers(model, scope)) {
    const auto& l = model.layers[li];
    n += weights_only ? l.weights.words.size() : l.word_count();
  }
  return n * 32;
}

namespace detail {

/// Distribution of the number of flipped bits in one 32-bit word, conditioned on rate.
struct WordFlipTable {
  double any = 0.0;                  // P(at least one flip)
  std::array<double, 33> cumulative{};  // P(1 <= K <= k)
  unsigned max_k = 0;                // largest k with nonzero probability

  explicit WordFlipTable(double rate) {
    if (!(rate >= 0.0 && rate <= 1.0)) {
      throw std::invalid_argument("fault rate must be in [0, 1], got " + std::to_string(rate));
    }
    if (rate == 0.0) return;
    const double log_q = std::log1p(-rate);
    any = -std::expm1(32.0 * log_q);
    double binom = 1.0, acc = 0.0;
    for (unsigned k = 1; k <= 32; ++k) {
      binom = binom * (33 - k) / k;
      const double keep = (k == 32) ? 1.0 : std::exp((32.0 - k) * log_q);
      const double pmf = binom * std::pow(rate, static_cast<double>(k)) * keep;
      acc += pmf;
      cumulative[k] = acc;
      if (pmf > 0.0) max_k = k;
    }
  }

  unsigned count_for(double u) const noexcept {
    for (unsigned k = 1; k <= 32; ++k)
      if (u < cumulative[k]) return k;
    return max_k;
  }
};

constexpr std::uint64_t stream_id(std::size_t layer, std::size_t word) noexcept {
  return (static_cast<std::uint64_t>(layer) << 40) ^ static_cast<std::uint64_t>(word);
}

}  // namespace detail

/// Each in-scope bit flips independently with probability spec.rate. One uniform draw decides
/// whether a word is hit at all and how many of its bits flip; further draws pick which bits.
inline FaultMask draw_mask(const Model& model, const FaultSpec& spec) {
  const detail::WordFlipTable table(spec.rate);
  FaultMask mask;
  if (table.any == 0.0) {
    scope_layers(model, spec.scope);
    return mask;
  }
  const std::uint64_t key = mix64(spec.seed, spec.trial_id);
  for (auto li : scope_layers(model, spec.scope)) {
    const auto& layer = model.layers[li];
    const std::size_t words = spec.weights_only ? layer.weights.words.size() : layer.word_count();
    for (std::size_t w = 0; w < words; ++w) {
      PhiloxStream rng(key, detail::stream_id(li, w));
      const double u = rng.uniform();
      if (u >= table.any) continue;
      const unsigned k = table.count_for(u);
      std::array<unsigned, 32> bits;
      for (unsigned b = 0; b < 32; ++b) bits[b] = b;
      for (unsigned j = 0; j < k; ++j) std::swap(bits[j], bits[j + rng.below(32 - j)]);
      std::sort(bits.begin(), bits.begin() + k);
      for (unsigned j = 0; j < k; ++j) mask.flips.push_back({li, w, bits[j]});
    }
  }
  return mask;
}

inline void validate_mask(const Model& model, const FaultMask& mask) {
  for (const auto& f : mask.flips) {
    if (f.layer >= model.layers.size() || !model.layers[f.layer].has_params()) {
      throw FaultError("mask layer " + std::to_string(f.layer) + " has no parameter words");
    }
    if (f.word >= model.layers[f.layer].word_count()) {
      throw FaultError("mask word " + std::to_string(f.word) + " out of range for layer " + std::to_string(f.layer) +
                       " (" + std::to_string(model.layers[f.layer].word_count()) + " words)");
    }
    if (f.bit >= 32) throw FaultError("mask bit " + std::to_string(f.bit) + " out of range");
  }
}

/// XOR-flips every listed bit in place. Applying the same mask twice restores the words.
inline void apply_mask_in_place(Model& model, const FaultMask& mask) {
  validate_mask(model, mask);
  for (const auto& f : mask.flips) model.layers[f.layer].word(f.word) ^= (std::uint32_t{1} << f.bit);
}

/// Faulty copy of `model`; the original is untouched.
inline Model apply_mask(const Model& model, const FaultMask& mask) {
  Model out = model;
  apply_mask_in_place(out, mask);
  return out;
}

/// One JSON object per line: {"bit":B,"layer":L,"word":W}.
inline void write_mask_jsonl(std::ostream& os, const FaultMask& mask) {
  for (const auto& f : mask.flips) {
    os << nlohmann::json{{"layer", f.layer}, {"word", f.word}, {"bit", f.bit}}.dump() << '\n';
  }
}

inline FaultMask read_mask_jsonl(std::istream& is) {
  FaultMask mask;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      mask.flips.push_back({j.at("layer").get<std::size_t>(), j.at("word").get<std::size_t>(),
                            j.at("bit").get<unsigned>()});
    } catch (const std::exception& e) {
      throw std::invalid_argument("mask line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  std::sort(mask.flips.begin(), mask.flips.end());
  if (std::adjacent_find(mask.flips.begin(), mask.flips.end()) != mask.flips.end()) {
    throw std::invalid_argument("mask lists the same (layer, word, bit) twice");
  }
  return mask;
}

}  // namespace ftclip
