#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ftclip/philox.hpp"
#include "ftclip/tensor.hpp"

namespace ftclip {

class DataFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LabeledSample {
  Tensor image;  // C,H,W with values in [0, 1]
  std::size_t label = 0;
};

using Dataset = std::vector<LabeledSample>;

inline const Shape kCifar10Shape{3, 32, 32};
inline constexpr std::size_t kCifar10Classes = 10;

/// Parses records of one label byte followed by prod(shape) pixel bytes (the CIFAR-10 binary
/// layout for shape 3x32x32). Pixels are scaled by 1/255; planes stay in stored order.
inline Dataset parse_label_records(std::span<const unsigned char> bytes, const Shape& shape = kCifar10Shape,
                                   std::size_t classes = kCifar10Classes) {
  const std::size_t pixels = shape_product(shape);
  const std::size_t record = pixels + 1;
  if (bytes.empty() || bytes.size() % record != 0) {
    throw DataFormatError("record data length " + std::to_string(bytes.size()) + " is not a positive multiple of " +
                          std::to_string(record) + " bytes");
  }
  Dataset out;
  out.reserve(bytes.size() / record);
  for (std::size_t off = 0; off < bytes.size(); off += record) {
    const std::size_t label = bytes[off];
    if (label >= classes) {
      throw DataFormatError("corrupt record " + std::to_string(off / record) + ": label " + std::to_string(label) +
                            " >= " + std::to_string(classes));
    }
    std::vector<float> px(pixels);
    for (std::size_t k = 0; k < pixels; ++k) px[k] = static_cast<float>(bytes[off + 1 + k]) / 255.0f;
    out.push_back({Tensor(shape, std::move(px)), label});
  }
  return out;
}

inline Dataset load_cifar10_batch(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataFormatError("cannot open '" + path + "'");
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  try {
    return parse_label_records(bytes);
  } catch (const DataFormatError& e) {
    throw DataFormatError(path + ": " + e.what());
  }
}

/// Inverse of parse_label_records; pixel values are rounded to the nearest of k/255.
inline std::vector<unsigned char> encode_label_records(const Dataset& data) {
  std::vector<unsigned char> out;
  for (const auto& s : data) {
    out.push_back(static_cast<unsigned char>(s.label));
    for (float v : s.image.data()) {
      out.push_back(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
    }
  }
  return out;
}

/// Deterministic class-conditional blob images. Each class owns a fixed prototype of Gaussian
/// bumps (independent of `seed`); samples jitter position and amplitude and add noise. Pixels are
/// quantized to k/255 so a set survives a round trip through the record layout unchanged.
/// Labels cycle 0,1,...,classes-1 so every set is class-balanced.
inline Dataset make_synthetic_set(std::uint64_t seed, std::size_t n, const Shape& shape, std::size_t classes) {
  if (n == 0) throw std::invalid_argument("synthetic set size must be > 0");
  if (classes == 0) throw std::invalid_argument("synthetic set needs at least one class");
  if (shape.size() != 3) throw DimensionError("synthetic image shape must be C,H,W");
  const std::size_t C = shape[0], H = shape[1], W = shape[2];
  constexpr int kBumps = 3;
  constexpr std::uint64_t kPrototypeKey = 0x5EEDB10Bull;

  struct Bump {
    double cy, cx, sigma, weight;
  };
  std::vector<Bump> protos(classes * C * kBumps);
  for (std::size_t c = 0; c < classes; ++c) {
    PhiloxStream rng(kPrototypeKey, mix64(c, shape_product(shape)));
    for (std::size_t ch = 0; ch < C; ++ch) {
      for (int b = 0; b < kBumps; ++b) {
        const double margin = 0.2;
        protos[(c * C + ch) * kBumps + b] = {
            (margin + (1 - 2 * margin) * rng.uniform()) * static_cast<double>(H - 1),
            (margin + (1 - 2 * margin) * rng.uniform()) * static_cast<double>(W - 1),
            (0.06 + 0.08 * rng.uniform()) * static_cast<double>(std::min(H, W)), 0.5 + 0.5 * rng.uniform()};
      }
    }
  }

  Dataset out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % classes;
    PhiloxStream rng(seed, i);
    const double shift = 0.08 * static_cast<double>(std::min(H, W));
    const double dy = (2 * rng.uniform() - 1) * shift;
    const double dx = (2 * rng.uniform() - 1) * shift;
    const double amp = 0.6 + 0.4 * rng.uniform();
    std::vector<float> px(C * H * W);
    for (std::size_t ch = 0; ch < C; ++ch) {
      const Bump* bumps = &protos[(label * C + ch) * kBumps];
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
          double v = 0;
          for (int b = 0; b < kBumps; ++b) {
            const double ey = static_cast<double>(y) - bumps[b].cy - dy;
            const double ex = static_cast<double>(x) - bumps[b].cx - dx;
            v += bumps[b].weight * std::exp(-(ey * ey + ex * ex) / (2 * bumps[b].sigma * bumps[b].sigma));
          }
          v = amp * v + 0.25 * (rng.uniform() + rng.uniform() - 1.0);
          const long q = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
          px[(ch * H + y) * W + x] = static_cast<float>(q) / 255.0f;
        }
      }
    }
    out.push_back({Tensor(shape, std::move(px)), label});
  }
  return out;
}

/// Disjoint calibration / evaluation index sets over a dataset of `size` samples.
struct SplitSpec {
  std::vector<std::size_t> calibration;
  std::vector<std::size_t> evaluation;

  /// Seeded selection of round(fraction * size) calibration indices; the rest evaluate.
  /// Both lists are returned in ascending order.
  static SplitSpec make(std::size_t size, double calibration_fraction, std::uint64_t seed) {
    if (!(calibration_fraction >= 0.0 && calibration_fraction <= 1.0)) {
      throw std::invalid_argument("calibration fraction must be in [0, 1]");
    }
    std::vector<std::size_t> order(size);
    std::iota(order.begin(), order.end(), std::size_t{0});
    PhiloxStream rng(seed, 0x5B117ull);
    for (std::size_t i = size; i > 1; --i) std::swap(order[i - 1], order[rng.below(static_cast<std::uint32_t>(i))]);
    const auto n_cal = static_cast<std::size_t>(std::llround(calibration_fraction * static_cast<double>(size)));
    SplitSpec s;
    s.calibration.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_cal));
    s.evaluation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_cal), order.end());
    std::sort(s.calibration.begin(), s.calibration.end());
    std::sort(s.evaluation.begin(), s.evaluation.end());
    s.validate(size);
    return s;
  }

  /// Throws if the sets overlap or reference an index >= size.
  void validate(std::size_t size) const {
    std::vector<char> seen(size, 0);
    for (const auto* set : {&calibration, &evaluation}) {
      for (auto i : *set) {
        if (i >= size) throw std::invalid_argument("split index " + std::to_string(i) + " out of range");
        if (seen[i]++) throw std::invalid_argument("split sets overlap at index " + std::to_string(i));
      }
    }
  }
};

inline Dataset select(const Dataset& data, std::span<const std::size_t> indices) {
  Dataset out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(data.at(i));
  return out;
}

}  // namespace ftclip
