#pragma once

// Forward operators. All functions are pure: same inputs give bit-identical outputs.
//
// Spatial tensors are CHW (rank 3) or NCHW (rank 4); the output keeps the input rank.
// Conv and FC accumulate in double and round once to float per output element.

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>

#include "ftclip/tensor.hpp"

namespace ftclip {

using Pair = std::array<std::size_t, 2>;

namespace detail {

struct Nchw {
  std::size_t n, c, h, w;
};

inline Nchw as_nchw(const Tensor& t, const char* what) {
  if (t.rank() == 3) return {1, t.dim(0), t.dim(1), t.dim(2)};
  if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3)};
  throw DimensionError(std::string(what) + ": expected rank 3 (C,H,W) or 4 (N,C,H,W), got " +
                       shape_to_string(t.shape()));
}

inline Shape spatial_shape(std::size_t input_rank, std::size_t n, std::size_t c, std::size_t h,
                           std::size_t w) {
  if (input_rank == 3) return {c, h, w};
  return {n, c, h, w};
}

inline std::size_t window_count(std::size_t in, std::size_t pad, std::size_t k, std::size_t stride,
                                const char* op, const char* axis) {
  const std::size_t padded = in + 2 * pad;
  if (k == 0 || k > padded) {
    throw DimensionError(std::string(op) + ": window " + std::to_string(k) + " does not fit " +
                         axis + " extent " + std::to_string(padded) + " (input " +
                         std::to_string(in) + ", padding " + std::to_string(pad) + ")");
  }
  return (padded - k) / stride + 1;
}

inline void check_stride(const Pair& stride, const char* op) {
  if (stride[0] == 0 || stride[1] == 0) throw DimensionError(std::string(op) + ": stride must be >= 1");
}

}  // namespace detail

/// Output spatial extent of a convolution or pooling window along one axis.
inline std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                      std::size_t pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

/// 2-D cross-correlation with zero padding. `weights` is (out, in, kh, kw), `bias` is (out).
inline Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                             Pair stride = {1, 1}, Pair padding = {0, 0}) {
  const auto in = detail::as_nchw(input, "conv2d");
  detail::check_stride(stride, "conv2d");
  if (weights.rank() != 4) {
    throw DimensionError("conv2d: weights must be rank 4 (out,in,kh,kw), got " +
                         shape_to_string(weights.shape()));
  }
  const std::size_t out_c = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
  if (weights.dim(1) != in.c) {
    throw DimensionError("conv2d: input channel axis (" + std::to_string(in.c) +
                         ") does not match weights axis 1 (" + std::to_string(weights.dim(1)) + ")");
  }
  if (bias.size() != out_c) {
    throw DimensionError("conv2d: bias length (" + std::to_string(bias.size()) +
                         ") does not match weights axis 0 (" + std::to_string(out_c) + ")");
  }
  const std::size_t oh = detail::window_count(in.h, padding[0], kh, stride[0], "conv2d", "height");
  const std::size_t ow = detail::window_count(in.w, padding[1], kw, stride[1], "conv2d", "width");

  Tensor out(detail::spatial_shape(input.rank(), in.n, out_c, oh, ow));
  const auto x = input.data();
  const auto wt = weights.data();
  auto y = out.data();
  const auto ph = static_cast<std::ptrdiff_t>(padding[0]);
  const auto pw = static_cast<std::ptrdiff_t>(padding[1]);

  std::vector<double> acc(ow);
  for (std::size_t n = 0; n < in.n; ++n) {
    const float* xn = x.data() + n * in.c * in.h * in.w;
    for (std::size_t oc = 0; oc < out_c; ++oc) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        std::fill(acc.begin(), acc.end(), static_cast<double>(bias[oc]));
        for (std::size_t ic = 0; ic < in.c; ++ic) {
          const float* xc = xn + ic * in.h * in.w;
          const float* wk = wt.data() + ((oc * in.c + ic) * kh) * kw;
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * stride[0] + ky) - ph;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) continue;
            const float* row = xc + static_cast<std::size_t>(iy) * in.w;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const double wv = wk[ky * kw + kx];
              const auto sx = static_cast<std::ptrdiff_t>(stride[1]);
              const auto off = static_cast<std::ptrdiff_t>(kx) - pw;
              // Output columns whose input column lies inside the row.
              const std::ptrdiff_t lo = off >= 0 ? 0 : (-off + sx - 1) / sx;
              const std::ptrdiff_t hi = std::min(static_cast<std::ptrdiff_t>(ow),
                                                 (static_cast<std::ptrdiff_t>(in.w) - off + sx - 1) / sx);
              if (sx == 1) {
                const float* src = row + off;
                for (std::ptrdiff_t ox = lo; ox < hi; ++ox) acc[ox] += wv * static_cast<double>(src[ox]);
              } else {
                for (std::ptrdiff_t ox = lo; ox < hi; ++ox) acc[ox] += wv * static_cast<double>(row[ox * sx + off]);
              }
            }
          }
        }
        float* dst = y.data() + ((n * out_c + oc) * oh + oy) * ow;
        for (std::size_t ox = 0; ox < ow; ++ox) dst[ox] = static_cast<float>(acc[ox]);
      }
    }
  }
  return out;
}

/// out[j] = sum_i w[j,i] * in[i] + b[j]. `weights` is (out, in); the input is flattened.
inline Tensor fc_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (weights.rank() != 2) {
    throw DimensionError("fc: weights must be rank 2 (out,in), got " +
                         shape_to_string(weights.shape()));
  }
  const std::size_t out_n = weights.dim(0), in_n = weights.dim(1);
  if (input.size() != in_n) {
    throw DimensionError("fc: input length (" + std::to_string(input.size()) +
                         ") does not match weights axis 1 (" + std::to_string(in_n) + ")");
  }
  if (bias.size() != out_n) {
    throw DimensionError("fc: bias length (" + std::to_string(bias.size()) +
                         ") does not match weights axis 0 (" + std::to_string(out_n) + ")");
  }
  Tensor out(Shape{out_n});
  const auto x = input.data();
  const auto w = weights.data();
  for (std::size_t j = 0; j < out_n; ++j) {
    double acc = bias[j];
    const float* row = w.data() + j * in_n;
    for (std::size_t i = 0; i < in_n; ++i) acc += static_cast<double>(row[i]) * x[i];
    out[j] = static_cast<float>(acc);
  }
  return out;
}

/// Max over each pool window, no padding. NaN inside a window propagates to its output.
inline Tensor maxpool2d_forward(const Tensor& input, Pair pool, Pair stride) {
  const auto in = detail::as_nchw(input, "maxpool2d");
  detail::check_stride(stride, "maxpool2d");
  const std::size_t oh = detail::window_count(in.h, 0, pool[0], stride[0], "maxpool2d", "height");
  const std::size_t ow = detail::window_count(in.w, 0, pool[1], stride[1], "maxpool2d", "width");
  Tensor out(detail::spatial_shape(input.rank(), in.n, in.c, oh, ow));
  const auto x = input.data();
  auto y = out.data();
  for (std::size_t p = 0; p < in.n * in.c; ++p) {
    const float* plane = x.data() + p * in.h * in.w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        float m = -std::numeric_limits<float>::infinity();
        for (std::size_t ky = 0; ky < pool[0]; ++ky) {
          for (std::size_t kx = 0; kx < pool[1]; ++kx) {
            const float v = plane[(oy * stride[0] + ky) * in.w + ox * stride[1] + kx];
            if (std::isnan(v) || v > m) m = v;
            if (std::isnan(m)) break;
          }
          if (std::isnan(m)) break;
        }
        y[(p * oh + oy) * ow + ox] = m;
      }
    }
  }
  return out;
}

/// Elementwise max(0, x). NaN passes through unchanged.
inline Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (float& v : out.data()) {
    if (v < 0.0f) v = 0.0f;
  }
  return out;
}

/// x when 0 <= x <= threshold, 0 otherwise. NaN fails both comparisons and maps to 0.
inline float clip_value(float x, float threshold) noexcept {
  return (x >= 0.0f && x <= threshold) ? x : 0.0f;
}

inline void check_threshold(float threshold) {
  if (!(threshold >= 0.0f)) {
    throw ConfigError("clip threshold must be >= 0, got " + std::to_string(threshold));
  }
}

inline Tensor clipped_relu(const Tensor& input, float threshold) {
  check_threshold(threshold);
  Tensor out = input;
  for (float& v : out.data()) v = clip_value(v, threshold);
  return out;
}

struct Classification {
  std::size_t index = 0;
  bool degenerate = false;  // no ordered maximum existed (all NaN)
};

/// Argmax over logits, lowest index on ties. NaN entries never win; all-NaN gives index 0
/// with `degenerate` set.
inline Classification classify(const Tensor& logits) {
  if (logits.empty()) throw DimensionError("classify: empty logits");
  Classification result{0, true};
  float best = 0.0f;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const float v = logits[i];
    if (std::isnan(v)) continue;
    if (result.degenerate || v > best) {
      best = v;
      result.index = i;
      result.degenerate = false;
    }
  }
  return result;
}

}  // namespace ftclip
