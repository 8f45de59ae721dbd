#pragma once

// Test-only reference implementations. These index tensors straight from the textbook
// definitions in double precision and share no code with the library kernels.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "ftclip/ops.hpp"

namespace ftclip::test {

inline double at4(const Tensor& t, std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
  const auto& s = t.shape();
  return t[((a * s[1] + b) * s[2] + c) * s[3] + d];
}

/// y[n,o,i,j] = b[o] + sum_{c,u,v} w[o,c,u,v] * xpad[n,c,i*sh+u,j*sw+v]; input NCHW.
inline std::vector<double> conv2d_oracle(const Tensor& x, const Tensor& w, const Tensor& b, Pair stride, Pair pad) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  const std::size_t OH = (H + 2 * pad[0] - KH) / stride[0] + 1, OW = (W + 2 * pad[1] - KW) / stride[1] + 1;
  std::vector<double> y;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < OH; ++i)
        for (std::size_t j = 0; j < OW; ++j) {
          double acc = b[o];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t u = 0; u < KH; ++u)
              for (std::size_t v = 0; v < KW; ++v) {
                const long r = static_cast<long>(i * stride[0] + u) - static_cast<long>(pad[0]);
                const long q = static_cast<long>(j * stride[1] + v) - static_cast<long>(pad[1]);
                if (r < 0 || q < 0 || r >= static_cast<long>(H) || q >= static_cast<long>(W)) continue;
                acc += at4(w, o, c, u, v) * at4(x, n, c, static_cast<std::size_t>(r), static_cast<std::size_t>(q));
              }
          y.push_back(acc);
        }
  return y;
}

inline std::vector<double> fc_oracle(const Tensor& x, const Tensor& w, const Tensor& b) {
  std::vector<double> y(w.dim(0));
  for (std::size_t j = 0; j < w.dim(0); ++j) {
    y[j] = b[j];
    for (std::size_t i = 0; i < w.dim(1); ++i) y[j] += static_cast<double>(w[j * w.dim(1) + i]) * x[i];
  }
  return y;
}

/// Input CHW or NCHW; brute-force window max.
inline std::vector<float> maxpool_oracle(const Tensor& x, Pair pool, Pair stride) {
  const std::size_t H = x.dim(x.rank() - 2), W = x.dim(x.rank() - 1);
  const std::size_t planes = x.size() / (H * W);
  std::vector<float> y;
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i + pool[0] <= H; i += stride[0])
      for (std::size_t j = 0; j + pool[1] <= W; j += stride[1]) {
        std::vector<float> win;
        for (std::size_t u = 0; u < pool[0]; ++u)
          for (std::size_t v = 0; v < pool[1]; ++v) win.push_back(x[p * H * W + (i + u) * W + j + v]);
        y.push_back(*std::max_element(win.begin(), win.end()));
      }
  return y;
}

inline double max_rel_error(const Tensor& got, const std::vector<double>& ref) {
  double worst = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double denom = std::max(std::abs(ref[i]), 1e-12);
    worst = std::max(worst, std::abs(static_cast<double>(got[i]) - ref[i]) / denom);
  }
  return worst;
}

inline bool bit_identical(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

struct ConvCase {
  Tensor input, weights, bias;
  Pair stride, padding;
};

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(shape_product(shape));
  for (auto& e : v) e = u(rng);
  return Tensor(std::move(shape), std::move(v));
}

inline ConvCase random_conv_case(std::mt19937_64& rng) {
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  const std::size_t n = pick(1, 2), c = pick(1, 4), o = pick(1, 5);
  const std::size_t kh = pick(1, 4), kw = pick(1, 4);
  const Pair stride{pick(1, 3), pick(1, 3)}, pad{pick(0, 2), pick(0, 2)};
  const std::size_t h = pick(std::max<std::size_t>(1, kh > 2 * pad[0] ? kh - 2 * pad[0] : 1), 9);
  const std::size_t w = pick(std::max<std::size_t>(1, kw > 2 * pad[1] ? kw - 2 * pad[1] : 1), 9);
  return {random_tensor(rng, {n, c, h, w}), random_tensor(rng, {o, c, kh, kw}), random_tensor(rng, {o}), stride, pad};
}

struct FcCase {
  Tensor input, weights, bias;
};

inline FcCase random_fc_case(std::mt19937_64& rng) {
  const std::size_t in = std::uniform_int_distribution<std::size_t>(1, 64)(rng);
  const std::size_t out = std::uniform_int_distribution<std::size_t>(1, 32)(rng);
  return {random_tensor(rng, {in}), random_tensor(rng, {out, in}), random_tensor(rng, {out})};
}

}  // namespace ftclip::test
