#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "ftclip/ops.hpp"
#include "oracles.hpp"

namespace ftclip {
namespace {

constexpr float kNaN = std::numeric_limits<float>::quiet_NaN();
constexpr float kInf = std::numeric_limits<float>::infinity();

TEST(Conv2d, ZeroInputGivesZeroOutput) {
  const Tensor x({1, 1, 3, 3}, 0.0f);
  const Tensor w({2, 1, 2, 2}, {1, -2, 3, 4, 5, 6, -7, 8});
  const Tensor b({2}, 0.0f);
  const Tensor y = conv2d_forward(x, w, b);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 2, 2}));
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Conv2d, ScalarKernelScales) {
  const Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  const Tensor y = conv2d_forward(x, Tensor({1, 1, 1, 1}, {2}), Tensor({1}, {0}));
  EXPECT_EQ(y, Tensor({1, 1, 2, 2}, {2, 4, 6, 8}));
}

TEST(Conv2d, FullWindowDotProductPlusBias) {
  const Tensor y = conv2d_forward(Tensor({1, 1, 3, 3}, 1.0f), Tensor({1, 1, 3, 3}, 1.0f), Tensor({1}, {0.5f}));
  ASSERT_EQ(y.size(), 1u);
  EXPECT_EQ(y[0], 9.5f);
}

TEST(Conv2d, OutputExtentFormula) {
  const Tensor x({2, 5, 7}, 1.0f);
  const Tensor y = conv2d_forward(x, Tensor({3, 2, 3, 2}, 0.5f), Tensor({3}, 0.0f), {2, 3}, {1, 2});
  // floor((5 + 2 - 3) / 2) + 1 = 3, floor((7 + 4 - 2) / 3) + 1 = 4
  EXPECT_EQ(y.shape(), (Shape{3, 3, 4}));
}

TEST(Conv2d, ChannelMismatchNamesAxes) {
  try {
    conv2d_forward(Tensor({1, 2, 3, 3}), Tensor({1, 3, 1, 1}), Tensor({1}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("channel"), std::string::npos);
  }
  EXPECT_THROW(conv2d_forward(Tensor({1, 1, 3, 3}), Tensor({2, 1, 1, 1}), Tensor({3})), DimensionError);
  EXPECT_THROW(conv2d_forward(Tensor({1, 1, 2, 2}), Tensor({1, 1, 3, 3}), Tensor({1})), DimensionError);
  EXPECT_THROW(conv2d_forward(Tensor({1, 1, 2, 2}), Tensor({1, 1, 1, 1}), Tensor({1}), {0, 1}), DimensionError);
}

TEST(Conv2d, MatchesOracleOnRandomShapes) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const auto c = test::random_conv_case(rng);
    const Tensor y = conv2d_forward(c.input, c.weights, c.bias, c.stride, c.padding);
    const auto ref = test::conv2d_oracle(c.input, c.weights, c.bias, c.stride, c.padding);
    ASSERT_EQ(y.size(), ref.size());
    EXPECT_LE(test::max_rel_error(y, ref), 1e-6) << "trial " << trial;
  }
}

TEST(FullyConnected, IdentityAndZeroWeights) {
  const Tensor x({3}, {1.5f, -2.0f, 7.0f});
  EXPECT_EQ(fc_forward(x, Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}), Tensor({3}, 0.0f)), x);
  const Tensor b({2}, {0.25f, -4.0f});
  EXPECT_EQ(fc_forward(x, Tensor({2, 3}, 0.0f), b), b);
}

TEST(FullyConnected, HandMatrixVector) {
  EXPECT_EQ(fc_forward(Tensor({2}, {1, 2}), Tensor({2, 2}, {1, 1, 1, -1}), Tensor({2}, 0.0f)), Tensor({2}, {3, -1}));
}

TEST(FullyConnected, ShapeErrors) {
  EXPECT_THROW(fc_forward(Tensor({3}), Tensor({2, 2}), Tensor({2})), DimensionError);
  EXPECT_THROW(fc_forward(Tensor({2}), Tensor({2, 2}), Tensor({3})), DimensionError);
}

TEST(FullyConnected, MatchesOracleOnRandomShapes) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const auto c = test::random_fc_case(rng);
    EXPECT_LE(test::max_rel_error(fc_forward(c.input, c.weights, c.bias), test::fc_oracle(c.input, c.weights, c.bias)),
              1e-6);
  }
}

TEST(MaxPool, ConstantAndSingleWindow) {
  const Tensor y = maxpool2d_forward(Tensor({2, 4, 4}, 3.25f), {2, 2}, {2, 2});
  for (float v : y.data()) EXPECT_EQ(v, 3.25f);
  EXPECT_EQ(maxpool2d_forward(Tensor({1, 2, 2}, {1, 2, 3, 4}), {2, 2}, {2, 2}), Tensor({1, 1, 1}, {4}));
}

TEST(MaxPool, RampMatchesBruteForce) {
  std::vector<float> ramp(16);
  for (int i = 0; i < 16; ++i) ramp[i] = static_cast<float>(i);
  const Tensor x({1, 4, 4}, ramp);
  const Tensor y = maxpool2d_forward(x, {2, 2}, {2, 2});
  EXPECT_EQ(y, Tensor({1, 2, 2}, {5, 7, 13, 15}));
  EXPECT_EQ(y.values(), test::maxpool_oracle(x, {2, 2}, {2, 2}));
}

TEST(MaxPool, WindowLargerThanInput) {
  EXPECT_THROW(maxpool2d_forward(Tensor({1, 2, 2}), {3, 3}, {1, 1}), DimensionError);
}

TEST(MaxPool, BoundedByInputRange) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<float> u(-5.0f, 5.0f);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<float> v(3 * 6 * 6);
    for (auto& e : v) e = u(rng);
    const Tensor x({3, 6, 6}, v);
    const Tensor y = maxpool2d_forward(x, {3, 2}, {1, 2});
    const float lo = *std::min_element(v.begin(), v.end()), hi = *std::max_element(v.begin(), v.end());
    for (float e : y.data()) {
      EXPECT_LE(e, hi);
      EXPECT_GE(e, lo);
    }
  }
}

TEST(Relu, Basics) {
  EXPECT_EQ(relu(Tensor({3}, {-1, 0, 2})), Tensor({3}, {0, 0, 2}));
  EXPECT_EQ(relu(Tensor({4}, -3.0f)), Tensor({4}, 0.0f));
  const Tensor y = relu(Tensor({2}, {kNaN, kInf}));
  EXPECT_TRUE(std::isnan(y[0]));
  EXPECT_EQ(y[1], kInf);
}

TEST(ClippedRelu, PiecewiseDefinition) {
  EXPECT_EQ(clip_value(3.0f, 5.0f), 3.0f);
  EXPECT_EQ(clip_value(7.0f, 5.0f), 0.0f);
  EXPECT_EQ(clip_value(-1.0f, 5.0f), 0.0f);
  EXPECT_EQ(clip_value(5.0f, 5.0f), 5.0f);
  EXPECT_EQ(clip_value(kNaN, 5.0f), 0.0f);
  EXPECT_EQ(clip_value(kInf, 5.0f), 0.0f);
  EXPECT_EQ(clip_value(-kInf, 5.0f), 0.0f);
}

TEST(ClippedRelu, ZeroThresholdZeroesEverything) {
  const Tensor y = clipped_relu(Tensor({4}, {0.0f, 0.5f, 9.0f, -1.0f}), 0.0f);
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
}

TEST(ClippedRelu, NegativeThresholdRejected) {
  EXPECT_THROW(clipped_relu(Tensor({1}), -0.5f), ConfigError);
  EXPECT_THROW(clipped_relu(Tensor({1}), kNaN), ConfigError);
}

TEST(ClippedRelu, HugeThresholdEqualsRelu) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(-1e6f, 1e6f);
  std::vector<float> v(1000);
  for (auto& e : v) e = u(rng);
  const Tensor x({1000}, v);
  EXPECT_EQ(clipped_relu(x, std::numeric_limits<float>::max()), relu(x));
  EXPECT_EQ(clipped_relu(x, kInf), relu(x));
}

TEST(Classify, ArgmaxAndTies) {
  EXPECT_EQ(classify(Tensor({3}, {0.1f, 0.9f, 0.3f})).index, 1u);
  EXPECT_EQ(classify(Tensor({2}, {0.5f, 0.5f})).index, 0u);
  EXPECT_EQ(classify(Tensor({3}, {kNaN, 2.0f, kNaN})).index, 1u);
  EXPECT_EQ(classify(Tensor({3}, {kInf, kInf, 1.0f})).index, 0u);
  EXPECT_THROW(classify(Tensor{}), DimensionError);
}

TEST(Classify, AllNaNIsDegenerate) {
  const auto c = classify(Tensor({4}, kNaN));
  EXPECT_EQ(c.index, 0u);
  EXPECT_TRUE(c.degenerate);
  EXPECT_FALSE(classify(Tensor({2}, {1, 2})).degenerate);
}

TEST(Ops, PureAndDeterministic) {
  std::mt19937_64 rng(11);
  const auto c = test::random_conv_case(rng);
  const Tensor a = conv2d_forward(c.input, c.weights, c.bias, c.stride, c.padding);
  const Tensor b = conv2d_forward(c.input, c.weights, c.bias, c.stride, c.padding);
  EXPECT_TRUE(test::bit_identical(a, b));
}

}  // namespace
}  // namespace ftclip
