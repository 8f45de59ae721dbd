#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "ftclip/numeric_format.hpp"

namespace ftclip {
namespace {

TEST(Float32Format, KnownWords) {
  const auto f = NumericFormat::float32();
  EXPECT_EQ(decode_word(0x3F800000u, f), 1.0);
  EXPECT_EQ(decode_word(0xBF800000u, f), -1.0);
  EXPECT_EQ(decode_word(0x00000000u, f), 0.0);
  EXPECT_TRUE(std::signbit(decode_word(0x80000000u, f)));
  EXPECT_EQ(decode_word(0x7F800000u, f), std::numeric_limits<double>::infinity());
  EXPECT_TRUE(std::isnan(decode_word(0x7FC00000u, f)));
  EXPECT_EQ(encode_word(1.0, f).word, 0x3F800000u);
  EXPECT_EQ(encode_word(-2.5, f).word, 0xC0200000u);
}

TEST(Float32Format, RandomNonNaNWordsRoundTrip) {
  const auto f = NumericFormat::float32();
  std::mt19937 rng(17);
  int checked = 0;
  for (int i = 0; i < 1'000'000; ++i) {
    const std::uint32_t w = rng();
    if (std::isnan(std::bit_cast<float>(w))) continue;
    const auto r = encode_word(decode_word(w, f), f);
    ASSERT_EQ(r.word, w);
    ASSERT_FALSE(r.saturated);
    ++checked;
  }
  EXPECT_GT(checked, 990'000);
}

TEST(Fixed32Format, RequiresThirtyTwoBits) {
  EXPECT_NO_THROW(NumericFormat::fixed32(15, 16));
  EXPECT_NO_THROW(NumericFormat::fixed32(0, 31));
  EXPECT_THROW(NumericFormat::fixed32(16, 16), ConfigError);
  EXPECT_THROW(NumericFormat::fixed32(-1, 32), ConfigError);
}

TEST(Fixed32Format, KnownValues) {
  const auto q = NumericFormat::fixed32(15, 16);
  EXPECT_EQ(decode_word(0x00010000u, q), 1.0);
  EXPECT_EQ(decode_word(0xFFFF0000u, q), -1.0);
  EXPECT_EQ(decode_word(0x00008000u, q), 0.5);
  EXPECT_EQ(decode_word(0x80000000u, q), -32768.0);
  EXPECT_EQ(encode_word(1.5, q).word, 0x00018000u);
}

TEST(Fixed32Format, TruncatesTowardZero) {
  const auto q = NumericFormat::fixed32(15, 16);
  const double step = std::ldexp(1.0, -16);
  EXPECT_EQ(encode_word(2.9 * step, q).word, 2u);
  EXPECT_EQ(encode_word(-2.9 * step, q).word, static_cast<std::uint32_t>(-2));
}

TEST(Fixed32Format, SaturatesAndFlags) {
  const auto q = NumericFormat::fixed32(15, 16);
  const auto hi = encode_word(1e9, q);
  EXPECT_TRUE(hi.saturated);
  EXPECT_EQ(hi.word, 0x7FFFFFFFu);
  const auto lo = encode_word(-1e9, q);
  EXPECT_TRUE(lo.saturated);
  EXPECT_EQ(lo.word, 0x80000000u);
  EXPECT_TRUE(encode_word(std::numeric_limits<double>::quiet_NaN(), q).saturated);
  EXPECT_FALSE(encode_word(100.0, q).saturated);
}

TEST(Fixed32Format, RandomWordsRoundTrip) {
  std::mt19937 rng(23);
  for (int frac : {0, 8, 16, 31}) {
    const auto q = NumericFormat::fixed32(31 - frac, frac);
    for (int i = 0; i < 250'000; ++i) {
      const std::uint32_t w = rng();
      const auto r = encode_word(decode_word(w, q), q);
      ASSERT_EQ(r.word, w) << "frac_bits=" << frac;
      ASSERT_FALSE(r.saturated);
    }
  }
}

}  // namespace
}  // namespace ftclip
