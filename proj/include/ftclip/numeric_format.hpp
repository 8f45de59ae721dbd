#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "ftclip/tensor.hpp"

namespace ftclip {

/// Bit-level storage format of a parameter word. Every word is 32 bits wide.
struct NumericFormat {
  enum class Kind { float32, fixed32 };

  static constexpr int word_bits = 32;

  Kind kind = Kind::float32;
  int int_bits = 0;
  int frac_bits = 0;

  static NumericFormat float32() { return {}; }

  /// Signed two's-complement Q(int_bits).(frac_bits); one sign bit + int_bits + frac_bits == 32.
  static NumericFormat fixed32(int int_bits, int frac_bits) {
    if (int_bits < 0 || frac_bits < 0 || 1 + int_bits + frac_bits != word_bits) {
      throw ConfigError("fixed32 needs 1 + int_bits + frac_bits == 32, got int_bits=" +
                        std::to_string(int_bits) + " frac_bits=" + std::to_string(frac_bits));
    }
    return {Kind::fixed32, int_bits, frac_bits};
  }

  std::string to_string() const {
    if (kind == Kind::float32) return "float32";
    return "fixed32(" + std::to_string(int_bits) + "," + std::to_string(frac_bits) + ")";
  }

  friend bool operator==(const NumericFormat&, const NumericFormat&) = default;
};

/// Every pattern decodes. float32 may give NaN/Inf; fixed32 is exact in double.
inline double decode_word(std::uint32_t word, const NumericFormat& fmt) noexcept {
  if (fmt.kind == NumericFormat::Kind::float32) {
    return static_cast<double>(std::bit_cast<float>(word));
  }
  return std::ldexp(static_cast<double>(std::bit_cast<std::int32_t>(word)), -fmt.frac_bits);
}

struct EncodeResult {
  std::uint32_t word = 0;
  bool saturated = false;  // value was clamped (or NaN) to fit a fixed32 word
};

/// float32: round to nearest float. fixed32: truncate toward zero, saturating at the range ends.
inline EncodeResult encode_word(double value, const NumericFormat& fmt) noexcept {
  if (fmt.kind == NumericFormat::Kind::float32) {
    return {std::bit_cast<std::uint32_t>(static_cast<float>(value)), false};
  }
  if (std::isnan(value)) return {0u, true};
  const double scaled = std::trunc(std::ldexp(value, fmt.frac_bits));
  constexpr double lo = std::numeric_limits<std::int32_t>::min();
  constexpr double hi = std::numeric_limits<std::int32_t>::max();
  if (scaled > hi) return {std::bit_cast<std::uint32_t>(std::numeric_limits<std::int32_t>::max()), true};
  if (scaled < lo) return {std::bit_cast<std::uint32_t>(std::numeric_limits<std::int32_t>::min()), true};
  return {std::bit_cast<std::uint32_t>(static_cast<std::int32_t>(scaled)), false};
}

}  // namespace ftclip
