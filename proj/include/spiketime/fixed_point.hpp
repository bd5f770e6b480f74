#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

#include "spiketime/audit.hpp"
#include "spiketime/errors.hpp"

namespace spiketime {

// Two's-complement Q-format descriptor. int_bits includes the sign bit, so
// Q5.7 is a 12-bit word with 7 fraction bits.
struct QFormat {
  int int_bits = 5;
  int frac_bits = 7;

  constexpr int width() const { return int_bits + frac_bits; }
  constexpr std::int64_t raw_max() const { return (std::int64_t{1} << (width() - 1)) - 1; }
  constexpr std::int64_t raw_min() const { return -(std::int64_t{1} << (width() - 1)); }

  constexpr bool valid() const {
    return int_bits >= 1 && frac_bits >= 0 && width() >= 4 && width() <= 32;
  }

  std::string to_string() const {
    return "Q" + std::to_string(int_bits) + "." + std::to_string(frac_bits);
  }

  // Accepts "Q5.7" or "5.7".
  static QFormat parse(std::string_view text) {
    if (!text.empty() && (text.front() == 'Q' || text.front() == 'q')) text.remove_prefix(1);
    auto dot = text.find('.');
    if (dot == std::string_view::npos) throw UsageError("bad Q-format '" + std::string(text) + "'");
    QFormat fmt{};
    try {
      fmt.int_bits = std::stoi(std::string(text.substr(0, dot)));
      fmt.frac_bits = std::stoi(std::string(text.substr(dot + 1)));
    } catch (const std::exception&) {
      throw UsageError("bad Q-format '" + std::string(text) + "'");
    }
    if (!fmt.valid()) throw UsageError("unsupported Q-format " + fmt.to_string());
    return fmt;
  }

  friend constexpr bool operator==(const QFormat&, const QFormat&) = default;
};

inline constexpr QFormat kQ5_7{5, 7};
inline constexpr QFormat kQ4_8{4, 8};
inline constexpr QFormat kQ1_9{1, 9};

enum class Rounding { nearest_even, truncate };

struct FixedPoint {
  std::int32_t raw = 0;
  QFormat format = kQ5_7;

  constexpr FixedPoint() = default;
  constexpr FixedPoint(std::int32_t r, QFormat f) : raw(r), format(f) {}

  double to_real() const { return std::ldexp(static_cast<double>(raw), -format.frac_bits); }

  friend constexpr bool operator==(const FixedPoint&, const FixedPoint&) = default;
};

inline std::int32_t saturate(std::int64_t wide, QFormat fmt) {
  if (wide > fmt.raw_max()) return static_cast<std::int32_t>(fmt.raw_max());
  if (wide < fmt.raw_min()) return static_cast<std::int32_t>(fmt.raw_min());
  return static_cast<std::int32_t>(wide);
}

inline FixedPoint from_raw(std::int64_t raw, QFormat fmt) { return {saturate(raw, fmt), fmt}; }

// Quantization entry point. Out-of-range values saturate; NaN maps to zero.
inline FixedPoint from_real(double x, QFormat fmt, Rounding rounding = Rounding::nearest_even) {
  if (!fmt.valid()) throw UsageError("invalid Q-format " + fmt.to_string());
  if (std::isnan(x)) return {0, fmt};
  double scaled = std::ldexp(x, fmt.frac_bits);
  scaled = rounding == Rounding::nearest_even ? std::nearbyint(scaled) : std::trunc(scaled);
  if (scaled >= static_cast<double>(fmt.raw_max())) return {static_cast<std::int32_t>(fmt.raw_max()), fmt};
  if (scaled <= static_cast<double>(fmt.raw_min())) return {static_cast<std::int32_t>(fmt.raw_min()), fmt};
  return {static_cast<std::int32_t>(scaled), fmt};
}

inline void require_same_format(const FixedPoint& a, const FixedPoint& b) {
  if (a.format != b.format) {
    throw UsageError("fixed-point format mismatch: " + a.format.to_string() + " vs " +
                     b.format.to_string());
  }
}

inline FixedPoint add_sat(FixedPoint a, FixedPoint b) {
  require_same_format(a, b);
  return from_raw(std::int64_t{a.raw} + b.raw, a.format);
}

inline FixedPoint sub_sat(FixedPoint a, FixedPoint b) {
  require_same_format(a, b);
  return from_raw(std::int64_t{a.raw} - b.raw, a.format);
}

// Two's-complement negation; -min saturates to max.
inline FixedPoint negate_sat(FixedPoint a) { return from_raw(-std::int64_t{a.raw}, a.format); }

inline std::strong_ordering compare(FixedPoint a, FixedPoint b) {
  require_same_format(a, b);
  return a.raw <=> b.raw;
}

// Arithmetic shift: positive shifts move right (floor), negative shifts left.
inline std::int64_t shift_right_floor(std::int64_t value, int shift) {
  if (shift >= 0) return shift >= 63 ? (value < 0 ? -1 : 0) : value >> shift;
  return value << (-shift);
}

// The single multiplier of the training datapath: delta times learning rate,
// brought to out_fmt by an arithmetic right shift.
inline FixedPoint scalar_mul_shift(FixedPoint delta, FixedPoint lr, QFormat out_fmt) {
  audit::note_int_scalar_product();
  const std::int64_t product = std::int64_t{delta.raw} * std::int64_t{lr.raw};
  const int shift = delta.format.frac_bits + lr.format.frac_bits - out_fmt.frac_bits;
  return from_raw(shift_right_floor(product, shift), out_fmt);
}

// Multiply by a small non-negative constant through a shift-and-add chain.
// This is what a constant-coefficient datapath synthesizes to; no multiplier.
inline std::int64_t shift_add_const(std::int64_t value, unsigned constant) {
  std::int64_t acc = 0;
  for (int bit = 0; constant != 0; ++bit, constant >>= 1) {
    if (constant & 1u) acc += value << bit;
  }
  return acc;
}

// Integer division rounding half away from zero. den must be positive.
inline std::int64_t div_round(std::int64_t num, std::int64_t den) {
  const std::int64_t mag = num < 0 ? -num : num;
  const std::int64_t q = (mag + den / 2) / den;
  return num < 0 ? -q : q;
}

// Re-express a value in another format (shift), saturating.
inline FixedPoint convert(FixedPoint a, QFormat to) {
  return from_raw(shift_right_floor(a.raw, a.format.frac_bits - to.frac_bits), to);
}

}  // namespace spiketime
