#pragma once

#include <atomic>
#include <cstdint>

// Process-wide tally of the multiplications executed by the learning
// datapath. Every multiply in forward/backward/update code goes through one
// of the note_* hooks below; nothing else in the library multiplies inside
// that datapath.
namespace spiketime::audit {

struct MulCounts {
  std::uint64_t float_mul = 0;
  std::uint64_t int_scalar_product = 0;

  std::uint64_t total() const { return float_mul + int_scalar_product; }

  friend MulCounts operator+(const MulCounts& a, const MulCounts& b) {
    return {a.float_mul + b.float_mul, a.int_scalar_product + b.int_scalar_product};
  }
  friend MulCounts operator-(const MulCounts& a, const MulCounts& b) {
    return {a.float_mul - b.float_mul, a.int_scalar_product - b.int_scalar_product};
  }
  friend bool operator==(const MulCounts&, const MulCounts&) = default;
};

namespace detail {
inline std::atomic<std::uint64_t> float_mul{0};
inline std::atomic<std::uint64_t> int_scalar_product{0};
}  // namespace detail

inline void note_float_mul(std::uint64_t n = 1) {
  detail::float_mul.fetch_add(n, std::memory_order_relaxed);
}

inline void note_int_scalar_product(std::uint64_t n = 1) {
  detail::int_scalar_product.fetch_add(n, std::memory_order_relaxed);
}

inline MulCounts mul_count_audit() {
  return {detail::float_mul.load(std::memory_order_relaxed),
          detail::int_scalar_product.load(std::memory_order_relaxed)};
}

inline void reset() {
  detail::float_mul.store(0, std::memory_order_relaxed);
  detail::int_scalar_product.store(0, std::memory_order_relaxed);
}

}  // namespace spiketime::audit
