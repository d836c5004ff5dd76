#pragma once

#include <bit>
#include <cmath>
#include <cstdint>

namespace ldpnn::simd {

// Width-1 pack. This is the reference semantics: every wider backend must
// produce bit-identical lanes for the same operation sequence.
struct PackScalar {
  static constexpr int width = 1;

  struct f64 {
    double v;
  };
  struct u64 {
    std::uint64_t v;
  };

  static f64 set1(double x) { return {x}; }
  static u64 set1u(std::uint64_t x) { return {x}; }

  static f64 add(f64 a, f64 b) { return {a.v + b.v}; }
  static f64 sub(f64 a, f64 b) { return {a.v - b.v}; }
  static f64 mul(f64 a, f64 b) { return {a.v * b.v}; }
  static f64 div(f64 a, f64 b) { return {a.v / b.v}; }
  static f64 fmadd(f64 a, f64 b, f64 c) { return {std::fma(a.v, b.v, c.v)}; }
  static f64 sqrt(f64 a) { return {std::sqrt(a.v)}; }
  // MINPD/MAXPD operand semantics (second operand returned on ties) so that
  // scalar and AVX2 lanes agree bitwise on signed zeros.
  static f64 min(f64 a, f64 b) { return {a.v < b.v ? a.v : b.v}; }
  static f64 max(f64 a, f64 b) { return {a.v > b.v ? a.v : b.v}; }
  static f64 round_nearest(f64 a) { return {std::nearbyint(a.v)}; }

  static u64 bits(f64 a) { return {std::bit_cast<std::uint64_t>(a.v)}; }
  static f64 from_bits(u64 a) { return {std::bit_cast<double>(a.v)}; }

  static u64 addu(u64 a, u64 b) { return {a.v + b.v}; }
  static u64 andu(u64 a, u64 b) { return {a.v & b.v}; }
  static u64 oru(u64 a, u64 b) { return {a.v | b.v}; }
  static u64 xoru(u64 a, u64 b) { return {a.v ^ b.v}; }
  template <int K> static u64 shr(u64 a) { return {a.v >> K}; }
  template <int K> static u64 shl(u64 a) { return {a.v << K}; }

  // 32x32 -> 64 multiply of the low halves of each lane.
  static u64 mul32(u64 a, u64 b) {
    return {static_cast<std::uint64_t>(static_cast<std::uint32_t>(a.v)) *
            static_cast<std::uint64_t>(static_cast<std::uint32_t>(b.v))};
  }

  // Exact conversion of integers < 2^52 held in u64 lanes.
  static f64 cvt_u52(u64 a) { return {static_cast<double>(a.v)}; }

  // Lane mask (all ones / all zeros) from a > b.
  static u64 cmp_gt(f64 a, f64 b) {
    return {a.v > b.v ? ~std::uint64_t{0} : std::uint64_t{0}};
  }
  static u64 cmp_eq_u(u64 a, u64 b) {
    return {a.v == b.v ? ~std::uint64_t{0} : std::uint64_t{0}};
  }
  static f64 select(u64 mask, f64 a, f64 b) { return {mask.v ? a.v : b.v}; }

  static void store(double* p, f64 a) { *p = a.v; }
  static f64 loadu(const double* p) { return {*p}; }
  static u64 iota(std::uint64_t base) { return {base}; }
};

}  // namespace ldpnn::simd
