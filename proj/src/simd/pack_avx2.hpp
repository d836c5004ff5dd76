#pragma once

// Only for inclusion from translation units compiled with -mavx2 -mfma.

#include <immintrin.h>

#include <cstdint>

namespace ldpnn::simd {

struct PackAvx2 {
  static constexpr int width = 4;

  struct f64 {
    __m256d v;
  };
  struct u64 {
    __m256i v;
  };

  static f64 set1(double x) { return {_mm256_set1_pd(x)}; }
  static u64 set1u(std::uint64_t x) {
    return {_mm256_set1_epi64x(static_cast<long long>(x))};
  }

  static f64 add(f64 a, f64 b) { return {_mm256_add_pd(a.v, b.v)}; }
  static f64 sub(f64 a, f64 b) { return {_mm256_sub_pd(a.v, b.v)}; }
  static f64 mul(f64 a, f64 b) { return {_mm256_mul_pd(a.v, b.v)}; }
  static f64 div(f64 a, f64 b) { return {_mm256_div_pd(a.v, b.v)}; }
  static f64 fmadd(f64 a, f64 b, f64 c) { return {_mm256_fmadd_pd(a.v, b.v, c.v)}; }
  static f64 sqrt(f64 a) { return {_mm256_sqrt_pd(a.v)}; }
  static f64 min(f64 a, f64 b) { return {_mm256_min_pd(a.v, b.v)}; }
  static f64 max(f64 a, f64 b) { return {_mm256_max_pd(a.v, b.v)}; }
  static f64 round_nearest(f64 a) {
    return {_mm256_round_pd(a.v, _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC)};
  }

  static u64 bits(f64 a) { return {_mm256_castpd_si256(a.v)}; }
  static f64 from_bits(u64 a) { return {_mm256_castsi256_pd(a.v)}; }

  static u64 addu(u64 a, u64 b) { return {_mm256_add_epi64(a.v, b.v)}; }
  static u64 andu(u64 a, u64 b) { return {_mm256_and_si256(a.v, b.v)}; }
  static u64 oru(u64 a, u64 b) { return {_mm256_or_si256(a.v, b.v)}; }
  static u64 xoru(u64 a, u64 b) { return {_mm256_xor_si256(a.v, b.v)}; }
  template <int K> static u64 shr(u64 a) { return {_mm256_srli_epi64(a.v, K)}; }
  template <int K> static u64 shl(u64 a) { return {_mm256_slli_epi64(a.v, K)}; }

  static u64 mul32(u64 a, u64 b) { return {_mm256_mul_epu32(a.v, b.v)}; }

  static f64 cvt_u52(u64 a) {
    // 2^52 bias trick: OR the integer into the mantissa of 2^52, subtract 2^52.
    const __m256i bias = _mm256_set1_epi64x(0x4330000000000000LL);
    __m256d biased = _mm256_castsi256_pd(_mm256_or_si256(a.v, bias));
    return {_mm256_sub_pd(biased, _mm256_set1_pd(4503599627370496.0))};
  }

  static u64 cmp_gt(f64 a, f64 b) {
    return {_mm256_castpd_si256(_mm256_cmp_pd(a.v, b.v, _CMP_GT_OQ))};
  }
  static u64 cmp_eq_u(u64 a, u64 b) { return {_mm256_cmpeq_epi64(a.v, b.v)}; }
  static f64 select(u64 mask, f64 a, f64 b) {
    return {_mm256_blendv_pd(b.v, a.v, _mm256_castsi256_pd(mask.v))};
  }

  static void store(double* p, f64 a) { _mm256_storeu_pd(p, a.v); }
  static f64 loadu(const double* p) { return {_mm256_loadu_pd(p)}; }
  static u64 iota(std::uint64_t base) {
    return {_mm256_add_epi64(_mm256_set1_epi64x(static_cast<long long>(base)),
                             _mm256_setr_epi64x(0, 1, 2, 3))};
  }
};

}  // namespace ldpnn::simd
