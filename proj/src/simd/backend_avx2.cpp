// Compiled with -mavx2 -mfma (and -ffp-contract=off like the rest of the
// project). Everything except the factory has internal linkage so no
// AVX2-compiled code can be merged into other translation units.

#include "ldpnn/simd/backend.hpp"

#include <immintrin.h>

#include "kernels_impl.hpp"
#include "pack_avx2.hpp"

namespace ldpnn::simd {

namespace {

using P = PackAvx2;

inline __m256d act_hard_clip(__m256d x) {
  return _mm256_min_pd(_mm256_max_pd(x, _mm256_set1_pd(-1.0)),
                       _mm256_set1_pd(1.0));
}
inline __m256d act_relu(__m256d x) {
  return _mm256_max_pd(x, _mm256_set1_pd(0.0));
}

void fill_normals_avx2(std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t pos0, double* out, std::uint64_t n) {
  PhiloxKeys keys(seed);
  std::uint64_t pos = pos0;
  std::uint64_t end = pos0 + n;
  if ((pos & 1) && pos < end) {
    detail::fill_elem_range(seed, stream, pos, out, 1);
    ++out;
    ++pos;
  }
  while (pos + 16 <= end) {
    P::f64 a1, a2, b1, b2;
    normal_block<P>(keys, stream, pos >> 1, a1, a2);
    normal_block<P>(keys, stream, (pos >> 1) + 4, b1, b2);
    __m256d lo = _mm256_unpacklo_pd(a1.v, a2.v);
    __m256d hi = _mm256_unpackhi_pd(a1.v, a2.v);
    _mm256_storeu_pd(out, _mm256_permute2f128_pd(lo, hi, 0x20));
    _mm256_storeu_pd(out + 4, _mm256_permute2f128_pd(lo, hi, 0x31));
    lo = _mm256_unpacklo_pd(b1.v, b2.v);
    hi = _mm256_unpackhi_pd(b1.v, b2.v);
    _mm256_storeu_pd(out + 8, _mm256_permute2f128_pd(lo, hi, 0x20));
    _mm256_storeu_pd(out + 12, _mm256_permute2f128_pd(lo, hi, 0x31));
    out += 16;
    pos += 16;
  }
  while (pos + 8 <= end) {
    P::f64 n1, n2;
    normal_block<P>(keys, stream, pos >> 1, n1, n2);
    __m256d lo = _mm256_unpacklo_pd(n1.v, n2.v);
    __m256d hi = _mm256_unpackhi_pd(n1.v, n2.v);
    _mm256_storeu_pd(out, _mm256_permute2f128_pd(lo, hi, 0x20));
    _mm256_storeu_pd(out + 4, _mm256_permute2f128_pd(lo, hi, 0x31));
    out += 8;
    pos += 8;
  }
  if (pos < end) detail::fill_elem_range(seed, stream, pos, out, end - pos);
}

// Two independent block batches per iteration to hide the Philox round
// latency; the per-lane accumulation order is unchanged, so the result is
// still bit-identical to the scalar backend.
template <class Act>
void sum_middle(const PhiloxKeys& keys, std::uint64_t stream,
                std::uint64_t pos, std::uint64_t groups, double scale, Act act,
                double acc[8]) {
  __m256d acc_c = _mm256_loadu_pd(acc);
  __m256d acc_s = _mm256_loadu_pd(acc + 4);
  __m256d sc = _mm256_set1_pd(scale);
  std::uint64_t block = pos >> 1;
  std::uint64_t g = 0;
  for (; g + 2 <= groups; g += 2) {
    P::f64 a1, a2, b1, b2;
    normal_block<P>(keys, stream, block + 4 * g, a1, a2);
    normal_block<P>(keys, stream, block + 4 * g + 4, b1, b2);
    __m256d xa1 = act(_mm256_mul_pd(sc, a1.v));
    __m256d xa2 = act(_mm256_mul_pd(sc, a2.v));
    __m256d xb1 = act(_mm256_mul_pd(sc, b1.v));
    __m256d xb2 = act(_mm256_mul_pd(sc, b2.v));
    acc_c = _mm256_fmadd_pd(xa1, xa1, acc_c);
    acc_s = _mm256_fmadd_pd(xa2, xa2, acc_s);
    acc_c = _mm256_fmadd_pd(xb1, xb1, acc_c);
    acc_s = _mm256_fmadd_pd(xb2, xb2, acc_s);
  }
  for (; g < groups; ++g) {
    P::f64 n1, n2;
    normal_block<P>(keys, stream, block + 4 * g, n1, n2);
    __m256d x1 = act(_mm256_mul_pd(sc, n1.v));
    __m256d x2 = act(_mm256_mul_pd(sc, n2.v));
    acc_c = _mm256_fmadd_pd(x1, x1, acc_c);
    acc_s = _mm256_fmadd_pd(x2, x2, acc_s);
  }
  _mm256_storeu_pd(acc, acc_c);
  _mm256_storeu_pd(acc + 4, acc_s);
}

double sum_sq_act_avx2(std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t pos0, std::uint64_t count, double scale,
                       int act_kind, double (*fn)(double)) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  if (static_cast<ActKernel>(act_kind) == ActKernel::custom) {
    detail::sum_elem_range(seed, stream, pos0, count, scale, act_kind, fn, acc);
    return detail::reduce8(acc);
  }
  std::uint64_t pos = pos0;
  std::uint64_t end = pos0 + count;
  std::uint64_t lead = (8 - (pos & 7)) & 7;
  if (lead > end - pos) lead = end - pos;
  detail::sum_elem_range(seed, stream, pos, lead, scale, act_kind, fn, acc);
  pos += lead;
  std::uint64_t groups = (end - pos) / 8;
  if (groups) {
    PhiloxKeys keys(seed);
    if (static_cast<ActKernel>(act_kind) == ActKernel::hard_clip)
      sum_middle(keys, stream, pos, groups, scale, act_hard_clip, acc);
    else
      sum_middle(keys, stream, pos, groups, scale, act_relu, acc);
    pos += groups * 8;
  }
  detail::sum_elem_range(seed, stream, pos, end - pos, scale, act_kind, fn,
                         acc);
  return detail::reduce8(acc);
}

const Backend avx2_impl{"avx2", &fill_normals_avx2, &sum_sq_act_avx2};

}  // namespace

namespace detail {

const Backend* avx2_backend_if_supported() {
#if defined(__x86_64__) || defined(__amd64__)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return &avx2_impl;
#endif
  return nullptr;
}

}  // namespace detail
}  // namespace ldpnn::simd
