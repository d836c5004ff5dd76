#pragma once

#include <cstdint>

#include "philox.hpp"
#include "vmath.hpp"

// Pack-generic generation of one block batch (pack-width consecutive Philox
// blocks of one stream), and the shared element-path helpers every backend
// reuses for unaligned leads and tails.

namespace ldpnn::simd {

template <class P>
inline void normal_block(const PhiloxKeys& keys, std::uint64_t stream,
                         std::uint64_t block_base, typename P::f64& n1,
                         typename P::f64& n2) {
  typename P::u64 wa, wb;
  philox4x32_10<P>(P::iota(block_base), stream, keys, wa, wb);
  typename P::f64 u1 = unit_from_bits<P>(wa);
  typename P::f64 u2 = unit_from_bits<P>(wb);
  typename P::f64 r =
      P::sqrt(P::mul(P::set1(-2.0), log_unit<P>(u1)));
  typename P::f64 sn, cs;
  sincos_2pi<P>(u2, sn, cs);
  n1 = P::mul(r, cs);
  n2 = P::mul(r, sn);
}

namespace detail {

// Accumulator lane for a stream position; cos-halves occupy lanes 0..3,
// sin-halves lanes 4..7, indexed by block mod 4.
inline int lane_of_pos(std::uint64_t pos) {
  return static_cast<int>(((pos >> 1) & 3) | ((pos & 1) << 2));
}

void normal_pair_element(std::uint64_t seed, std::uint64_t stream,
                         std::uint64_t block, double& n1, double& n2);
void fill_elem_range(std::uint64_t seed, std::uint64_t stream,
                     std::uint64_t pos0, double* out, std::uint64_t n);
void sum_elem_range(std::uint64_t seed, std::uint64_t stream,
                    std::uint64_t pos0, std::uint64_t n, double scale,
                    int act_kind, double (*fn)(double), double acc[8]);
double reduce8(const double acc[8]);
double apply_act_elem(int act_kind, double (*fn)(double), double x);

}  // namespace detail
}  // namespace ldpnn::simd
