#pragma once

#include <cstdint>

// Pack-generic math used by the normal-variate kernels. The operation
// sequence is fixed; instantiating with any pack width gives bit-identical
// lanes, which is what the backend equivalence tests assert.

namespace ldpnn::simd {

namespace vm {

inline constexpr double kLn2 = 0.6931471805599453094;
inline constexpr double kSqrt2 = 1.4142135623730950488;
inline constexpr double kPiOver2 = 1.5707963267948966192;
inline constexpr double kTwoPow52 = 4503599627370496.0;

// atanh-series coefficients for log(m), m in [sqrt2/2, sqrt2].
inline constexpr double kLogC[7] = {
    1.0 / 3, 1.0 / 5, 1.0 / 7, 1.0 / 9, 1.0 / 11, 1.0 / 13, 1.0 / 17,
};

// Taylor coefficients of sin(x)/x - 1 and cos(x) - 1 in x^2, |x| <= pi/4.
inline constexpr double kSinC[7] = {
    -1.0 / 6,           1.0 / 120,         -1.0 / 5040,      1.0 / 362880,
    -1.0 / 39916800,    1.0 / 6227020800., -1.0 / 1307674368000.,
};
inline constexpr double kCosC[8] = {
    -1.0 / 2,           1.0 / 24,           -1.0 / 720,
    1.0 / 40320,        -1.0 / 3628800,     1.0 / 479001600.,
    -1.0 / 87178291200., 1.0 / 20922789888000.,
};

}  // namespace vm

// (0,1] uniform from 64 random bits, 52-bit granularity; never 0.
template <class P>
inline typename P::f64 unit_from_bits(typename P::u64 w) {
  typename P::u64 v = P::addu(P::template shr<12>(w), P::set1u(1));
  return P::mul(P::cvt_u52(v), P::set1(0x1p-52));
}

// Natural log for u in (0,1].
template <class P>
inline typename P::f64 log_unit(typename P::f64 u) {
  using f64 = typename P::f64;
  using u64 = typename P::u64;
  u64 b = P::bits(u);
  f64 e = P::sub(P::cvt_u52(P::template shr<52>(b)), P::set1(1023.0));
  u64 mant = P::oru(P::andu(b, P::set1u(0x000fffffffffffffULL)),
                    P::set1u(0x3ff0000000000000ULL));
  f64 m = P::from_bits(mant);
  u64 big = P::cmp_gt(m, P::set1(vm::kSqrt2));
  m = P::select(big, P::mul(m, P::set1(0.5)), m);
  e = P::select(big, P::add(e, P::set1(1.0)), e);

  f64 s = P::div(P::sub(m, P::set1(1.0)), P::add(m, P::set1(1.0)));
  f64 w = P::mul(s, s);
  f64 p = P::set1(vm::kLogC[6]);
  p = P::fmadd(p, w, P::set1(vm::kLogC[5]));
  p = P::fmadd(p, w, P::set1(vm::kLogC[4]));
  p = P::fmadd(p, w, P::set1(vm::kLogC[3]));
  p = P::fmadd(p, w, P::set1(vm::kLogC[2]));
  p = P::fmadd(p, w, P::set1(vm::kLogC[1]));
  p = P::fmadd(p, w, P::set1(vm::kLogC[0]));
  f64 s2 = P::add(s, s);
  f64 lg = P::fmadd(P::mul(s2, w), p, s2);
  return P::fmadd(e, P::set1(vm::kLn2), lg);
}

// sin and cos of 2*pi*u for u in (0,1], via quadrant reduction.
template <class P>
inline void sincos_2pi(typename P::f64 u, typename P::f64& sn,
                       typename P::f64& cs) {
  using f64 = typename P::f64;
  using u64 = typename P::u64;
  f64 x = P::mul(u, P::set1(4.0));
  f64 k = P::round_nearest(x);
  f64 d = P::sub(x, k);
  f64 phi = P::mul(d, P::set1(vm::kPiOver2));
  f64 w = P::mul(phi, phi);

  f64 sp = P::set1(vm::kSinC[6]);
  sp = P::fmadd(sp, w, P::set1(vm::kSinC[5]));
  sp = P::fmadd(sp, w, P::set1(vm::kSinC[4]));
  sp = P::fmadd(sp, w, P::set1(vm::kSinC[3]));
  sp = P::fmadd(sp, w, P::set1(vm::kSinC[2]));
  sp = P::fmadd(sp, w, P::set1(vm::kSinC[1]));
  sp = P::fmadd(sp, w, P::set1(vm::kSinC[0]));
  f64 sinphi = P::fmadd(P::mul(phi, w), sp, phi);

  f64 cp = P::set1(vm::kCosC[7]);
  cp = P::fmadd(cp, w, P::set1(vm::kCosC[6]));
  cp = P::fmadd(cp, w, P::set1(vm::kCosC[5]));
  cp = P::fmadd(cp, w, P::set1(vm::kCosC[4]));
  cp = P::fmadd(cp, w, P::set1(vm::kCosC[3]));
  cp = P::fmadd(cp, w, P::set1(vm::kCosC[2]));
  cp = P::fmadd(cp, w, P::set1(vm::kCosC[1]));
  cp = P::fmadd(cp, w, P::set1(vm::kCosC[0]));
  f64 cosphi = P::fmadd(w, cp, P::set1(1.0));

  // Quadrant bits of k (an exact small integer) via the 2^52 mantissa trick.
  u64 q = P::andu(P::bits(P::add(k, P::set1(vm::kTwoPow52))), P::set1u(3));
  u64 odd = P::cmp_eq_u(P::andu(q, P::set1u(1)), P::set1u(1));
  u64 signbit = P::set1u(0x8000000000000000ULL);

  // sin(q*pi/2 + phi): q=0:+s 1:+c 2:-s 3:-c
  f64 sv = P::select(odd, cosphi, sinphi);
  u64 sflip = P::cmp_eq_u(P::andu(q, P::set1u(2)), P::set1u(2));
  sn = P::from_bits(P::xoru(P::bits(sv), P::andu(sflip, signbit)));

  // cos(q*pi/2 + phi): q=0:+c 1:-s 2:-c 3:+s
  f64 cv = P::select(odd, sinphi, cosphi);
  u64 qp1 = P::addu(q, P::set1u(1));
  u64 cflip = P::cmp_eq_u(P::andu(qp1, P::set1u(2)), P::set1u(2));
  cs = P::from_bits(P::xoru(P::bits(cv), P::andu(cflip, signbit)));
}

}  // namespace ldpnn::simd
