#pragma once

#include <cstdint>

// Philox4x32-10 counter-based generator (Salmon et al., SC 2011), pack-generic.
// Counter words: (block_lo, block_hi, stream_lo, stream_hi); key = 64-bit seed.

namespace ldpnn::simd {

namespace ph {
inline constexpr std::uint64_t kM0 = 0xD2511F53;
inline constexpr std::uint64_t kM1 = 0xCD9E8D57;
inline constexpr std::uint64_t kW0 = 0x9E3779B9;
inline constexpr std::uint64_t kW1 = 0xBB67AE85;
inline constexpr std::uint64_t kMask32 = 0xFFFFFFFFull;
}  // namespace ph

// Bumped key for each of the 10 rounds; hoisted out of the block loop since
// it does not depend on the counter.
struct PhiloxKeys {
  std::uint64_t k0[10];
  std::uint64_t k1[10];
  explicit PhiloxKeys(std::uint64_t seed) {
    std::uint64_t a = seed & ph::kMask32;
    std::uint64_t b = seed >> 32;
    for (int r = 0; r < 10; ++r) {
      k0[r] = a;
      k1[r] = b;
      a = (a + ph::kW0) & ph::kMask32;
      b = (b + ph::kW1) & ph::kMask32;
    }
  }
};

// One batch: lanes hold consecutive block indices. Outputs two 64-bit words
// per lane assembled from the four 32-bit output words.
template <class P>
inline void philox4x32_10(typename P::u64 block, std::uint64_t stream,
                          const PhiloxKeys& keys, typename P::u64& wa,
                          typename P::u64& wb) {
  using u64 = typename P::u64;
  const u64 mask32 = P::set1u(ph::kMask32);
  u64 x0 = P::andu(block, mask32);
  u64 x1 = P::template shr<32>(block);
  u64 x2 = P::set1u(stream & ph::kMask32);
  u64 x3 = P::set1u(stream >> 32);
  const u64 m0 = P::set1u(ph::kM0);
  const u64 m1 = P::set1u(ph::kM1);

  for (int round = 0; round < 10; ++round) {
    u64 p0 = P::mul32(m0, x0);
    u64 p1 = P::mul32(m1, x2);
    u64 hi0 = P::template shr<32>(p0);
    u64 lo0 = P::andu(p0, mask32);
    u64 hi1 = P::template shr<32>(p1);
    u64 lo1 = P::andu(p1, mask32);
    u64 y0 = P::xoru(P::xoru(hi1, x1), P::set1u(keys.k0[round]));
    u64 y2 = P::xoru(P::xoru(hi0, x3), P::set1u(keys.k1[round]));
    x0 = y0;
    x1 = lo1;
    x2 = y2;
    x3 = lo0;
  }
  wa = P::oru(x0, P::template shl<32>(x1));
  wb = P::oru(x2, P::template shl<32>(x3));
}

template <class P>
inline void philox4x32_10(typename P::u64 block, std::uint64_t stream,
                          std::uint64_t seed, typename P::u64& wa,
                          typename P::u64& wb) {
  philox4x32_10<P>(block, stream, PhiloxKeys(seed), wa, wb);
}

}  // namespace ldpnn::simd
