#pragma once

#include <cstdint>

namespace ldpnn::simd {

// Vectorizable activation kernels for the hot sampling paths. Anything else
// goes through `custom` with a plain function pointer, applied lane by lane
// identically in every backend.
enum class ActKernel : int { hard_clip = 0, relu = 1, custom = 2 };

// A backend produces the canonical normal-variate stream: position p of
// stream s under seed k is element p%2 of the Box-Muller pair derived from
// Philox block p/2 with counter (p/2, s) and key k. All backends are
// bit-identical by construction; selection is a speed knob only.
struct Backend {
  const char* name;
  void (*fill_normals)(std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t pos0, double* out, std::uint64_t n);
  // sum_{i<count} act(scale * normal(pos0+i))^2, with the fixed 8-lane
  // accumulation pattern shared by all backends.
  double (*sum_sq_act)(std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t pos0, std::uint64_t count, double scale,
                       int act_kind, double (*fn)(double));
};

const Backend& scalar_backend();
const Backend* avx2_backend();    // nullptr when unsupported
const Backend& active_backend();  // honors LDPNN_SIMD={auto,scalar,avx2}

// Stream ids are composed, not sequential, so independent consumers of the
// same seed can never collide.
std::uint64_t make_stream(unsigned domain, std::uint64_t unit,
                          std::uint64_t index);

namespace domain {
inline constexpr unsigned direct = 1;
inline constexpr unsigned repr_chain = 2;
inline constexpr unsigned tail = 3;
inline constexpr unsigned shallow = 4;
inline constexpr unsigned mc_kappa = 5;
inline constexpr unsigned mc_y = 6;
inline constexpr unsigned moments = 7;
}  // namespace domain

// Sequential view of one stream.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t stream)
      : seed_(seed), stream_(stream) {}

  double next();
  void fill(double* out, std::uint64_t n);
  double sum_sq_act(std::uint64_t count, double scale, ActKernel kind,
                    double (*fn)(double) = nullptr);
  std::uint64_t pos() const { return pos_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t pos_ = 0;
};

}  // namespace ldpnn::simd
