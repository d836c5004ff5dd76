#include "ldpnn/simd/backend.hpp"

#include <cstdlib>
#include <cstring>

#include "kernels_impl.hpp"
#include "pack_scalar.hpp"

namespace ldpnn::simd {

namespace detail {

void normal_pair_element(std::uint64_t seed, std::uint64_t stream,
                         std::uint64_t block, double& n1, double& n2) {
  PackScalar::f64 a, b;
  normal_block<PackScalar>(PhiloxKeys(seed), stream, block, a, b);
  n1 = a.v;
  n2 = b.v;
}

double apply_act_elem(int act_kind, double (*fn)(double), double x) {
  switch (static_cast<ActKernel>(act_kind)) {
    case ActKernel::hard_clip: {
      double t = x > -1.0 ? x : -1.0;  // MAXPD tie semantics
      return t < 1.0 ? t : 1.0;
    }
    case ActKernel::relu:
      return x > 0.0 ? x : 0.0;
    case ActKernel::custom:
      return fn(x);
  }
  return 0.0;
}

void fill_elem_range(std::uint64_t seed, std::uint64_t stream,
                     std::uint64_t pos0, double* out, std::uint64_t n) {
  PhiloxKeys keys(seed);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint64_t pos = pos0 + i;
    PackScalar::f64 a, b;
    normal_block<PackScalar>(keys, stream, pos >> 1, a, b);
    out[i] = (pos & 1) ? b.v : a.v;
  }
}

void sum_elem_range(std::uint64_t seed, std::uint64_t stream,
                    std::uint64_t pos0, std::uint64_t n, double scale,
                    int act_kind, double (*fn)(double), double acc[8]) {
  PhiloxKeys keys(seed);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint64_t pos = pos0 + i;
    PackScalar::f64 a, b;
    normal_block<PackScalar>(keys, stream, pos >> 1, a, b);
    double x = apply_act_elem(act_kind, fn, scale * ((pos & 1) ? b.v : a.v));
    int l = lane_of_pos(pos);
    acc[l] = std::fma(x, x, acc[l]);
  }
}

double reduce8(const double acc[8]) {
  double s = acc[0];
  for (int i = 1; i < 8; ++i) s += acc[i];
  return s;
}

}  // namespace detail

#ifdef LDPNN_HAVE_AVX2_SOURCE
namespace detail {
const Backend* avx2_backend_if_supported();
}
#endif

const Backend* avx2_backend() {
#ifdef LDPNN_HAVE_AVX2_SOURCE
  return detail::avx2_backend_if_supported();
#else
  return nullptr;
#endif
}

const Backend& active_backend() {
  static const Backend* chosen = [] {
    const char* env = std::getenv("LDPNN_SIMD");
    if (env && std::strcmp(env, "scalar") == 0) return &scalar_backend();
    const Backend* avx2 = avx2_backend();
    if (env && std::strcmp(env, "avx2") == 0 && avx2) return avx2;
    return avx2 ? avx2 : &scalar_backend();
  }();
  return *chosen;
}

std::uint64_t make_stream(unsigned domain, std::uint64_t unit,
                          std::uint64_t index) {
  return (static_cast<std::uint64_t>(domain) << 56) |
         ((unit & 0xFFFF) << 40) | (index & 0xFFFFFFFFFFull);
}

double NormalStream::next() {
  double a, b;
  detail::normal_pair_element(seed_, stream_, pos_ >> 1, a, b);
  double r = (pos_ & 1) ? b : a;
  ++pos_;
  return r;
}

void NormalStream::fill(double* out, std::uint64_t n) {
  active_backend().fill_normals(seed_, stream_, pos_, out, n);
  pos_ += n;
}

double NormalStream::sum_sq_act(std::uint64_t count, double scale,
                                ActKernel kind, double (*fn)(double)) {
  double s = active_backend().sum_sq_act(seed_, stream_, pos_, count, scale,
                                         static_cast<int>(kind), fn);
  pos_ += count;
  return s;
}

}  // namespace ldpnn::simd
