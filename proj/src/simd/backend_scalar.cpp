#include "ldpnn/simd/backend.hpp"
#include "kernels_impl.hpp"

namespace ldpnn::simd {

namespace {

void fill_normals_scalar(std::uint64_t seed, std::uint64_t stream,
                         std::uint64_t pos0, double* out, std::uint64_t n) {
  detail::fill_elem_range(seed, stream, pos0, out, n);
}

double sum_sq_act_scalar(std::uint64_t seed, std::uint64_t stream,
                         std::uint64_t pos0, std::uint64_t count, double scale,
                         int act_kind, double (*fn)(double)) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  detail::sum_elem_range(seed, stream, pos0, count, scale, act_kind, fn, acc);
  return detail::reduce8(acc);
}

}  // namespace

const Backend& scalar_backend() {
  static const Backend b{"scalar", &fill_normals_scalar, &sum_sq_act_scalar};
  return b;
}

}  // namespace ldpnn::simd
