#pragma once

#include <vector>

#include "ldpnn/gauss_expect.hpp"
#include "ldpnn/rate_value.hpp"
#include "ldpnn/simulator.hpp"
#include "ldpnn/types.hpp"

namespace ldpnn {

// Sum of the per-unit bias rates: y_h^2/(2 Cb) when the bias survives
// (Cb != 0, s_h = 0), the degenerate rate Delta(y_h; 0) otherwise.
RateValue bias_rate(const Vector& y, const NetworkConfig& model,
                    const DerivativePattern& pattern);

// i.i.d. draws of the summand matrix F_{h.}(x_alpha) (one hidden unit).
std::vector<Matrix> sample_F(const NetworkConfig& model,
                             const InputSet& inputs,
                             const DerivativePattern& pattern,
                             std::uint64_t count, std::uint64_t seed);

struct ShallowRateResult {
  RateValue value;
  Vector y_opt;
  Matrix theta_opt;
  int outer_iters = 0;
  bool diverged = false;
};

// LD rate of the scaled sensitivities: inf over the bias split y of
// sum_h I_h(y_h) + Upsilon*(z - y), by alternating exact y-steps with a
// Newton ascent for the conjugate.
ShallowRateResult shallow_ld_rate_full(const Matrix& z,
                                       const NetworkConfig& model,
                                       const InputSet& inputs,
                                       const DerivativePattern& pattern,
                                       const QuadratureSpec& spec = {});
RateValue shallow_ld_rate(const Matrix& z, const NetworkConfig& model,
                          const InputSet& inputs,
                          const DerivativePattern& pattern,
                          const QuadratureSpec& spec = {});

// MD rate: same contraction with the quadratic conjugate
// Upsilon-tilde*(f) = f^T Q^+ f / 2 on range(Q), +inf off range; the outer
// infimum over y is solved in closed form per unit block.
RateValue shallow_md_rate(const Matrix& z, const NetworkConfig& model,
                          const InputSet& inputs,
                          const DerivativePattern& pattern,
                          const QuadratureSpec& spec = {},
                          bool include_bias_in_upsilon_tilde = false);

// Tail-slope harness for the scaled sensitivity mean on coordinate
// (alpha=0, h=0), the empirical counterpart of the MD rate.
TailRun shallow_sensitivity_tail(const NetworkConfig& model,
                                 const InputSet& inputs,
                                 const DerivativePattern& pattern,
                                 const WidthSchedule& schedule,
                                 const std::vector<double>& thresholds,
                                 const ScalingSpec& scaling,
                                 std::uint64_t samples, std::uint64_t seed);

}  // namespace ldpnn
