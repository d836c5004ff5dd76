#pragma once

#include "ldpnn/types.hpp"

namespace ldpnn {

// Named builtins: relu, tanh, sigmoid, sin, swish, softplus, hard_clip.
Activation builtin(const std::string& name);

// Constant sigma == c, for tests and closed-form checks.
Activation constant_activation(double c);

// Numerical check of the growth condition behind the finiteness of Upsilon
// near the origin: on a low-discrepancy grid over (b,w) in [-50,50]^{n0+1},
// for every input x_alpha and every h,
//   s_h = 0:  |sigma(t)|  <= M (1 + |t|)
//   s_h = 1:  |sigma'(t)| <= M (1 + |t|)
// with t = b + <w, x_alpha>. The w_1^{s_h} factor of the summand is absorbed
// by w_1^2 <= b^2 + |w|^2, which is what makes the Gaussian square
// exponential moment finite. Semi-decidable: true means "no violation found".
bool check_growth_star(const Activation& act, const DerivativePattern& pattern,
                       const InputSet& inputs, double M);

}  // namespace ldpnn
