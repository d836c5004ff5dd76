#pragma once

#include <vector>

#include "ldpnn/gauss_expect.hpp"
#include "ldpnn/psd.hpp"
#include "ldpnn/types.hpp"

namespace ldpnn {

// g^(0): C_b + (C_W/n_0) <x_a, x_b>, a member of S_{|A|,C_b}.
CovMatrix initial_cov(const NetworkConfig& model, const InputSet& inputs);

// NNGP covariance chain ghat^(1..L) via ghat^(l) = Cb 1 + Cw y(ghat^(l-1)).
// Memoized per (model, inputs, spec) within the process; the activation is
// identified by its name.
std::vector<CovMatrix> limit_cov_chain(const NetworkConfig& model,
                                       const InputSet& inputs,
                                       const QuadratureSpec& spec = {});

}  // namespace ldpnn
