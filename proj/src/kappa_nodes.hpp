#pragma once

// Internal: quadrature node tables for kappa(.;q) with cached sigma values,
// shared by the gauss_expect entry points and the Legendre ascent in rates.

#include <vector>

#include "ldpnn/psd.hpp"
#include "ldpnn/quadrature.hpp"
#include "ldpnn/types.hpp"

namespace ldpnn::detail {

inline constexpr double kOverflowExp = 700.0;

struct SigmaNodes {
  int dim = 0;
  std::vector<double> sig;   // node-major, dim values per node
  std::vector<double> logw;  // includes the Gaussian density for 1-D panels
};

// eta_scale is an upper bound on |quadform| used to pick the 1-D window and
// panel density; ignored for the tensor grid (fixed Gauss-Hermite order).
SigmaNodes build_kappa_nodes(const CovMatrix& q, const Activation& act,
                             const QuadratureSpec& spec, double eta_scale);

// True when the scalar ReLU integrand diverges: eta * q >= 1/2.
bool relu_scalar_divergent(const SymMatrix& eta, const CovMatrix& q,
                           const Activation& act);

struct KappaEval {
  bool overflow = false;
  double value = 0.0;
  Matrix grad;  // tilted E[sigma sigma^T], filled when requested
};

KappaEval kappa_eval_nodes(const SigmaNodes& nodes, const Matrix& eta,
                           bool want_grad);

double eta_scale_bound(const Matrix& eta, const CovMatrix& q,
                       const Activation& act);

}  // namespace ldpnn::detail
