#pragma once

#include <optional>
#include <vector>

#include "ldpnn/gauss_expect.hpp"
#include "ldpnn/psd.hpp"
#include "ldpnn/rate_value.hpp"
#include "ldpnn/types.hpp"

namespace ldpnn {

// Frobenius tolerance under which the degenerate rate Delta counts as "equal".
inline constexpr double kTolEq = 1e-9;

// Fenchel-Legendre transform kappa*(y;q) = sup_eta {<eta,y> - kappa(eta;q)},
// by damped Newton ascent over symmetric eta (the supremum is unchanged by
// symmetrization). Divergence is certified by the objective passing 1e6 with
// the gradient bounded away from zero and reported as +inf.
struct LegendreResult {
  RateValue value;
  SymMatrix eta;
  int iters = 0;
  double grad_norm = 0.0;
  bool diverged = false;
};
LegendreResult legendre_full(const SymMatrix& y, const CovMatrix& q,
                             const Activation& act,
                             const QuadratureSpec& spec = {});
RateValue legendre(const SymMatrix& y, const CovMatrix& q,
                   const Activation& act, const QuadratureSpec& spec = {});

double f_relu(double z);  // z^3/(z+1)
// Unique positive root of f(z) = u, Cardano with one Newton polish.
double f_inverse(double u);

// Scalar ReLU kappa*: +inf for y<0, log 2 at y=0, closed form via f_inverse
// for y>0. Requires q > 0; the q = 0 case collapses to Delta(y;0) and is
// handled by the conditional rate.
RateValue kappa_star_relu_scalar(double y, double q);

// Delta(r; center): 0 within kTolEq in Frobenius norm, +inf otherwise.
RateValue delta_rate(const Matrix& r, const Matrix& center);

// J(g_next | g_prev) of the chained rate; gamma in [1, inf].
RateValue conditional_rate_J(const CovMatrix& g_next, const CovMatrix& g_prev,
                             double gamma, const NetworkConfig& model,
                             const QuadratureSpec& spec = {});

// I_G: infimum over intermediate chain matrices by multi-start Nelder-Mead
// on the parametrization g = Cb 1 + Cw m^T m. Reported values are best-found
// upper bounds for |A| >= 2 (no certified global optimum exists).
struct ChainResult {
  RateValue value;
  std::vector<SymMatrix> intermediates;  // g^(1..L-1)
  int best_start = -1;
};
ChainResult chain_rate_IG_full(const CovMatrix& g_L, const NetworkConfig& model,
                               const InputSet& inputs,
                               const QuadratureSpec& spec = {});
RateValue chain_rate_IG(const CovMatrix& g_L, const NetworkConfig& model,
                        const InputSet& inputs,
                        const QuadratureSpec& spec = {});

// I_Z: joint search over the whole chain with the exact inner quadratic
// solved by min_norm_preimage.
struct OutputRateResult {
  RateValue value;
  std::vector<SymMatrix> chain;  // g^(1..L)
  std::optional<Matrix> r;
  int best_start = -1;
};
OutputRateResult output_rate_IZ_full(const Matrix& z,
                                     const NetworkConfig& model,
                                     const InputSet& inputs,
                                     const QuadratureSpec& spec = {});
RateValue output_rate_IZ(const Matrix& z, const NetworkConfig& model,
                         const InputSet& inputs,
                         const QuadratureSpec& spec = {});

// Moderate-deviation rate: inf{||r||^2/2 : ghat^# r = z}.
RateValue md_rate(const Matrix& z, const CovMatrix& ghat_L);

}  // namespace ldpnn
