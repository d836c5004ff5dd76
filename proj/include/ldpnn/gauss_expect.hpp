#pragma once

#include <memory>

#include "ldpnn/psd.hpp"
#include "ldpnn/quadrature.hpp"
#include "ldpnn/rate_value.hpp"
#include "ldpnn/types.hpp"

namespace ldpnn {

// kappa(eta; q) = log E[exp(sum eta_ab sigma(<q#_a,N>) sigma(<q#_b,N>))]
// by quadrature. |A| = 1 uses the kink-split 1-D engine (exact enough for the
// ReLU closed forms); |A| in {2,3} uses tensorized Gauss-Hermite; larger |A|
// must use the MC backend. Divergent integrands surface as +inf through the
// node overflow guard.
ExtReal kappa(const SymMatrix& eta, const CovMatrix& q,
              const Activation& act, const QuadratureSpec& spec = {});

struct KappaGrad {
  ExtReal value;
  SymMatrix grad;  // tilted expectation E_eta[sigma sigma^T]
};
KappaGrad kappa_with_grad(const SymMatrix& eta, const CovMatrix& q,
                          const Activation& act,
                          const QuadratureSpec& spec = {});

// Closed form for |A|=1 ReLU: log(((1-2 eta q)^{-1/2}+1)/2) when eta < 1/(2q),
// +inf otherwise; kappa(.;0) == 0.
ExtReal kappa_relu_scalar(double eta, double q);

// y(q) = E[sigma sigma^T], the unique zero of kappa*(.;q). Shares the
// gradient accumulation path with kappa at eta = 0 bit for bit.
SymMatrix y_of_q(const CovMatrix& q, const Activation& act,
                 const QuadratureSpec& spec = {});

// Monte Carlo backends (counter-based streams keyed by (seed, sample)).
ExtReal kappa_mc(const SymMatrix& eta, const CovMatrix& q,
                 const Activation& act, const McSpec& mc,
                 double* stderr_log = nullptr);
SymMatrix y_of_q_mc(const CovMatrix& q, const Activation& act,
                    const McSpec& mc, Matrix* stderr_out = nullptr);

// Shallow-network cumulant machinery. Caches the per-node summand table
// sigma^{(s_h)}(b + <W, x_alpha>) W_1^{s_h} so repeated evaluations during
// ascent cost one pass of exp/accumulate.
class UpsilonEvaluator {
 public:
  UpsilonEvaluator(const NetworkConfig& model, const InputSet& inputs,
                   const DerivativePattern& pattern,
                   const QuadratureSpec& spec = {});
  ~UpsilonEvaluator();
  UpsilonEvaluator(UpsilonEvaluator&&) noexcept;

  int a_card() const;
  int n2() const;

  // Upsilon(theta) = log E[exp((Cw/2) sum_h (sum_a theta_ah Phi_ah)^2)].
  RateValue value(const Matrix& theta) const;
  struct ValueGrad {
    RateValue value;
    Matrix grad;
  };
  ValueGrad value_grad(const Matrix& theta) const;

  // Quadratic-form coefficient matrix of Upsilon-tilde, block diagonal over
  // h: Q[(a,h),(b,h)] = Cw E[sigma^{(s_h)}(.a) sigma^{(s_h)}(.b) W_1^{2 s_h}].
  // The paper's display omits the bias inside sigma; include_bias = true is
  // the config switch that puts it back.
  const Matrix& tilde_matrix(bool include_bias = false) const;
  double tilde(const Matrix& theta, bool include_bias = false) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ldpnn
