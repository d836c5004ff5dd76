#include "ldpnn/activation.hpp"

#include <cmath>

namespace ldpnn {

namespace {

double relu_raw(double x) { return x > 0.0 ? x : 0.0; }
double hard_clip_raw(double x) {
  double t = x > -1.0 ? x : -1.0;
  return t < 1.0 ? t : 1.0;
}
double tanh_raw(double x) { return std::tanh(x); }
double sigmoid_raw(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double sin_raw(double x) { return std::sin(x); }
double swish_raw(double x) { return x * sigmoid_raw(x); }
double softplus_raw(double x) {
  if (x > 36.0) return x;  // log1p(exp(x)) == x to double precision
  return std::log1p(std::exp(x));
}

}  // namespace

Activation builtin(const std::string& name) {
  Activation a;
  a.name = name;
  if (name == "relu") {
    a.eval = relu_raw;
    a.deriv = [](double x) { return x > 0.0 ? 1.0 : 0.0; };  // 0 at the kink
    a.growth = Growth::sublinear;
    a.deriv_sup_norm = 1.0;
    a.kinks = {0.0};
    a.kernel = simd::ActKernel::relu;
    a.raw_eval = relu_raw;
    return a;
  }
  if (name == "hard_clip") {
    a.eval = hard_clip_raw;
    a.deriv = [](double x) { return (x > -1.0 && x < 1.0) ? 1.0 : 0.0; };
    a.growth = Growth::bounded;
    a.sup_norm = 1.0;
    a.deriv_sup_norm = 1.0;
    a.kinks = {-1.0, 1.0};
    a.kernel = simd::ActKernel::hard_clip;
    a.raw_eval = hard_clip_raw;
    return a;
  }
  if (name == "tanh") {
    a.eval = tanh_raw;
    a.deriv = [](double x) {
      double t = std::tanh(x);
      return 1.0 - t * t;
    };
    a.growth = Growth::bounded;
    a.sup_norm = 1.0;
    a.deriv_sup_norm = 1.0;
    a.raw_eval = tanh_raw;
    return a;
  }
  if (name == "sigmoid") {
    a.eval = sigmoid_raw;
    a.deriv = [](double x) {
      double s = sigmoid_raw(x);
      return s * (1.0 - s);
    };
    a.growth = Growth::bounded;
    a.sup_norm = 1.0;
    a.deriv_sup_norm = 0.25;
    a.raw_eval = sigmoid_raw;
    return a;
  }
  if (name == "sin") {
    a.eval = sin_raw;
    a.deriv = [](double x) { return std::cos(x); };
    a.growth = Growth::bounded;
    a.sup_norm = 1.0;
    a.deriv_sup_norm = 1.0;
    a.raw_eval = sin_raw;
    return a;
  }
  if (name == "swish") {
    a.eval = swish_raw;
    a.deriv = [](double x) {
      double s = sigmoid_raw(x);
      return s * (1.0 + x * (1.0 - s));
    };
    a.growth = Growth::sublinear;
    a.deriv_sup_norm = 1.1;  // max of swish' is ~1.0998
    a.raw_eval = swish_raw;
    return a;
  }
  if (name == "softplus") {
    a.eval = softplus_raw;
    a.deriv = sigmoid_raw;
    a.growth = Growth::sublinear;
    a.deriv_sup_norm = 1.0;
    a.raw_eval = softplus_raw;
    return a;
  }
  throw UnknownActivationError(name);
}

Activation constant_activation(double c) {
  Activation a;
  a.name = "const(" + std::to_string(c) + ")";
  a.eval = [c](double) { return c; };
  a.deriv = [](double) { return 0.0; };
  a.growth = Growth::bounded;
  a.sup_norm = std::abs(c);
  a.deriv_sup_norm = 0.0;
  return a;
}

bool check_growth_star(const Activation& act, const DerivativePattern& pattern,
                       const InputSet& inputs, double M) {
  pattern.validate();
  const int n0 = static_cast<int>(inputs.points.at(0).size());
  const int dim = n0 + 1;

  // Additive low-discrepancy (Weyl) sequence on [-50,50]^{n0+1}.
  std::vector<double> alpha(static_cast<size_t>(dim));
  const double primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  for (int d = 0; d < dim; ++d) {
    double r = std::sqrt(primes[d % 12]);
    alpha[static_cast<size_t>(d)] = r - std::floor(r);
  }

  bool need0 = false, need1 = false;
  for (int s : pattern.s) (s == 0 ? need0 : need1) = true;

  std::vector<double> pt(static_cast<size_t>(dim));
  const int kPoints = 100000;
  for (int k = 1; k <= kPoints; ++k) {
    for (int d = 0; d < dim; ++d) {
      double u = std::fmod(k * alpha[static_cast<size_t>(d)], 1.0);
      pt[static_cast<size_t>(d)] = 100.0 * u - 50.0;
    }
    double b = pt[0];
    for (const auto& x : inputs.points) {
      double t = b;
      for (int r = 0; r < n0; ++r) t += pt[static_cast<size_t>(r + 1)] * x[r];
      double bound = M * (1.0 + std::abs(t));
      if (need0 && std::abs(act.eval(t)) > bound) return false;
      if (need1 && std::abs(act.deriv(t)) > bound) return false;
    }
  }
  return true;
}

}  // namespace ldpnn
