#include "ldpnn/gauss_expect.hpp"

#include <algorithm>
#include <cmath>

#include "kappa_nodes.hpp"
#include "ldpnn/simd/backend.hpp"

namespace ldpnn {

namespace detail {

namespace {

SigmaNodes build_nodes_1d(const CovMatrix& q, const Activation& act,
                          double halfwidth, double scale_hint) {
  SigmaNodes n;
  n.dim = 1;
  const double s = q.sqrt()(0, 0);
  std::vector<double> kinks;
  for (double k : act.kinks)
    if (s > 0) kinks.push_back(k / s);
  for_each_node_1d(kinks, halfwidth, scale_hint, [&](double x, double w) {
    n.sig.push_back(act.eval(s * x));
    n.logw.push_back(std::log(w));
  });
  return n;
}

SigmaNodes build_nodes_tensor(const CovMatrix& q, const Activation& act,
                              int order) {
  SigmaNodes n;
  n.dim = q.dim();
  TensorGH grid(n.dim, order);
  const Matrix& rt = q.sqrt().mat();
  n.sig.reserve(grid.count() * static_cast<std::uint64_t>(n.dim));
  n.logw.reserve(grid.count());
  grid.for_each([&](const double* x, double w) {
    for (int g = 0; g < n.dim; ++g) {
      double pre = 0.0;
      for (int gp = 0; gp < n.dim; ++gp) pre += rt(g, gp) * x[gp];
      n.sig.push_back(act.eval(pre));
    }
    n.logw.push_back(std::log(w));
  });
  return n;
}

double quadform(const Matrix& eta, const double* s, int dim) {
  double acc = 0.0;
  for (int a = 0; a < dim; ++a)
    for (int b = 0; b < dim; ++b) acc += eta(a, b) * s[a] * s[b];
  return acc;
}

bool is_relu(const Activation& act) {
  return act.kernel == simd::ActKernel::relu;
}

}  // namespace

double eta_scale_bound(const Matrix& eta, const CovMatrix& q,
                       const Activation& act) {
  double m = eta.cwiseAbs().maxCoeff();
  int d = q.dim();
  if (act.bounded()) {
    double sup = act.sup_norm.value_or(1.0);
    return m * d * d * sup * sup;
  }
  return m * q.base().mat().cwiseAbs().maxCoeff();
}

bool relu_scalar_divergent(const SymMatrix& eta, const CovMatrix& q,
                           const Activation& act) {
  return q.dim() == 1 && is_relu(act) && q.base()(0, 0) > 0 &&
         eta(0, 0) * q.base()(0, 0) >= 0.5 - 1e-12;
}

SigmaNodes build_kappa_nodes(const CovMatrix& q, const Activation& act,
                             const QuadratureSpec& spec, double eta_scale) {
  if (q.dim() == 1) {
    double halfwidth = 14.0;
    double hint = eta_scale;
    if (!act.bounded()) {
      // ReLU-style quadratic exponent: widen the window toward the
      // divergence boundary eta * q = 1/2.
      double eq = eta_scale;  // here eta_scale = |eta| * q
      if (eq > 0.0)
        halfwidth = std::min(
            200.0,
            std::max(14.0, std::sqrt(36.8 / std::max(0.5 - eq, 1e-8)) + 2.0));
      hint = eq * halfwidth * halfwidth / 4;
    }
    return build_nodes_1d(q, act, halfwidth, hint);
  }
  if (q.dim() > 3)
    throw DimensionMismatchError(
        "kappa: quadrature capped at |A| = 3; use the MC backend");
  int order = spec.order > 0 ? spec.order : default_quad_order(q.dim());
  return build_nodes_tensor(q, act, order);
}

KappaEval kappa_eval_nodes(const SigmaNodes& nodes, const Matrix& eta,
                           bool want_grad) {
  KappaEval r;
  const int dim = nodes.dim;
  const size_t count = nodes.logw.size();
  std::vector<double> ex(count);
  double m = -std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < count; ++k) {
    double e = quadform(eta, &nodes.sig[k * static_cast<size_t>(dim)], dim) +
               nodes.logw[k];
    ex[k] = e;
    if (e > m) m = e;
    if (e > kOverflowExp) {
      r.overflow = true;
      return r;
    }
  }
  double s = 0.0;
  for (size_t k = 0; k < count; ++k) {
    ex[k] = std::exp(ex[k] - m);
    s += ex[k];
  }
  r.value = m + std::log(s);
  if (want_grad) {
    r.grad = Matrix::Zero(dim, dim);
    for (size_t k = 0; k < count; ++k) {
      const double* sg = &nodes.sig[k * static_cast<size_t>(dim)];
      double t = ex[k] / s;
      for (int a = 0; a < dim; ++a)
        for (int b = 0; b < dim; ++b) r.grad(a, b) += t * sg[a] * sg[b];
    }
  }
  return r;
}

}  // namespace detail

namespace {

void check_dims(const SymMatrix& eta, const CovMatrix& q) {
  if (eta.dim() != q.dim())
    throw DimensionMismatchError("kappa: eta and q dimensions differ");
}

}  // namespace

ExtReal kappa(const SymMatrix& eta, const CovMatrix& q, const Activation& act,
              const QuadratureSpec& spec) {
  check_dims(eta, q);
  if (detail::relu_scalar_divergent(eta, q, act)) return ExtReal::infinity();
  detail::SigmaNodes nodes = detail::build_kappa_nodes(
      q, act, spec, detail::eta_scale_bound(eta.mat(), q, act));
  detail::KappaEval r = detail::kappa_eval_nodes(nodes, eta.mat(), false);
  if (r.overflow) return ExtReal::infinity();
  return ExtReal(r.value);
}

KappaGrad kappa_with_grad(const SymMatrix& eta, const CovMatrix& q,
                          const Activation& act, const QuadratureSpec& spec) {
  check_dims(eta, q);
  const int dim = q.dim();
  if (detail::relu_scalar_divergent(eta, q, act))
    return {ExtReal::infinity(), SymMatrix::zero(dim)};
  detail::SigmaNodes nodes = detail::build_kappa_nodes(
      q, act, spec, detail::eta_scale_bound(eta.mat(), q, act));
  detail::KappaEval r = detail::kappa_eval_nodes(nodes, eta.mat(), true);
  if (r.overflow) return {ExtReal::infinity(), SymMatrix::zero(dim)};
  return {ExtReal(r.value), SymMatrix(r.grad)};
}

ExtReal kappa_relu_scalar(double eta, double q) {
  if (q < 0) throw NotPsdError("kappa_relu_scalar: q < 0");
  if (q == 0.0) return ExtReal(0.0);
  if (eta >= 0.5 / q) return ExtReal::infinity();
  return ExtReal(std::log((std::pow(1.0 - 2.0 * eta * q, -0.5) + 1.0) / 2.0));
}

SymMatrix y_of_q(const CovMatrix& q, const Activation& act,
                 const QuadratureSpec& spec) {
  return kappa_with_grad(SymMatrix::zero(q.dim()), q, act, spec).grad;
}

ExtReal kappa_mc(const SymMatrix& eta, const CovMatrix& q,
                 const Activation& act, const McSpec& mc, double* stderr_log) {
  check_dims(eta, q);
  const int dim = q.dim();
  const Matrix& rt = q.sqrt().mat();
  std::vector<double> draws(static_cast<size_t>(dim));
  std::vector<double> sig(static_cast<size_t>(dim));
  double sum = 0.0, sumsq = 0.0;
  for (std::uint64_t i = 0; i < mc.samples; ++i) {
    simd::NormalStream ns(mc.seed,
                          simd::make_stream(simd::domain::mc_kappa, 0, i));
    ns.fill(draws.data(), static_cast<std::uint64_t>(dim));
    for (int g = 0; g < dim; ++g) {
      double pre = 0.0;
      for (int gp = 0; gp < dim; ++gp)
        pre += rt(g, gp) * draws[static_cast<size_t>(gp)];
      sig[static_cast<size_t>(g)] = act.eval(pre);
    }
    double e = 0.0;
    for (int a = 0; a < dim; ++a)
      for (int b = 0; b < dim; ++b)
        e += eta(a, b) * sig[static_cast<size_t>(a)] * sig[static_cast<size_t>(b)];
    if (e > detail::kOverflowExp) return ExtReal::infinity();
    double v = std::exp(e);
    sum += v;
    sumsq += v * v;
  }
  double n = static_cast<double>(mc.samples);
  double mean = sum / n;
  if (stderr_log) {
    double var = std::max(sumsq / n - mean * mean, 0.0);
    *stderr_log = std::sqrt(var / n) / mean;  // delta method for the log
  }
  return ExtReal(std::log(mean));
}

SymMatrix y_of_q_mc(const CovMatrix& q, const Activation& act,
                    const McSpec& mc, Matrix* stderr_out) {
  const int dim = q.dim();
  const Matrix& rt = q.sqrt().mat();
  std::vector<double> draws(static_cast<size_t>(dim));
  std::vector<double> sig(static_cast<size_t>(dim));
  Matrix sum = Matrix::Zero(dim, dim), sumsq = Matrix::Zero(dim, dim);
  for (std::uint64_t i = 0; i < mc.samples; ++i) {
    simd::NormalStream ns(mc.seed, simd::make_stream(simd::domain::mc_y, 0, i));
    ns.fill(draws.data(), static_cast<std::uint64_t>(dim));
    for (int g = 0; g < dim; ++g) {
      double pre = 0.0;
      for (int gp = 0; gp < dim; ++gp)
        pre += rt(g, gp) * draws[static_cast<size_t>(gp)];
      sig[static_cast<size_t>(g)] = act.eval(pre);
    }
    for (int a = 0; a < dim; ++a)
      for (int b = 0; b < dim; ++b) {
        double v = sig[static_cast<size_t>(a)] * sig[static_cast<size_t>(b)];
        sum(a, b) += v;
        sumsq(a, b) += v * v;
      }
  }
  double n = static_cast<double>(mc.samples);
  Matrix mean = sum / n;
  if (stderr_out) {
    *stderr_out =
        ((sumsq / n - mean.cwiseProduct(mean)).cwiseMax(0.0) / n).cwiseSqrt();
  }
  return SymMatrix(mean);
}

// ---------------------------------------------------------------------------
// Upsilon

struct UpsilonEvaluator::Impl {
  NetworkConfig model;
  InputSet inputs;
  DerivativePattern pattern;
  QuadratureSpec spec;
  int a = 0, n2 = 0;

  // phi[node * (a*n2) + (h*a + alpha)]; bias dimension present iff Cb > 0.
  std::vector<double> phi;
  std::vector<double> logw;

  mutable std::optional<Matrix> q_nobias;
  mutable std::optional<Matrix> q_bias;

  void build() {
    const int n0 = model.n0;
    const bool with_bias = model.Cb > 0;
    const int dim = n0 + (with_bias ? 1 : 0);
    int order = spec.order > 0 ? spec.order : default_quad_order(dim);
    TensorGH grid(dim, order);
    const double sb = std::sqrt(model.Cb);
    const double sw = std::sqrt(model.Cw / n0);
    phi.reserve(grid.count() * static_cast<std::uint64_t>(a * n2));
    logw.reserve(grid.count());
    grid.for_each([&](const double* x, double w) {
      double b = with_bias ? sb * x[0] : 0.0;
      const double* xw = x + (with_bias ? 1 : 0);
      double w1 = sw * xw[0];
      for (int h = 0; h < n2; ++h) {
        int s = pattern.s[static_cast<size_t>(h)];
        for (int al = 0; al < a; ++al) {
          double t = b;
          for (int r = 0; r < n0; ++r)
            t += sw * xw[r] * inputs.points[static_cast<size_t>(al)][r];
          phi.push_back(s == 0 ? model.act.eval(t) : model.act.deriv(t) * w1);
        }
      }
      logw.push_back(std::log(w));
    });
  }

  // Coefficients of Upsilon-tilde. The paper's display drops the bias inside
  // sigma and averages over the weights only; include_bias restores it.
  Matrix build_tilde(bool include_bias) const {
    const int n0 = model.n0;
    const bool with_bias = include_bias && model.Cb > 0;
    const int dim = n0 + (with_bias ? 1 : 0);
    int order = spec.order > 0 ? spec.order : default_quad_order(dim);
    TensorGH grid(dim, order);
    const double sb = std::sqrt(model.Cb);
    const double sw = std::sqrt(model.Cw / n0);
    Matrix q = Matrix::Zero(a * n2, a * n2);
    std::vector<double> v(static_cast<size_t>(a));
    grid.for_each([&](const double* x, double w) {
      double b = with_bias ? sb * x[0] : 0.0;
      const double* xw = x + (with_bias ? 1 : 0);
      double w1 = sw * xw[0];
      for (int h = 0; h < n2; ++h) {
        int s = pattern.s[static_cast<size_t>(h)];
        for (int al = 0; al < a; ++al) {
          double t = b;
          for (int r = 0; r < n0; ++r)
            t += sw * xw[r] * inputs.points[static_cast<size_t>(al)][r];
          v[static_cast<size_t>(al)] =
              s == 0 ? model.act.eval(t) : model.act.deriv(t) * w1;
        }
        for (int al = 0; al < a; ++al)
          for (int be = 0; be < a; ++be)
            q(h * a + al, h * a + be) += w * model.Cw *
                                         v[static_cast<size_t>(al)] *
                                         v[static_cast<size_t>(be)];
      }
    });
    return 0.5 * (q + q.transpose());
  }
};

UpsilonEvaluator::UpsilonEvaluator(const NetworkConfig& model,
                                   const InputSet& inputs,
                                   const DerivativePattern& pattern,
                                   const QuadratureSpec& spec)
    : impl_(std::make_unique<Impl>()) {
  model.validate();
  inputs.validate(model.n0);
  pattern.validate();
  impl_->model = model;
  impl_->inputs = inputs;
  impl_->pattern = pattern;
  impl_->spec = spec;
  impl_->a = inputs.size();
  impl_->n2 = static_cast<int>(pattern.s.size());
  impl_->build();
}

UpsilonEvaluator::~UpsilonEvaluator() = default;
UpsilonEvaluator::UpsilonEvaluator(UpsilonEvaluator&&) noexcept = default;

int UpsilonEvaluator::a_card() const { return impl_->a; }
int UpsilonEvaluator::n2() const { return impl_->n2; }

RateValue UpsilonEvaluator::value(const Matrix& theta) const {
  return value_grad(theta).value;
}

UpsilonEvaluator::ValueGrad UpsilonEvaluator::value_grad(
    const Matrix& theta) const {
  const Impl& im = *impl_;
  if (theta.rows() != im.a || theta.cols() != im.n2)
    throw DimensionMismatchError("upsilon: theta shape");
  const size_t count = im.logw.size();
  const size_t stride = static_cast<size_t>(im.a * im.n2);
  std::vector<double> ex(count);
  double m = -std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < count; ++k) {
    const double* p = &im.phi[k * stride];
    double qf = 0.0;
    for (int h = 0; h < im.n2; ++h) {
      double s = 0.0;
      for (int al = 0; al < im.a; ++al) s += theta(al, h) * p[h * im.a + al];
      qf += s * s;
    }
    double e = 0.5 * im.model.Cw * qf + im.logw[k];
    ex[k] = e;
    if (e > m) m = e;
    if (e > detail::kOverflowExp)
      return {RateValue::infinity(), Matrix::Zero(im.a, im.n2)};
  }
  double ssum = 0.0;
  for (size_t k = 0; k < count; ++k) {
    ex[k] = std::exp(ex[k] - m);
    ssum += ex[k];
  }
  Matrix grad = Matrix::Zero(im.a, im.n2);
  for (size_t k = 0; k < count; ++k) {
    const double* p = &im.phi[k * stride];
    double t = ex[k] / ssum;
    for (int h = 0; h < im.n2; ++h) {
      double s = 0.0;
      for (int al = 0; al < im.a; ++al) s += theta(al, h) * p[h * im.a + al];
      double c = im.model.Cw * s * t;
      for (int al = 0; al < im.a; ++al) grad(al, h) += c * p[h * im.a + al];
    }
  }
  double v = m + std::log(ssum);
  return {RateValue::of(std::max(v, 0.0)), grad};
}

const Matrix& UpsilonEvaluator::tilde_matrix(bool include_bias) const {
  auto& slot = include_bias ? impl_->q_bias : impl_->q_nobias;
  if (!slot) slot = impl_->build_tilde(include_bias);
  return *slot;
}

double UpsilonEvaluator::tilde(const Matrix& theta, bool include_bias) const {
  const Matrix& q = tilde_matrix(include_bias);
  Vector t(theta.size());
  for (int h = 0; h < impl_->n2; ++h)
    for (int al = 0; al < impl_->a; ++al) t[h * impl_->a + al] = theta(al, h);
  return 0.5 * t.dot(q * t);
}

}  // namespace ldpnn
