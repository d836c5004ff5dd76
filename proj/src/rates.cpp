#include "ldpnn/rates.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>

#include "kappa_nodes.hpp"
#include "ldpnn/recursion.hpp"

namespace ldpnn {

namespace {

constexpr double kValueCap = 1e6;
constexpr int kMaxIter = 200;
constexpr double kSnapZero = 1e-12;

bool is_relu(const Activation& act) {
  return act.kernel == simd::ActKernel::relu;
}

// --- symmetric matrix <-> free vector (upper triangle, diag first weights) --

int sym_free_dim(int d) { return d * (d + 1) / 2; }

void sym_to_vec(const Matrix& m, Vector& u) {
  const int d = static_cast<int>(m.rows());
  int k = 0;
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) u[k++] = m(i, j);
}

Matrix vec_to_sym(const Vector& u, int d) {
  Matrix m(d, d);
  int k = 0;
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      m(i, j) = u[k];
      m(j, i) = u[k];
      ++k;
    }
  return m;
}

// Multiplicity of each free coordinate in <eta,y> = sum_ab eta_ab y_ab.
Vector sym_weights(int d) {
  Vector c(sym_free_dim(d));
  int k = 0;
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) c[k++] = (i == j) ? 1.0 : 2.0;
  return c;
}

struct EvalOut {
  bool finite = false;
  double f = -std::numeric_limits<double>::infinity();
  Vector grad;
};

// --- deterministic pseudo-random for multistarts ---------------------------

std::uint64_t splitmix64(std::uint64_t& s) {
  s += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = s;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double uniform01(std::uint64_t& s) {
  return static_cast<double>(splitmix64(s) >> 11) * 0x1p-53;
}

}  // namespace

// ---------------------------------------------------------------------------
// Legendre transform

LegendreResult legendre_full(const SymMatrix& y, const CovMatrix& q,
                             const Activation& act,
                             const QuadratureSpec& spec) {
  if (y.dim() != q.dim())
    throw DimensionMismatchError("legendre: y and q dimensions differ");
  const int d = q.dim();

  // Fully degenerate q: the pre-activations are sigma(0) a.s. and kappa is
  // linear, so the transform collapses to Delta.
  if (q.eigvals().maxCoeff() <= psd_tol(q.base().mat())) {
    double s0 = act.eval(0.0);
    Matrix center = Matrix::Constant(d, d, s0 * s0);
    RateValue v = delta_rate(y.mat(), center);
    return {v, SymMatrix::zero(d), 0, 0.0, v.is_infinite()};
  }

  const int m = sym_free_dim(d);
  const Vector c = sym_weights(d);
  Vector yv(m);
  sym_to_vec(y.mat(), yv);

  // Node tables: the tensor grid is eta-independent and built once; the 1-D
  // window adapts to eta and is rebuilt per evaluation (it is cheap).
  detail::SigmaNodes fixed_nodes;
  if (d >= 2) fixed_nodes = detail::build_kappa_nodes(q, act, spec, 0.0);

  auto eval = [&](const Vector& u) -> EvalOut {
    Matrix eta = vec_to_sym(u, d);
    EvalOut out;
    if (detail::relu_scalar_divergent(SymMatrix(eta), q, act)) return out;
    detail::KappaEval ke;
    if (d == 1) {
      detail::SigmaNodes nodes = detail::build_kappa_nodes(
          q, act, spec, detail::eta_scale_bound(eta, q, act));
      ke = detail::kappa_eval_nodes(nodes, eta, true);
    } else {
      ke = detail::kappa_eval_nodes(fixed_nodes, eta, true);
    }
    if (ke.overflow) return out;
    out.finite = true;
    out.f = -ke.value;
    out.grad = Vector(m);
    Vector gk(m);
    sym_to_vec(ke.grad, gk);
    for (int k = 0; k < m; ++k) {
      out.f += c[k] * u[k] * yv[k];
      out.grad[k] = c[k] * (yv[k] - gk[k]);
    }
    return out;
  };

  Vector u = Vector::Zero(m);
  EvalOut cur = eval(u);
  const double gtol = 1e-9 * (1.0 + yv.cwiseAbs().maxCoeff());

  // Boundary suprema (e.g. scalar ReLU at y = 0) are approached along an
  // eta ray with vanishing gradient; require the value to stall too.
  double improvement = 0.0;
  for (int iter = 0; iter < kMaxIter; ++iter) {
    double gnorm = cur.grad.cwiseAbs().maxCoeff();
    if (gnorm <= gtol && improvement <= 1e-13 * (1.0 + std::abs(cur.f))) {
      double v = cur.f;
      if (std::abs(v) <= kSnapZero) v = 0.0;
      return {RateValue::of(std::max(v, 0.0)), SymMatrix(vec_to_sym(u, d)),
              iter, gnorm, false};
    }
    if (cur.f > kValueCap)
      return {RateValue::infinity(), SymMatrix(vec_to_sym(u, d)), iter, gnorm,
              true};

    // Hessian of kappa in the free coordinates by forward differences of the
    // gradient; fall back to plain gradient ascent when it is unusable.
    const double h = 1e-5 * (1.0 + u.cwiseAbs().maxCoeff());
    Matrix hess(m, m);
    bool hess_ok = true;
    for (int j = 0; j < m && hess_ok; ++j) {
      Vector up = u;
      up[j] += h;
      EvalOut ej = eval(up);
      if (!ej.finite) {
        hess_ok = false;
        break;
      }
      hess.col(j) = -(ej.grad - cur.grad) / h;
    }
    Vector step;
    bool newton = false;
    if (hess_ok) {
      Matrix hs = 0.5 * (hess + hess.transpose());
      Eigen::LDLT<Matrix> ldlt(hs);
      if (ldlt.info() == Eigen::Success) {
        Vector s = ldlt.solve(cur.grad);
        if (s.allFinite() && s.dot(cur.grad) > 0) {
          step = s;
          newton = true;
        }
      }
    }
    if (!newton) step = cur.grad;

    double t = 1.0;
    bool moved = false;
    const double slope = cur.grad.dot(step);
    for (int ls = 0; ls < 60; ++ls) {
      EvalOut cand = eval(u + t * step);
      if (cand.finite && cand.f > cur.f + 1e-4 * t * slope) {
        improvement = cand.f - cur.f;
        u += t * step;
        cur = cand;
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) {
      if (gnorm <= 1e-6 * (1.0 + yv.cwiseAbs().maxCoeff())) {
        double v = cur.f;
        if (std::abs(v) <= kSnapZero) v = 0.0;
        return {RateValue::of(std::max(v, 0.0)), SymMatrix(vec_to_sym(u, d)),
                iter, gnorm, false};
      }
      throw NonConvergenceError("legendre: line search stalled", gnorm, iter);
    }
  }
  double gnorm = cur.grad.cwiseAbs().maxCoeff();
  if (gnorm <= 1e-6 * (1.0 + yv.cwiseAbs().maxCoeff())) {
    double v = cur.f;
    if (std::abs(v) <= kSnapZero) v = 0.0;
    return {RateValue::of(std::max(v, 0.0)), SymMatrix(vec_to_sym(u, d)),
            kMaxIter, gnorm, false};
  }
  throw NonConvergenceError("legendre: max iterations", gnorm, kMaxIter);
}

RateValue legendre(const SymMatrix& y, const CovMatrix& q,
                   const Activation& act, const QuadratureSpec& spec) {
  return legendre_full(y, q, act, spec).value;
}

// ---------------------------------------------------------------------------
// Scalar ReLU closed forms

double f_relu(double z) { return z * z * z / (z + 1.0); }

double f_inverse(double u) {
  if (!(u > 0)) throw std::domain_error("f_inverse: u <= 0");
  // z^3 - u z - u = 0, unique positive root.
  double z;
  double disc = u * u / 4.0 - u * u * u / 27.0;
  if (disc >= 0) {
    double s = std::sqrt(disc);
    z = std::cbrt(u / 2.0 + s) + std::cbrt(u / 2.0 - s);
  } else {
    double arg = 1.5 * std::sqrt(3.0 / u);
    arg = std::clamp(arg, -1.0, 1.0);
    z = 2.0 * std::sqrt(u / 3.0) * std::cos(std::acos(arg) / 3.0);
  }
  for (int k = 0; k < 2; ++k) {
    double p = z * z * z - u * z - u;
    double dp = 3.0 * z * z - u;
    if (dp != 0.0) z -= p / dp;
  }
  return z;
}

RateValue kappa_star_relu_scalar(double y, double q) {
  if (!(q > 0)) throw std::domain_error("kappa_star_relu_scalar: q <= 0");
  if (y < 0) return RateValue::infinity();
  if (y == 0) return RateValue::of(std::log(2.0));
  double z = f_inverse(y / q);
  double eta = (1.0 - 1.0 / (z * z)) / (2.0 * q);
  double v = eta * y - std::log((z + 1.0) / 2.0);
  if (std::abs(v) <= kSnapZero) v = 0.0;
  return RateValue::of(std::max(v, 0.0));
}

RateValue delta_rate(const Matrix& r, const Matrix& center) {
  if (r.rows() != center.rows() || r.cols() != center.cols())
    throw DimensionMismatchError("delta_rate: shape mismatch");
  return (r - center).norm() <= kTolEq ? RateValue::of(0.0)
                                       : RateValue::infinity();
}

// ---------------------------------------------------------------------------
// Conditional rate J

RateValue conditional_rate_J(const CovMatrix& g_next, const CovMatrix& g_prev,
                             double gamma, const NetworkConfig& model,
                             const QuadratureSpec& spec) {
  if (g_next.dim() != g_prev.dim())
    throw DimensionMismatchError("conditional_rate_J: dims differ");
  if (!(gamma >= 1.0)) throw ConfigError("conditional_rate_J: gamma < 1");
  const int d = g_next.dim();
  const Matrix ones = Matrix::Ones(d, d);

  if (std::isinf(gamma)) {
    SymMatrix y = y_of_q(g_prev, model.act, spec);
    return delta_rate(g_next.base().mat(),
                      model.Cb * ones + model.Cw * y.mat());
  }

  Matrix yarg = (g_next.base().mat() - model.Cb * ones) / model.Cw;
  if (d == 1 && is_relu(model.act)) {
    double qv = g_prev.base()(0, 0);
    if (qv <= 0) return delta_rate(yarg, Matrix::Zero(1, 1));
    return scale_rate(gamma, kappa_star_relu_scalar(yarg(0, 0), qv));
  }
  return scale_rate(gamma, legendre(SymMatrix(yarg), g_prev, model.act, spec));
}

// ---------------------------------------------------------------------------
// Nelder-Mead (deterministic)

namespace {

struct NmResult {
  Vector x;
  double f = std::numeric_limits<double>::infinity();
  int iters = 0;
};

template <class F>
NmResult nelder_mead(F&& fn, const Vector& x0, double step, int max_iter,
                     double ftol, double xtol) {
  const int n = static_cast<int>(x0.size());
  std::vector<Vector> xs(static_cast<size_t>(n + 1), x0);
  std::vector<double> fs(static_cast<size_t>(n + 1));
  for (int i = 1; i <= n; ++i) xs[static_cast<size_t>(i)][i - 1] += step;
  for (int i = 0; i <= n; ++i) fs[static_cast<size_t>(i)] = fn(xs[static_cast<size_t>(i)]);

  std::vector<int> ord(static_cast<size_t>(n + 1));
  auto sort_ord = [&] {
    for (int i = 0; i <= n; ++i) ord[static_cast<size_t>(i)] = i;
    std::stable_sort(ord.begin(), ord.end(), [&](int a, int b) {
      return fs[static_cast<size_t>(a)] < fs[static_cast<size_t>(b)];
    });
  };

  int iter = 0;
  for (; iter < max_iter; ++iter) {
    sort_ord();
    int best = ord[0], worst = ord[static_cast<size_t>(n)], second = ord[static_cast<size_t>(n - 1)];
    double fb = fs[static_cast<size_t>(best)], fw = fs[static_cast<size_t>(worst)];
    double spread = fw - fb;
    double diam = 0.0;
    for (int i = 1; i <= n; ++i)
      diam = std::max(diam, (xs[static_cast<size_t>(ord[static_cast<size_t>(i)])] - xs[static_cast<size_t>(best)])
                                .cwiseAbs()
                                .maxCoeff());
    if ((std::isfinite(spread) && spread <= ftol * (1.0 + std::abs(fb)) &&
         diam <= xtol * (1.0 + xs[static_cast<size_t>(best)].cwiseAbs().maxCoeff())))
      break;

    Vector centroid = Vector::Zero(n);
    for (int i = 0; i <= n; ++i)
      if (i != worst) centroid += xs[static_cast<size_t>(i)];
    centroid /= n;

    Vector xr = centroid + (centroid - xs[static_cast<size_t>(worst)]);
    double fr = fn(xr);
    if (fr < fs[static_cast<size_t>(best)]) {
      Vector xe = centroid + 2.0 * (centroid - xs[static_cast<size_t>(worst)]);
      double fe = fn(xe);
      if (fe < fr) {
        xs[static_cast<size_t>(worst)] = xe;
        fs[static_cast<size_t>(worst)] = fe;
      } else {
        xs[static_cast<size_t>(worst)] = xr;
        fs[static_cast<size_t>(worst)] = fr;
      }
      continue;
    }
    if (fr < fs[static_cast<size_t>(second)]) {
      xs[static_cast<size_t>(worst)] = xr;
      fs[static_cast<size_t>(worst)] = fr;
      continue;
    }
    Vector xc = centroid + 0.5 * (xs[static_cast<size_t>(worst)] - centroid);
    double fc = fn(xc);
    if (fc < fs[static_cast<size_t>(worst)]) {
      xs[static_cast<size_t>(worst)] = xc;
      fs[static_cast<size_t>(worst)] = fc;
      continue;
    }
    for (int i = 0; i <= n; ++i) {
      if (i == best) continue;
      xs[static_cast<size_t>(i)] =
          xs[static_cast<size_t>(best)] + 0.5 * (xs[static_cast<size_t>(i)] - xs[static_cast<size_t>(best)]);
      fs[static_cast<size_t>(i)] = fn(xs[static_cast<size_t>(i)]);
    }
  }
  sort_ord();
  return {xs[static_cast<size_t>(ord[0])], fs[static_cast<size_t>(ord[0])], iter};
}

// Chain search shared by I_G and I_Z: optimize over `free_count` matrices m
// with g_l = Cb 1 + Cw m^T m, objective supplied by the caller.
struct ChainSearch {
  const NetworkConfig& model;
  const InputSet& inputs;
  const QuadratureSpec& spec;
  int d;
  int free_count;

  std::vector<SymMatrix> decode(const Vector& u) const {
    std::vector<SymMatrix> gs;
    gs.reserve(static_cast<size_t>(free_count));
    for (int l = 0; l < free_count; ++l) {
      Matrix m(d, d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) m(i, j) = u[l * d * d + i * d + j];
      Matrix g = model.Cb * Matrix::Ones(d, d) + model.Cw * m.transpose() * m;
      gs.emplace_back(g);
    }
    return gs;
  }

  Vector encode_from_targets(const std::vector<Matrix>& targets) const {
    Vector u(free_count * d * d);
    for (int l = 0; l < free_count; ++l) {
      Matrix psd =
          (targets[static_cast<size_t>(l)] - model.Cb * Matrix::Ones(d, d)) / model.Cw;
      Matrix m = sqrt_psd(SymMatrix(psd)).mat();
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) u[l * d * d + i * d + j] = m(i, j);
    }
    return u;
  }

  std::vector<Vector> starts(double box, std::uint64_t salt) const {
    std::vector<Vector> out;
    // Limit chain and the g^(0)-constant chain first, then randomized.
    std::vector<CovMatrix> ghat = limit_cov_chain(model, inputs, spec);
    CovMatrix g0 = initial_cov(model, inputs);
    std::vector<Matrix> t1, t2;
    for (int l = 0; l < free_count; ++l) {
      t1.push_back(ghat[static_cast<size_t>(l)].base().mat());
      t2.push_back(g0.base().mat());
    }
    out.push_back(encode_from_targets(t1));
    out.push_back(encode_from_targets(t2));
    std::uint64_t s = 0x5eedc0de00000001ull + salt;
    for (int k = 0; k < 6; ++k) {
      Vector u(free_count * d * d);
      for (int i = 0; i < u.size(); ++i) u[i] = box * (2.0 * uniform01(s) - 1.0);
      out.push_back(u);
    }
    return out;
  }
};

double search_box(const NetworkConfig& model, double extra) {
  if (model.act.bounded()) {
    double sup = model.act.sup_norm.value_or(1.0);
    return sup;
  }
  return std::sqrt(std::max(extra, 1.0) / model.Cw);
}

}  // namespace

// ---------------------------------------------------------------------------
// Chained rates

ChainResult chain_rate_IG_full(const CovMatrix& g_L, const NetworkConfig& model,
                               const InputSet& inputs,
                               const QuadratureSpec& spec) {
  model.validate();
  inputs.validate(model.n0);
  const int d = inputs.size();
  if (g_L.dim() != d)
    throw DimensionMismatchError("chain_rate_IG: g_L dim != |A|");
  if (model.L > 3 || d > 3)
    throw ConfigError("chain_rate_IG: desk-scale limits are L <= 3, |A| <= 3");

  CovMatrix g0 = initial_cov(model, inputs);
  auto gammas = model.ratios.gammas;

  if (model.L == 1) {
    RateValue v = conditional_rate_J(g_L, g0, gammas[0], model, spec);
    return {v, {}, -1};
  }

  ChainSearch cs{model, inputs, spec, d, model.L - 1};
  auto objective = [&](const Vector& u) -> double {
    try {
      std::vector<SymMatrix> gs = cs.decode(u);
      double total = 0.0;
      CovMatrix prev = g0;
      for (int l = 0; l < cs.free_count; ++l) {
        CovMatrix cur(gs[static_cast<size_t>(l)], model.Cb);
        RateValue j = conditional_rate_J(cur, prev, gammas[static_cast<size_t>(l)], model, spec);
        if (j.is_infinite()) return std::numeric_limits<double>::infinity();
        total += j.value();
        prev = cur;
      }
      RateValue last =
          conditional_rate_J(g_L, prev, gammas[static_cast<size_t>(model.L - 1)], model, spec);
      if (last.is_infinite()) return std::numeric_limits<double>::infinity();
      return total + last.value();
    } catch (const NonConvergenceError&) {
      return std::numeric_limits<double>::infinity();
    } catch (const NotPsdError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  double box = search_box(
      model, 10.0 * (std::abs(g_L.base()(0, 0)) + g0.base()(0, 0) + 1.0));
  double best = std::numeric_limits<double>::infinity();
  Vector best_u;
  int best_start = -1;
  int si = 0;
  for (const Vector& u0 : cs.starts(box, 0)) {
    NmResult r = nelder_mead(objective, u0, 0.1 * (1.0 + box),
                             400 * static_cast<int>(u0.size()), 1e-12, 1e-10);
    if (r.f < best) {
      best = r.f;
      best_u = r.x;
      best_start = si;
    }
    ++si;
  }
  if (!std::isfinite(best))
    return {RateValue::infinity(), {}, best_start};
  return {RateValue::of(std::max(best, 0.0)), cs.decode(best_u), best_start};
}

RateValue chain_rate_IG(const CovMatrix& g_L, const NetworkConfig& model,
                        const InputSet& inputs, const QuadratureSpec& spec) {
  return chain_rate_IG_full(g_L, model, inputs, spec).value;
}

OutputRateResult output_rate_IZ_full(const Matrix& z,
                                     const NetworkConfig& model,
                                     const InputSet& inputs,
                                     const QuadratureSpec& spec) {
  model.validate();
  inputs.validate(model.n0);
  const int d = inputs.size();
  if (z.rows() != d) throw DimensionMismatchError("output_rate_IZ: z rows");
  if (model.L > 3 || d > 3)
    throw ConfigError("output_rate_IZ: desk-scale limits are L <= 3, |A| <= 3");

  CovMatrix g0 = initial_cov(model, inputs);
  auto gammas = model.ratios.gammas;

  // Joint search over the whole chain including g^(L); the inner quadratic
  // over r is solved exactly by min_norm_preimage (this realizes the scalar
  // fast path of Remark-style |A| = 1 formulas, 0/0 = 0 included).
  ChainSearch cs{model, inputs, spec, d, model.L};
  auto objective = [&](const Vector& u) -> double {
    try {
      std::vector<SymMatrix> gs = cs.decode(u);
      double total = 0.0;
      CovMatrix prev = g0;
      for (int l = 0; l < cs.free_count; ++l) {
        CovMatrix cur(gs[static_cast<size_t>(l)], model.Cb);
        RateValue j = conditional_rate_J(cur, prev, gammas[static_cast<size_t>(l)], model, spec);
        if (j.is_infinite()) return std::numeric_limits<double>::infinity();
        total += j.value();
        prev = cur;
      }
      MinNormResult mn = min_norm_preimage(prev, z);
      if (mn.value.is_infinite())
        return std::numeric_limits<double>::infinity();
      return total + mn.value.value();
    } catch (const NonConvergenceError&) {
      return std::numeric_limits<double>::infinity();
    } catch (const NotPsdError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  double box = search_box(model, 10.0 * (z.cwiseAbs().maxCoeff() +
                                         g0.base()(0, 0) + 1.0));
  double best = std::numeric_limits<double>::infinity();
  Vector best_u;
  int best_start = -1;
  int si = 0;
  for (const Vector& u0 : cs.starts(box, 1)) {
    NmResult r = nelder_mead(objective, u0, 0.1 * (1.0 + box),
                             400 * static_cast<int>(u0.size()), 1e-12, 1e-10);
    if (r.f < best) {
      best = r.f;
      best_u = r.x;
      best_start = si;
    }
    ++si;
  }
  OutputRateResult out;
  out.best_start = best_start;
  if (!std::isfinite(best)) {
    out.value = RateValue::infinity();
    return out;
  }
  out.value = RateValue::of(std::max(best, 0.0));
  out.chain = cs.decode(best_u);
  CovMatrix gl(out.chain.back(), model.Cb);
  MinNormResult mn = min_norm_preimage(gl, z);
  out.r = mn.minimizer;
  return out;
}

RateValue output_rate_IZ(const Matrix& z, const NetworkConfig& model,
                         const InputSet& inputs, const QuadratureSpec& spec) {
  return output_rate_IZ_full(z, model, inputs, spec).value;
}

RateValue md_rate(const Matrix& z, const CovMatrix& ghat_L) {
  return min_norm_preimage(ghat_L, z).value;
}

}  // namespace ldpnn
