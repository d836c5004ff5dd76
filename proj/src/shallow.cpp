#include "ldpnn/shallow.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

#include "ldpnn/parallel.hpp"
#include "ldpnn/rates.hpp"
#include "ldpnn/simd/backend.hpp"

namespace ldpnn {

namespace {

constexpr double kSnapZero = 1e-12;
constexpr double kValueCap = 1e6;

using simd::NormalStream;

void check_shallow(const NetworkConfig& model, const InputSet& inputs,
                   const DerivativePattern& pattern) {
  model.validate();
  inputs.validate(model.n0);
  pattern.validate();
  if (model.L != 1) throw ConfigError("shallow: model.L must be 1");
  if (inputs.size() > 4 || model.n0 > 4 ||
      static_cast<int>(pattern.s.size()) > 4)
    throw ConfigError("shallow: quadrature limits are |A|,n0,n2 <= 4");
}

// One draw of F_{h.}(x_alpha); the stream layout (b, W_1..W_n0, What_1..n2)
// is shared with the tail harness.
void draw_F(NormalStream& ns, const NetworkConfig& model,
            const InputSet& inputs, const DerivativePattern& pattern,
            std::vector<double>& buf, Matrix& out) {
  const int a = inputs.size();
  const int n0 = model.n0;
  const int n2 = static_cast<int>(pattern.s.size());
  buf.resize(static_cast<size_t>(1 + n0 + n2));
  ns.fill(buf.data(), static_cast<std::uint64_t>(1 + n0 + n2));
  const double b = std::sqrt(model.Cb) * buf[0];
  const double sw = std::sqrt(model.Cw / n0);
  const double w1 = sw * buf[1];
  const double sc = std::sqrt(model.Cw);
  for (int h = 0; h < n2; ++h) {
    int s = pattern.s[static_cast<size_t>(h)];
    double what = buf[static_cast<size_t>(1 + n0 + h)];
    for (int al = 0; al < a; ++al) {
      double t = b;
      for (int r = 0; r < n0; ++r)
        t += sw * buf[static_cast<size_t>(1 + r)] *
             inputs.points[static_cast<size_t>(al)][r];
      double base = s == 0 ? model.act.eval(t) : model.act.deriv(t) * w1;
      out(al, h) = sc * what * base;
    }
  }
}

struct AscentResult {
  RateValue value;
  Matrix theta;
  bool diverged = false;
  int iters = 0;
};

// sup_theta {<f,theta> - Upsilon(theta)}, damped Newton with FD Hessian,
// mirroring the Legendre ascent of the rates module.
AscentResult upsilon_star(const UpsilonEvaluator& ev, const Matrix& f,
                          Matrix theta) {
  const int a = static_cast<int>(f.rows());
  const int n2 = static_cast<int>(f.cols());
  const int m = a * n2;

  auto flat = [&](const Matrix& t) {
    Vector v(m);
    for (int h = 0; h < n2; ++h)
      for (int al = 0; al < a; ++al) v[h * a + al] = t(al, h);
    return v;
  };
  auto unflat = [&](const Vector& v) {
    Matrix t(a, n2);
    for (int h = 0; h < n2; ++h)
      for (int al = 0; al < a; ++al) t(al, h) = v[h * a + al];
    return t;
  };

  struct Out {
    bool finite = false;
    double f = -std::numeric_limits<double>::infinity();
    Vector grad;
  };
  Vector fv = flat(f);
  auto eval = [&](const Vector& tv) -> Out {
    auto vg = ev.value_grad(unflat(tv));
    if (vg.value.is_infinite()) return {};
    Out o;
    o.finite = true;
    o.f = fv.dot(tv) - vg.value.value();
    o.grad = fv - flat(vg.grad);
    return o;
  };

  Vector u = flat(theta);
  Out cur = eval(u);
  if (!cur.finite) {
    u = Vector::Zero(m);
    cur = eval(u);
  }
  const double gtol = 1e-9 * (1.0 + fv.cwiseAbs().maxCoeff());
  double improvement = 0.0;
  for (int iter = 0; iter < 200; ++iter) {
    double gnorm = cur.grad.cwiseAbs().maxCoeff();
    if (gnorm <= gtol && improvement <= 1e-13 * (1.0 + std::abs(cur.f))) {
      double v = cur.f;
      if (std::abs(v) <= kSnapZero) v = 0.0;
      return {RateValue::of(std::max(v, 0.0)), unflat(u), false, iter};
    }
    if (cur.f > kValueCap) return {RateValue::infinity(), unflat(u), true, iter};

    const double h = 1e-5 * (1.0 + u.cwiseAbs().maxCoeff());
    Matrix hess(m, m);
    bool ok = true;
    for (int j = 0; j < m && ok; ++j) {
      Vector up = u;
      up[j] += h;
      Out ej = eval(up);
      if (!ej.finite) {
        ok = false;
        break;
      }
      hess.col(j) = -(ej.grad - cur.grad) / h;
    }
    Vector step;
    bool newton = false;
    if (ok) {
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
      Out cand = eval(u + t * step);
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
      if (gnorm <= 1e-6 * (1.0 + fv.cwiseAbs().maxCoeff())) {
        double v = cur.f;
        if (std::abs(v) <= kSnapZero) v = 0.0;
        return {RateValue::of(std::max(v, 0.0)), unflat(u), false, iter};
      }
      throw NonConvergenceError("upsilon_star: line search stalled", gnorm,
                                iter);
    }
  }
  throw NonConvergenceError("upsilon_star: max iterations",
                            cur.grad.cwiseAbs().maxCoeff(), 200);
}

}  // namespace

RateValue bias_rate(const Vector& y, const NetworkConfig& model,
                    const DerivativePattern& pattern) {
  pattern.validate();
  if (y.size() != static_cast<int>(pattern.s.size()))
    throw DimensionMismatchError("bias_rate: y size != n2");
  double total = 0.0;
  for (int h = 0; h < y.size(); ++h) {
    if (model.Cb != 0.0 && pattern.s[static_cast<size_t>(h)] == 0) {
      total += y[h] * y[h] / (2.0 * model.Cb);
    } else if (std::abs(y[h]) > kTolEq) {
      return RateValue::infinity();
    }
  }
  return RateValue::of(total);
}

std::vector<Matrix> sample_F(const NetworkConfig& model,
                             const InputSet& inputs,
                             const DerivativePattern& pattern,
                             std::uint64_t count, std::uint64_t seed) {
  check_shallow(model, inputs, pattern);
  const int a = inputs.size();
  const int n2 = static_cast<int>(pattern.s.size());
  std::vector<Matrix> out(static_cast<size_t>(count), Matrix::Zero(a, n2));
  std::vector<double> buf;
  for (std::uint64_t i = 0; i < count; ++i) {
    NormalStream ns(seed, simd::make_stream(simd::domain::shallow, 0, i));
    draw_F(ns, model, inputs, pattern, buf, out[static_cast<size_t>(i)]);
  }
  return out;
}

ShallowRateResult shallow_ld_rate_full(const Matrix& z,
                                       const NetworkConfig& model,
                                       const InputSet& inputs,
                                       const DerivativePattern& pattern,
                                       const QuadratureSpec& spec) {
  check_shallow(model, inputs, pattern);
  const int a = inputs.size();
  const int n2 = static_cast<int>(pattern.s.size());
  if (z.rows() != a || z.cols() != n2)
    throw DimensionMismatchError("shallow_ld_rate: z shape");

  UpsilonEvaluator ev(model, inputs, pattern, spec);
  std::vector<bool> free_y(static_cast<size_t>(n2));
  bool any_free = false;
  for (int h = 0; h < n2; ++h) {
    free_y[static_cast<size_t>(h)] =
        model.Cb > 0 && pattern.s[static_cast<size_t>(h)] == 0;
    any_free = any_free || free_y[static_cast<size_t>(h)];
  }

  Vector y = Vector::Zero(n2);
  Matrix theta = Matrix::Zero(a, n2);
  ShallowRateResult res;
  AscentResult asc;
  for (int outer = 0; outer < 50; ++outer) {
    Matrix f = z;
    for (int h = 0; h < n2; ++h) f.col(h).array() -= y[h];
    asc = upsilon_star(ev, f, theta);
    res.outer_iters = outer + 1;
    if (asc.diverged) {
      res.value = RateValue::infinity();
      res.diverged = true;
      res.y_opt = y;
      res.theta_opt = asc.theta;
      return res;
    }
    theta = asc.theta;
    if (!any_free) break;
    // Exact quadratic step: minimize y^2/(2Cb) - <theta, y> coordinate-wise.
    Vector ynew = Vector::Zero(n2);
    for (int h = 0; h < n2; ++h)
      if (free_y[static_cast<size_t>(h)])
        ynew[h] = model.Cb * theta.col(h).sum();
    double delta = (ynew - y).cwiseAbs().maxCoeff();
    y = ynew;
    if (delta <= 1e-8) break;
  }
  RateValue bias = bias_rate(y, model, pattern);
  double v = bias.value() + asc.value.value();
  if (std::abs(v) <= kSnapZero) v = 0.0;
  res.value = RateValue::of(v);
  res.y_opt = y;
  res.theta_opt = theta;
  return res;
}

RateValue shallow_ld_rate(const Matrix& z, const NetworkConfig& model,
                          const InputSet& inputs,
                          const DerivativePattern& pattern,
                          const QuadratureSpec& spec) {
  return shallow_ld_rate_full(z, model, inputs, pattern, spec).value;
}

RateValue shallow_md_rate(const Matrix& z, const NetworkConfig& model,
                          const InputSet& inputs,
                          const DerivativePattern& pattern,
                          const QuadratureSpec& spec,
                          bool include_bias_in_upsilon_tilde) {
  check_shallow(model, inputs, pattern);
  const int a = inputs.size();
  const int n2 = static_cast<int>(pattern.s.size());
  if (z.rows() != a || z.cols() != n2)
    throw DimensionMismatchError("shallow_md_rate: z shape");

  UpsilonEvaluator ev(model, inputs, pattern, spec);
  const Matrix& q = ev.tilde_matrix(include_bias_in_upsilon_tilde);

  double total = 0.0;
  for (int h = 0; h < n2; ++h) {
    Matrix qh = q.block(h * a, h * a, a, a);
    Eigen::SelfAdjointEigenSolver<Matrix> es(qh);
    const Vector& lam = es.eigenvalues();
    const Matrix& v = es.eigenvectors();
    const double tol = psd_tol(qh);

    Vector zh = z.col(h);
    Vector ones = Vector::Ones(a);
    Vector cz = v.transpose() * zh;
    Vector c1 = v.transpose() * ones;

    const bool free_h =
        model.Cb > 0 && pattern.s[static_cast<size_t>(h)] == 0;

    // Null-space components determine feasibility (and, when the all-ones
    // direction leaks into the null space, pin the bias split y).
    double r1_sq = 0.0, rz_sq = 0.0, r1_dot_rz = 0.0;
    for (int i = 0; i < a; ++i) {
      if (lam[i] <= tol) {
        r1_sq += c1[i] * c1[i];
        rz_sq += cz[i] * cz[i];
        r1_dot_rz += c1[i] * cz[i];
      }
    }
    const double ztol = kRangeTol * (1.0 + zh.norm());

    double yh = 0.0;
    if (free_h) {
      if (std::sqrt(r1_sq) <= kRangeTol * (1.0 + std::sqrt(static_cast<double>(a)))) {
        if (std::sqrt(rz_sq) > ztol) return RateValue::infinity();
        double q_inv_1z = 0.0, q_inv_11 = 0.0;
        for (int i = 0; i < a; ++i) {
          if (lam[i] > tol) {
            q_inv_1z += c1[i] * cz[i] / lam[i];
            q_inv_11 += c1[i] * c1[i] / lam[i];
          }
        }
        yh = q_inv_1z / (1.0 / model.Cb + q_inv_11);
      } else {
        yh = r1_dot_rz / r1_sq;
        double resid = 0.0;
        for (int i = 0; i < a; ++i)
          if (lam[i] <= tol) {
            double d = cz[i] - yh * c1[i];
            resid += d * d;
          }
        if (std::sqrt(resid) > ztol) return RateValue::infinity();
      }
    } else {
      if (std::sqrt(rz_sq) > ztol) return RateValue::infinity();
    }

    double quad = 0.0;
    for (int i = 0; i < a; ++i) {
      if (lam[i] > tol) {
        double f = cz[i] - yh * c1[i];
        quad += f * f / lam[i];
      }
    }
    total += 0.5 * quad;
    if (free_h) total += yh * yh / (2.0 * model.Cb);
  }
  if (std::abs(total) <= kSnapZero) total = 0.0;
  return RateValue::of(total);
}

TailRun shallow_sensitivity_tail(const NetworkConfig& model,
                                 const InputSet& inputs,
                                 const DerivativePattern& pattern,
                                 const WidthSchedule& schedule,
                                 const std::vector<double>& thresholds,
                                 const ScalingSpec& scaling,
                                 std::uint64_t samples, std::uint64_t seed) {
  check_shallow(model, inputs, pattern);
  const int a = inputs.size();
  const int n0 = model.n0;
  const int n2 = static_cast<int>(pattern.s.size());
  const size_t nt = thresholds.size();
  const int s0 = pattern.s[0];
  const double sw = std::sqrt(model.Cw / n0);
  const double sc = std::sqrt(model.Cw);
  const Vector& x0 = inputs.points[0];
  const int per_j = 1 + n0 + n2;

  TailRun run;
  run.thresholds = thresholds;

  for (size_t wi = 0; wi < schedule.pivot_widths.size(); ++wi) {
    const std::uint64_t n = schedule.pivot_widths[wi];
    const double speed = scaling.speed(n);
    const double zmul = scaling.mode == ScalingSpec::ld
                            ? std::sqrt(static_cast<double>(n))
                            : std::pow(static_cast<double>(n), scaling.rho / 2);
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));

    auto chunks = map_chunks<std::vector<std::uint64_t>>(
        samples, 4096,
        [&](std::uint64_t, std::uint64_t begin, std::uint64_t end) {
          std::vector<std::uint64_t> hits(nt, 0);
          std::vector<double> buf;
          const std::uint64_t block = 2048;
          for (std::uint64_t i = begin; i < end; ++i) {
            NormalStream ns(
                seed, simd::make_stream(simd::domain::shallow,
                                        static_cast<std::uint64_t>(wi + 1), i));
            // Output bias first, then n unit draws of (b, W_1..n0, What_1..n2).
            double b2 = ns.next();
            double sum_f = 0.0;
            std::uint64_t done = 0;
            while (done < n) {
              std::uint64_t m = std::min(block, n - done);
              buf.resize(static_cast<size_t>(m) * static_cast<size_t>(per_j));
              ns.fill(buf.data(), m * static_cast<std::uint64_t>(per_j));
              for (std::uint64_t j = 0; j < m; ++j) {
                const double* d = &buf[static_cast<size_t>(j) * static_cast<size_t>(per_j)];
                double t = std::sqrt(model.Cb) * d[0];
                for (int r = 0; r < n0; ++r) t += sw * d[1 + r] * x0[r];
                double base = s0 == 0 ? model.act.eval(t)
                                      : model.act.deriv(t) * (sw * d[1]);
                sum_f += sc * d[1 + n0] * base;
              }
              done += m;
            }
            double dval = (s0 == 0 ? std::sqrt(model.Cb) * b2 : 0.0) +
                          inv_sqrt_n * sum_f;
            for (size_t t = 0; t < nt; ++t)
              if (dval >= thresholds[t] * zmul) ++hits[t];
          }
          return hits;
        });

    std::vector<std::uint64_t> hits(nt, 0);
    for (const auto& c : chunks)
      for (size_t t = 0; t < nt; ++t) hits[t] += c[t];

    for (size_t t = 0; t < nt; ++t) {
      TailEstimate e;
      e.n = n;
      e.threshold = thresholds[t];
      e.hits = hits[t];
      e.samples = samples;
      e.speed = speed;
      double p = static_cast<double>(hits[t]) / static_cast<double>(samples);
      e.log_prob =
          hits[t] ? std::log(p) : -std::numeric_limits<double>::infinity();
      e.stderr_log = hits[t]
                         ? std::sqrt((1.0 - p) / static_cast<double>(hits[t]))
                         : std::numeric_limits<double>::infinity();
      e.usable = hits[t] >= 10;
      run.estimates.push_back(e);
    }
  }

  for (size_t t = 0; t < nt; ++t) {
    std::vector<double> xs, ys, ws;
    for (size_t wi = 0; wi < schedule.pivot_widths.size(); ++wi) {
      const TailEstimate& e = run.estimates[wi * nt + t];
      if (!e.usable) continue;
      xs.push_back(e.speed);
      ys.push_back(-e.log_prob);
      double p = static_cast<double>(e.hits) / static_cast<double>(e.samples);
      ws.push_back(static_cast<double>(e.hits) / (1.0 - p));
    }
    run.fits.push_back(fit_wls(xs, ys, ws));
  }
  return run;
}

}  // namespace ldpnn
