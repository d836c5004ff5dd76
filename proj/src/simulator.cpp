#include "ldpnn/simulator.hpp"

#include <cmath>
#include <cstdlib>

#include "ldpnn/parallel.hpp"
#include "ldpnn/recursion.hpp"
#include "ldpnn/simd/backend.hpp"

namespace ldpnn {

namespace {

constexpr std::uint64_t kChunk = 4096;

using simd::NormalStream;

// sum_{j<count} sigma(scale * N_j)^2 from the stream; vector kernel when the
// activation exposes one, buffered evaluation otherwise.
double layer_sum_sq(NormalStream& ns, std::uint64_t count, double scale,
                    const Activation& act) {
  if (act.kernel != simd::ActKernel::custom || act.raw_eval != nullptr)
    return ns.sum_sq_act(count, scale, act.kernel, act.raw_eval);
  double acc = 0.0;
  std::vector<double> buf(1024);
  std::uint64_t done = 0;
  while (done < count) {
    std::uint64_t m = std::min<std::uint64_t>(1024, count - done);
    ns.fill(buf.data(), m);
    for (std::uint64_t j = 0; j < m; ++j) {
      double v = act.eval(scale * buf[j]);
      acc += v * v;
    }
    done += m;
  }
  return acc;
}

std::vector<std::uint64_t> all_layer_widths(const NetworkConfig& model,
                                            std::uint64_t n) {
  std::vector<std::uint64_t> w(static_cast<size_t>(model.L));
  for (int l = 1; l <= model.L; ++l)
    w[static_cast<size_t>(l - 1)] = layer_width(model.ratios, l, n);
  return w;
}

// Scalar (|A| = 1) covariance chain, the hot path of tail estimation.
double scalar_chain(NormalStream& ns, const NetworkConfig& model, double g0,
                    const std::vector<std::uint64_t>& widths) {
  double g = g0;
  for (std::uint64_t k : widths) {
    double sum = layer_sum_sq(ns, k, std::sqrt(g), model.act);
    g = model.Cb + model.Cw * sum / static_cast<double>(k);
  }
  return g;
}

// General covariance chain on raw matrices (no per-layer spectral checks;
// the entries are a Gram average plus Cb, PSD by construction).
Matrix matrix_chain(NormalStream& ns, const NetworkConfig& model,
                    const Matrix& g0,
                    const std::vector<std::uint64_t>& widths, Matrix* rt_out) {
  const int a = static_cast<int>(g0.rows());
  Matrix g = g0;
  Matrix rt;
  std::vector<double> buf;
  std::vector<double> sig(static_cast<size_t>(a));
  for (std::uint64_t k : widths) {
    rt = sqrt_psd(SymMatrix(g)).mat();
    Matrix acc = Matrix::Zero(a, a);
    std::uint64_t done = 0;
    const std::uint64_t block = 1024;
    buf.resize(static_cast<size_t>(block * static_cast<std::uint64_t>(a)));
    while (done < k) {
      std::uint64_t m = std::min(block, k - done);
      ns.fill(buf.data(), m * static_cast<std::uint64_t>(a));
      for (std::uint64_t j = 0; j < m; ++j) {
        for (int al = 0; al < a; ++al) {
          double pre = 0.0;
          for (int ga = 0; ga < a; ++ga)
            pre += rt(al, ga) * buf[j * static_cast<std::uint64_t>(a) +
                                    static_cast<std::uint64_t>(ga)];
          sig[static_cast<size_t>(al)] = model.act.eval(pre);
        }
        for (int al = 0; al < a; ++al)
          for (int be = al; be < a; ++be)
            acc(al, be) += sig[static_cast<size_t>(al)] * sig[static_cast<size_t>(be)];
      }
      done += m;
    }
    for (int al = 0; al < a; ++al)
      for (int be = al; be < a; ++be) {
        double v = model.Cb + model.Cw * acc(al, be) / static_cast<double>(k);
        g(al, be) = v;
        g(be, al) = v;
      }
  }
  if (rt_out) *rt_out = sqrt_psd(SymMatrix(g)).mat();
  return g;
}

void direct_sample(NormalStream& ns, const NetworkConfig& model,
                   const InputSet& inputs,
                   const std::vector<std::uint64_t>& widths, double* out) {
  const int a = inputs.size();
  const int n0 = model.n0;
  const double sb = std::sqrt(model.Cb);
  std::vector<double> cur, nxt, buf, sig;
  // layer 1
  std::uint64_t n1 = widths[0];
  cur.resize(static_cast<size_t>(n1) * static_cast<size_t>(a));
  buf.resize(static_cast<size_t>(1 + n0));
  const double sw0 = std::sqrt(model.Cw / n0);
  for (std::uint64_t i = 0; i < n1; ++i) {
    ns.fill(buf.data(), static_cast<std::uint64_t>(1 + n0));
    for (int al = 0; al < a; ++al) {
      double z = sb * buf[0];
      for (int r = 0; r < n0; ++r)
        z += sw0 * buf[static_cast<size_t>(1 + r)] *
             inputs.points[static_cast<size_t>(al)][r];
      cur[static_cast<size_t>(i) * static_cast<size_t>(a) + static_cast<size_t>(al)] = z;
    }
  }
  // layers 2..L+1
  for (int t = 2; t <= model.L + 1; ++t) {
    std::uint64_t prev = widths[static_cast<size_t>(t - 2)];
    std::uint64_t cnt = t <= model.L ? widths[static_cast<size_t>(t - 1)]
                                     : static_cast<std::uint64_t>(model.n_out);
    sig.resize(static_cast<size_t>(prev) * static_cast<size_t>(a));
    for (std::uint64_t j = 0; j < prev; ++j)
      for (int al = 0; al < a; ++al)
        sig[static_cast<size_t>(j) * static_cast<size_t>(a) + static_cast<size_t>(al)] =
            model.act.eval(cur[static_cast<size_t>(j) * static_cast<size_t>(a) +
                               static_cast<size_t>(al)]);
    nxt.resize(static_cast<size_t>(cnt) * static_cast<size_t>(a));
    buf.resize(static_cast<size_t>(1 + prev));
    const double sw = std::sqrt(model.Cw / static_cast<double>(prev));
    for (std::uint64_t i = 0; i < cnt; ++i) {
      ns.fill(buf.data(), 1 + prev);
      for (int al = 0; al < a; ++al) {
        double z = sb * buf[0];
        for (std::uint64_t j = 0; j < prev; ++j)
          z += sw * buf[static_cast<size_t>(1 + j)] *
               sig[static_cast<size_t>(j) * static_cast<size_t>(a) + static_cast<size_t>(al)];
        nxt[static_cast<size_t>(i) * static_cast<size_t>(a) + static_cast<size_t>(al)] = z;
      }
    }
    cur.swap(nxt);
  }
  // cur holds n_out x a values, unit-major
  for (int h = 0; h < model.n_out; ++h)
    for (int al = 0; al < a; ++al)
      out[h * a + al] = cur[static_cast<size_t>(h) * static_cast<size_t>(a) +
                            static_cast<size_t>(al)];
}

void repr_sample(NormalStream& ns, const NetworkConfig& model,
                 const InputSet& inputs, const Matrix& g0,
                 const std::vector<std::uint64_t>& widths, double* out) {
  const int a = inputs.size();
  Matrix rt;
  matrix_chain(ns, model, g0, widths, &rt);
  std::vector<double> buf(static_cast<size_t>(a));
  for (int h = 0; h < model.n_out; ++h) {
    ns.fill(buf.data(), static_cast<std::uint64_t>(a));
    for (int al = 0; al < a; ++al) {
      double z = 0.0;
      for (int ga = 0; ga < a; ++ga) z += rt(al, ga) * buf[static_cast<size_t>(ga)];
      out[h * a + al] = z;
    }
  }
}

struct MomentAccum {
  Vector s1;
  Matrix s2;
  Matrix s2sq;
  std::uint64_t n = 0;

  static MomentAccum zero(int d) {
    return {Vector::Zero(d), Matrix::Zero(d, d), Matrix::Zero(d, d), 0};
  }
  void add(const double* x, int d) {
    for (int i = 0; i < d; ++i) {
      s1[i] += x[i];
      for (int j = 0; j < d; ++j) {
        double v = x[i] * x[j];
        s2(i, j) += v;
        s2sq(i, j) += v * v;
      }
    }
    ++n;
  }
  void merge(const MomentAccum& o) {
    s1 += o.s1;
    s2 += o.s2;
    s2sq += o.s2sq;
    n += o.n;
  }
};

template <class SampleFn>
MomentSummary collect_moments(int d, std::uint64_t samples, SampleFn&& fn) {
  auto chunks = map_chunks<MomentAccum>(
      samples, kChunk,
      [&](std::uint64_t, std::uint64_t begin, std::uint64_t end) {
        MomentAccum acc = MomentAccum::zero(d);
        std::vector<double> x(static_cast<size_t>(d));
        for (std::uint64_t i = begin; i < end; ++i) {
          fn(i, x.data());
          acc.add(x.data(), d);
        }
        return acc;
      });
  MomentAccum total = MomentAccum::zero(d);
  for (const auto& c : chunks) total.merge(c);
  MomentSummary ms;
  double n = static_cast<double>(total.n);
  ms.samples = total.n;
  ms.mean = total.s1 / n;
  ms.second = total.s2 / n;
  ms.mean_se = ((ms.second.diagonal().array() -
                 ms.mean.array().square()).max(0.0) / n).sqrt();
  ms.second_se = ((total.s2sq.array() / n - ms.second.array().square()).max(0.0) / n).sqrt();
  return ms;
}

}  // namespace

int worker_count() {
  const char* env = std::getenv("LDPNN_THREADS");
  if (env) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

std::uint64_t layer_width(const WidthRatios& ratios, int layer,
                          std::uint64_t n) {
  double g = ratios.gammas.at(static_cast<size_t>(layer - 1));
  if (std::isinf(g)) {
    std::uint64_t lg = static_cast<std::uint64_t>(
        std::ceil(std::log2(static_cast<double>(n) + 2.0)));
    return n * lg;
  }
  return static_cast<std::uint64_t>(std::ceil(g * static_cast<double>(n)));
}

SampleBatch simulate_direct(const NetworkConfig& model, const InputSet& inputs,
                            std::uint64_t n, std::uint64_t batch,
                            std::uint64_t seed) {
  model.validate();
  inputs.validate(model.n0);
  auto widths = all_layer_widths(model, n);
  SampleBatch sb;
  sb.a = inputs.size();
  sb.n_out = model.n_out;
  sb.count = batch;
  const int d = sb.a * sb.n_out;
  sb.data.resize(batch * static_cast<std::uint64_t>(d));
  map_chunks<int>(batch, kChunk,
                  [&](std::uint64_t, std::uint64_t begin, std::uint64_t end) {
                    for (std::uint64_t i = begin; i < end; ++i) {
                      NormalStream ns(seed, simd::make_stream(
                                                simd::domain::direct, 0, i));
                      direct_sample(ns, model, inputs, widths,
                                    &sb.data[i * static_cast<std::uint64_t>(d)]);
                    }
                    return 0;
                  });
  return sb;
}

std::vector<CovMatrix> random_cov_chain(const NetworkConfig& model,
                                        const InputSet& inputs,
                                        std::uint64_t n, std::uint64_t seed) {
  model.validate();
  inputs.validate(model.n0);
  auto widths = all_layer_widths(model, n);
  CovMatrix g0 = initial_cov(model, inputs);
  NormalStream ns(seed, simd::make_stream(simd::domain::repr_chain, 0, 0));
  const int a = inputs.size();
  std::vector<CovMatrix> chain;
  Matrix g = g0.base().mat();
  for (size_t l = 0; l < widths.size(); ++l) {
    g = matrix_chain(ns, model, g, {widths[l]}, nullptr);
    chain.emplace_back(SymMatrix(g), model.Cb);
  }
  (void)a;
  return chain;
}

SampleBatch simulate_representation(const NetworkConfig& model,
                                    const InputSet& inputs, std::uint64_t n,
                                    std::uint64_t batch, std::uint64_t seed) {
  model.validate();
  inputs.validate(model.n0);
  auto widths = all_layer_widths(model, n);
  Matrix g0 = initial_cov(model, inputs).base().mat();
  SampleBatch sb;
  sb.a = inputs.size();
  sb.n_out = model.n_out;
  sb.count = batch;
  const int d = sb.a * sb.n_out;
  sb.data.resize(batch * static_cast<std::uint64_t>(d));
  map_chunks<int>(
      batch, kChunk, [&](std::uint64_t, std::uint64_t begin, std::uint64_t end) {
        for (std::uint64_t i = begin; i < end; ++i) {
          NormalStream ns(seed,
                          simd::make_stream(simd::domain::repr_chain, 0, i));
          repr_sample(ns, model, inputs, g0, widths,
                      &sb.data[i * static_cast<std::uint64_t>(d)]);
        }
        return 0;
      });
  return sb;
}

MomentSummary moments_direct(const NetworkConfig& model,
                             const InputSet& inputs, std::uint64_t n,
                             std::uint64_t samples, std::uint64_t seed) {
  auto widths = all_layer_widths(model, n);
  const int d = inputs.size() * model.n_out;
  return collect_moments(d, samples, [&](std::uint64_t i, double* x) {
    NormalStream ns(seed, simd::make_stream(simd::domain::direct, 1, i));
    direct_sample(ns, model, inputs, widths, x);
  });
}

MomentSummary moments_representation(const NetworkConfig& model,
                                     const InputSet& inputs, std::uint64_t n,
                                     std::uint64_t samples,
                                     std::uint64_t seed) {
  auto widths = all_layer_widths(model, n);
  Matrix g0 = initial_cov(model, inputs).base().mat();
  const int d = inputs.size() * model.n_out;
  return collect_moments(d, samples, [&](std::uint64_t i, double* x) {
    NormalStream ns(seed, simd::make_stream(simd::domain::repr_chain, 1, i));
    repr_sample(ns, model, inputs, g0, widths, x);
  });
}

ChainMoments chain_layer_moments(const NetworkConfig& model,
                                 const InputSet& inputs, std::uint64_t n,
                                 std::uint64_t samples, std::uint64_t seed) {
  auto widths = all_layer_widths(model, n);
  Matrix g0 = initial_cov(model, inputs).base().mat();
  const int a = inputs.size();
  const int L = model.L;

  struct Acc {
    std::vector<Matrix> s1, s2;
    std::uint64_t n = 0;
  };
  auto chunks = map_chunks<Acc>(
      samples, kChunk,
      [&](std::uint64_t, std::uint64_t begin, std::uint64_t end) {
        Acc acc;
        acc.s1.assign(static_cast<size_t>(L), Matrix::Zero(a, a));
        acc.s2.assign(static_cast<size_t>(L), Matrix::Zero(a, a));
        for (std::uint64_t i = begin; i < end; ++i) {
          NormalStream ns(seed,
                          simd::make_stream(simd::domain::moments, 0, i));
          Matrix g = g0;
          for (int l = 0; l < L; ++l) {
            g = matrix_chain(ns, model, g, {widths[static_cast<size_t>(l)]},
                             nullptr);
            acc.s1[static_cast<size_t>(l)] += g;
            acc.s2[static_cast<size_t>(l)] += g.cwiseProduct(g);
          }
          ++acc.n;
        }
        return acc;
      });
  Acc total;
  total.s1.assign(static_cast<size_t>(L), Matrix::Zero(a, a));
  total.s2.assign(static_cast<size_t>(L), Matrix::Zero(a, a));
  for (const auto& c : chunks) {
    for (int l = 0; l < L; ++l) {
      total.s1[static_cast<size_t>(l)] += c.s1[static_cast<size_t>(l)];
      total.s2[static_cast<size_t>(l)] += c.s2[static_cast<size_t>(l)];
    }
    total.n += c.n;
  }
  ChainMoments cm;
  cm.samples = total.n;
  double nn = static_cast<double>(total.n);
  for (int l = 0; l < L; ++l) {
    Matrix mean = total.s1[static_cast<size_t>(l)] / nn;
    Matrix var = (total.s2[static_cast<size_t>(l)] / nn - mean.cwiseProduct(mean))
                     .cwiseMax(0.0);
    cm.mean.push_back(mean);
    cm.se.push_back((var / nn).cwiseSqrt());
  }
  return cm;
}

SlopeFit fit_wls(const std::vector<double>& x, const std::vector<double>& y,
                 const std::vector<double>& w) {
  SlopeFit f;
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sw += w[i];
    sx += w[i] * x[i];
    sy += w[i] * y[i];
    sxx += w[i] * x[i] * x[i];
    sxy += w[i] * x[i] * y[i];
  }
  double det = sw * sxx - sx * sx;
  if (x.size() < 2 || det <= 0) {
    f.points = static_cast<int>(x.size());
    return f;
  }
  f.slope = (sw * sxy - sx * sy) / det;
  f.intercept = (sxx * sy - sx * sxy) / det;
  f.slope_se = std::sqrt(sw / det);
  f.points = static_cast<int>(x.size());
  return f;
}

TailRun estimate_tail(const NetworkConfig& model, const InputSet& inputs,
                      const WidthSchedule& schedule,
                      const std::vector<double>& thresholds,
                      const ScalingSpec& scaling, std::uint64_t samples,
                      std::uint64_t seed) {
  model.validate();
  inputs.validate(model.n0);
  const int a = inputs.size();
  Matrix g0m = initial_cov(model, inputs).base().mat();
  const double g0s = g0m(0, 0);
  const size_t nt = thresholds.size();

  TailRun run;
  run.thresholds = thresholds;

  for (size_t wi = 0; wi < schedule.pivot_widths.size(); ++wi) {
    const std::uint64_t n = schedule.pivot_widths[wi];
    auto widths = all_layer_widths(model, n);
    const double speed = scaling.speed(n);
    // Event {scaled Z_1 >= t}  <=>  {Z_1 >= t * zmul}.
    const double zmul = scaling.mode == ScalingSpec::ld
                            ? std::sqrt(static_cast<double>(n))
                            : std::pow(static_cast<double>(n), scaling.rho / 2);

    auto chunks = map_chunks<std::vector<std::uint64_t>>(
        samples, kChunk,
        [&](std::uint64_t, std::uint64_t begin, std::uint64_t end) {
          std::vector<std::uint64_t> hits(nt, 0);
          for (std::uint64_t i = begin; i < end; ++i) {
            NormalStream ns(
                seed, simd::make_stream(simd::domain::tail,
                                        static_cast<std::uint64_t>(wi), i));
            double z;
            if (a == 1) {
              double g = scalar_chain(ns, model, g0s, widths);
              z = std::sqrt(g) * ns.next();
            } else {
              Matrix rt;
              matrix_chain(ns, model, g0m, widths, &rt);
              std::vector<double> buf(static_cast<size_t>(a));
              ns.fill(buf.data(), static_cast<std::uint64_t>(a));
              z = 0.0;
              for (int ga = 0; ga < a; ++ga) z += rt(0, ga) * buf[static_cast<size_t>(ga)];
            }
            for (size_t t = 0; t < nt; ++t)
              if (z >= thresholds[t] * zmul) ++hits[t];
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
      e.log_prob = hits[t] ? std::log(p)
                           : -std::numeric_limits<double>::infinity();
      e.stderr_log = hits[t] ? std::sqrt((1.0 - p) / static_cast<double>(hits[t]))
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

double normal_quantile(double p) {
  // Acklam's rational approximation with one Newton step on erfc.
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("normal_quantile: p in (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= 1 - plow) {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  // One Newton polish: Phi(x) = p.
  double phi = 0.5 * std::erfc(-x / std::sqrt(2.0));
  double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  if (pdf > 0) x -= (phi - p) / pdf;
  return x;
}

double md_auto_threshold(double ghat, double rho, std::uint64_t n_min,
                         double target_p) {
  double x0 = normal_quantile(1.0 - target_p);
  double s_min = std::pow(static_cast<double>(n_min), rho);
  return x0 * std::sqrt(ghat / s_min);
}

}  // namespace ldpnn
