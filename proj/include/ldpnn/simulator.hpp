#pragma once

#include <cstdint>
#include <vector>

#include "ldpnn/psd.hpp"
#include "ldpnn/types.hpp"

namespace ldpnn {

struct WidthSchedule {
  std::vector<std::uint64_t> pivot_widths;
};

// Layer widths realizing the limit ratios: ceil(gamma_l * n) for finite
// gamma, n * ceil(log2(n+2)) for gamma = inf (super-linear growth).
std::uint64_t layer_width(const WidthRatios& ratios, int layer,
                          std::uint64_t n);

// Batch of |A| x n_out output matrices, sample-major.
struct SampleBatch {
  int a = 0;
  int n_out = 0;
  std::uint64_t count = 0;
  std::vector<double> data;
  double value(std::uint64_t s, int alpha, int h) const {
    return data[(s * static_cast<std::uint64_t>(a * n_out)) +
                static_cast<std::uint64_t>(h * a + alpha)];
  }
};

// Forward sampling of the network via its defining recursion.
SampleBatch simulate_direct(const NetworkConfig& model, const InputSet& inputs,
                            std::uint64_t n, std::uint64_t batch,
                            std::uint64_t seed);

// One realization of the random covariance chain G^(1..L).
std::vector<CovMatrix> random_cov_chain(const NetworkConfig& model,
                                        const InputSet& inputs,
                                        std::uint64_t n, std::uint64_t seed);

// Sampling through the equality-in-law representation: covariance chain,
// then the conditional Gaussian mixture step.
SampleBatch simulate_representation(const NetworkConfig& model,
                                    const InputSet& inputs, std::uint64_t n,
                                    std::uint64_t batch, std::uint64_t seed);

// First/second moment summaries with standard errors, deterministic under
// any worker count.
struct MomentSummary {
  Vector mean;
  Vector mean_se;
  Matrix second;     // E[x x^T]
  Matrix second_se;  // entrywise standard error
  std::uint64_t samples = 0;
};
MomentSummary moments_direct(const NetworkConfig& model,
                             const InputSet& inputs, std::uint64_t n,
                             std::uint64_t samples, std::uint64_t seed);
MomentSummary moments_representation(const NetworkConfig& model,
                                     const InputSet& inputs, std::uint64_t n,
                                     std::uint64_t samples,
                                     std::uint64_t seed);

// Per-layer entrywise means of G_n^(l) with standard errors.
struct ChainMoments {
  std::vector<Matrix> mean;
  std::vector<Matrix> se;
  std::uint64_t samples = 0;
};
ChainMoments chain_layer_moments(const NetworkConfig& model,
                                 const InputSet& inputs, std::uint64_t n,
                                 std::uint64_t samples, std::uint64_t seed);

// Tail estimation: half-space events on the first output coordinate,
// plain Monte Carlo with per-width hit counts.
struct ScalingSpec {
  enum Mode { ld, md } mode = md;
  double rho = 0.5;  // a_n = n^-rho (md only)
  double speed(std::uint64_t n) const {
    return mode == ld ? static_cast<double>(n)
                      : std::pow(static_cast<double>(n), rho);
  }
};

struct TailEstimate {
  std::uint64_t n = 0;
  double threshold = 0.0;
  double log_prob = 0.0;
  double stderr_log = 0.0;
  std::uint64_t hits = 0;
  std::uint64_t samples = 0;
  double speed = 0.0;
  bool usable = false;  // hits >= 10, else flagged and excluded from the fit
};

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  int points = 0;
};

// Weighted least squares of y against x with weights w.
SlopeFit fit_wls(const std::vector<double>& x, const std::vector<double>& y,
                 const std::vector<double>& w);

struct TailRun {
  std::vector<double> thresholds;
  std::vector<TailEstimate> estimates;  // width-major, threshold-minor
  std::vector<SlopeFit> fits;           // one per threshold
};

TailRun estimate_tail(const NetworkConfig& model, const InputSet& inputs,
                      const WidthSchedule& schedule,
                      const std::vector<double>& thresholds,
                      const ScalingSpec& scaling, std::uint64_t samples,
                      std::uint64_t seed);

// Upper quantile of the standard normal (Acklam + one Newton polish).
double normal_quantile(double p);

// Threshold putting the MD event probability near target_p at the smallest
// width, using the Gaussian approximation with the limit variance ghat.
double md_auto_threshold(double ghat, double rho, std::uint64_t n_min,
                         double target_p);

}  // namespace ldpnn
