#include "ldpnn/quadrature.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

namespace ldpnn {

namespace {

// Golub-Welsch on the Jacobi matrix of the orthogonal polynomial recurrence.
Rule1D golub_welsch(const std::vector<double>& offdiag, double total_mass) {
  const int n = static_cast<int>(offdiag.size()) + 1;
  Matrix j = Matrix::Zero(n, n);
  for (int k = 0; k < n - 1; ++k) {
    j(k, k + 1) = offdiag[static_cast<size_t>(k)];
    j(k + 1, k) = offdiag[static_cast<size_t>(k)];
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(j);
  Rule1D r;
  r.nodes.resize(static_cast<size_t>(n));
  r.weights.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    r.nodes[static_cast<size_t>(i)] = es.eigenvalues()[i];
    double v0 = es.eigenvectors()(0, i);
    r.weights[static_cast<size_t>(i)] = total_mass * v0 * v0;
  }
  // Enforce the exact +/- symmetry of the rule.
  for (int i = 0; i < n / 2; ++i) {
    int k = n - 1 - i;
    double m = 0.5 * (r.nodes[static_cast<size_t>(k)] - r.nodes[static_cast<size_t>(i)]);
    r.nodes[static_cast<size_t>(i)] = -m;
    r.nodes[static_cast<size_t>(k)] = m;
    double w = 0.5 * (r.weights[static_cast<size_t>(i)] + r.weights[static_cast<size_t>(k)]);
    r.weights[static_cast<size_t>(i)] = w;
    r.weights[static_cast<size_t>(k)] = w;
  }
  if (n % 2 == 1) r.nodes[static_cast<size_t>(n / 2)] = 0.0;
  return r;
}

const Rule1D& cached(std::map<int, Rule1D>& cache, std::mutex& mu, int order,
                     Rule1D (*make)(int)) {
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(order);
  if (it == cache.end()) it = cache.emplace(order, make(order)).first;
  return it->second;
}

Rule1D make_hermite(int order) {
  std::vector<double> off(static_cast<size_t>(order - 1));
  for (int k = 1; k < order; ++k) off[static_cast<size_t>(k - 1)] = std::sqrt(static_cast<double>(k));
  return golub_welsch(off, 1.0);
}

Rule1D make_legendre(int order) {
  std::vector<double> off(static_cast<size_t>(order - 1));
  for (int k = 1; k < order; ++k)
    off[static_cast<size_t>(k - 1)] = k / std::sqrt(4.0 * k * k - 1.0);
  return golub_welsch(off, 2.0);
}

constexpr double kInvSqrt2Pi = 0.3989422804014326779;

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

// Panel boundaries for one piece [a,b]: geometric refinement from both ends
// (resolves kink-adjacent structure) plus a uniform interior fill.
void piece_panels(double a, double b, double max_width,
                  std::vector<double>& bounds) {
  bounds.clear();
  const double len = b - a;
  if (len <= 0) return;
  const int levels = 40;  // finest panel ~ len * 2^-40
  std::vector<double> left, right;
  double w = len / 2;
  for (int k = 0; k < levels && w > 1e-13 * len; ++k) {
    w *= 0.5;
    left.push_back(a + w);
    right.push_back(b - w);
  }
  bounds.push_back(a);
  for (auto it = left.rbegin(); it != left.rend(); ++it) bounds.push_back(*it);
  // Uniform fill between a+len/4 and b-len/4 at max_width.
  double lo = a + len / 4, hi = b - len / 4;
  int steps = static_cast<int>(std::ceil((hi - lo) / max_width));
  for (int i = 1; i < steps; ++i) bounds.push_back(lo + (hi - lo) * i / steps);
  for (double v : right) bounds.push_back(v);
  bounds.push_back(b);
  std::sort(bounds.begin(), bounds.end());
}

}  // namespace

Rule1D gauss_hermite(int order) {
  static std::map<int, Rule1D> cache;
  static std::mutex mu;
  return cached(cache, mu, order, &make_hermite);
}

Rule1D gauss_legendre(int order) {
  static std::map<int, Rule1D> cache;
  static std::mutex mu;
  return cached(cache, mu, order, &make_legendre);
}

void for_each_node_1d(std::span<const double> kinks, double halfwidth,
                      double scale_hint,
                      const std::function<void(double, double)>& visit) {
  const Rule1D& gl = gauss_legendre(16);
  std::vector<double> cuts{-halfwidth, halfwidth};
  for (double k : kinks)
    if (k > -halfwidth && k < halfwidth) cuts.push_back(k);
  std::sort(cuts.begin(), cuts.end());

  // Sharp kink-adjacent peaks are resolved by the geometric end refinement;
  // the uniform fill only tracks moderate exponents, so keep a floor.
  const double max_width =
      std::max(0.5 / std::sqrt(1.0 + std::abs(scale_hint) / 50.0), 0.02);
  std::vector<double> bounds;
  for (size_t p = 0; p + 1 < cuts.size(); ++p) {
    piece_panels(cuts[p], cuts[p + 1], max_width, bounds);
    for (size_t i = 0; i + 1 < bounds.size(); ++i) {
      double mid = 0.5 * (bounds[i] + bounds[i + 1]);
      double half = 0.5 * (bounds[i + 1] - bounds[i]);
      if (half <= 0) continue;
      for (size_t k = 0; k < gl.nodes.size(); ++k) {
        double x = mid + half * gl.nodes[k];
        visit(x, half * gl.weights[k] * normal_pdf(x));
      }
    }
  }
}

double gauss_expect_1d(const std::function<double(double)>& f,
                       std::span<const double> kinks, double halfwidth,
                       double scale_hint) {
  double acc = 0.0;
  for_each_node_1d(kinks, halfwidth, scale_hint,
                   [&](double x, double w) { acc += w * f(x); });
  return acc;
}

TensorGH::TensorGH(int dim, int order) : dim_(dim), rule_(gauss_hermite(order)) {
  count_ = 1;
  for (int d = 0; d < dim_; ++d) count_ *= rule_.nodes.size();
}

}  // namespace ldpnn
