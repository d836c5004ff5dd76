#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ldpnn/types.hpp"

namespace ldpnn {

// Default Gauss-Hermite order per Gaussian dimension.
inline int default_quad_order(int dim) {
  switch (dim) {
    case 1: return 64;
    case 2: return 40;
    case 3: return 24;
    default: return 16;
  }
}

struct Rule1D {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Probabilists' Gauss-Hermite: E[f(N)] ~ sum w_i f(x_i), weights sum to 1.
Rule1D gauss_hermite(int order);

// Gauss-Legendre on [-1,1].
Rule1D gauss_legendre(int order);

// One-dimensional E[f(N)] for piecewise-smooth f. The integration domain
// [-halfwidth, halfwidth] is split at the kinks, each piece covered by
// composite Gauss-Legendre panels refined geometrically toward the piece
// boundaries. scale_hint ~ sup |log f| shrinks the panel width so sharp
// exponential factors stay resolved.
double gauss_expect_1d(const std::function<double(double)>& f,
                       std::span<const double> kinks, double halfwidth = 14.0,
                       double scale_hint = 0.0);

// Node/weight walker over the same panel structure (two-pass algorithms).
void for_each_node_1d(std::span<const double> kinks, double halfwidth,
                      double scale_hint,
                      const std::function<void(double x, double w)>& visit);

// Tensorized Gauss-Hermite grid, iterated in odometer order.
class TensorGH {
 public:
  TensorGH(int dim, int order);
  int dim() const { return dim_; }
  std::uint64_t count() const { return count_; }

  template <class F>
  void for_each(F&& f) const {
    std::vector<int> idx(static_cast<size_t>(dim_), 0);
    std::vector<double> x(static_cast<size_t>(dim_));
    for (std::uint64_t k = 0; k < count_; ++k) {
      double w = 1.0;
      for (int d = 0; d < dim_; ++d) {
        x[static_cast<size_t>(d)] = rule_.nodes[static_cast<size_t>(idx[static_cast<size_t>(d)])];
        w *= rule_.weights[static_cast<size_t>(idx[static_cast<size_t>(d)])];
      }
      f(x.data(), w);
      for (int d = 0; d < dim_; ++d) {
        if (++idx[static_cast<size_t>(d)] < static_cast<int>(rule_.nodes.size())) break;
        idx[static_cast<size_t>(d)] = 0;
      }
    }
  }

 private:
  int dim_;
  Rule1D rule_;
  std::uint64_t count_;
};

}  // namespace ldpnn
