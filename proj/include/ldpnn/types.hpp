#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ldpnn/errors.hpp"
#include "ldpnn/simd/backend.hpp"

namespace ldpnn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Symmetric matrix, stored exactly symmetrized: (m + m^T)/2 entrywise, so
// entries(i,j) == entries(j,i) bitwise.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(const Matrix& m) {
    if (m.rows() != m.cols())
      throw DimensionMismatchError("SymMatrix: not square");
    m_ = 0.5 * (m + m.transpose());
  }
  static SymMatrix zero(int dim) { return SymMatrix(Matrix::Zero(dim, dim)); }
  static SymMatrix identity(int dim) {
    return SymMatrix(Matrix::Identity(dim, dim));
  }
  static SymMatrix constant(int dim, double c) {
    return SymMatrix(Matrix::Constant(dim, dim, c));
  }

  int dim() const { return static_cast<int>(m_.rows()); }
  double operator()(int i, int j) const { return m_(i, j); }
  const Matrix& mat() const { return m_; }
  double frobenius() const { return m_.norm(); }

 private:
  Matrix m_;
};

struct Growth {
  enum Kind { bounded, sublinear, general };
};

// Pre-activation function with a.e. derivative and growth metadata.
struct Activation {
  std::string name;
  std::function<double(double)> eval;
  std::function<double(double)> deriv;
  std::optional<double> sup_norm;
  Growth::Kind growth = Growth::general;
  std::optional<double> deriv_sup_norm;
  std::vector<double> kinks;  // non-differentiability points of eval

  // Fast paths for the sampling kernels; raw_eval must agree with eval.
  simd::ActKernel kernel = simd::ActKernel::custom;
  double (*raw_eval)(double) = nullptr;

  bool bounded() const { return growth == Growth::bounded; }
};

// Limit width ratios gamma_1..gamma_L with distinguished pivot layer.
struct WidthRatios {
  std::vector<double> gammas;  // entries in [1, inf]
  int pivot = 1;               // 1-based index with gamma == 1

  static WidthRatios uniform(int L) {
    WidthRatios r;
    r.gammas.assign(static_cast<size_t>(L), 1.0);
    r.pivot = 1;
    return r;
  }
  void validate() const {
    if (pivot < 1 || pivot > static_cast<int>(gammas.size()))
      throw ConfigError("WidthRatios: pivot out of range");
    for (double g : gammas)
      if (!(g >= 1.0)) throw ConfigError("WidthRatios: gamma < 1");
    if (gammas[static_cast<size_t>(pivot - 1)] != 1.0)
      throw ConfigError("WidthRatios: gamma at pivot must be 1");
  }
};

struct NetworkConfig {
  int L = 1;
  int n0 = 1;
  int n_out = 1;
  double Cb = 0.0;
  double Cw = 1.0;
  Activation act;
  WidthRatios ratios = WidthRatios::uniform(1);

  void validate() const {
    if (L < 1) throw ConfigError("NetworkConfig: L < 1");
    if (n0 < 1 || n_out < 1) throw ConfigError("NetworkConfig: bad dims");
    if (Cb < 0) throw ConfigError("NetworkConfig: Cb < 0");
    if (!(Cw > 0)) throw ConfigError("NetworkConfig: Cw <= 0");
    if (static_cast<int>(ratios.gammas.size()) != L)
      throw ConfigError("NetworkConfig: ratios size != L");
    ratios.validate();
  }
};

struct InputSet {
  std::vector<Vector> points;
  std::vector<std::string> labels;

  int size() const { return static_cast<int>(points.size()); }
  void validate(int n0) const {
    if (points.empty()) throw ConfigError("InputSet: empty");
    for (const auto& p : points)
      if (p.size() != n0) throw ConfigError("InputSet: point dim != n0");
  }
  static InputSet single(const Vector& x) {
    return InputSet{{x}, {"a"}};
  }
};

struct QuadratureSpec {
  int order = 0;  // 0 = per-dimension default (64/40/24/16/16)
};

struct McSpec {
  std::uint64_t samples = 100000;
  std::uint64_t seed = 0;
};

struct DerivativePattern {
  std::vector<int> s;  // entries in {0,1}, one per output unit h

  void validate() const {
    for (int v : s)
      if (v != 0 && v != 1) throw ConfigError("DerivativePattern: s not 0/1");
  }
  bool any_derivative() const {
    for (int v : s)
      if (v == 1) return true;
    return false;
  }
};

inline constexpr double kGammaInf = std::numeric_limits<double>::infinity();

}  // namespace ldpnn
