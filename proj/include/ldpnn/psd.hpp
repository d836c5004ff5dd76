#pragma once

#include <optional>

#include "ldpnn/rate_value.hpp"
#include "ldpnn/types.hpp"

namespace ldpnn {

// Eigenvalue tolerance scaled to the matrix: spectral noise grows with norm.
inline double psd_tol(const Matrix& q) { return 1e-10 * (1.0 + q.norm()); }

inline constexpr double kRangeTol = 1e-8;

// Unique symmetric PSD square root by spectral decomposition; eigenvalues in
// [-tol, 0) are clipped to 0. Throws NotPsdError below -tol.
SymMatrix sqrt_psd(const SymMatrix& q);

// Membership in S_{|A|,floor}: q PSD and q - floor*ones PSD.
bool in_family(const SymMatrix& q, double floor);

// Member of S_{|A|,C_b} with eagerly cached PSD square root and spectrum.
class CovMatrix {
 public:
  CovMatrix(SymMatrix base, double floor);
  static CovMatrix scalar(double q, double floor = 0.0);

  int dim() const { return base_.dim(); }
  const SymMatrix& base() const { return base_; }
  double floor() const { return floor_; }
  const SymMatrix& sqrt() const { return sqrt_; }
  const Matrix& eigvecs() const { return eigvecs_; }
  const Vector& eigvals() const { return eigvals_; }  // clipped, ascending

 private:
  SymMatrix base_;
  double floor_ = 0.0;
  SymMatrix sqrt_;
  Matrix eigvecs_;
  Vector eigvals_;
};

struct MinNormResult {
  RateValue value;
  std::optional<Matrix> minimizer;  // r with g^# r = z, absent when infeasible
};

// inf{ ||r||^2/2 : g^# r = z }; +inf when a column of z leaves range(g^#).
MinNormResult min_norm_preimage(const CovMatrix& g, const Matrix& z);

}  // namespace ldpnn
