#include "ldpnn/psd.hpp"

#include <Eigen/Eigenvalues>

namespace ldpnn {

namespace {

struct Spectrum {
  Matrix vecs;
  Vector vals;
};

Spectrum decompose(const SymMatrix& q) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(q.mat());
  if (es.info() != Eigen::Success)
    throw NotPsdError("eigendecomposition failed");
  return {es.eigenvectors(), es.eigenvalues()};
}

}  // namespace

SymMatrix sqrt_psd(const SymMatrix& q) {
  const double tol = psd_tol(q.mat());
  Spectrum sp = decompose(q);
  Vector root(sp.vals.size());
  for (int i = 0; i < sp.vals.size(); ++i) {
    double lam = sp.vals[i];
    if (lam < -tol) throw NotPsdError("sqrt_psd: matrix is not PSD");
    root[i] = std::sqrt(lam < 0 ? 0.0 : lam);
  }
  return SymMatrix(sp.vecs * root.asDiagonal() * sp.vecs.transpose());
}

bool in_family(const SymMatrix& q, double floor) {
  Spectrum sp = decompose(q);
  if (sp.vals.minCoeff() < -psd_tol(q.mat())) return false;
  Matrix shifted = q.mat().array() - floor;
  SymMatrix d(shifted);
  Spectrum sd = decompose(d);
  return sd.vals.minCoeff() >= -psd_tol(d.mat());
}

CovMatrix::CovMatrix(SymMatrix base, double floor)
    : base_(std::move(base)), floor_(floor) {
  if (!in_family(base_, floor_))
    throw NotPsdError("CovMatrix: not in S_{|A|,C_b}");
  Spectrum sp = decompose(base_);
  const double tol = psd_tol(base_.mat());
  eigvals_ = sp.vals;
  for (int i = 0; i < eigvals_.size(); ++i) {
    if (eigvals_[i] < 0 && eigvals_[i] >= -tol) eigvals_[i] = 0.0;
  }
  eigvecs_ = sp.vecs;
  Vector root = eigvals_.array().sqrt();
  sqrt_ = SymMatrix(eigvecs_ * root.asDiagonal() * eigvecs_.transpose());
}

CovMatrix CovMatrix::scalar(double q, double floor) {
  return CovMatrix(SymMatrix(Matrix::Constant(1, 1, q)), floor);
}

MinNormResult min_norm_preimage(const CovMatrix& g, const Matrix& z) {
  if (z.rows() != g.dim())
    throw DimensionMismatchError("min_norm_preimage: z rows != dim");
  const double tol = psd_tol(g.base().mat());
  const Vector& lam = g.eigvals();
  const Matrix& v = g.eigvecs();

  // Work in the eigenbasis: columns feasible iff their coefficients on
  // null directions vanish (up to kRangeTol).
  Matrix coef = v.transpose() * z;  // dim x m
  double value = 0.0;
  Matrix r_coef = Matrix::Zero(z.rows(), z.cols());
  for (int h = 0; h < z.cols(); ++h) {
    double col_norm = z.col(h).norm();
    double resid2 = 0.0;
    for (int i = 0; i < lam.size(); ++i) {
      if (lam[i] <= tol) {
        resid2 += coef(i, h) * coef(i, h);
      }
    }
    if (std::sqrt(resid2) > kRangeTol * (1.0 + col_norm))
      return {RateValue::infinity(), std::nullopt};
    for (int i = 0; i < lam.size(); ++i) {
      if (lam[i] > tol) {
        value += coef(i, h) * coef(i, h) / lam[i];
        r_coef(i, h) = coef(i, h) / std::sqrt(lam[i]);
      }
    }
  }
  return {RateValue::of(0.5 * value), v * r_coef};
}

}  // namespace ldpnn
