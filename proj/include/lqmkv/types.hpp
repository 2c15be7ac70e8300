#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "lqmkv/errors.hpp"

namespace lqmkv {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline Mat symmetrize(const Mat& a) { return 0.5 * (a + a.transpose()); }

inline double max_asymmetry(const Mat& a) {
  return (a - a.transpose()).cwiseAbs().maxCoeff();
}

inline double min_eigenvalue(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a),
                                        Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline double max_eigenvalue(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a),
                                        Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

// Operator 2-norm, used by the discount-rate conditions on infinite horizon.
inline double spectral_norm(const Mat& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(a);
  return svd.singularValues()(0);
}

// Inverts a symmetric positive-definite coefficient matrix, rejecting
// near-singular input (relative eigenvalue gate, 1e-12 of the largest).
inline Mat invert_spd(const Mat& a, ErrorKind on_fail, const char* name) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a));
  const Vec& ev = es.eigenvalues();
  double lo = ev.minCoeff();
  double hi = ev.cwiseAbs().maxCoeff();
  if (!(lo > 0.0) || lo < 1e-12 * std::max(hi, 1.0))
    fail(on_fail, std::string(name) + " is numerically singular (lambda_min=" +
                      std::to_string(lo) + ")");
  return es.eigenvectors() * ev.cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

}  // namespace lqmkv
