#pragma once

#include <optional>

#include "lqmkv/time_path.hpp"

namespace lqmkv {

// Which Brownian driver a stochastic coefficient descriptor is adapted to.
// State drivers are indexed 0..n-1; Independent is an extra driver carrying
// the exogenous factor; Common marks the shared (common-noise) driver.
enum class DriverBinding { StateDriver, Independent, Common };

// Scalar Ornstein-Uhlenbeck factor  dp = kappa (mean - p) dt + vol dW.
// All stochastic coefficient descriptors of a problem load on one such
// factor; its first two moments are closed-form, which is what keeps the
// BSDE and the R-integrand explicitly computable.
struct OuFactor {
  double kappa = 1.0;
  double mean = 0.0;
  double vol = 0.0;
  double init = 0.0;
  DriverBinding binding = DriverBinding::Independent;
  int state_driver = 0;  // used only when binding == StateDriver

  double mean_at(double t) const {
    return mean + (init - mean) * std::exp(-kappa * t);
  }
  double var_at(double t) const {
    return vol * vol * (1.0 - std::exp(-2.0 * kappa * t)) / (2.0 * kappa);
  }
  // E[p_s | p_t] for s >= t.
  double cond_mean(double pt, double t, double s) const {
    return mean + (pt - mean) * std::exp(-kappa * (s - t));
  }

  void validate() const {
    if (!(kappa > 0.0)) fail(ErrorKind::InvalidParams, "OU factor requires kappa > 0");
    if (vol < 0.0) fail(ErrorKind::InvalidParams, "OU factor requires vol >= 0");
  }
};

// Vector process of the tractable family:  v_t = base(t) + load(t) * p_t
// with p the problem's scalar OU factor.  A purely deterministic process has
// an empty loading.
struct StochVec {
  TimeVec base;
  TimeVec load;  // empty => deterministic

  bool stochastic() const { return !load.empty(); }

  Vec base_at(double t) const { return base(t); }
  Vec load_at(double t, int dim) const {
    return load.empty() ? Vec(Vec::Zero(dim)) : load(t);
  }
  // Unconditional mean, given the factor mean m = E[p_t].
  Vec mean_at(double t, double m, int dim) const {
    Vec out = base(t);
    if (stochastic()) out += load(t) * m;
    return out;
  }
  // Pathwise value given the factor value.
  Vec value_at(double t, double p, int dim) const {
    Vec out = base(t);
    if (stochastic()) out += load(t) * p;
    return out;
  }
};

inline StochVec deterministic_vec(TimeVec path) {
  StochVec v;
  v.base = std::move(path);
  return v;
}

inline StochVec zero_stoch_vec(int dim) {
  return deterministic_vec(zero_vec_path(dim));
}

// Affine-in-factor vector a = a0 + a1 * p, the working representation for
// everything assembled from the coefficient descriptors (theta, xi, O, ...).
struct FactorAffineVec {
  Vec a0;
  Vec a1;

  static FactorAffineVec zero(int dim) {
    return {Vec::Zero(dim), Vec::Zero(dim)};
  }
  static FactorAffineVec from(const StochVec& v, double t, int dim) {
    return {v.base_at(t), v.load_at(t, dim)};
  }
  Vec mean(double m) const { return a0 + a1 * m; }
  Vec value(double p) const { return a0 + a1 * p; }
  FactorAffineVec& operator+=(const FactorAffineVec& o) {
    a0 += o.a0;
    a1 += o.a1;
    return *this;
  }
};

inline FactorAffineVec operator*(const Mat& m, const FactorAffineVec& v) {
  return {m * v.a0, m * v.a1};
}
inline FactorAffineVec operator+(FactorAffineVec a, const FactorAffineVec& b) {
  a += b;
  return a;
}
inline FactorAffineVec operator-(const FactorAffineVec& a,
                                 const FactorAffineVec& b) {
  return {a.a0 - b.a0, a.a1 - b.a1};
}

// E[(a0+a1 p)^T W (b0+b1 p)] with p of mean m and variance v.
inline double quad_expectation(const FactorAffineVec& a, const Mat& w,
                               const FactorAffineVec& b, double m, double v) {
  double c0 = a.a0.dot(w * b.a0);
  double c1 = a.a0.dot(w * b.a1) + a.a1.dot(w * b.a0);
  double c2 = a.a1.dot(w * b.a1);
  return c0 + c1 * m + c2 * (m * m + v);
}

}  // namespace lqmkv
