#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lqmkv/factor.hpp"
#include "lqmkv/time_path.hpp"

namespace lqmkv {

struct Horizon {
  bool finite = true;
  double T = 1.0;     // finite horizon length
  double rho = 0.0;   // discount rate

  static Horizon Finite(double T, double rho = 0.0) { return {true, T, rho}; }
  static Horizon Infinite(double rho) { return {false, 0.0, rho}; }

  void validate() const {
    if (finite && !(T > 0.0))
      fail(ErrorKind::InvalidParams, "finite horizon requires T > 0");
    if (!finite && !(rho > 0.0))
      fail(ErrorKind::InvalidParams, "infinite horizon requires rho > 0");
    if (rho < 0.0) fail(ErrorKind::InvalidParams, "discount rate must be >= 0");
  }
};

struct DriftCoefficients {
  StochVec beta;            // d
  TimeMat B, Btilde;        // d x d
  TimeMat C, Ctilde;        // d x m
};

// One Brownian driver's diffusion block.
struct DiffusionBlock {
  StochVec gamma;           // d
  TimeMat D, Dtilde;        // d x d
  TimeMat F, Ftilde;        // d x m
};

struct CostCoefficients {
  TimeMat Q, Qtilde;        // d x d symmetric
  TimeMat N, Ntilde;        // m x m symmetric
  TimeMat I, Itilde;        // m x d
  StochVec M;               // d
  StochVec H;               // m
  Mat P, Ptilde;            // d x d symmetric, finite horizon only
  Vec L;                    // d, terminal linear cost, finite horizon only
};

// Law of X0: point mass or Gaussian.  Only the first two moments enter the
// value formula, and X0 is independent of all driving noise.
struct InitialLaw {
  Vec mean;
  Mat cov;  // zero for point mass

  static InitialLaw point(Vec x) {
    InitialLaw l;
    l.cov = Mat::Zero(x.size(), x.size());
    l.mean = std::move(x);
    return l;
  }
  static InitialLaw gaussian(Vec mu, Mat cov) {
    return InitialLaw{std::move(mu), std::move(cov)};
  }
};

struct ProblemSpec {
  int d = 1, m = 1, n = 1;
  Horizon horizon;
  DriftCoefficients drift;
  std::vector<DiffusionBlock> diffusion;  // n entries
  CostCoefficients cost;
  // Optional exogenous scalar OU factor carrying all coefficient randomness.
  std::optional<OuFactor> factor;
  // Common-noise mode: the factor's driver is shared by all particles and
  // mean-field terms become conditional on it.  gamma0 is an optional affine
  // diffusion loading of the state on that shared driver.
  bool common_noise = false;
  StochVec gamma0;  // d; empty base => absent
  InitialLaw x0;

  bool has_gamma0() const { return !gamma0.base.empty(); }
};

namespace detail {

inline void check_dims(const TimeMat& p, int r, int c, const char* name) {
  if (p.empty()) fail(ErrorKind::DimensionMismatch, std::string(name) + " missing");
  const Mat& probe = p.is_constant() ? p.constant_value() : p.values().front();
  if (probe.rows() != r || probe.cols() != c)
    fail(ErrorKind::DimensionMismatch,
         std::string(name) + ": expected " + std::to_string(r) + "x" +
             std::to_string(c) + ", got " + std::to_string(probe.rows()) + "x" +
             std::to_string(probe.cols()));
  if (!p.is_constant())
    for (const Mat& v : p.values())
      if (v.rows() != r || v.cols() != c)
        fail(ErrorKind::DimensionMismatch, std::string(name) + ": ragged sample dimensions");
}

inline void check_vec(const StochVec& v, int r, const char* name) {
  if (v.base.empty()) fail(ErrorKind::DimensionMismatch, std::string(name) + " missing");
  auto probe = [&](const TimeVec& p) {
    if (p.empty()) return;
    const Vec& x = p.is_constant() ? p.constant_value() : p.values().front();
    if (x.size() != r)
      fail(ErrorKind::DimensionMismatch,
           std::string(name) + ": expected length " + std::to_string(r));
  };
  probe(v.base);
  probe(v.load);
}

inline void check_symmetric(const TimeMat& p, const char* name,
                            double tol = 1e-12) {
  auto chk = [&](const Mat& v) {
    if (v.size() > 0 && max_asymmetry(v) > tol * std::max(1.0, v.cwiseAbs().maxCoeff()))
      fail(ErrorKind::NonSymmetricCostMatrix, std::string(name) + " is not symmetric");
  };
  if (p.is_constant())
    chk(p.constant_value());
  else
    for (const Mat& v : p.values()) chk(v);
}

}  // namespace detail

// Structural validation: dimensions, symmetry of cost matrices, factor
// binding, and the shape restrictions of each horizon kind.
inline void validate_structure(const ProblemSpec& s) {
  if (s.d < 1 || s.m < 1 || s.n < 1)
    fail(ErrorKind::DimensionMismatch, "dimensions d, m, n must be >= 1");
  s.horizon.validate();
  if ((int)s.diffusion.size() != s.n)
    fail(ErrorKind::DimensionMismatch, "diffusion must have one block per driver");

  detail::check_vec(s.drift.beta, s.d, "beta");
  detail::check_dims(s.drift.B, s.d, s.d, "B");
  detail::check_dims(s.drift.Btilde, s.d, s.d, "Btilde");
  detail::check_dims(s.drift.C, s.d, s.m, "C");
  detail::check_dims(s.drift.Ctilde, s.d, s.m, "Ctilde");
  for (int i = 0; i < s.n; ++i) {
    const auto& blk = s.diffusion[i];
    detail::check_vec(blk.gamma, s.d, "gamma");
    detail::check_dims(blk.D, s.d, s.d, "D");
    detail::check_dims(blk.Dtilde, s.d, s.d, "Dtilde");
    detail::check_dims(blk.F, s.d, s.m, "F");
    detail::check_dims(blk.Ftilde, s.d, s.m, "Ftilde");
  }
  detail::check_dims(s.cost.Q, s.d, s.d, "Q");
  detail::check_dims(s.cost.Qtilde, s.d, s.d, "Qtilde");
  detail::check_dims(s.cost.N, s.m, s.m, "N");
  detail::check_dims(s.cost.Ntilde, s.m, s.m, "Ntilde");
  detail::check_dims(s.cost.I, s.m, s.d, "I");
  detail::check_dims(s.cost.Itilde, s.m, s.d, "Itilde");
  detail::check_vec(s.cost.M, s.d, "M");
  detail::check_vec(s.cost.H, s.m, "H");
  detail::check_symmetric(s.cost.Q, "Q");
  detail::check_symmetric(s.cost.Qtilde, "Qtilde");
  detail::check_symmetric(s.cost.N, "N");
  detail::check_symmetric(s.cost.Ntilde, "Ntilde");

  if (s.horizon.finite) {
    if (s.cost.P.rows() != s.d || s.cost.P.cols() != s.d ||
        s.cost.Ptilde.rows() != s.d || s.cost.Ptilde.cols() != s.d)
      fail(ErrorKind::DimensionMismatch, "terminal matrices P, Ptilde must be d x d");
    if (max_asymmetry(s.cost.P) > 1e-12 || max_asymmetry(s.cost.Ptilde) > 1e-12)
      fail(ErrorKind::NonSymmetricCostMatrix, "terminal matrix P or Ptilde is not symmetric");
    if (s.cost.L.size() != s.d)
      fail(ErrorKind::DimensionMismatch, "terminal vector L must have length d");
  }

  if (s.x0.mean.size() != s.d || s.x0.cov.rows() != s.d || s.x0.cov.cols() != s.d)
    fail(ErrorKind::UnsupportedInitialLaw, "x0 law must provide a d-mean and d x d covariance");

  if (s.factor) {
    s.factor->validate();
    if (s.factor->binding == DriverBinding::StateDriver &&
        (s.factor->state_driver < 0 || s.factor->state_driver >= s.n))
      fail(ErrorKind::InvalidParams, "factor bound to a driver absent from the problem");
    if (s.factor->binding == DriverBinding::Common && !s.common_noise)
      fail(ErrorKind::InvalidParams, "factor bound to the common driver but common_noise is off");
  } else {
    auto no_load = [](const StochVec& v, const char* name) {
      if (v.stochastic())
        fail(ErrorKind::InvalidParams,
             std::string(name) + " loads on a factor but the problem declares none");
    };
    no_load(s.drift.beta, "beta");
    for (const auto& blk : s.diffusion) no_load(blk.gamma, "gamma");
    no_load(s.cost.M, "M");
    no_load(s.cost.H, "H");
    no_load(s.gamma0, "gamma0");
  }
  if (s.common_noise && !s.factor)
    fail(ErrorKind::InvalidParams, "common_noise requires the shared factor process");
  if (s.has_gamma0()) {
    if (!s.common_noise)
      fail(ErrorKind::InvalidParams, "gamma0 requires common_noise");
    detail::check_vec(s.gamma0, s.d, "gamma0");
  }
}

// Problem with the hat coefficients (sums of plain and tilde blocks)
// precomputed as callables.  Canonicalization is idempotent and linear in
// the inputs.
struct CanonicalProblem {
  ProblemSpec spec;

  int d() const { return spec.d; }
  int m() const { return spec.m; }
  int n() const { return spec.n; }
  double rho() const { return spec.horizon.rho; }

  Mat B(double t) const { return spec.drift.B(t); }
  Mat C(double t) const { return spec.drift.C(t); }
  Mat D(int i, double t) const { return spec.diffusion[i].D(t); }
  Mat F(int i, double t) const { return spec.diffusion[i].F(t); }
  Mat Q(double t) const { return spec.cost.Q(t); }
  Mat N(double t) const { return spec.cost.N(t); }
  Mat I(double t) const { return spec.cost.I(t); }

  Mat Bhat(double t) const { return spec.drift.B(t) + spec.drift.Btilde(t); }
  Mat Chat(double t) const { return spec.drift.C(t) + spec.drift.Ctilde(t); }
  Mat Dhat(int i, double t) const {
    return spec.diffusion[i].D(t) + spec.diffusion[i].Dtilde(t);
  }
  Mat Fhat(int i, double t) const {
    return spec.diffusion[i].F(t) + spec.diffusion[i].Ftilde(t);
  }
  Mat Ihat(double t) const { return spec.cost.I(t) + spec.cost.Itilde(t); }
  Mat Nhat(double t) const { return spec.cost.N(t) + spec.cost.Ntilde(t); }
  Mat Qhat(double t) const { return spec.cost.Q(t) + spec.cost.Qtilde(t); }
  Mat Phat() const { return spec.cost.P + spec.cost.Ptilde; }

  // Factor moments; a problem without a factor behaves as one with a frozen
  // zero-variance factor pinned at zero.
  double factor_mean(double t) const {
    return spec.factor ? spec.factor->mean_at(t) : 0.0;
  }
  double factor_var(double t) const {
    return spec.factor ? spec.factor->var_at(t) : 0.0;
  }

  FactorAffineVec beta(double t) const {
    return FactorAffineVec::from(spec.drift.beta, t, spec.d);
  }
  FactorAffineVec gamma(int i, double t) const {
    return FactorAffineVec::from(spec.diffusion[i].gamma, t, spec.d);
  }
  FactorAffineVec gamma0(double t) const {
    if (!spec.has_gamma0()) return FactorAffineVec::zero(spec.d);
    return FactorAffineVec::from(spec.gamma0, t, spec.d);
  }
  FactorAffineVec M(double t) const {
    return FactorAffineVec::from(spec.cost.M, t, spec.d);
  }
  FactorAffineVec H(double t) const {
    return FactorAffineVec::from(spec.cost.H, t, spec.m);
  }
};

inline CanonicalProblem canonicalize(const ProblemSpec& spec) {
  validate_structure(spec);
  return CanonicalProblem{spec};
}
inline const CanonicalProblem& canonicalize(const CanonicalProblem& p) {
  return p;
}

// Convenience builder: all coefficients zero, unit N so the control cost is
// coercive; tests and fixtures override the pieces they need.
inline ProblemSpec zero_problem(int d, int m, int n, Horizon h) {
  ProblemSpec s;
  s.d = d;
  s.m = m;
  s.n = n;
  s.horizon = h;
  s.drift.beta = zero_stoch_vec(d);
  s.drift.B = zero_mat_path(d, d);
  s.drift.Btilde = zero_mat_path(d, d);
  s.drift.C = zero_mat_path(d, m);
  s.drift.Ctilde = zero_mat_path(d, m);
  s.diffusion.resize(n);
  for (auto& blk : s.diffusion) {
    blk.gamma = zero_stoch_vec(d);
    blk.D = zero_mat_path(d, d);
    blk.Dtilde = zero_mat_path(d, d);
    blk.F = zero_mat_path(d, m);
    blk.Ftilde = zero_mat_path(d, m);
  }
  s.cost.Q = zero_mat_path(d, d);
  s.cost.Qtilde = zero_mat_path(d, d);
  s.cost.N = TimeMat(Mat::Identity(m, m));
  s.cost.Ntilde = zero_mat_path(m, m);
  s.cost.I = zero_mat_path(m, d);
  s.cost.Itilde = zero_mat_path(m, d);
  s.cost.M = zero_stoch_vec(d);
  s.cost.H = zero_stoch_vec(m);
  s.cost.P = Mat::Zero(d, d);
  s.cost.Ptilde = Mat::Zero(d, d);
  s.cost.L = Vec::Zero(d);
  s.x0 = InitialLaw::point(Vec::Zero(d));
  return s;
}

}  // namespace lqmkv
