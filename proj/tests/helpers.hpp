#pragma once

#include "lqmkv/pipeline.hpp"

namespace helpers {

using namespace lqmkv;

// Runs fn and reports whether it threw a SolverError of the given kind.
template <typename Fn>
bool throws_kind(Fn&& fn, ErrorKind kind) {
  try {
    fn();
  } catch (const SolverError& e) {
    return e.kind() == kind;
  } catch (...) {
    return false;
  }
  return false;
}

inline TimeMat cmat(double v) { return TimeMat(Mat::Constant(1, 1, v)); }
inline TimeVec cvec(double v) { return TimeVec(Vec::Constant(1, v)); }

inline ProblemSpec scalar_problem(Horizon h) {
  return zero_problem(1, 1, 1, h);
}

// Classical scalar LQ (no mean-field, no affine terms), H2-compliant.
inline ProblemSpec classical_lq() {
  ProblemSpec s = scalar_problem(Horizon::Finite(1.0, 0.1));
  s.drift.B = cmat(0.2);
  s.drift.C = cmat(1.0);
  s.diffusion[0].D = cmat(0.3);
  s.diffusion[0].F = cmat(0.5);
  s.cost.Q = cmat(1.0);
  s.cost.N = cmat(1.0);
  s.cost.I = cmat(0.1);
  s.cost.P = Mat::Constant(1, 1, 1.0);
  s.x0 = InitialLaw::gaussian(Vec::Constant(1, 1.0), Mat::Constant(1, 1, 0.25));
  return s;
}

// Mean-field scalar instance with deterministic affine terms.
inline ProblemSpec mkv_scalar() {
  ProblemSpec s = scalar_problem(Horizon::Finite(1.0, 0.1));
  s.drift.B = cmat(0.2);
  s.drift.Btilde = cmat(-0.15);
  s.drift.C = cmat(0.7);
  s.drift.Ctilde = cmat(0.2);
  s.drift.beta.base = cvec(0.1);
  s.diffusion[0].D = cmat(0.25);
  s.diffusion[0].Dtilde = cmat(0.1);
  s.diffusion[0].F = cmat(0.2);
  s.diffusion[0].Ftilde = cmat(-0.1);
  s.diffusion[0].gamma.base = cvec(0.15);
  s.cost.Q = cmat(1.0);
  s.cost.Qtilde = cmat(0.4);
  s.cost.N = cmat(1.0);
  s.cost.Ntilde = cmat(0.4);
  s.cost.I = cmat(0.15);
  s.cost.Itilde = cmat(-0.05);
  s.cost.M.base = cvec(0.15);
  s.cost.H.base = cvec(0.1);
  s.cost.P = Mat::Constant(1, 1, 0.8);
  s.cost.Ptilde = Mat::Constant(1, 1, 0.4);
  s.cost.L = Vec::Constant(1, 0.2);
  s.x0 = InitialLaw::gaussian(Vec::Constant(1, 1.0), Mat::Constant(1, 1, 0.16));
  return s;
}

// Mean-field scalar instance whose beta and H load on an independent OU
// factor (Y becomes factor-affine).
inline ProblemSpec mkv_factor() {
  ProblemSpec s = mkv_scalar();
  s.cost.H.base = cvec(0.1);
  s.cost.H.load = cvec(-0.3);
  s.drift.beta.base = cvec(0.05);
  s.drift.beta.load = cvec(0.15);
  OuFactor f;
  f.kappa = 1.2;
  f.mean = 1.0;
  f.vol = 0.5;
  f.init = 0.7;
  f.binding = DriverBinding::Independent;
  s.factor = f;
  return s;
}

}  // namespace helpers
