#pragma once

#include <optional>

#include "lqmkv/bsde.hpp"

namespace lqmkv {

// Per-node derived coefficient trajectories of the optimal control.
struct DerivedCoefficients {
  std::vector<double> grid;
  std::vector<Mat> S, Shat, U, V;
  std::vector<Vec> O_base, O_load;    // O as affine in the factor value
  std::vector<Vec> xi_base, xi_load;  // xi as affine in the factor value
};

namespace detail {

struct DerivedAt {
  GainBlocks g;
  FactorAffineVec O, xi;
};

inline DerivedAt derive_at(const CanonicalProblem& p, double t, const Mat& K,
                           const Mat& Lambda, const YSolution& y) {
  const bool common = p.spec.common_noise;
  const double m = p.factor_mean(t);
  DerivedAt out;
  out.g = gain_blocks(p, t, K, Lambda);
  auto bar = [&](const FactorAffineVec& v) -> FactorAffineVec {
    if (common) return v;
    return {v.mean(m), Vec::Zero(v.a0.size())};
  };
  FactorAffineVec Y = y.affine_at(t, m);
  out.xi = p.H(t) + Mat(p.C(t).transpose()) * Y;
  out.O = bar(p.H(t)) + Mat(p.Chat(t).transpose()) * bar(Y);
  for (int i = 0; i < p.n(); ++i) {
    FactorAffineVec gam = p.gamma(i, t);
    out.xi += Mat(p.F(i, t).transpose() * K) * gam;
    out.O += Mat(p.Fhat(i, t).transpose() * K) * bar(gam);
  }
  return out;
}

}  // namespace detail

template <typename Backward>  // RiccatiPath or AlgebraicRiccatiPair
DerivedCoefficients derive_coefficients(const CanonicalProblem& p,
                                        const Backward& back,
                                        const YSolution& y,
                                        const std::vector<double>& grid) {
  BsdeCoefficients co = assemble_bsde(p, back);
  DerivedCoefficients d;
  d.grid = grid;
  for (double t : grid) {
    auto at = detail::derive_at(p, t, co.K(t), co.Lambda(t), y);
    d.S.push_back(at.g.S);
    d.Shat.push_back(at.g.Shat);
    d.U.push_back(at.g.U);
    d.V.push_back(at.g.V);
    d.O_base.push_back(at.O.a0);
    d.O_load.push_back(at.O.a1);
    d.xi_base.push_back(at.xi.a0);
    d.xi_load.push_back(at.xi.a1);
  }
  return d;
}

// The affine optimal feedback
//   alpha(t, x, xbar, p) = Gc(t)(x - xbar) + Gm(t) xbar + b0(t) + b1(t) p,
// stored on a grid with piecewise-linear time interpolation.  Gc = -S^-1 U,
// Gm = -Shat^-1 V; the offsets combine -Shat^-1 O with the centered
// stochastic part -S^-1 (xi - E[xi]).
struct FeedbackLaw {
  int d = 1, m = 1;
  bool finite = true;
  double rho = 0.0;
  bool common_noise = false;
  std::optional<OuFactor> factor;

  std::vector<double> grid;
  std::vector<Mat> gain_centered;  // -S^-1 U
  std::vector<Mat> gain_mean;      // -Shat^-1 V
  std::vector<Vec> off_base;       // offset affine part (coefficient of 1)
  std::vector<Vec> off_load;       // offset coefficient of p
  // inspection pieces, same grid
  std::vector<Vec> shatO_base, shatO_load;  // -Shat^-1 O
  std::vector<Vec> centered_load;           // -S^-1 xi_1 (zero under common noise)

  double t_max() const { return grid.back(); }

  template <typename Getter>
  auto interp(const Getter& v, double t) const {
    if (t <= grid.front()) return v(0);
    if (t >= grid.back()) return v(grid.size() - 1);
    double h = grid[1] - grid[0];
    std::size_t i = std::min<std::size_t>(grid.size() - 2,
                                          (std::size_t)((t - grid.front()) / h));
    while (grid[i + 1] < t) ++i;
    double w = (t - grid[i]) / (grid[i + 1] - grid[i]);
    return decltype(v(0))((1.0 - w) * v(i) + w * v(i + 1));
  }

  Mat gain_centered_at(double t) const {
    return interp([&](std::size_t i) { return gain_centered[i]; }, t);
  }
  Mat gain_mean_at(double t) const {
    return interp([&](std::size_t i) { return gain_mean[i]; }, t);
  }
  Vec off_base_at(double t) const {
    return interp([&](std::size_t i) { return off_base[i]; }, t);
  }
  Vec off_load_at(double t) const {
    return interp([&](std::size_t i) { return off_load[i]; }, t);
  }
};

template <typename Backward>
FeedbackLaw make_feedback_law(const CanonicalProblem& p, const Backward& back,
                              const YSolution& y,
                              const std::vector<double>& grid) {
  DerivedCoefficients dc = derive_coefficients(p, back, y, grid);
  FeedbackLaw law;
  law.d = p.d();
  law.m = p.m();
  law.finite = p.spec.horizon.finite;
  law.rho = p.rho();
  law.common_noise = p.spec.common_noise;
  law.factor = p.spec.factor;
  law.grid = grid;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    double t = grid[j];
    double m = p.factor_mean(t);
    Mat Sinv = invert_spd(dc.S[j], ErrorKind::SingularS, "S");
    Mat Shatinv = invert_spd(dc.Shat[j], ErrorKind::SingularShat, "Shat");
    law.gain_centered.push_back(-Sinv * dc.U[j]);
    law.gain_mean.push_back(-Shatinv * dc.V[j]);
    Vec o0 = -Shatinv * dc.O_base[j];
    Vec o1 = -Shatinv * dc.O_load[j];
    law.shatO_base.push_back(o0);
    law.shatO_load.push_back(o1);
    Vec c1 = p.spec.common_noise ? Vec(Vec::Zero(p.m()))
                                 : Vec(-Sinv * dc.xi_load[j]);
    law.centered_load.push_back(c1);
    // offset(t, p) = -Shat^-1 O(t, p) - S^-1 xi_1 (p - m(t))
    law.off_base.push_back(Vec(o0 - c1 * m));
    law.off_load.push_back(Vec(o1 + c1));
  }
  return law;
}

// Optimal control value; `p` is the exogenous factor value (ignored for
// deterministic problems).
inline Vec control(const FeedbackLaw& law, double t, const Vec& x,
                   const Vec& xbar, double p = 0.0) {
  if (law.finite && (t < -1e-12 || t > law.t_max() + 1e-12))
    fail(ErrorKind::OutOfGrid, "control time outside the law grid");
  if (t < 0.0)
    fail(ErrorKind::OutOfGrid, "control time negative");
  return law.gain_centered_at(t) * (x - xbar) + law.gain_mean_at(t) * xbar +
         law.off_base_at(t) + law.off_load_at(t) * p;
}

struct MeanStatePath {
  std::vector<double> grid;
  std::vector<Vec> mean;
  bool reached_steady_state = false;
  double steady_state_time = 0.0;

  Vec at(double t) const {
    if (t <= grid.front()) return mean.front();
    if (t >= grid.back()) return mean.back();
    double h = grid[1] - grid[0];
    std::size_t i = std::min<std::size_t>(grid.size() - 2,
                                          (std::size_t)((t - grid.front()) / h));
    while (grid[i + 1] < t) ++i;
    double w = (t - grid[i]) / (grid[i + 1] - grid[i]);
    return (1.0 - w) * mean[i] + w * mean[i + 1];
  }
};

// Forward integration of d/dt E[X] = Bhat E[X] + Chat E[alpha] + E[beta].
inline MeanStatePath mean_state_path(const CanonicalProblem& p,
                                     const FeedbackLaw& law, double T,
                                     int steps) {
  MeanStatePath out;
  out.grid.resize(steps + 1);
  out.mean.resize(steps + 1);
  const double h = T / steps;
  auto rhs = [&](double t, const Vec& xb) -> Vec {
    double m = p.factor_mean(t);
    Vec mean_alpha = law.gain_mean_at(t) * xb + law.off_base_at(t) +
                     law.off_load_at(t) * m;
    return p.beta(t).mean(m) + p.Bhat(t) * xb + p.Chat(t) * mean_alpha;
  };
  Vec x = p.spec.x0.mean;
  for (int j = 0; j <= steps; ++j) {
    double t = h * j;
    out.grid[j] = t;
    out.mean[j] = x;
    if (!out.reached_steady_state && rhs(t, x).norm() < 1e-10) {
      out.reached_steady_state = true;
      out.steady_state_time = t;
    }
    if (j == steps) break;
    Vec k1 = rhs(t, x);
    Vec k2 = rhs(t + 0.5 * h, Vec(x + 0.5 * h * k1));
    Vec k3 = rhs(t + 0.5 * h, Vec(x + 0.5 * h * k2));
    Vec k4 = rhs(t + h, Vec(x + h * k3));
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return out;
}

inline MeanStatePath mean_state_path(const CanonicalProblem& p,
                                     const FeedbackLaw& law) {
  if (p.spec.horizon.finite) {
    int steps = std::max<int>(2, (int)law.grid.size() - 1);
    return mean_state_path(p, law, p.spec.horizon.T, steps);
  }
  double T = std::max(law.t_max(), 10.0 / p.rho());
  return mean_state_path(p, law, T, std::max(512, (int)(64 * T)));
}

// V0 of the verification theorem.  X0 is independent of the driving noise,
// so E[Y0' X0] = E[Y0]' E[X0]; with the factor started at a known value,
// Y0 is deterministic and equals the mean path at 0.
inline double value(const CanonicalProblem& p, const Mat& K0, const Mat& L0,
                    const YSolution& y, const RSolution& r) {
  const InitialLaw& law = p.spec.x0;
  double v = (K0 * law.cov).trace();
  v += law.mean.dot(L0 * law.mean);
  v += 2.0 * y.mean_at(0.0).dot(law.mean);
  v += r.r0();
  return v;
}

inline double value(const CanonicalProblem& p, const RiccatiPath& path,
                    const YSolution& y, const RSolution& r) {
  return value(p, path.K.front(), path.Lambda.front(), y, r);
}
inline double value(const CanonicalProblem& p, const AlgebraicRiccatiPair& are,
                    const YSolution& y, const RSolution& r) {
  return value(p, are.K, are.Lambda, y, r);
}

}  // namespace lqmkv
