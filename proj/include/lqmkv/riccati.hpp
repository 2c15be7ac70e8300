#pragma once

#include <algorithm>
#include <vector>

#include "lqmkv/assumptions.hpp"
#include "lqmkv/problem.hpp"

namespace lqmkv {

// S, Shat, U, V evaluated at one time from (K, Lambda), plus their inverses.
// These are the only matrices the optimal feedback needs besides K, Lambda.
struct GainBlocks {
  Mat S, Shat, U, V, Sinv, Shatinv;
};

inline GainBlocks gain_blocks(const CanonicalProblem& p, double t, const Mat& K,
                              const Mat& Lambda) {
  GainBlocks g;
  g.S = p.N(t);
  g.Shat = p.Nhat(t);
  g.U = p.I(t) + p.C(t).transpose() * K;
  g.V = p.Ihat(t) + p.Chat(t).transpose() * Lambda;
  for (int i = 0; i < p.n(); ++i) {
    Mat F = p.F(i, t), Fh = p.Fhat(i, t);
    g.S += F.transpose() * K * F;
    g.Shat += Fh.transpose() * K * Fh;
    g.U += F.transpose() * K * p.D(i, t);
    g.V += Fh.transpose() * K * p.Dhat(i, t);
  }
  g.S = symmetrize(g.S);
  g.Shat = symmetrize(g.Shat);
  g.Sinv = invert_spd(g.S, ErrorKind::SingularS, "S");
  g.Shatinv = invert_spd(g.Shat, ErrorKind::SingularShat, "Shat");
  return g;
}

// Phi^0(K) = -rho K + KB + B'K + sum_i D_i' K D_i + Q - U' S^-1 U.
inline Mat phi0(const Mat& K, double t, const CanonicalProblem& p) {
  Mat S = p.N(t);
  Mat U = p.I(t) + p.C(t).transpose() * K;
  Mat out = -p.rho() * K + K * p.B(t) + p.B(t).transpose() * K + p.Q(t);
  for (int i = 0; i < p.n(); ++i) {
    Mat D = p.D(i, t), F = p.F(i, t);
    out += D.transpose() * K * D;
    S += F.transpose() * K * F;
    U += F.transpose() * K * D;
  }
  Mat Sinv = invert_spd(symmetrize(S), ErrorKind::SingularS, "S");
  out -= U.transpose() * Sinv * U;
  return symmetrize(out);
}

// Psi^0(K, Lambda) = -rho L + L Bhat + Bhat'L + sum_i Dhat_i' K Dhat_i + Qhat
//                    - V' Shat^-1 V.
inline Mat psi0(const Mat& K, const Mat& Lambda, double t,
                const CanonicalProblem& p) {
  Mat Shat = p.Nhat(t);
  Mat V = p.Ihat(t) + p.Chat(t).transpose() * Lambda;
  Mat out = -p.rho() * Lambda + Lambda * p.Bhat(t) +
            p.Bhat(t).transpose() * Lambda + p.Qhat(t);
  for (int i = 0; i < p.n(); ++i) {
    Mat Dh = p.Dhat(i, t), Fh = p.Fhat(i, t);
    out += Dh.transpose() * K * Dh;
    Shat += Fh.transpose() * K * Fh;
    V += Fh.transpose() * K * Dh;
  }
  Mat Shatinv = invert_spd(symmetrize(Shat), ErrorKind::SingularShat, "Shat");
  out -= V.transpose() * Shatinv * V;
  return symmetrize(out);
}

// Backward solution of the coupled Riccati pair on a uniform grid, with the
// time derivatives stored for cubic-Hermite dense output.
struct RiccatiPath {
  std::vector<double> grid;      // ascending, grid.front() = 0, grid.back() = T
  std::vector<Mat> K, Lambda;    // per node, symmetric
  std::vector<Mat> dK, dLambda;  // dK/dt = -Phi^0, dLambda/dt = -Psi^0

  double h() const { return grid[1] - grid[0]; }

  // Cubic Hermite interpolation; exact at nodes.
  Mat eval_K(double t) const { return eval(K, dK, t); }
  Mat eval_Lambda(double t) const { return eval(Lambda, dLambda, t); }

 private:
  Mat eval(const std::vector<Mat>& y, const std::vector<Mat>& dy,
           double t) const {
    if (t <= grid.front()) return y.front();
    if (t >= grid.back()) return y.back();
    std::size_t i = std::min<std::size_t>(
        grid.size() - 2, (std::size_t)((t - grid.front()) / h()));
    while (grid[i + 1] < t) ++i;
    double hh = grid[i + 1] - grid[i];
    double s = (t - grid[i]) / hh;
    double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
    double h10 = s * (1 - s) * (1 - s);
    double h01 = s * s * (3 - 2 * s);
    double h11 = s * s * (s - 1);
    return h00 * y[i] + hh * h10 * dy[i] + h01 * y[i + 1] + hh * h11 * dy[i + 1];
  }
};

struct AlgebraicRiccatiPair {
  Mat K, Lambda;
  double residual_phi0 = 0.0;  // ||Phi^0(K)||_F
  double residual_psi0 = 0.0;  // ||Psi^0(K, Lambda)||_F
  std::vector<double> ladder_gaps;  // ||K_0^{T_{j+1}} - K_0^{T_j}|| per rung
  bool ladder_marginal = false;     // convergence achieved only on the last rung
};

namespace detail {

constexpr double kBlowUp = 1e12;

struct KLState {
  Mat K, L;
  KLState operator+(const KLState& o) const { return {K + o.K, L + o.L}; }
  KLState operator*(double a) const { return {a * K, a * L}; }
};

inline KLState kl_rhs(const CanonicalProblem& p, double t, const KLState& s) {
  return {-phi0(s.K, t, p), -psi0(s.K, s.L, t, p)};
}

}  // namespace detail

struct FiniteSolveOptions {
  // Positivity of S, Shat is always verified at every accepted node; this
  // flag only skips the up-front (H2)(iii)-(iv) gate (Remark 5.1 route).
  bool allow_unverified = false;
};

// Backward classical RK4 on dK = -Phi^0 dt, dLambda = -Psi^0 dt from
// K_T = P, Lambda_T = P + Ptilde.  The K block of the system is independent
// of Lambda, so the joint pass integrates K first in effect and feeds its
// stage values to Lambda without interpolation.
inline RiccatiPath solve_finite_terminal(const CanonicalProblem& p,
                                         int grid_steps, const Mat& KT,
                                         const Mat& LT, double T) {
  if (grid_steps < 2)
    fail(ErrorKind::InvalidParams, "grid_steps must be >= 2");
  const double h = T / grid_steps;
  RiccatiPath path;
  path.grid.resize(grid_steps + 1);
  path.K.resize(grid_steps + 1);
  path.Lambda.resize(grid_steps + 1);
  path.dK.resize(grid_steps + 1);
  path.dLambda.resize(grid_steps + 1);
  for (int j = 0; j <= grid_steps; ++j) path.grid[j] = T * j / grid_steps;

  detail::KLState y{symmetrize(KT), symmetrize(LT)};
  auto store = [&](int j, const detail::KLState& s) {
    path.K[j] = symmetrize(s.K);
    path.Lambda[j] = symmetrize(s.L);
    // a posteriori positivity of S and Shat at the accepted node
    GainBlocks g = gain_blocks(p, path.grid[j], path.K[j], path.Lambda[j]);
    auto rhs = detail::kl_rhs(p, path.grid[j], {path.K[j], path.Lambda[j]});
    path.dK[j] = rhs.K;
    path.dLambda[j] = rhs.L;
    if (path.K[j].cwiseAbs().maxCoeff() > detail::kBlowUp ||
        path.Lambda[j].cwiseAbs().maxCoeff() > detail::kBlowUp)
      fail(ErrorKind::BlowUp, "Riccati solution exceeded 1e12 at t=" +
                                  std::to_string(path.grid[j]));
  };
  store(grid_steps, y);
  for (int j = grid_steps; j > 0; --j) {
    const double t = path.grid[j];
    try {
      auto k1 = detail::kl_rhs(p, t, y);
      auto k2 = detail::kl_rhs(p, t - 0.5 * h, y + k1 * (-0.5 * h));
      auto k3 = detail::kl_rhs(p, t - 0.5 * h, y + k2 * (-0.5 * h));
      auto k4 = detail::kl_rhs(p, t - h, y + k3 * (-h));
      y = y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (-h / 6.0);
      y.K = symmetrize(y.K);
      y.L = symmetrize(y.L);
      store(j - 1, y);
    } catch (const SolverError& e) {
      if (e.kind() == ErrorKind::SingularS || e.kind() == ErrorKind::SingularShat)
        fail(e.kind(), std::string(e.what()) + " during backward integration near t=" +
                           std::to_string(t - h));
      throw;
    }
  }
  return path;
}

namespace detail {

inline void standing_gate(const CanonicalProblem& p, bool allow_unverified) {
  if (allow_unverified) return;
  AssumptionReport rep = validate_assumptions(p);
  if (!rep.standing_ok)
    fail(ErrorKind::AssumptionsFailed,
         "(H2)(iii)-(iv) not satisfied; rerun with the Remark 5.1 route "
         "(--allow-unverified) to check S, Shat positivity a posteriori");
}

}  // namespace detail

inline RiccatiPath solve_finite(const CanonicalProblem& p, int grid_steps,
                                const FiniteSolveOptions& opt = {}) {
  if (!p.spec.horizon.finite)
    fail(ErrorKind::InvalidParams, "solve_finite requires a finite horizon");
  detail::standing_gate(p, opt.allow_unverified);
  return solve_finite_terminal(p, grid_steps, p.spec.cost.P, p.Phat(),
                               p.spec.horizon.T);
}

namespace detail {

// Analytic Frechet derivative of Phi^0 at K in direction E.
inline Mat dphi0(const CanonicalProblem& p, const Mat& K, const Mat& E) {
  const double t = 0.0;
  Mat S = p.N(t);
  Mat U = p.I(t) + p.C(t).transpose() * K;
  Mat dU = p.C(t).transpose() * E;
  Mat dS = Mat::Zero(p.m(), p.m());
  Mat out = -p.rho() * E + E * p.B(t) + p.B(t).transpose() * E;
  for (int i = 0; i < p.n(); ++i) {
    Mat D = p.D(i, t), F = p.F(i, t);
    out += D.transpose() * E * D;
    S += F.transpose() * K * F;
    U += F.transpose() * K * D;
    dU += F.transpose() * E * D;
    dS += F.transpose() * E * F;
  }
  Mat Sinv = invert_spd(symmetrize(S), ErrorKind::SingularS, "S");
  out -= dU.transpose() * Sinv * U + U.transpose() * Sinv * dU -
         U.transpose() * Sinv * dS * Sinv * U;
  return symmetrize(out);
}

// Frechet derivative of Psi^0 in Lambda (K held fixed; Shat does not depend
// on Lambda).
inline Mat dpsi0(const CanonicalProblem& p, const Mat& K, const Mat& Lambda,
                 const Mat& E) {
  const double t = 0.0;
  Mat Shat = p.Nhat(t);
  Mat V = p.Ihat(t) + p.Chat(t).transpose() * Lambda;
  for (int i = 0; i < p.n(); ++i) {
    Mat Dh = p.Dhat(i, t), Fh = p.Fhat(i, t);
    Shat += Fh.transpose() * K * Fh;
    V += Fh.transpose() * K * Dh;
  }
  Mat Shatinv = invert_spd(symmetrize(Shat), ErrorKind::SingularShat, "Shat");
  Mat dV = p.Chat(t).transpose() * E;
  Mat out = -p.rho() * E + E * p.Bhat(t) + p.Bhat(t).transpose() * E;
  out -= dV.transpose() * Shatinv * V + V.transpose() * Shatinv * dV;
  return symmetrize(out);
}

// Damped Newton on a symmetric-matrix equation residual(X) = 0 with analytic
// directional derivative.  Unknowns are the d(d+1)/2 upper-triangle entries.
template <typename Residual, typename Derivative>
Mat newton_symmetric(int d, Mat X, Residual&& res, Derivative&& deriv,
                     const char* label) {
  const int pdim = d * (d + 1) / 2;
  auto pack = [&](const Mat& A, Vec& v) {
    int k = 0;
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) v(k++) = A(i, j);
  };
  Vec f(pdim), fnew(pdim);
  Mat R = res(X);
  pack(R, f);
  for (int iter = 0; iter < 100; ++iter) {
    if (f.norm() < 1e-13 * std::max(1.0, X.norm())) break;
    Mat J(pdim, pdim);
    int col = 0;
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        Mat E = Mat::Zero(d, d);
        E(i, j) = 1.0;
        E(j, i) = 1.0;
        Vec dcol(pdim);
        pack(deriv(X, E), dcol);
        J.col(col++) = dcol;
      }
    Vec step = J.fullPivLu().solve(-f);
    Mat dX = Mat::Zero(d, d);
    int k = 0;
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        dX(i, j) = step(k);
        dX(j, i) = step(k);
        ++k;
      }
    double alpha = 1.0;
    bool accepted = false;
    for (int half = 0; half < 40; ++half) {
      Mat Xtry = X + alpha * dX;
      try {
        Mat Rtry = res(Xtry);
        pack(Rtry, fnew);
        if (fnew.norm() < f.norm() || fnew.norm() < 1e-14) {
          X = Xtry;
          R = Rtry;
          f = fnew;
          accepted = true;
          break;
        }
      } catch (const SolverError&) {
        // halve into the feasible region
      }
      alpha *= 0.5;
    }
    if (!accepted)
      fail(ErrorKind::NewtonDiverged,
           std::string(label) + ": Newton step rejected after 40 halvings");
  }
  if (f.norm() > 1e-9)
    fail(ErrorKind::NewtonDiverged,
         std::string(label) + ": Newton stalled at residual " + std::to_string(f.norm()));
  return symmetrize(X);
}

}  // namespace detail

struct InfiniteSolveOptions {
  std::vector<double> ladder;  // horizons; default {5,10,20,40,80}/rho
  double tol = 1e-9;           // Frobenius tolerance between ladder rungs
  int steps_per_unit = 64;     // RK4 resolution of each ladder solve
  bool allow_unverified = false;
};

// Algebraic Riccati pair by the horizon-limit ladder (zero terminal data)
// followed by a damped Newton polish on Phi^0(K) = 0 and Psi^0(K, L) = 0.
inline AlgebraicRiccatiPair solve_infinite(const CanonicalProblem& p,
                                           InfiniteSolveOptions opt = {}) {
  if (p.spec.horizon.finite)
    fail(ErrorKind::InvalidParams, "solve_infinite requires an infinite horizon");
  detail::standing_gate(p, opt.allow_unverified);
  const double rho = p.rho();
  if (opt.ladder.empty())
    opt.ladder = {5.0 / rho, 10.0 / rho, 20.0 / rho, 40.0 / rho, 80.0 / rho};

  AlgebraicRiccatiPair out;
  Mat Kprev, Lprev;
  bool converged = false;
  const Mat zero_d = Mat::Zero(p.d(), p.d());
  for (std::size_t r = 0; r < opt.ladder.size(); ++r) {
    double T = opt.ladder[r];
    int steps = std::max(64, (int)std::ceil(T * opt.steps_per_unit));
    RiccatiPath path = solve_finite_terminal(p, steps, zero_d, zero_d, T);
    Mat K0 = path.K.front(), L0 = path.Lambda.front();
    if (r > 0) {
      double gap = std::max((K0 - Kprev).norm(), (L0 - Lprev).norm());
      out.ladder_gaps.push_back(gap);
      if (gap < opt.tol) {
        converged = true;
        out.ladder_marginal = (r + 1 == opt.ladder.size());
        Kprev = K0;
        Lprev = L0;
        break;
      }
    }
    Kprev = K0;
    Lprev = L0;
    if (r + 1 == opt.ladder.size() && !out.ladder_gaps.empty()) {
      // keep the last iterate for the Newton polish but flag marginal
      // convergence when the gap still shrinks geometrically
      double last = out.ladder_gaps.back();
      if (last < 1e-4) {
        converged = true;
        out.ladder_marginal = true;
      }
    }
  }
  if (!converged)
    fail(ErrorKind::NoConvergence, "horizon ladder exhausted without convergence");

  out.K = detail::newton_symmetric(
      p.d(), Kprev, [&](const Mat& K) { return phi0(K, 0.0, p); },
      [&](const Mat& K, const Mat& E) { return detail::dphi0(p, K, E); },
      "Phi0");
  out.Lambda = detail::newton_symmetric(
      p.d(), Lprev, [&](const Mat& L) { return psi0(out.K, L, 0.0, p); },
      [&](const Mat& L, const Mat& E) { return detail::dpsi0(p, out.K, L, E); },
      "Psi0");
  out.residual_phi0 = phi0(out.K, 0.0, p).norm();
  out.residual_psi0 = psi0(out.K, out.Lambda, 0.0, p).norm();
  // final positive-definiteness certificate for the gain denominators
  gain_blocks(p, 0.0, out.K, out.Lambda);
  return out;
}

}  // namespace lqmkv
