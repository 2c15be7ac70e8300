#pragma once

#include <functional>
#include <optional>

#include "lqmkv/riccati.hpp"

namespace lqmkv {

// Coefficients of the linear mean-field BSDE for Y, assembled from the
// backward Riccati solution.  The struct keeps callable access to K, Lambda
// so the Y-integrator can evaluate stage times exactly.
struct BsdeCoefficients {
  const CanonicalProblem* prob = nullptr;
  std::function<Mat(double)> K;
  std::function<Mat(double)> Lambda;

  Mat G(double t) const {
    GainBlocks g = gain_blocks(*prob, t, K(t), Lambda(t));
    return p_rho() * Mat::Identity(d(), d()) - prob->B(t) +
           prob->C(t) * g.Sinv * g.U;
  }
  Mat Ghat(double t) const {
    GainBlocks g = gain_blocks(*prob, t, K(t), Lambda(t));
    return p_rho() * Mat::Identity(d(), d()) - prob->Bhat(t) +
           prob->Chat(t) * g.Shatinv * g.V;
  }
  Mat J(int i, double t) const {
    GainBlocks g = gain_blocks(*prob, t, K(t), Lambda(t));
    return -prob->D(i, t) + prob->F(i, t) * g.Sinv * g.U;
  }
  Mat Jhat(int i, double t) const {
    GainBlocks g = gain_blocks(*prob, t, K(t), Lambda(t));
    return -prob->Dhat(i, t) + prob->Fhat(i, t) * g.Shatinv * g.V;
  }

  // theta as an affine function of the factor value p.  Under common noise
  // the bar-operator is conditioning on W^0, under which every coefficient
  // process is measurable, so the centered pieces vanish.
  FactorAffineVec theta(double t) const {
    const CanonicalProblem& p = *prob;
    const bool common = p.spec.common_noise;
    const double m = p.factor_mean(t);
    const Mat Kt = K(t), Lt = Lambda(t);
    GainBlocks g = gain_blocks(p, t, Kt, Lt);

    auto bar = [&](const FactorAffineVec& v) -> FactorAffineVec {
      if (common) return v;
      return {v.mean(m), Vec::Zero(v.a0.size())};
    };
    auto centered = [&](const FactorAffineVec& v) { return v - bar(v); };

    FactorAffineVec beta = p.beta(t);
    FactorAffineVec out = FactorAffineVec::zero(p.d());
    out += Mat(-Mat::Identity(p.d(), p.d())) * p.M(t);
    out += Mat(-Kt) * centered(beta);
    out += Mat(-Lt) * bar(beta);
    FactorAffineVec h_term = centered(p.H(t));
    FactorAffineVec o_term = bar(p.H(t));
    for (int i = 0; i < p.n(); ++i) {
      FactorAffineVec gam = p.gamma(i, t);
      out += Mat(-p.D(i, t).transpose() * Kt) * centered(gam);
      out += Mat(-p.Dhat(i, t).transpose() * Kt) * bar(gam);
      h_term += Mat(p.F(i, t).transpose() * Kt) * centered(gam);
      o_term += Mat(p.Fhat(i, t).transpose() * Kt) * bar(gam);
    }
    out += Mat(g.U.transpose() * g.Sinv) * h_term;
    out += Mat(g.V.transpose() * g.Shatinv) * o_term;
    return out;
  }

 private:
  int d() const { return prob->d(); }
  double p_rho() const { return prob->rho(); }
};

inline BsdeCoefficients assemble_bsde(const CanonicalProblem& prob,
                                      const RiccatiPath& path) {
  BsdeCoefficients c;
  c.prob = &prob;
  c.K = [&path](double t) { return path.eval_K(t); };
  c.Lambda = [&path](double t) { return path.eval_Lambda(t); };
  return c;
}

inline BsdeCoefficients assemble_bsde(const CanonicalProblem& prob,
                                      const AlgebraicRiccatiPair& are) {
  BsdeCoefficients c;
  c.prob = &prob;
  Mat K = are.K, L = are.Lambda;
  c.K = [K](double) { return K; };
  c.Lambda = [L](double) { return L; };
  return c;
}

// x(t) = c0 + c1 exp(-kappa t), the closed-form shape of infinite-horizon
// deterministic parts.
struct ExpAffine {
  Vec c0, c1;
  double kappa = 0.0;
  Vec at(double t) const { return c0 + c1 * std::exp(-kappa * t); }
};

// Y_t = mean(t) + load(t) (p_t - E[p_t]); the deterministic regime has a
// zero loading.  Z^Y vanishes on the state drivers in every tractable
// regime; the loading times the factor vol is the Z-loading on the factor's
// own driver.
struct YSolution {
  bool factor_affine = false;
  double factor_vol = 0.0;
  double factor_kappa = 0.0;

  std::vector<double> grid;
  std::vector<Vec> mean, dmean;
  std::vector<Vec> load, dload;
  std::optional<ExpAffine> mean_cf;   // exact stationary form when available
  std::optional<Vec> load_cf;

  Vec mean_at(double t) const {
    if (mean_cf) return mean_cf->at(t);
    return hermite(mean, dmean, t);
  }
  Vec load_at(double t) const {
    if (load_cf) return *load_cf;
    if (!factor_affine) return Vec::Zero(mean_at(0.0).size());
    return hermite(load, dload, t);
  }
  // affine-in-p view at time t, given the factor mean m(t)
  FactorAffineVec affine_at(double t, double m) const {
    Vec l = load_at(t);
    return {mean_at(t) - l * m, l};
  }
  Vec value(double t, double p, double m) const {
    return mean_at(t) + load_at(t) * (p - m);
  }
  Vec zy0_at(double t) const { return load_at(t) * factor_vol; }

 private:
  Vec hermite(const std::vector<Vec>& y, const std::vector<Vec>& dy,
              double t) const {
    if (grid.empty()) fail(ErrorKind::BackwardSolutionMissing, "Y path is empty");
    if (t <= grid.front()) return y.front();
    if (t >= grid.back()) return y.back();
    double h = grid[1] - grid[0];
    std::size_t i = std::min<std::size_t>(grid.size() - 2,
                                          (std::size_t)((t - grid.front()) / h));
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

namespace detail {

inline void require_tractable_factor(const CanonicalProblem& p) {
  if (!p.spec.factor) return;
  if (p.spec.factor->binding != DriverBinding::StateDriver) return;
  bool loads = p.spec.drift.beta.stochastic() || p.spec.cost.M.stochastic() ||
               p.spec.cost.H.stochastic();
  for (const auto& blk : p.spec.diffusion) loads = loads || blk.gamma.stochastic();
  if (loads)
    fail(ErrorKind::UnsupportedRegime,
         "stochastic coefficients load on a state driver; Y is not explicitly solvable");
}

// Spectral abscissa of (A - rho I); the integrability conditions require it
// positive.
inline double abscissa_minus_rho(const Mat& A, double rho) {
  Eigen::EigenSolver<Mat> es(A);
  double lo = std::numeric_limits<double>::infinity();
  for (int i = 0; i < A.rows(); ++i)
    lo = std::min(lo, es.eigenvalues()(i).real());
  return lo - rho;
}

}  // namespace detail

// Finite-horizon Y: backward 4th-order integration of the mean ODE
//   a' = thetabar + Ghat' a,  a(T) = L,
// and, in the factor regime, of the loading ODE
//   c' = theta1 + (Geff' + kappa) c,  c(T) = 0,
// where Geff is G for an independent factor and Ghat under common noise.
inline YSolution solve_y_finite(const BsdeCoefficients& co, const Vec& L,
                                int grid_steps) {
  const CanonicalProblem& p = *co.prob;
  if (!p.spec.horizon.finite)
    fail(ErrorKind::InvalidParams, "solve_y_finite requires a finite horizon");
  detail::require_tractable_factor(p);
  const double T = p.spec.horizon.T;
  const double h = T / grid_steps;
  const bool common = p.spec.common_noise;

  YSolution y;
  y.grid.resize(grid_steps + 1);
  for (int j = 0; j <= grid_steps; ++j) y.grid[j] = T * j / grid_steps;
  y.mean.resize(grid_steps + 1);
  y.dmean.resize(grid_steps + 1);
  if (p.spec.factor) {
    y.factor_affine = true;
    y.factor_vol = p.spec.factor->vol;
    y.factor_kappa = p.spec.factor->kappa;
    y.load.resize(grid_steps + 1);
    y.dload.resize(grid_steps + 1);
  }
  const double kappa = p.spec.factor ? p.spec.factor->kappa : 0.0;

  auto mean_rhs = [&](double t, const Vec& a) -> Vec {
    return co.theta(t).mean(p.factor_mean(t)) + co.Ghat(t).transpose() * a;
  };
  auto load_rhs = [&](double t, const Vec& c) -> Vec {
    Mat Geff = common ? co.Ghat(t) : co.G(t);
    return co.theta(t).a1 + (Geff.transpose() + kappa * Mat::Identity(p.d(), p.d())) * c;
  };

  Vec a = L, c = Vec::Zero(p.d());
  auto store = [&](int j) {
    y.mean[j] = a;
    y.dmean[j] = mean_rhs(y.grid[j], a);
    if (y.factor_affine) {
      y.load[j] = c;
      y.dload[j] = load_rhs(y.grid[j], c);
    }
  };
  store(grid_steps);
  for (int j = grid_steps; j > 0; --j) {
    double t = y.grid[j];
    auto rk4_back = [&](auto&& rhs, Vec& v) {
      Vec k1 = rhs(t, v);
      Vec k2 = rhs(t - 0.5 * h, Vec(v - 0.5 * h * k1));
      Vec k3 = rhs(t - 0.5 * h, Vec(v - 0.5 * h * k2));
      Vec k4 = rhs(t - h, Vec(v - h * k3));
      v -= (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    };
    rk4_back(mean_rhs, a);
    if (y.factor_affine) rk4_back(load_rhs, c);
    store(j - 1);
  }
  return y;
}

struct InfiniteYOptions {
  double grid_horizon = 0.0;  // output horizon; default 10/rho
  int steps_per_unit = 64;
};

// Infinite-horizon Y in the explicitly solvable regimes:
//   theta == 0            -> Y == 0;
//   constant theta        -> stationary closed form;
//   time-varying / factor -> backward integration from the settled state.
inline YSolution solve_y_infinite(const BsdeCoefficients& co,
                                  InfiniteYOptions opt = {}) {
  const CanonicalProblem& p = *co.prob;
  if (p.spec.horizon.finite)
    fail(ErrorKind::InvalidParams, "solve_y_infinite requires an infinite horizon");
  detail::require_tractable_factor(p);
  const double rho = p.rho();
  const bool common = p.spec.common_noise;
  const int d = p.d();
  if (opt.grid_horizon <= 0.0) opt.grid_horizon = 10.0 / rho;

  const Mat Ghat = co.Ghat(0.0);
  const Mat G = co.G(0.0);
  const double kappa = p.spec.factor ? p.spec.factor->kappa : 1.0;
  const Mat Geff = common ? Ghat : G;

  // integrability gates: Ghat - rho (always), Geff - rho in the factor regime
  double gap_hat = detail::abscissa_minus_rho(Ghat, rho);
  FactorAffineVec th0 = co.theta(0.0);
  bool theta_zero = true;
  {
    int probes = 17;
    for (int i = 0; i < probes && theta_zero; ++i) {
      double t = opt.grid_horizon * i / (probes - 1);
      FactorAffineVec th = co.theta(t);
      theta_zero = th.a0.cwiseAbs().maxCoeff() < 1e-300 &&
                   th.a1.cwiseAbs().maxCoeff() < 1e-300;
    }
  }

  YSolution y;
  if (p.spec.factor) {
    y.factor_vol = p.spec.factor->vol;
    y.factor_kappa = p.spec.factor->kappa;
  }

  if (theta_zero) {
    y.mean_cf = ExpAffine{Vec::Zero(d), Vec::Zero(d), 0.0};
    y.load_cf = Vec::Zero(d);
    return y;
  }

  if (gap_hat <= 0.0)
    fail(ErrorKind::IntegrabilityViolation,
         d == 1 ? "scalar regime requires Ghat - rho > 0"
                : "spectral abscissa of Ghat - rho I must be positive");

  bool has_load = false;
  {
    int probes = 17;
    for (int i = 0; i < probes && !has_load; ++i) {
      double t = opt.grid_horizon * i / (probes - 1);
      if (co.theta(t).a1.cwiseAbs().maxCoeff() > 0.0) has_load = true;
    }
  }
  if (has_load && !common && detail::abscissa_minus_rho(G, rho) <= 0.0)
    fail(ErrorKind::IntegrabilityViolation,
         "independent-factor regime requires G - rho positive as well");
  y.factor_affine = has_load;

  // Constant data admits the exact stationary form
  //   mean(t) = -(Ghat')^-1 (theta0 + theta1 pbar)
  //             - (Ghat' + kappa)^-1 theta1 (p0 - pbar) e^{-kappa t},
  //   load    = -(Geff' + kappa)^-1 theta1.
  const bool const_data =
      p.spec.drift.beta.base.is_constant() &&
      p.spec.cost.M.base.is_constant() && p.spec.cost.H.base.is_constant() &&
      (p.spec.cost.M.load.empty() || p.spec.cost.M.load.is_constant()) &&
      (p.spec.cost.H.load.empty() || p.spec.cost.H.load.is_constant()) &&
      (p.spec.drift.beta.load.empty() || p.spec.drift.beta.load.is_constant()) &&
      [&] {
        for (const auto& blk : p.spec.diffusion)
          if (!blk.gamma.base.is_constant() ||
              (!blk.gamma.load.empty() && !blk.gamma.load.is_constant()))
            return false;
        return true;
      }();

  if (const_data) {
    const double pbar = p.spec.factor ? p.spec.factor->mean : 0.0;
    const double p0 = p.spec.factor ? p.spec.factor->init : 0.0;
    Mat GhT = Ghat.transpose();
    Vec c0 = -GhT.fullPivLu().solve(th0.a0 + th0.a1 * pbar);
    Vec c1 = Vec::Zero(d);
    Vec lo = Vec::Zero(d);
    if (has_load) {
      Mat GhK = GhT + kappa * Mat::Identity(d, d);
      c1 = -GhK.fullPivLu().solve(Vec(th0.a1 * (p0 - pbar)));
      Mat GeK = Geff.transpose() + kappa * Mat::Identity(d, d);
      lo = -GeK.fullPivLu().solve(th0.a1);
    }
    y.mean_cf = ExpAffine{c0, c1, has_load ? kappa : 0.0};
    y.load_cf = lo;
    return y;
  }

  // General tractable data: integrate backward from the settled state.
  double settle = opt.grid_horizon;
  auto extend = [&](const TimeVec& path) {
    if (!path.is_constant() && !path.empty())
      settle = std::max(settle, path.grid().back());
  };
  extend(p.spec.drift.beta.base);
  extend(p.spec.drift.beta.load);
  extend(p.spec.cost.M.base);
  extend(p.spec.cost.M.load);
  extend(p.spec.cost.H.base);
  extend(p.spec.cost.H.load);
  for (const auto& blk : p.spec.diffusion) {
    extend(blk.gamma.base);
    extend(blk.gamma.load);
  }
  double rate = std::min(gap_hat + rho, kappa);
  double T_cut = settle + 45.0 / rate;
  int steps = std::max(256, (int)std::ceil((T_cut)*opt.steps_per_unit));
  double h = T_cut / steps;

  auto mean_rhs = [&](double t, const Vec& a) -> Vec {
    return co.theta(t).mean(p.factor_mean(t)) + Ghat.transpose() * a;
  };
  auto load_rhs = [&](double t, const Vec& c) -> Vec {
    return co.theta(t).a1 + (Geff.transpose() + kappa * Mat::Identity(d, d)) * c;
  };
  FactorAffineVec thT = co.theta(T_cut);
  Vec a = -Ghat.transpose().fullPivLu().solve(thT.mean(p.spec.factor ? p.spec.factor->mean : 0.0));
  Vec c = Vec::Zero(d);
  if (has_load)
    c = -(Geff.transpose() + kappa * Mat::Identity(d, d)).fullPivLu().solve(thT.a1);

  int keep = (int)std::floor(opt.grid_horizon / h) + 1;
  keep = std::min(keep, steps);
  y.grid.resize(keep + 1);
  y.mean.resize(keep + 1);
  y.dmean.resize(keep + 1);
  if (has_load) {
    y.load.resize(keep + 1);
    y.dload.resize(keep + 1);
  }
  for (int j = steps; j > 0; --j) {
    double t = h * j;
    auto rk4_back = [&](auto&& rhs, Vec& v) {
      Vec k1 = rhs(t, v);
      Vec k2 = rhs(t - 0.5 * h, Vec(v - 0.5 * h * k1));
      Vec k3 = rhs(t - 0.5 * h, Vec(v - 0.5 * h * k2));
      Vec k4 = rhs(t - h, Vec(v - h * k3));
      v -= (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    };
    if (j <= keep) {
      y.grid[j] = t;
      y.mean[j] = a;
      y.dmean[j] = mean_rhs(t, a);
      if (has_load) {
        y.load[j] = c;
        y.dload[j] = load_rhs(t, c);
      }
    }
    rk4_back(mean_rhs, a);
    if (has_load) rk4_back(load_rhs, c);
  }
  y.grid[0] = 0.0;
  y.mean[0] = a;
  y.dmean[0] = mean_rhs(0.0, a);
  if (has_load) {
    y.load[0] = c;
    y.dload[0] = load_rhs(0.0, c);
  }
  return y;
}

// Scalar remainder R of the quadratic value expansion.
struct RSolution {
  std::vector<double> grid;
  std::vector<double> value;
  double tail_bound = 0.0;  // settle residual of the infinite-horizon cutoff

  double r0() const { return value.front(); }
  double at(double t) const {
    if (t <= grid.front()) return value.front();
    if (t >= grid.back()) return value.back();
    double h = grid[1] - grid[0];
    std::size_t i = std::min<std::size_t>(grid.size() - 2,
                                          (std::size_t)((t - grid.front()) / h));
    while (grid[i + 1] < t) ++i;
    double w = (t - grid[i]) / (grid[i + 1] - grid[i]);
    return (1.0 - w) * value[i] + w * value[i + 1];
  }
};

// h_t = E[Gamma^0_t], the discounted integrand of R.  All expectations of
// the affine-in-factor quantities reduce to the OU factor's first two
// moments.
inline double r_integrand(const CanonicalProblem& p, double t, const Mat& K,
                          const Mat& Lambda, const YSolution& y) {
  const bool common = p.spec.common_noise;
  const double m = p.factor_mean(t);
  const double v = p.factor_var(t);
  GainBlocks g = gain_blocks(p, t, K, Lambda);
  const Mat Id = Mat::Identity(p.d(), p.d());

  auto bar = [&](const FactorAffineVec& w) -> FactorAffineVec {
    if (common) return w;
    return {w.mean(m), Vec::Zero(w.a0.size())};
  };

  FactorAffineVec Y = y.affine_at(t, m);
  FactorAffineVec beta = p.beta(t);

  double h = 2.0 * quad_expectation(beta, Id, Y, m, v);
  FactorAffineVec xi = p.H(t) + FactorAffineVec(Mat(p.C(t).transpose()) * Y);
  FactorAffineVec O = bar(p.H(t)) + FactorAffineVec(Mat(p.Chat(t).transpose()) * bar(Y));
  for (int i = 0; i < p.n(); ++i) {
    FactorAffineVec gam = p.gamma(i, t);
    h += quad_expectation(gam, K, gam, m, v);
    xi += Mat(p.F(i, t).transpose() * K) * gam;
    O += Mat(p.Fhat(i, t).transpose() * K) * bar(gam);
  }
  if (common && p.spec.has_gamma0()) {
    FactorAffineVec g0 = p.gamma0(t);
    h += quad_expectation(g0, Lambda, g0, m, v);
    h += 2.0 * g0.mean(m).dot(y.zy0_at(t));
  }
  // centered xi quadratic (vanishes under common noise: xi is W^0-measurable)
  if (!common) h -= xi.a1.dot(g.Sinv * xi.a1) * v;
  h -= quad_expectation(O, g.Shatinv, O, m, v);
  return h;
}

struct RSolveOptions {
  double grid_horizon = 0.0;  // infinite horizon: output span, default 10/rho
  int grid_steps = 1000;      // finite horizon: Simpson intervals
  int steps_per_unit = 32;    // infinite horizon resolution
};

namespace detail {

template <typename HFn>
RSolution r_backward_simpson(const std::vector<double>& grid, double rho,
                             double terminal, HFn&& hfn) {
  RSolution r;
  r.grid = grid;
  r.value.assign(grid.size(), 0.0);
  r.value.back() = terminal;
  for (std::size_t j = grid.size() - 1; j > 0; --j) {
    double t0 = grid[j - 1], t1 = grid[j];
    double dt = t1 - t0;
    double e_half = std::exp(-rho * 0.5 * dt), e_full = e_half * e_half;
    double seg = dt / 6.0 *
                 (hfn(t0) + 4.0 * e_half * hfn(0.5 * (t0 + t1)) + e_full * hfn(t1));
    r.value[j - 1] = seg + e_full * r.value[j];
  }
  return r;
}

}  // namespace detail

inline RSolution solve_r(const CanonicalProblem& p, const RiccatiPath& path,
                         const YSolution& y, RSolveOptions opt = {}) {
  auto hfn = [&](double t) {
    return r_integrand(p, t, path.eval_K(t), path.eval_Lambda(t), y);
  };
  const double T = p.spec.horizon.T;
  int steps = opt.grid_steps;
  std::vector<double> grid(steps + 1);
  for (int j = 0; j <= steps; ++j) grid[j] = T * j / steps;
  return detail::r_backward_simpson(grid, p.rho(), 0.0, hfn);
}

inline RSolution solve_r(const CanonicalProblem& p,
                         const AlgebraicRiccatiPair& are, const YSolution& y,
                         RSolveOptions opt = {}) {
  const double rho = p.rho();
  if (opt.grid_horizon <= 0.0) opt.grid_horizon = 10.0 / rho;
  auto hfn = [&](double t) { return r_integrand(p, t, are.K, are.Lambda, y); };

  // settle time: beyond the coefficient paths and the factor transient, h is
  // constant up to terms decaying at rate min(kappa, rho)
  double settle = opt.grid_horizon;
  if (!y.grid.empty()) settle = std::max(settle, y.grid.back());
  double kappa = p.spec.factor ? p.spec.factor->kappa : rho;
  double rate = std::min(rho, kappa);
  double T_cut = settle + 45.0 / rate;
  int steps = std::max(512, (int)std::ceil(T_cut * opt.steps_per_unit));
  std::vector<double> grid(steps + 1);
  for (int j = 0; j <= steps; ++j) grid[j] = T_cut * j / steps;

  double h_inf = hfn(T_cut);
  RSolution r = detail::r_backward_simpson(grid, rho, h_inf / rho, hfn);
  r.tail_bound = std::abs(h_inf - hfn(T_cut - 1.0 / rate)) / rho +
                 1e-16 * std::abs(h_inf / rho);
  return r;
}

}  // namespace lqmkv
