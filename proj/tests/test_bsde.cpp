#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "helpers.hpp"
#include "oracles.hpp"

using namespace lqmkv;
using helpers::cmat;
using helpers::cvec;

namespace {

AlgebraicRiccatiPair fixed_pair(double K, double L) {
  AlgebraicRiccatiPair are;
  are.K = Mat::Constant(1, 1, K);
  are.Lambda = Mat::Constant(1, 1, L);
  return are;
}

}  // namespace

TEST_CASE("assemble_bsde: theta vanishes without affine or linear terms") {
  ProblemSpec s = helpers::classical_lq();
  CanonicalProblem p = canonicalize(s);
  RiccatiPath path = solve_finite(p, 64);
  BsdeCoefficients co = assemble_bsde(p, path);
  for (double t : {0.0, 0.33, 1.0}) {
    FactorAffineVec th = co.theta(t);
    CHECK(th.a0.cwiseAbs().maxCoeff() == 0.0);
    CHECK(th.a1.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("assemble_bsde: scalar G from prescribed S and U") {
  // B = 0, C = 1, rho = 0.5 with K = 0 so that S = N = 2 and U = I = 1:
  // G = rho - B + C S^-1 U = 1
  ProblemSpec s = helpers::scalar_problem(Horizon::Finite(1.0, 0.5));
  s.drift.C = cmat(1.0);
  s.cost.N = cmat(2.0);
  s.cost.I = cmat(1.0);
  CanonicalProblem p = canonicalize(s);
  BsdeCoefficients co = assemble_bsde(p, fixed_pair(0.0, 0.0));
  CHECK(co.G(0.0)(0, 0) == Catch::Approx(1.0));
}

TEST_CASE("assemble_bsde: resource Ghat is rho + Lambda_eps and theta = -Lambda_eps H") {
  ResourceParams rp;
  ResourceSolution cf = closed_form_constants(rp);
  CanonicalProblem p = canonicalize(resource_problem_spec(rp));
  BsdeCoefficients co = assemble_bsde(p, fixed_pair(cf.K, cf.Lambda));
  CHECK(co.Ghat(0.0)(0, 0) == Catch::Approx(rp.rho + cf.Lambda_eps).margin(1e-12));
  // H_t = (c + eps x0 - P)/2, theta = -Lambda_eps H
  FactorAffineVec th = co.theta(0.0);
  CHECK(th.a0(0) ==
        Catch::Approx(-cf.Lambda_eps * (rp.c + rp.epsilon * rp.x0) / 2.0).margin(1e-12));
  CHECK(th.a1(0) == Catch::Approx(cf.Lambda_eps / 2.0).margin(1e-12));
}

TEST_CASE("solve_y_finite: zero data gives zero") {
  ProblemSpec s = helpers::scalar_problem(Horizon::Finite(1.0, 0.3));
  CanonicalProblem p = canonicalize(s);
  RiccatiPath path = solve_finite(p, 64);
  BsdeCoefficients co = assemble_bsde(p, path);
  YSolution y = solve_y_finite(co, Vec::Zero(1), 64);
  for (double t : {0.0, 0.5, 1.0}) CHECK(y.mean_at(t)(0) == 0.0);
}

TEST_CASE("solve_y_finite: constant-coefficient ODE against a backward-Euler oracle") {
  // Ghat = 1 via rho = 1 and no dynamics; theta = -M = -1; L = 0.
  // dY = (theta + Ghat Y) dt backward gives Y_0 = 1 - e^{-1}.
  ProblemSpec s = helpers::scalar_problem(Horizon::Finite(1.0, 1.0));
  s.cost.M.base = cvec(1.0);
  CanonicalProblem p = canonicalize(s);
  RiccatiPath path = solve_finite(p, 200);
  BsdeCoefficients co = assemble_bsde(p, path);
  REQUIRE(co.Ghat(0.5)(0, 0) == Catch::Approx(1.0));
  YSolution y = solve_y_finite(co, Vec::Zero(1), 200);

  Vec oracle = oracles::euler_linear_ode_y0(
      [](double) { return Vec::Constant(1, -1.0); }, Mat::Constant(1, 1, 1.0),
      Vec::Zero(1), 1.0, 2000000);
  CHECK(y.mean_at(0.0)(0) == Catch::Approx(oracle(0)).margin(1e-6));
  CHECK(y.mean_at(0.0)(0) ==
        Catch::Approx(1.0 - std::exp(-1.0)).margin(1e-9));
  // terminal condition holds exactly at the last node
  CHECK(y.mean.back()(0) == 0.0);
}

TEST_CASE("solve_y_finite: factor loading against a path-sampled covariance oracle") {
  ProblemSpec s = helpers::mkv_factor();
  CanonicalProblem p = canonicalize(s);
  RiccatiPath path = solve_finite(p, 400);
  BsdeCoefficients co = assemble_bsde(p, path);
  YSolution y = solve_y_finite(co, s.cost.L, 400);
  REQUIRE(y.factor_affine);

  // Cov(Y_t - Ybar_t, p_t) = load(t) Var(p_t):  estimate
  //   -E[(p_{t*} - m_{t*}) int_{t*}^T e^{-int_{t*}^s G du} theta1(s) (p_s - m_s) ds]
  // over factor paths and divide by Var(p_{t*}).
  const OuFactor f = *s.factor;
  const double tstar = 0.5, T = 1.0, dt = 1e-3;
  const long long steps = llround(T / dt);
  std::vector<double> th1(steps + 1), m_of(steps + 1), Gint(steps + 1, 0.0);
  for (long long k = 0; k <= steps; ++k) {
    double t = dt * k;
    th1[k] = co.theta(t).a1(0);
    m_of[k] = f.mean_at(t);
    if (k > 0)
      Gint[k] = Gint[k - 1] +
                0.5 * dt * (co.G(t)(0, 0) + co.G(t - dt)(0, 0));
  }
  const long long kstar = llround(tstar / dt);
  oracles::OuMc mc{f.kappa, f.mean, f.vol, f.init, dt, 100000, 123};
  auto [est, se] = mc.run(T, [&](const std::vector<double>& path_p, double /*dt*/) {
    double dev = path_p[kstar] - m_of[kstar];
    double integral = 0.0;
    for (long long k = kstar; k < steps; ++k)
      integral += std::exp(-(Gint[k] - Gint[kstar])) * th1[k] *
                  (path_p[k] - m_of[k]) * dt;
    return -dev * integral;
  });
  double var = f.var_at(tstar);
  double load = y.load_at(tstar)(0);
  CHECK(std::abs(load - est / var) <= 3.0 * se / var);
}

TEST_CASE("solve_y_infinite: explicit regimes") {
  // theta == 0
  {
    ProblemSpec s = helpers::scalar_problem(Horizon::Infinite(0.5));
    CanonicalProblem p = canonicalize(s);
    BsdeCoefficients co = assemble_bsde(p, solve_infinite(p));
    YSolution y = solve_y_infinite(co);
    CHECK(y.mean_at(3.0)(0) == 0.0);
    CHECK(y.load_at(3.0)(0) == 0.0);
  }
  // constant theta = 2 with Ghat = 4: Y = -1/2
  {
    ProblemSpec s = helpers::scalar_problem(Horizon::Infinite(1.0));
    s.drift.B = cmat(-3.0);
    s.cost.M.base = cvec(-2.0);
    CanonicalProblem p = canonicalize(s);
    BsdeCoefficients co = assemble_bsde(p, solve_infinite(p));
    REQUIRE(co.Ghat(0.0)(0, 0) == Catch::Approx(4.0));
    YSolution y = solve_y_infinite(co);
    CHECK(y.mean_at(2.0)(0) == Catch::Approx(-0.5).margin(1e-12));
    // stationarity: theta + Ghat' Y = 0
    CHECK(std::abs(co.theta(0.0).a0(0) + 4.0 * y.mean_at(0.0)(0)) <= 1e-12);
  }
  // integrability violation: Ghat - rho <= 0
  {
    ProblemSpec s = helpers::scalar_problem(Horizon::Infinite(1.0));
    s.drift.B = cmat(0.5);  // Ghat = rho - B = 0.5 < rho
    s.cost.M.base = cvec(1.0);
    CanonicalProblem p = canonicalize(s);
    BsdeCoefficients co = assemble_bsde(p, solve_infinite(p));
    CHECK(helpers::throws_kind([&] { solve_y_infinite(co); },
                               ErrorKind::IntegrabilityViolation));
  }
}

TEST_CASE("solve_y_infinite: resource Y0 against a Monte Carlo oracle") {
  ResourceParams rp;
  rp.pbar = 2.0;
  rp.price_vol = 1.0;
  rp.p0 = 2.0;
  ResourceSolution cf = closed_form_constants(rp);
  CanonicalProblem p = canonicalize(resource_problem_spec(rp));
  InfiniteSolveOptions iopt;
  iopt.allow_unverified = true;
  BsdeCoefficients co = assemble_bsde(p, solve_infinite(p, iopt));
  YSolution y = solve_y_infinite(co);
  CHECK(y.mean_at(0.0)(0) == Catch::Approx(cf.Y0).margin(1e-9));

  // MC of -E[int_0^inf L_eps e^{-(rho+L_eps)s} (P_s - c - eps x0)/2 ds]
  const double gl = rp.rho + cf.Lambda_eps;
  const double T = 35.0 / gl;
  oracles::OuMc mc{rp.kappa, rp.pbar, rp.price_vol, rp.p0, 2e-2, 100000, 321};
  auto [est, se] = mc.run(T, [&](const std::vector<double>& path_p, double dt) {
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < path_p.size(); ++k)
      acc += std::exp(-gl * dt * k) * cf.Lambda_eps *
             (path_p[k] - rp.c - rp.epsilon * rp.x0) / 2.0 * dt;
    return -acc;
  });
  CHECK(std::abs(y.mean_at(0.0)(0) - est) <= 3.0 * se + 2e-3);
}

TEST_CASE("solve_y linearity in (M, H, L)") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int rep = 0; rep < 4; ++rep) {
    ProblemSpec base = helpers::mkv_scalar();
    CanonicalProblem p = canonicalize(base);
    RiccatiPath path = solve_finite(p, 100);

    double m1 = u(rng), h1 = u(rng), l1 = u(rng);
    double m2 = u(rng), h2 = u(rng), l2 = u(rng);
    double a = u(rng) * 2.0;
    auto solve_with = [&](double mv, double hv, double lv) {
      ProblemSpec s = base;
      s.cost.M.base = cvec(mv);
      s.cost.H.base = cvec(hv);
      s.cost.L = Vec::Constant(1, lv);
      CanonicalProblem ps = canonicalize(s);
      BsdeCoefficients co = assemble_bsde(ps, path);
      return solve_y_finite(co, s.cost.L, 100);
    };
    YSolution y1 = solve_with(m1, h1, l1);
    YSolution y2 = solve_with(m2, h2, l2);
    YSolution yc = solve_with(a * m1 + m2, a * h1 + h2, a * l1 + l2);
    for (double t : {0.0, 0.37, 0.81}) {
      double combo = a * y1.mean_at(t)(0) + y2.mean_at(t)(0);
      CHECK(yc.mean_at(t)(0) == Catch::Approx(combo).margin(1e-9));
    }
  }
}

TEST_CASE("Y deterministic-regime residual is O(h^2) at interior nodes") {
  ProblemSpec s = helpers::mkv_scalar();
  CanonicalProblem p = canonicalize(s);
  const int steps = 100;
  RiccatiPath path = solve_finite(p, steps);
  BsdeCoefficients co = assemble_bsde(p, path);
  YSolution y = solve_y_finite(co, s.cost.L, steps);
  const double h = y.grid[1] - y.grid[0];
  double maxnorm = 0.0;
  for (const Vec& v : y.mean) maxnorm = std::max(maxnorm, v.cwiseAbs().maxCoeff());
  for (std::size_t j = 1; j + 1 < y.grid.size(); ++j) {
    double t = y.grid[j];
    Vec fd = (y.mean[j + 1] - y.mean[j - 1]) / (2.0 * h);
    Vec resid = fd - (co.theta(t).mean(p.factor_mean(t)) +
                      co.Ghat(t).transpose() * y.mean[j]);
    CHECK(resid.cwiseAbs().maxCoeff() <= 10.0 * h * h * std::max(1.0, maxnorm));
  }
}

TEST_CASE("solve_r: trivial and constant-integrand cases") {
  // no affine or linear terms anywhere: R == 0
  {
    ProblemSpec s = helpers::classical_lq();
    CanonicalProblem p = canonicalize(s);
    RiccatiPath path = solve_finite(p, 64);
    BsdeCoefficients co = assemble_bsde(p, path);
    YSolution y = solve_y_finite(co, Vec::Zero(1), 64);
    RSolution r = solve_r(p, path, y, {0.0, 64, 32});
    for (double v : r.value) CHECK(v == 0.0);
  }
  // K == 1 (rho = Q = P = 1 fixed point), gamma = 1: h == 1 and
  // R_0 = int_0^1 e^{-s} ds = 1 - e^{-1}
  {
    ProblemSpec s = helpers::scalar_problem(Horizon::Finite(1.0, 1.0));
    s.cost.Q = cmat(1.0);
    s.cost.P = Mat::Constant(1, 1, 1.0);
    s.diffusion[0].gamma.base = cvec(1.0);
    CanonicalProblem p = canonicalize(s);
    RiccatiPath path = solve_finite(p, 200);
    for (const Mat& K : path.K) CHECK(K(0, 0) == Catch::Approx(1.0).margin(1e-13));
    BsdeCoefficients co = assemble_bsde(p, path);
    YSolution y = solve_y_finite(co, Vec::Zero(1), 200);
    RSolution r = solve_r(p, path, y, {0.0, 200, 32});
    CHECK(r.r0() == Catch::Approx(1.0 - std::exp(-1.0)).margin(1e-10));
  }
}

TEST_CASE("solve_r: infinite-horizon tail bound is reported and small") {
  ResourceParams rp;
  CanonicalProblem p = canonicalize(resource_problem_spec(rp));
  InfiniteSolveOptions iopt;
  iopt.allow_unverified = true;
  AlgebraicRiccatiPair are = solve_infinite(p, iopt);
  BsdeCoefficients co = assemble_bsde(p, are);
  YSolution y = solve_y_infinite(co);
  RSolution r = solve_r(p, are, y);
  CHECK(r.tail_bound <= 1e-10 * std::max(1e-8, std::abs(r.r0())));
}

TEST_CASE("unsupported regime: stochastic coefficient on a state driver") {
  ProblemSpec s = helpers::mkv_factor();
  s.factor->binding = DriverBinding::StateDriver;
  s.factor->state_driver = 0;
  CanonicalProblem p = canonicalize(s);
  RiccatiPath path = solve_finite(p, 32);
  BsdeCoefficients co = assemble_bsde(p, path);
  CHECK(helpers::throws_kind([&] { solve_y_finite(co, s.cost.L, 32); },
                             ErrorKind::UnsupportedRegime));
}
