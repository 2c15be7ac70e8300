#pragma once

#include "lqmkv/assumptions.hpp"
#include "lqmkv/diagnostics.hpp"
#include "lqmkv/resource.hpp"

namespace lqmkv {

struct PipelineOptions {
  int grid_steps = 1000;      // finite-horizon backward grid
  bool allow_unverified = false;
  double out_horizon = 0.0;   // infinite horizon: span of gridded outputs
};

// Everything the backward pass produces for one problem.
struct PipelineSolution {
  bool finite = true;
  RiccatiPath path;               // finite horizon
  AlgebraicRiccatiPair are;       // infinite horizon
  YSolution y;
  RSolution r;
  FeedbackLaw law;
  double V0 = 0.0;
  AssumptionReport assumptions;

  Mat K0() const { return finite ? path.K.front() : are.K; }
  Mat Lambda0() const { return finite ? path.Lambda.front() : are.Lambda; }
  BackwardBundle bundle() const {
    return finite ? BackwardBundle::make(path, y, r)
                  : BackwardBundle::make(are, y, r);
  }
};

inline PipelineSolution solve_pipeline(const CanonicalProblem& p,
                                       PipelineOptions opt = {}) {
  PipelineSolution sol;
  sol.finite = p.spec.horizon.finite;
  if (sol.finite) {
    FiniteSolveOptions fopt;
    fopt.allow_unverified = opt.allow_unverified;
    sol.path = solve_finite(p, opt.grid_steps, fopt);
    BsdeCoefficients co = assemble_bsde(p, sol.path);
    sol.y = solve_y_finite(co, p.spec.cost.L, opt.grid_steps);
    RSolveOptions ropt;
    ropt.grid_steps = opt.grid_steps;
    sol.r = solve_r(p, sol.path, sol.y, ropt);
    sol.law = make_feedback_law(p, sol.path, sol.y, sol.path.grid);
    sol.V0 = value(p, sol.path, sol.y, sol.r);
    sol.assumptions = validate_assumptions(p);
  } else {
    if (opt.out_horizon <= 0.0) opt.out_horizon = 10.0 / p.rho();
    InfiniteSolveOptions iopt;
    iopt.allow_unverified = opt.allow_unverified;
    sol.are = solve_infinite(p, iopt);
    BsdeCoefficients co = assemble_bsde(p, sol.are);
    sol.y = solve_y_infinite(co, {opt.out_horizon, 64});
    sol.r = solve_r(p, sol.are, sol.y, {opt.out_horizon, 1000, 32});
    std::vector<double> grid;
    int nodes = std::max(512, (int)(32 * opt.out_horizon));
    for (int j = 0; j <= nodes; ++j) grid.push_back(opt.out_horizon * j / nodes);
    sol.law = make_feedback_law(p, sol.are, sol.y, grid);
    sol.V0 = value(p, sol.are, sol.y, sol.r);
    sol.assumptions = validate_assumptions(
        p, std::make_pair(sol.are.K, sol.are.Lambda));
  }
  return sol;
}

}  // namespace lqmkv
