#pragma once

#include <string>

#include "lqmkv/simulate.hpp"

namespace lqmkv {

// E[S_t] trace with batch-based standard errors.
struct TraceStats {
  std::vector<double> times;
  std::vector<double> mean, se;
  double slope = 0.0, slope_se = 0.0;

  double max_dev_from_start() const {
    double dev = 0.0;
    for (double v : mean) dev = std::max(dev, std::abs(v - mean.front()));
    return dev;
  }
  double max_se() const {
    double s = 0.0;
    for (double v : se) s = std::max(s, v);
    return s;
  }
};

inline TraceStats trace_stats(const ParticleEnsemble& e) {
  TraceStats ts;
  ts.times = e.summary_times;
  const int B = (int)e.batch_S.size();
  const std::size_t nodes = e.batch_S.empty() ? 0 : e.batch_S[0].size();
  ts.mean.assign(nodes, 0.0);
  ts.se.assign(nodes, 0.0);
  long long total = 0;
  for (int b = 0; b < B; ++b) total += e.batch_count[b];
  for (std::size_t j = 0; j < nodes; ++j) {
    double mu = 0.0;
    for (int b = 0; b < B; ++b) mu += e.batch_S[b][j] * e.batch_count[b];
    mu /= total;
    double var = 0.0;
    for (int b = 0; b < B; ++b) {
      double dv = e.batch_S[b][j] - mu;
      var += dv * dv;
    }
    var /= (B - 1);
    ts.mean[j] = mu;
    ts.se[j] = std::sqrt(var / B);
  }
  // OLS slope per batch, then batch statistics
  double tbar = 0.0;
  for (double t : ts.times) tbar += t;
  tbar /= ts.times.size();
  double sxx = 0.0;
  for (double t : ts.times) sxx += (t - tbar) * (t - tbar);
  std::vector<double> slopes(B, 0.0);
  for (int b = 0; b < B; ++b) {
    double sxy = 0.0;
    for (std::size_t j = 0; j < nodes; ++j)
      sxy += (ts.times[j] - tbar) * e.batch_S[b][j];
    slopes[b] = sxy / sxx;
  }
  double mu = 0.0;
  for (double v : slopes) mu += v;
  mu /= B;
  double var = 0.0;
  for (double v : slopes) var += (v - mu) * (v - mu);
  var /= (B - 1);
  ts.slope = mu;
  ts.slope_se = std::sqrt(var / B);
  return ts;
}

struct DiagnosticsOptions {
  std::vector<double> eps_grid = {0.1, 0.2, 0.4};
  bool run_perturbations = true;
  std::vector<Perturbation::Kind> catalogue = {Perturbation::ConstantShift,
                                               Perturbation::SinusoidShift,
                                               Perturbation::StateShift};
};

struct DiagnosticsReport {
  double V0_analytic = 0.0;
  double J_mc = 0.0, J_se = 0.0;
  bool value_identity_ok = false;

  TraceStats optimal_trace;
  bool martingale_flat_ok = false;

  struct PerturbationRow {
    std::string kind;
    double eps = 0.0;
    double gap = 0.0, gap_se = 0.0;
    double slope = 0.0, slope_se = 0.0;
    bool gap_ok = false, slope_ok = false;
  };
  std::vector<PerturbationRow> perturbations;

  struct ExponentRow {
    std::string kind;
    double exponent = 0.0;
    bool ok = false;
  };
  std::vector<ExponentRow> exponents;

  double tail_bound = 0.0;

  bool all_ok() const {
    bool ok = value_identity_ok && martingale_flat_ok;
    for (const auto& r : perturbations) ok = ok && r.gap_ok && r.slope_ok;
    for (const auto& r : exponents) ok = ok && r.ok;
    return ok;
  }
};

// Weak martingale optimality diagnostic: the E[S_t] trace must be flat for
// the candidate optimum and nondecreasing (within noise) for every
// catalogued perturbation, with J-gaps growing quadratically in eps.
// Perturbed runs reuse the baseline seed, so gaps are common-random-number
// differences.
inline DiagnosticsReport martingale_diagnostic(const CanonicalProblem& p,
                                               const FeedbackLaw& law,
                                               const BackwardBundle& wfield,
                                               double V0_analytic,
                                               const SimConfig& cfg,
                                               const DiagnosticsOptions& opt = {}) {
  DiagnosticsReport rep;
  rep.V0_analytic = V0_analytic;

  ControlSpec base;
  base.law = &law;
  ParticleEnsemble base_run = simulate(p, base, cfg, &wfield);
  CostEstimate base_cost = estimate_cost(base_run);
  rep.J_mc = base_cost.mean;
  rep.J_se = base_cost.se;
  rep.value_identity_ok = std::abs(rep.J_mc - V0_analytic) <= 3.0 * rep.J_se;
  rep.optimal_trace = trace_stats(base_run);
  rep.martingale_flat_ok = rep.optimal_trace.max_dev_from_start() <=
                           3.0 * rep.optimal_trace.max_se();
  rep.tail_bound = base_run.tail_bound;

  if (!opt.run_perturbations) return rep;

  for (auto kind : opt.catalogue) {
    std::vector<double> gaps;
    for (double eps : opt.eps_grid) {
      ControlSpec pert;
      pert.law = &law;
      pert.pert = {kind, eps};
      ParticleEnsemble run = simulate(p, pert, cfg, &wfield);
      CostEstimate cost = estimate_cost(run);
      TraceStats ts = trace_stats(run);

      DiagnosticsReport::PerturbationRow row;
      row.kind = Perturbation::name(kind);
      row.eps = eps;
      // common-random-number gap with per-batch differences
      const int B = (int)cost.batch_means.size();
      double mu = 0.0;
      std::vector<double> diff(B);
      for (int b = 0; b < B; ++b) {
        diff[b] = cost.batch_means[b] - base_cost.batch_means[b];
        mu += diff[b];
      }
      mu /= B;
      double var = 0.0;
      for (double v : diff) var += (v - mu) * (v - mu);
      var /= (B - 1);
      row.gap = mu;
      row.gap_se = std::sqrt(var / B);
      row.slope = ts.slope;
      row.slope_se = ts.slope_se;
      row.gap_ok = row.gap >= -3.0 * row.gap_se;
      row.slope_ok = row.slope >= -3.0 * row.slope_se;
      rep.perturbations.push_back(row);
      gaps.push_back(row.gap);
    }
    // log-gap vs log-eps regression exponent
    DiagnosticsReport::ExponentRow ex;
    ex.kind = Perturbation::name(kind);
    bool positive = true;
    for (double g : gaps) positive = positive && g > 0.0;
    if (positive) {
      double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
      int nn = (int)gaps.size();
      for (int i = 0; i < nn; ++i) {
        double lx = std::log(opt.eps_grid[i]), ly = std::log(gaps[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
      }
      ex.exponent = (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
      ex.ok = ex.exponent >= 1.7 && ex.exponent <= 2.3;
    } else {
      ex.exponent = std::numeric_limits<double>::quiet_NaN();
      ex.ok = false;
    }
    rep.exponents.push_back(ex);
  }
  return rep;
}

}  // namespace lqmkv
