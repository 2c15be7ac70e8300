#pragma once

#include <atomic>
#include <cstring>
#include <functional>
#include <thread>

#include "lqmkv/feedback.hpp"
#include "lqmkv/philox.hpp"

namespace lqmkv {

struct SimConfig {
  long long particles = 10000;  // per world
  double dt = 1e-3;
  double T_sim = 0.0;   // 0 => horizon T (finite); must be set for infinite
  std::uint64_t seed = 1234;
  bool antithetic = false;
  int worlds = 1;       // > 1 only meaningful with common noise
  int batches = 32;     // SE batches; under common noise batches = worlds
  int trace_stride = 1; // record summary/trace rows every k-th step
  double tail_tol = 1e-4;  // infinite-horizon truncation gate

  void validate(bool finite) const {
    if (particles < 2) fail(ErrorKind::InvalidParams, "need at least 2 particles");
    if (!(dt > 0.0)) fail(ErrorKind::InvalidParams, "dt must be positive");
    if (!finite && !(T_sim > 0.0))
      fail(ErrorKind::InvalidParams, "infinite horizon needs an explicit T_sim");
    if (worlds < 1) fail(ErrorKind::InvalidParams, "worlds must be >= 1");
    if (batches < 30) fail(ErrorKind::InvalidParams, "need >= 30 batches for standard errors");
  }
};

struct Perturbation {
  enum Kind { None, ConstantShift, SinusoidShift, StateShift };
  Kind kind = None;
  double eps = 0.0;

  static const char* name(Kind k) {
    switch (k) {
      case ConstantShift: return "constant";
      case SinusoidShift: return "sinusoid";
      case StateShift: return "state";
      default: return "none";
    }
  }
};

// Control to simulate: a feedback law, optionally shifted by eps * eta, or a
// deterministic open-loop path.
struct ControlSpec {
  const FeedbackLaw* law = nullptr;
  const TimeVec* open_loop = nullptr;
  Perturbation pert;
};

// Evaluators of the backward solution, used to trace the martingale test
// field w_t along simulated paths.
struct BackwardBundle {
  std::function<Mat(double)> K, Lambda;
  const YSolution* y = nullptr;
  const RSolution* r = nullptr;

  template <typename Backward>
  static BackwardBundle make(const Backward& back, const YSolution& y,
                             const RSolution& r) {
    BackwardBundle b;
    if constexpr (std::is_same_v<Backward, RiccatiPath>) {
      b.K = [&back](double t) { return back.eval_K(t); };
      b.Lambda = [&back](double t) { return back.eval_Lambda(t); };
    } else {
      Mat K = back.K, L = back.Lambda;
      b.K = [K](double) { return K; };
      b.Lambda = [L](double) { return L; };
    }
    b.y = &y;
    b.r = &r;
    return b;
  }
};

struct ParticleEnsemble {
  int d = 1, m = 1;
  double dt = 0.0, T = 0.0;
  double rho = 0.0;
  long long particles = 0;  // per world
  int worlds = 1;
  int batches = 1;
  bool common_noise = false;

  std::vector<double> summary_times;
  std::vector<Vec> mean_state;    // global empirical mean
  std::vector<double> cov_trace;  // trace of global empirical covariance
  std::vector<Vec> mean_control;

  // per-world conditional means at summary times, flattened [world][node*d+k]
  std::vector<std::vector<double>> world_mean;
  std::vector<std::vector<double>> world_factor;   // factor path per world
  std::vector<std::vector<double>> world_m2;       // mean of |x|^2 per world
  std::vector<std::vector<double>> world_control;  // [world][node*m+j]

  std::vector<double> cost;  // per particle, total discounted cost
  // batch sums of the martingale statistic S_t at summary times
  std::vector<std::vector<double>> batch_S;      // [batch][node]
  std::vector<long long> batch_count;
  double tail_bound = 0.0;  // infinite-horizon truncation estimate

  double mean_cost() const {
    double s = 0.0;
    for (double c : cost) s += c;
    return s / static_cast<double>(cost.size());
  }
};

namespace detail {

inline void parallel_chunks(long long total, int chunks,
                            const std::function<void(long long, long long, int)>& body) {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  long long per = (total + chunks - 1) / chunks;
  if (hw == 1 || total < 4096) {
    for (int c = 0; c < chunks; ++c) {
      long long lo = c * per, hi = std::min<long long>(total, lo + per);
      if (lo < hi) body(lo, hi, c);
    }
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  unsigned workers = std::min<unsigned>(hw, 8);
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int c = next.fetch_add(1); c < chunks; c = next.fetch_add(1)) {
        long long lo = c * per, hi = std::min<long long>(total, lo + per);
        if (lo < hi) body(lo, hi, c);
      }
    });
  for (auto& t : pool) t.join();
}

// y += A x for small dense matrices, no temporaries
inline void matvec_acc(const Mat& A, const double* x, double* y) {
  const int r = (int)A.rows(), c = (int)A.cols();
  for (int j = 0; j < c; ++j) {
    double xj = x[j];
    for (int i = 0; i < r; ++i) y[i] += A(i, j) * xj;
  }
}

inline double quad_form(const Mat& A, const double* x) {
  const int nn = (int)A.rows();
  double s = 0.0;
  for (int j = 0; j < nn; ++j)
    for (int i = 0; i < nn; ++i) s += x[i] * A(i, j) * x[j];
  return s;
}

}  // namespace detail

// Explicit Euler-Maruyama particle system for the controlled McKean-Vlasov
// dynamics.  The law terms use the empirical mean over the N particles,
// conditional per world when common noise is enabled.  Costs accumulate by
// the left-endpoint rule with e^{-rho t} discounting.  Identical seeds give
// bit-identical output regardless of thread count.
inline ParticleEnsemble simulate(const CanonicalProblem& p,
                                 const ControlSpec& ctrl, const SimConfig& cfg,
                                 const BackwardBundle* wfield = nullptr) {
  const bool finite = p.spec.horizon.finite;
  cfg.validate(finite);
  if (!ctrl.law && !ctrl.open_loop)
    fail(ErrorKind::InvalidParams, "control spec needs a law or an open-loop path");
  const int d = p.d(), m = p.m(), n = p.n();
  const double rho = p.rho();
  const double T = finite && cfg.T_sim <= 0.0 ? p.spec.horizon.T : cfg.T_sim;
  const long long steps = std::max<long long>(1, llround(T / cfg.dt));
  const double dt = T / static_cast<double>(steps);
  const double sdt = std::sqrt(dt);
  const int W = p.spec.common_noise ? cfg.worlds : 1;
  const long long N = cfg.particles;
  const long long NT = N * W;
  const int B = p.spec.common_noise ? W : cfg.batches;
  if (p.spec.common_noise && W < 2)
    fail(ErrorKind::InvalidParams, "common noise needs worlds >= 2");

  const bool has_factor = p.spec.factor.has_value();
  const OuFactor fac = has_factor ? *p.spec.factor : OuFactor{};
  const bool factor_per_world = p.spec.common_noise;

  ParticleEnsemble out;
  out.d = d;
  out.m = m;
  out.dt = dt;
  out.T = T;
  out.rho = rho;
  out.particles = N;
  out.worlds = W;
  out.batches = B;
  out.common_noise = p.spec.common_noise;
  out.cost.assign(NT, 0.0);
  out.batch_count.assign(B, 0);

  std::vector<double> X(NT * d), A(NT * m), Pfac;
  Pfac.assign(factor_per_world ? W : NT, has_factor ? fac.init : 0.0);

  // batch of a global particle index: worlds are natural batches under
  // common noise, contiguous blocks otherwise (antithetic pairs stay put)
  auto batch_of = [&](long long g) -> int {
    if (p.spec.common_noise) return static_cast<int>(g / N);
    return static_cast<int>((g * B) / NT);
  };
  for (long long g = 0; g < NT; ++g) out.batch_count[batch_of(g)]++;

  // initial law sampling (stream 3); antithetic partners share flipped draws
  Eigen::LLT<Mat> llt(p.spec.x0.cov + 1e-300 * Mat::Identity(d, d));
  Mat chol = llt.matrixL();
  bool deterministic_x0 = p.spec.x0.cov.cwiseAbs().maxCoeff() == 0.0;
  detail::parallel_chunks(NT, 64, [&](long long lo, long long hi, int) {
    std::vector<double> z(d + 1);
    for (long long g = lo; g < hi; ++g) {
      std::uint32_t world = static_cast<std::uint32_t>(g / N);
      std::uint32_t i = static_cast<std::uint32_t>(g % N);
      std::uint32_t base = cfg.antithetic ? i / 2 : i;
      double sign = (cfg.antithetic && (i & 1)) ? -1.0 : 1.0;
      double* x = &X[g * d];
      for (int k = 0; k < d; ++k) x[k] = p.spec.x0.mean(k);
      if (!deterministic_x0) {
        for (int k = 0; k < d; k += 2) {
          double z0, z1;
          gauss_pair(cfg.seed, 3, world, base, 0, k / 2, &z0, &z1);
          z[k] = sign * z0;
          if (k + 1 < d) z[k + 1] = sign * z1;
        }
        for (int kk = 0; kk < d; ++kk)
          for (int jj = 0; jj <= kk; ++jj) x[kk] += chol(kk, jj) * z[jj];
      }
    }
  });

  const long long n_summary = steps / cfg.trace_stride + 1;
  out.summary_times.reserve(n_summary);
  out.world_mean.assign(W, {});
  out.world_factor.assign(W, {});
  out.world_m2.assign(W, {});
  out.world_control.assign(W, {});
  if (wfield) out.batch_S.assign(B, std::vector<double>());
  std::vector<double> x2bar(W);

  std::vector<double> xbar(W * d), abar(W * m);
  std::vector<double> chunk_acc;  // per-chunk partial sums, combined in order
  const int kChunks = 64;

  // reduce a per-particle d-ish quantity into per-world means, fixed order
  auto reduce_world = [&](std::vector<double>& dst, int dim, auto&& getter) {
    chunk_acc.assign(kChunks * W * dim, 0.0);
    detail::parallel_chunks(NT, kChunks, [&](long long lo, long long hi, int c) {
      double* acc = &chunk_acc[c * W * dim];
      for (long long g = lo; g < hi; ++g) {
        int w = static_cast<int>(g / N);
        getter(g, &acc[w * dim]);
      }
    });
    std::fill(dst.begin(), dst.end(), 0.0);
    for (int c = 0; c < kChunks; ++c)
      for (int j = 0; j < W * dim; ++j) dst[j] += chunk_acc[c * W * dim + j];
    for (double& v : dst) v /= static_cast<double>(N);
  };

  for (long long k = 0; k <= steps; ++k) {
    const double t = dt * static_cast<double>(k);
    const double disc = std::exp(-rho * t);
    const bool last = (k == steps);
    const bool record = (k % cfg.trace_stride == 0) || last;
    const double m_t = has_factor ? fac.mean_at(t) : 0.0;

    // per-step coefficient snapshot
    const Mat Bm = p.B(t), Btm = p.spec.drift.Btilde(t), Cm = p.C(t),
              Ctm = p.spec.drift.Ctilde(t);
    std::vector<Mat> Dm(n), Dtm(n), Fm(n), Ftm(n);
    std::vector<Vec> g0v(n), g1v(n);
    for (int i = 0; i < n; ++i) {
      Dm[i] = p.D(i, t);
      Dtm[i] = p.spec.diffusion[i].Dtilde(t);
      Fm[i] = p.F(i, t);
      Ftm[i] = p.spec.diffusion[i].Ftilde(t);
      FactorAffineVec ga = p.gamma(i, t);
      g0v[i] = ga.a0;
      g1v[i] = ga.a1;
    }
    FactorAffineVec beta_t = p.beta(t);
    FactorAffineVec gam0_t = p.gamma0(t);
    const Mat Qm = p.Q(t), Qhm = p.Qhat(t), Nm = p.N(t), Nhm = p.Nhat(t),
              Im = p.I(t), Ihm = p.Ihat(t);
    FactorAffineVec M_t = p.M(t), H_t = p.H(t);
    Mat KW, LW;
    Vec ymean, yload;
    double Rt = 0.0;
    if (wfield) {
      KW = wfield->K(t);
      LW = wfield->Lambda(t);
      ymean = wfield->y->mean_at(t);
      yload = wfield->y->load_at(t);
      Rt = wfield->r->at(t);
    }
    Mat lawA0, lawA1;
    Vec lawb0, lawb1, openv;
    if (ctrl.law) {
      lawA0 = ctrl.law->gain_centered_at(t);
      lawA1 = ctrl.law->gain_mean_at(t);
      lawb0 = ctrl.law->off_base_at(t);
      lawb1 = ctrl.law->off_load_at(t);
    } else {
      openv = (*ctrl.open_loop)(t);
    }
    const double pert_eps = ctrl.pert.kind == Perturbation::None ? 0.0 : ctrl.pert.eps;
    const double sin_t = std::sin(2.0 * 3.14159265358979323846 * t / T);

    // phase 1: conditional empirical state means
    reduce_world(xbar, d, [&](long long g, double* acc) {
      const double* x = &X[g * d];
      for (int kk = 0; kk < d; ++kk) acc[kk] += x[kk];
    });

    // phase 2: controls, then their conditional means
    detail::parallel_chunks(NT, kChunks, [&](long long lo, long long hi, int) {
      for (long long g = lo; g < hi; ++g) {
        int w = static_cast<int>(g / N);
        const double* x = &X[g * d];
        const double* xb = &xbar[w * d];
        double pv = Pfac[factor_per_world ? w : g];
        double* a = &A[g * m];
        if (ctrl.law) {
          for (int j = 0; j < m; ++j) a[j] = lawb0(j) + lawb1(j) * pv;
          for (int j = 0; j < m; ++j)
            for (int kk = 0; kk < d; ++kk)
              a[j] += lawA0(j, kk) * (x[kk] - xb[kk]) + lawA1(j, kk) * xb[kk];
        } else {
          for (int j = 0; j < m; ++j) a[j] = openv(j);
        }
        if (pert_eps != 0.0) {
          switch (ctrl.pert.kind) {
            case Perturbation::ConstantShift:
              for (int j = 0; j < m; ++j) a[j] += pert_eps;
              break;
            case Perturbation::SinusoidShift:
              for (int j = 0; j < m; ++j) a[j] += pert_eps * sin_t;
              break;
            case Perturbation::StateShift:
              for (int j = 0; j < m && j < d; ++j) a[j] += pert_eps * x[j];
              break;
            default:
              break;
          }
        }
      }
    });
    reduce_world(abar, m, [&](long long g, double* acc) {
      const double* a = &A[g * m];
      for (int j = 0; j < m; ++j) acc[j] += a[j];
    });

    // summary rows
    if (record) {
      out.summary_times.push_back(t);
      Vec msum = Vec::Zero(d), csum = Vec::Zero(m);
      for (int w = 0; w < W; ++w) {
        for (int kk = 0; kk < d; ++kk) msum(kk) += xbar[w * d + kk];
        for (int j = 0; j < m; ++j) csum(j) += abar[w * m + j];
      }
      out.mean_state.push_back(msum / W);
      out.mean_control.push_back(csum / W);
      Vec gmean = msum / W;
      chunk_acc.assign(kChunks, 0.0);
      detail::parallel_chunks(NT, kChunks, [&](long long lo, long long hi, int c) {
        double s = 0.0;
        for (long long g = lo; g < hi; ++g) {
          const double* x = &X[g * d];
          for (int kk = 0; kk < d; ++kk) {
            double dx = x[kk] - gmean(kk);
            s += dx * dx;
          }
        }
        chunk_acc[c] += s;
      });
      double cv = 0.0;
      for (int c = 0; c < kChunks; ++c) cv += chunk_acc[c];
      out.cov_trace.push_back(cv / NT);
      reduce_world(x2bar, 1, [&](long long g, double* acc) {
        const double* x = &X[g * d];
        for (int kk = 0; kk < d; ++kk) acc[0] += x[kk] * x[kk];
      });
      for (int w = 0; w < W; ++w) {
        for (int kk = 0; kk < d; ++kk) out.world_mean[w].push_back(xbar[w * d + kk]);
        for (int j = 0; j < m; ++j) out.world_control[w].push_back(abar[w * m + j]);
        out.world_m2[w].push_back(x2bar[w]);
        out.world_factor[w].push_back(factor_per_world ? Pfac[w] : m_t);
      }
      // martingale statistic S_t per batch
      if (wfield) {
        chunk_acc.assign(kChunks * B, 0.0);
        detail::parallel_chunks(NT, kChunks, [&](long long lo, long long hi, int c) {
          double* acc = &chunk_acc[c * B];
          std::vector<double> dx(d);
          for (long long g = lo; g < hi; ++g) {
            int w = static_cast<int>(g / N);
            const double* x = &X[g * d];
            const double* xb = &xbar[w * d];
            double pv = Pfac[factor_per_world ? w : g];
            for (int kk = 0; kk < d; ++kk) dx[kk] = x[kk] - xb[kk];
            double wv = detail::quad_form(KW, dx.data()) +
                        detail::quad_form(LW, xb) + Rt;
            for (int kk = 0; kk < d; ++kk)
              wv += 2.0 * (ymean(kk) + yload(kk) * (pv - m_t)) * x[kk];
            acc[batch_of(g)] += disc * wv + out.cost[g];
          }
        });
        std::vector<double> row(B, 0.0);
        for (int c = 0; c < kChunks; ++c)
          for (int b = 0; b < B; ++b) row[b] += chunk_acc[c * B + b];
        for (int b = 0; b < B; ++b)
          out.batch_S[b].push_back(row[b] / out.batch_count[b]);
      }
    }

    if (last) break;

    // phase 3: cost accumulation and state advance
    std::atomic<long long> unstable{-1};
    detail::parallel_chunks(NT, kChunks, [&](long long lo, long long hi, int) {
      std::vector<double> dx(d), da(m), drift(d), shock(d);
      for (long long g = lo; g < hi; ++g) {
        int w = static_cast<int>(g / N);
        std::uint32_t world = static_cast<std::uint32_t>(w);
        std::uint32_t i = static_cast<std::uint32_t>(g % N);
        std::uint32_t base = cfg.antithetic ? i / 2 : i;
        double sign = (cfg.antithetic && (i & 1)) ? -1.0 : 1.0;
        double* x = &X[g * d];
        double* a = &A[g * m];
        const double* xb = &xbar[w * d];
        const double* ab = &abar[w * m];
        double pv = Pfac[factor_per_world ? w : g];

        // running cost, centered quadratic form
        for (int kk = 0; kk < d; ++kk) dx[kk] = x[kk] - xb[kk];
        for (int j = 0; j < m; ++j) da[j] = a[j] - ab[j];
        double f = detail::quad_form(Qm, dx.data()) + detail::quad_form(Qhm, xb) +
                   detail::quad_form(Nm, da.data()) + detail::quad_form(Nhm, ab);
        for (int j = 0; j < m; ++j) {
          double Ix = 0.0, Ihxb = 0.0;
          for (int kk = 0; kk < d; ++kk) {
            Ix += Im(j, kk) * dx[kk];
            Ihxb += Ihm(j, kk) * xb[kk];
          }
          f += 2.0 * a[j] * Ix + 2.0 * ab[j] * Ihxb;
          f += 2.0 * (H_t.a0(j) + H_t.a1(j) * pv) * a[j];
        }
        for (int kk = 0; kk < d; ++kk)
          f += 2.0 * (M_t.a0(kk) + M_t.a1(kk) * pv) * x[kk];
        out.cost[g] += disc * f * dt;

        // drift and diffusion, both from the pre-step state
        for (int kk = 0; kk < d; ++kk)
          drift[kk] = beta_t.a0(kk) + beta_t.a1(kk) * pv;
        detail::matvec_acc(Bm, x, drift.data());
        detail::matvec_acc(Btm, xb, drift.data());
        detail::matvec_acc(Cm, a, drift.data());
        detail::matvec_acc(Ctm, ab, drift.data());

        // the per-particle factor (independent binding) draws as driver
        // index n, sharing Philox blocks with the state drivers
        const int n_draws = n + (has_factor && !factor_per_world ? 1 : 0);
        for (int kk = 0; kk < d; ++kk) drift[kk] *= dt;
        double z0 = 0.0, z1 = 0.0;
        for (int i2 = 0; i2 < n_draws; ++i2) {
          if ((i2 & 1) == 0)
            gauss_pair(cfg.seed, 0, world, base, (std::uint32_t)k,
                       static_cast<std::uint32_t>(i2 / 2), &z0, &z1);
          double z = sign * ((i2 & 1) ? z1 : z0);
          if (i2 == n) {
            Pfac[g] += fac.kappa * (fac.mean - Pfac[g]) * dt + fac.vol * sdt * z;
            break;
          }
          for (int kk = 0; kk < d; ++kk)
            shock[kk] = g0v[i2](kk) + g1v[i2](kk) * pv;
          detail::matvec_acc(Dm[i2], x, shock.data());
          detail::matvec_acc(Dtm[i2], xb, shock.data());
          detail::matvec_acc(Fm[i2], a, shock.data());
          detail::matvec_acc(Ftm[i2], ab, shock.data());
          for (int kk = 0; kk < d; ++kk) drift[kk] += shock[kk] * sdt * z;
        }
        for (int kk = 0; kk < d; ++kk) x[kk] += drift[kk];
        double norm2 = 0.0;
        for (int kk = 0; kk < d; ++kk) norm2 += x[kk] * x[kk];
        if (!(norm2 < 1e18)) unstable.store(k);
      }
    });
    if (unstable.load() >= 0)
      fail(ErrorKind::Unstable,
           "particle norm exceeded 1e9 at step " + std::to_string(unstable.load()) +
               "; reduce dt");

    // shared common-driver advance: one increment per world, reused by the
    // factor and by the gamma0 diffusion term
    if (factor_per_world) {
      Vec g0b = gam0_t.a0, g0l = gam0_t.a1;
      bool has_g0 = p.spec.has_gamma0();
      for (int w = 0; w < W; ++w) {
        double z0, z1;
        gauss_pair(cfg.seed, 2, (std::uint32_t)w, 0, (std::uint32_t)k, 0, &z0, &z1);
        double pv = Pfac[w];
        if (has_g0) {
          detail::parallel_chunks(N, 8, [&](long long lo, long long hi, int) {
            for (long long i = lo; i < hi; ++i) {
              double* x = &X[(w * N + i) * d];
              for (int kk = 0; kk < d; ++kk)
                x[kk] += (g0b(kk) + g0l(kk) * pv) * sdt * z0;
            }
          });
        }
        if (has_factor)
          Pfac[w] += fac.kappa * (fac.mean - Pfac[w]) * dt + fac.vol * sdt * z0;
      }
    }
  }

  // terminal cost (finite horizon)
  if (finite && cfg.T_sim <= 0.0) {
    const Mat Pm = p.spec.cost.P, Phm = p.Phat();
    const Vec& Lv = p.spec.cost.L;
    const double disc = std::exp(-rho * T);
    detail::parallel_chunks(NT, kChunks, [&](long long lo, long long hi, int) {
      std::vector<double> dx(d);
      for (long long g = lo; g < hi; ++g) {
        int w = static_cast<int>(g / N);
        const double* x = &X[g * d];
        const double* xb = &xbar[w * d];
        for (int kk = 0; kk < d; ++kk) dx[kk] = x[kk] - xb[kk];
        double gcost = detail::quad_form(Pm, dx.data()) + detail::quad_form(Phm, xb);
        for (int kk = 0; kk < d; ++kk) gcost += 2.0 * Lv(kk) * x[kk];
        out.cost[g] += disc * gcost;
      }
    });
  } else if (!finite) {
    // reported truncation bound: discounted scale of the last running-cost
    // row extrapolated over the cut tail
    double last_mean_cost = 0.0;
    {
      const double t = T;
      Vec xm = out.mean_state.back();
      Vec am = out.mean_control.back();
      double f = xm.dot(p.Qhat(t) * xm) + am.dot(p.Nhat(t) * am) +
                 2.0 * am.dot(p.Ihat(t) * xm) + out.cov_trace.back() *
                 spectral_norm(p.Q(t));
      last_mean_cost = std::abs(f) + 1.0;
    }
    out.tail_bound = std::exp(-rho * T) * last_mean_cost / rho;
    if (out.tail_bound > cfg.tail_tol)
      fail(ErrorKind::InvalidParams,
           "T_sim too short: discounted tail bound " + std::to_string(out.tail_bound) +
               " exceeds tolerance");
  }
  return out;
}

// Batch-mean cost estimator.
struct CostEstimate {
  double mean = 0.0;
  double se = 0.0;
  std::vector<double> batch_means;
};

inline CostEstimate estimate_cost(const ParticleEnsemble& e) {
  const int B = e.batches;
  CostEstimate est;
  est.batch_means.assign(B, 0.0);
  std::vector<long long> cnt(B, 0);
  const long long NT = static_cast<long long>(e.cost.size());
  const long long N = e.particles;
  for (long long g = 0; g < NT; ++g) {
    int b = e.common_noise ? static_cast<int>(g / N)
                           : static_cast<int>((g * B) / NT);
    est.batch_means[b] += e.cost[g];
    cnt[b]++;
  }
  for (int b = 0; b < B; ++b) est.batch_means[b] /= cnt[b];
  double mu = 0.0;
  for (double v : est.batch_means) mu += v;
  mu /= B;
  double var = 0.0;
  for (double v : est.batch_means) var += (v - mu) * (v - mu);
  var /= (B - 1);
  est.mean = mu;
  est.se = std::sqrt(var / B);
  return est;
}

}  // namespace lqmkv
