// Command-line front end: solve -> feedback -> simulate -> diagnose, with
// machine-readable JSON/CSV artifacts.
//
// Exit codes: 0 success, 1 parse/IO error, 2 assumption or parameter
// rejection, 3 solver failure, 4 verification verdict failure.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "lqmkv/csv.hpp"
#include "lqmkv/json_io.hpp"
#include "lqmkv/pipeline.hpp"

namespace fs = std::filesystem;
using namespace lqmkv;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

int exit_code_for(const SolverError& e) {
  switch (e.kind()) {
    case ErrorKind::ParseError:
      return 1;
    case ErrorKind::AssumptionsFailed:
    case ErrorKind::InvalidParams:
    case ErrorKind::DimensionMismatch:
    case ErrorKind::NonSymmetricCostMatrix:
    case ErrorKind::UnsupportedInitialLaw:
      return 2;
    default:
      return 3;
  }
}

std::uint64_t fnv1a(const std::string& data, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::ParseError, "cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)v);
  return buf;
}

json assumptions_to_json(const AssumptionReport& rep) {
  json items = json::array();
  for (const auto& it : rep.items) {
    json r;
    r["name"] = it.name;
    r["status"] = to_string(it.status);
    r["margin"] = it.margin;
    if (!it.note.empty()) r["note"] = it.note;
    items.push_back(r);
  }
  json j;
  j["conditions"] = items;
  j["standing_ok"] = rep.standing_ok;
  j["escape_hatch"] = rep.escape_hatch;
  return j;
}

void write_manifest(const fs::path& dir, const std::string& cmd,
                    const json& settings, const std::vector<std::string>& outputs,
                    std::uint64_t input_hash) {
  json j;
  j["command"] = cmd;
  j["version"] = kVersion;
  j["input_hash"] = hex64(input_hash);
  j["settings"] = settings;
  j["outputs"] = outputs;
  std::uint64_t h = fnv1a(j.dump());
  j["manifest_hash"] = hex64(h);
  io::write_json((dir / "manifest.json").string(), j);
}

void write_riccati_csv(const fs::path& path, const PipelineSolution& sol) {
  CsvWriter csv(path.string());
  const int d = sol.finite ? (int)sol.path.K.front().rows() : (int)sol.are.K.rows();
  std::vector<std::string> cols = {"t"};
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) cols.push_back("K" + std::to_string(i) + std::to_string(j));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) cols.push_back("Lambda" + std::to_string(i) + std::to_string(j));
  csv.header(cols);
  auto emit = [&](double t, const Mat& K, const Mat& L) {
    std::vector<double> row = {t};
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) row.push_back(K(i, j));
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) row.push_back(L(i, j));
    csv.row(row);
  };
  if (sol.finite) {
    for (std::size_t k = 0; k < sol.path.grid.size(); ++k)
      emit(sol.path.grid[k], sol.path.K[k], sol.path.Lambda[k]);
  } else {
    emit(0.0, sol.are.K, sol.are.Lambda);
  }
}

void write_y_r_csv(const fs::path& dir, const PipelineSolution& sol) {
  {
    CsvWriter csv((dir / "y_path.csv").string());
    const auto& grid = sol.r.grid;
    int d = (int)sol.y.mean_at(0.0).size();
    std::vector<std::string> cols = {"t"};
    for (int i = 0; i < d; ++i) cols.push_back("Ymean" + std::to_string(i));
    for (int i = 0; i < d; ++i) cols.push_back("Yload" + std::to_string(i));
    csv.header(cols);
    for (double t : grid) {
      std::vector<double> row = {t};
      Vec m = sol.y.mean_at(t), l = sol.y.load_at(t);
      for (int i = 0; i < d; ++i) row.push_back(m(i));
      for (int i = 0; i < d; ++i) row.push_back(l(i));
      csv.row(row);
    }
  }
  {
    CsvWriter csv((dir / "r_path.csv").string());
    csv.header({"t", "R"});
    for (std::size_t k = 0; k < sol.r.grid.size(); ++k)
      csv.row({sol.r.grid[k], sol.r.value[k]});
  }
}

void write_law_csv(const fs::path& path, const FeedbackLaw& law) {
  CsvWriter csv(path.string());
  std::vector<std::string> cols = {"t"};
  auto mat_cols = [&](const std::string& base, int r, int c) {
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        cols.push_back(base + std::to_string(i) + std::to_string(j));
  };
  mat_cols("gain_centered", law.m, law.d);
  mat_cols("gain_mean", law.m, law.d);
  for (int i = 0; i < law.m; ++i) cols.push_back("off_base" + std::to_string(i));
  for (int i = 0; i < law.m; ++i) cols.push_back("off_load" + std::to_string(i));
  csv.header(cols);
  for (std::size_t k = 0; k < law.grid.size(); ++k) {
    std::vector<double> row = {law.grid[k]};
    for (int i = 0; i < law.m; ++i)
      for (int j = 0; j < law.d; ++j) row.push_back(law.gain_centered[k](i, j));
    for (int i = 0; i < law.m; ++i)
      for (int j = 0; j < law.d; ++j) row.push_back(law.gain_mean[k](i, j));
    for (int i = 0; i < law.m; ++i) row.push_back(law.off_base[k](i));
    for (int i = 0; i < law.m; ++i) row.push_back(law.off_load[k](i));
    csv.row(row);
  }
}

json diagnostics_to_json(const DiagnosticsReport& rep) {
  json j;
  j["V0_analytic"] = rep.V0_analytic;
  j["J_mc"] = rep.J_mc;
  j["J_se"] = rep.J_se;
  j["value_identity_ok"] = rep.value_identity_ok;
  j["martingale_flat_ok"] = rep.martingale_flat_ok;
  j["trace_max_dev"] = rep.optimal_trace.max_dev_from_start();
  j["trace_max_se"] = rep.optimal_trace.max_se();
  j["tail_bound"] = rep.tail_bound;
  json perts = json::array();
  for (const auto& r : rep.perturbations) {
    perts.push_back({{"kind", r.kind},
                     {"eps", r.eps},
                     {"gap", r.gap},
                     {"gap_se", r.gap_se},
                     {"slope", r.slope},
                     {"slope_se", r.slope_se},
                     {"gap_ok", r.gap_ok},
                     {"slope_ok", r.slope_ok}});
  }
  j["perturbations"] = perts;
  json exps = json::array();
  for (const auto& r : rep.exponents)
    exps.push_back({{"kind", r.kind}, {"exponent", r.exponent}, {"ok", r.ok}});
  j["exponents"] = exps;
  j["all_ok"] = rep.all_ok();
  return j;
}

struct CommonSimFlags {
  long long particles = 10000;
  double dt = 1e-3;
  double T_sim = 0.0;
  std::uint64_t seed = 1234;
  int worlds = 1;
  int batches = 32;
  int trace_stride = 1;
  bool antithetic = false;

  void attach(CLI::App* app) {
    app->add_option("--particles", particles, "particles per world");
    app->add_option("--dt", dt, "simulation step");
    app->add_option("--T-sim", T_sim, "simulation horizon (infinite-horizon truncation)");
    app->add_option("--seed", seed, "RNG seed");
    app->add_option("--worlds", worlds, "common-noise worlds");
    app->add_option("--batches", batches, "standard-error batches");
    app->add_option("--trace-stride", trace_stride, "record every k-th step");
    app->add_flag("--antithetic", antithetic, "antithetic particle pairs");
  }
  SimConfig to_config(const CanonicalProblem& p) const {
    SimConfig cfg;
    cfg.particles = particles;
    cfg.dt = dt;
    cfg.T_sim = T_sim;
    cfg.seed = seed;
    cfg.antithetic = antithetic;
    cfg.worlds = p.spec.common_noise ? worlds : 1;
    cfg.batches = batches;
    cfg.trace_stride = trace_stride;
    cfg.tail_tol = 1e-2;
    return cfg;
  }
};

void write_ensemble_summary(const fs::path& path, const ParticleEnsemble& e) {
  CsvWriter csv(path.string());
  std::vector<std::string> cols = {"t"};
  for (int i = 0; i < e.d; ++i) cols.push_back("mean_state" + std::to_string(i));
  cols.push_back("cov_trace");
  for (int i = 0; i < e.m; ++i) cols.push_back("mean_control" + std::to_string(i));
  csv.header(cols);
  for (std::size_t k = 0; k < e.summary_times.size(); ++k) {
    std::vector<double> row = {e.summary_times[k]};
    for (int i = 0; i < e.d; ++i) row.push_back(e.mean_state[k](i));
    row.push_back(e.cov_trace[k]);
    for (int i = 0; i < e.m; ++i) row.push_back(e.mean_control[k](i));
    csv.row(row);
  }
}

int cmd_solve(const std::string& spec_path, const std::string& out_dir,
              int grid_steps, bool allow_unverified, double out_horizon) {
  fs::create_directories(out_dir);
  ProblemSpec spec = io::load_problem(spec_path);
  CanonicalProblem prob = canonicalize(spec);

  AssumptionReport pre = validate_assumptions(prob);
  if (!pre.standing_ok && !allow_unverified) {
    io::write_json((fs::path(out_dir) / "assumptions.json").string(),
                   assumptions_to_json(pre));
    std::cerr << "standing assumptions failed; see assumptions.json "
                 "(use --allow-unverified for the a-posteriori route)\n";
    return 2;
  }

  PipelineOptions opt;
  opt.grid_steps = grid_steps;
  opt.allow_unverified = allow_unverified;
  opt.out_horizon = out_horizon;
  PipelineSolution sol = solve_pipeline(prob, opt);

  fs::path dir(out_dir);
  write_riccati_csv(dir / "riccati.csv", sol);
  write_y_r_csv(dir, sol);
  write_law_csv(dir / "feedback_law.csv", sol.law);
  io::write_json((dir / "feedback_law.json").string(), io::law_to_json(sol.law));
  {
    json v;
    v["V0"] = sol.V0;
    v["K0"] = io::matrix_to_json(sol.K0());
    v["Lambda0"] = io::matrix_to_json(sol.Lambda0());
    v["EY0"] = io::vector_to_json(sol.y.mean_at(0.0));
    v["R0"] = sol.r.r0();
    v["r_tail_bound"] = sol.r.tail_bound;
    if (!sol.finite) {
      v["riccati_residuals"] = {sol.are.residual_phi0, sol.are.residual_psi0};
      v["ladder_marginal"] = sol.are.ladder_marginal;
    }
    io::write_json((dir / "value.json").string(), v);
  }
  io::write_json((dir / "assumptions.json").string(),
                 assumptions_to_json(sol.assumptions));
  json settings = {{"grid_steps", grid_steps},
                   {"allow_unverified", allow_unverified},
                   {"out_horizon", out_horizon},
                   {"riccati_tol", 1e-9},
                   {"singularity_gate", 1e-12}};
  write_manifest(dir, "solve", settings,
                 {"riccati.csv", "y_path.csv", "r_path.csv", "feedback_law.csv",
                  "feedback_law.json", "value.json", "assumptions.json"},
                 fnv1a(file_bytes(spec_path)));
  std::cout << "V0 = " << sol.V0 << "\n";
  return 0;
}

int cmd_verify(const std::string& spec_path, const std::string& law_path,
               const std::string& out_dir, const CommonSimFlags& flags,
               bool no_perturbations, bool allow_unverified) {
  fs::create_directories(out_dir);
  ProblemSpec spec = io::load_problem(spec_path);
  CanonicalProblem prob = canonicalize(spec);

  FeedbackLaw law;
  PipelineSolution sol;
  {
    std::ifstream in(law_path);
    if (!in) fail(ErrorKind::ParseError, "cannot open law bundle: " + law_path);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      fail(ErrorKind::ParseError, std::string("malformed law bundle: ") + e.what());
    }
    law = io::law_from_json(j);
  }
  // the w-field needs the backward solution; re-solve (deterministic)
  PipelineOptions opt;
  opt.allow_unverified = allow_unverified;
  opt.out_horizon = flags.T_sim > 0 ? flags.T_sim : 0.0;
  sol = solve_pipeline(prob, opt);

  SimConfig cfg = flags.to_config(prob);
  DiagnosticsOptions dopt;
  dopt.run_perturbations = !no_perturbations;
  BackwardBundle bundle = sol.bundle();
  DiagnosticsReport rep =
      martingale_diagnostic(prob, law, bundle, sol.V0, cfg, dopt);

  fs::path dir(out_dir);
  io::write_json((dir / "diagnostics.json").string(), diagnostics_to_json(rep));
  {
    CsvWriter csv((dir / "martingale_trace.csv").string());
    csv.header({"t", "S_mean", "S_se"});
    for (std::size_t k = 0; k < rep.optimal_trace.times.size(); ++k)
      csv.row({rep.optimal_trace.times[k], rep.optimal_trace.mean[k],
               rep.optimal_trace.se[k]});
  }
  {
    ControlSpec ctrl;
    ctrl.law = &law;
    ParticleEnsemble e = simulate(prob, ctrl, cfg, &bundle);
    write_ensemble_summary(dir / "ensemble_summary.csv", e);
  }
  json settings = {{"particles", flags.particles}, {"dt", flags.dt},
                   {"seed", flags.seed},           {"worlds", flags.worlds},
                   {"batches", flags.batches},     {"T_sim", flags.T_sim},
                   {"trace_stride", flags.trace_stride},
                   {"perturbations", !no_perturbations},
                   {"eps_grid", {0.1, 0.2, 0.4}},
                   {"verdict_sigma", 3.0}};
  write_manifest(dir, "verify", settings,
                 {"diagnostics.json", "martingale_trace.csv", "ensemble_summary.csv"},
                 fnv1a(file_bytes(law_path), fnv1a(file_bytes(spec_path))));
  if (!rep.all_ok()) {
    std::cerr << "verification verdicts failed; see diagnostics.json\n";
    return 4;
  }
  std::cout << "verification passed: |J - V0| = "
            << std::abs(rep.J_mc - rep.V0_analytic) << " (3 SE = " << 3 * rep.J_se
            << ")\n";
  return 0;
}

ResourceParams resource_params_from_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::ParseError, "cannot open params file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::ParseError, std::string("malformed JSON: ") + e.what());
  }
  ResourceParams p;
  p.x0 = j.value("x0", p.x0);
  p.sigma = j.value("sigma", p.sigma);
  p.delta = j.value("delta", p.delta);
  p.epsilon = j.value("epsilon", p.epsilon);
  p.eta = j.value("eta", p.eta);
  p.c = j.value("c", p.c);
  p.rho = j.value("rho", p.rho);
  p.kappa = j.value("kappa", p.kappa);
  p.pbar = j.value("pbar", p.pbar);
  p.price_vol = j.value("price_vol", p.price_vol);
  p.p0 = j.value("p0", p.p0);
  return p;
}

int cmd_resource(const std::string& params_path, const std::string& out_dir,
                 const CommonSimFlags& flags, bool no_sim) {
  fs::create_directories(out_dir);
  ResourceParams params =
      params_path.empty() ? ResourceParams{} : resource_params_from_json(params_path);
  params.validate();
  ResourceSolution cf = closed_form_constants(params);

  fs::path dir(out_dir);
  {
    json j;
    j["K_eta"] = cf.K_eta;
    j["Lambda_eps"] = cf.Lambda_eps;
    j["K"] = cf.K;
    j["Lambda"] = cf.Lambda;
    j["lambda_eta"] = cf.lambda_eta;
    j["xbar_infty"] = cf.xbar_infty;
    j["xbar_infty_direct"] = cf.xbar_infty_direct;
    j["Y0"] = cf.Y0;
    j["hotelling_rent"] = params.hotelling_rent();
    io::write_json((dir / "resource_constants.json").string(), j);
  }
  {
    std::vector<double> eta_grid = {0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
    std::vector<double> eps_grid = {0.05, 0.1, 0.2, 0.4, 0.8};
    SensitivityTable tab = sensitivity_table(params, eta_grid, eps_grid);
    CsvWriter csv((dir / "sensitivity.csv").string());
    csv.header({"eta", "epsilon", "xbar_infty"});
    for (const auto& r : tab.rows) csv.row({r.eta, r.epsilon, r.xbar_infty});
  }
  std::vector<std::string> outputs = {"resource_constants.json", "sensitivity.csv"};
  if (!no_sim) {
    SimConfig cfg;
    cfg.particles = flags.particles;
    cfg.dt = flags.dt;
    cfg.T_sim = flags.T_sim > 0 ? flags.T_sim : 40.0 / params.rho;
    cfg.seed = flags.seed;
    cfg.worlds = flags.worlds > 1 ? flags.worlds : 64;
    cfg.batches = cfg.worlds;
    cfg.trace_stride = flags.trace_stride;
    cfg.tail_tol = 1e-2;
    MarketReport rep = simulate_market(params, cfg, 10.0 / params.rho);
    {
      CsvWriter csv((dir / "reserve_path.csv").string());
      std::vector<std::string> cols = {"t"};
      for (int w = 0; w < rep.ensemble.worlds; ++w) {
        cols.push_back("world" + std::to_string(w) + "_mean");
        cols.push_back("world" + std::to_string(w) + "_ref");
      }
      csv.header(cols);
      std::vector<std::vector<double>> refs(rep.ensemble.worlds);
      for (int w = 0; w < rep.ensemble.worlds; ++w)
        refs[w] = reserve_reference(params, cf, rep.ensemble.summary_times,
                                    rep.ensemble.world_factor[w]);
      for (std::size_t k = 0; k < rep.ensemble.summary_times.size(); ++k) {
        std::vector<double> row = {rep.ensemble.summary_times[k]};
        for (int w = 0; w < rep.ensemble.worlds; ++w) {
          row.push_back(rep.ensemble.world_mean[w][k]);
          row.push_back(refs[w][k]);
        }
        csv.row(row);
      }
    }
    {
      json j;
      j["tracking_ok"] = rep.tracking_ok;
      j["worst_tracking_excess"] = rep.worst_tracking_excess;
      j["terminal_mean_reserve"] = rep.terminal_mean_reserve;
      j["terminal_reserve_se"] = rep.terminal_reserve_se;
      j["reserve_matches_xinfty"] = rep.reserve_matches_xinfty;
      j["terminal_mean_extraction"] = rep.terminal_mean_extraction;
      j["terminal_extraction_se"] = rep.terminal_extraction_se;
      j["extraction_vanishes"] = rep.extraction_vanishes;
      io::write_json((dir / "market_report.json").string(), j);
    }
    outputs.push_back("reserve_path.csv");
    outputs.push_back("market_report.json");
  }
  json settings = {{"params", params_path.empty() ? "defaults" : params_path},
                   {"particles", flags.particles},
                   {"worlds", flags.worlds},
                   {"dt", flags.dt},
                   {"seed", flags.seed},
                   {"simulate", !no_sim}};
  std::uint64_t h = params_path.empty() ? fnv1a("defaults")
                                        : fnv1a(file_bytes(params_path));
  write_manifest(dir, "resource", settings, outputs, h);
  std::cout << "xbar_infty = " << cf.xbar_infty << "\n";
  return 0;
}

int cmd_validate(const std::string& spec_path, const std::string& out_dir) {
  ProblemSpec spec = io::load_problem(spec_path);
  CanonicalProblem prob = canonicalize(spec);
  AssumptionReport rep = validate_assumptions(prob);
  json j = assumptions_to_json(rep);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    io::write_json((fs::path(out_dir) / "assumptions.json").string(), j);
    write_manifest(out_dir, "validate", json::object(), {"assumptions.json"},
                   fnv1a(file_bytes(spec_path)));
  }
  std::cout << j.dump(2) << "\n";
  return rep.standing_ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"linear-quadratic mean-field control solver and verifier"};
  app.require_subcommand(1);

  std::string spec_path, out_dir = "out", law_path, params_path;
  int grid_steps = 1000;
  bool allow_unverified = false, no_perturbations = false, no_sim = false;
  double out_horizon = 0.0;
  CommonSimFlags sim_flags;

  auto* solve = app.add_subcommand("solve", "solve the backward system and emit the feedback law");
  solve->add_option("--spec", spec_path, "problem JSON")->required();
  solve->add_option("--out", out_dir, "output directory");
  solve->add_option("--grid-steps", grid_steps, "backward grid steps");
  solve->add_flag("--allow-unverified", allow_unverified,
                  "proceed when (H2)(iii)-(iv) fail; S, Shat checked a posteriori");
  solve->add_option("--out-horizon", out_horizon, "gridded output span (infinite horizon)");

  auto* verify = app.add_subcommand("verify", "Monte Carlo martingale-optimality diagnostic");
  verify->add_option("--spec", spec_path, "problem JSON")->required();
  verify->add_option("--law", law_path, "feedback_law.json from solve")->required();
  verify->add_option("--out", out_dir, "output directory");
  verify->add_flag("--no-perturbations", no_perturbations, "skip the perturbation catalogue");
  verify->add_flag("--allow-unverified", allow_unverified, "");
  sim_flags.attach(verify);

  auto* resource = app.add_subcommand("resource", "exhaustible-resource case study");
  resource->add_option("--params", params_path, "resource parameter JSON (defaults otherwise)");
  resource->add_option("--out", out_dir, "output directory");
  resource->add_flag("--no-sim", no_sim, "closed forms and sensitivity only");
  sim_flags.attach(resource);

  std::string validate_out;
  auto* validate = app.add_subcommand("validate", "evaluate the standing assumptions");
  validate->add_option("--spec", spec_path, "problem JSON")->required();
  validate->add_option("--out", validate_out, "optional output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed())
      return cmd_solve(spec_path, out_dir, grid_steps, allow_unverified, out_horizon);
    if (verify->parsed())
      return cmd_verify(spec_path, law_path, out_dir, sim_flags, no_perturbations,
                        allow_unverified);
    if (resource->parsed()) return cmd_resource(params_path, out_dir, sim_flags, no_sim);
    if (validate->parsed()) return cmd_validate(spec_path, validate_out);
  } catch (const SolverError& e) {
    std::cerr << to_string(e.kind()) << ": " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
