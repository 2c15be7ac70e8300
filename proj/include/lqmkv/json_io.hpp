#pragma once

#include <fstream>

#include <json.hpp>

#include "lqmkv/feedback.hpp"

namespace lqmkv {

using nlohmann::json;

namespace io {

inline Mat parse_matrix_entries(const json& j, const char* name) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    fail(ErrorKind::ParseError, std::string(name) + ": expected a row-major nested array");
  int r = (int)j.size(), c = (int)j[0].size();
  Mat m(r, c);
  for (int i = 0; i < r; ++i) {
    if ((int)j[i].size() != c)
      fail(ErrorKind::ParseError, std::string(name) + ": ragged rows");
    for (int k = 0; k < c; ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

inline Vec parse_vector_entries(const json& j, const char* name) {
  if (!j.is_array())
    fail(ErrorKind::ParseError, std::string(name) + ": expected an array");
  Vec v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

// Matrix coefficient: constant nested array, or {"grid", "values"} with
// piecewise-linear interpretation.
inline TimeMat parse_time_mat(const json& j, int r, int c, const char* name) {
  if (j.is_null()) return zero_mat_path(r, c);
  if (j.is_number()) {
    if (r != 1 || c != 1)
      fail(ErrorKind::ParseError, std::string(name) + ": scalar given for a matrix");
    return TimeMat(Mat::Constant(1, 1, j.get<double>()));
  }
  if (j.is_array()) return TimeMat(parse_matrix_entries(j, name));
  if (j.is_object() && j.contains("grid") && j.contains("values")) {
    std::vector<double> grid = j["grid"].get<std::vector<double>>();
    std::vector<Mat> vals;
    for (const auto& v : j["values"]) vals.push_back(parse_matrix_entries(v, name));
    return TimeMat(std::move(grid), std::move(vals));
  }
  fail(ErrorKind::ParseError, std::string(name) + ": unrecognized matrix coefficient form");
}

inline TimeVec parse_time_vec(const json& j, int r, const char* name) {
  if (j.is_null()) return zero_vec_path(r);
  if (j.is_number()) {
    if (r != 1) fail(ErrorKind::ParseError, std::string(name) + ": scalar given for a vector");
    return TimeVec(Vec::Constant(1, j.get<double>()));
  }
  if (j.is_array()) return TimeVec(parse_vector_entries(j, name));
  if (j.is_object() && j.contains("grid") && j.contains("values")) {
    std::vector<double> grid = j["grid"].get<std::vector<double>>();
    std::vector<Vec> vals;
    for (const auto& v : j["values"]) vals.push_back(parse_vector_entries(v, name));
    return TimeVec(std::move(grid), std::move(vals));
  }
  fail(ErrorKind::ParseError, std::string(name) + ": unrecognized vector coefficient form");
}

// Vector process: deterministic path, or {"base", "loading"} on the factor.
inline StochVec parse_stoch_vec(const json& j, int r, const char* name) {
  StochVec v;
  if (j.is_null()) return zero_stoch_vec(r);
  if (j.is_object() && (j.contains("base") || j.contains("loading"))) {
    v.base = parse_time_vec(j.value("base", json()), r, name);
    if (j.contains("loading") && !j["loading"].is_null())
      v.load = parse_time_vec(j["loading"], r, name);
    return v;
  }
  v.base = parse_time_vec(j, r, name);
  return v;
}

inline ProblemSpec parse_problem(const json& j) {
  ProblemSpec s;
  if (!j.contains("dimensions") || !j.contains("horizon"))
    fail(ErrorKind::ParseError, "spec needs 'dimensions' and 'horizon'");
  s.d = j["dimensions"].value("d", 1);
  s.m = j["dimensions"].value("m", 1);
  s.n = j["dimensions"].value("n", 1);
  std::string kind = j["horizon"].value("kind", "finite");
  if (kind == "finite")
    s.horizon = Horizon::Finite(j["horizon"].value("T", 1.0), j["horizon"].value("rho", 0.0));
  else if (kind == "infinite")
    s.horizon = Horizon::Infinite(j["horizon"].value("rho", 0.0));
  else
    fail(ErrorKind::ParseError, "horizon.kind must be 'finite' or 'infinite'");

  const json drift = j.value("drift", json::object());
  s.drift.beta = parse_stoch_vec(drift.value("beta", json()), s.d, "beta");
  s.drift.B = parse_time_mat(drift.value("B", json()), s.d, s.d, "B");
  s.drift.Btilde = parse_time_mat(drift.value("Btilde", json()), s.d, s.d, "Btilde");
  s.drift.C = parse_time_mat(drift.value("C", json()), s.d, s.m, "C");
  s.drift.Ctilde = parse_time_mat(drift.value("Ctilde", json()), s.d, s.m, "Ctilde");

  const json diff = j.value("diffusion", json::array());
  if ((int)diff.size() != s.n)
    fail(ErrorKind::ParseError, "diffusion must list one block per driver");
  for (const auto& blk : diff) {
    DiffusionBlock b;
    b.gamma = parse_stoch_vec(blk.value("gamma", json()), s.d, "gamma");
    b.D = parse_time_mat(blk.value("D", json()), s.d, s.d, "D");
    b.Dtilde = parse_time_mat(blk.value("Dtilde", json()), s.d, s.d, "Dtilde");
    b.F = parse_time_mat(blk.value("F", json()), s.d, s.m, "F");
    b.Ftilde = parse_time_mat(blk.value("Ftilde", json()), s.d, s.m, "Ftilde");
    s.diffusion.push_back(std::move(b));
  }

  const json cost = j.value("cost", json::object());
  s.cost.Q = parse_time_mat(cost.value("Q", json()), s.d, s.d, "Q");
  s.cost.Qtilde = parse_time_mat(cost.value("Qtilde", json()), s.d, s.d, "Qtilde");
  s.cost.N = parse_time_mat(cost.value("N", json()), s.m, s.m, "N");
  s.cost.Ntilde = parse_time_mat(cost.value("Ntilde", json()), s.m, s.m, "Ntilde");
  s.cost.I = parse_time_mat(cost.value("I", json()), s.m, s.d, "I");
  s.cost.Itilde = parse_time_mat(cost.value("Itilde", json()), s.m, s.d, "Itilde");
  s.cost.M = parse_stoch_vec(cost.value("M", json()), s.d, "M");
  s.cost.H = parse_stoch_vec(cost.value("H", json()), s.m, "H");
  s.cost.P = cost.contains("P") ? parse_matrix_entries(cost["P"], "P") : Mat::Zero(s.d, s.d);
  s.cost.Ptilde = cost.contains("Ptilde") ? parse_matrix_entries(cost["Ptilde"], "Ptilde")
                                          : Mat::Zero(s.d, s.d);
  s.cost.L = cost.contains("L") ? parse_vector_entries(cost["L"], "L") : Vec::Zero(s.d);

  const json x0 = j.value("x0", json::object());
  std::string law = x0.value("kind", "point");
  Vec mean = x0.contains("mean") ? parse_vector_entries(x0["mean"], "x0.mean")
                                 : Vec::Zero(s.d);
  if (law == "point") {
    s.x0 = InitialLaw::point(mean);
  } else if (law == "gaussian") {
    Mat cov = x0.contains("cov") ? parse_matrix_entries(x0["cov"], "x0.cov")
                                 : Mat::Zero(s.d, s.d);
    s.x0 = InitialLaw::gaussian(mean, cov);
  } else {
    fail(ErrorKind::UnsupportedInitialLaw, "x0.kind must be 'point' or 'gaussian'");
  }

  s.common_noise = j.value("common_noise", false);
  if (j.contains("factor") && !j["factor"].is_null()) {
    const json& f = j["factor"];
    OuFactor of;
    of.kappa = f.value("kappa", 1.0);
    of.mean = f.value("mean", 0.0);
    of.vol = f.value("vol", 0.0);
    of.init = f.value("init", of.mean);
    if (f.contains("driver")) {
      if (f["driver"].is_string()) {
        std::string dv = f["driver"].get<std::string>();
        if (dv == "common")
          of.binding = DriverBinding::Common;
        else if (dv == "independent")
          of.binding = DriverBinding::Independent;
        else
          fail(ErrorKind::ParseError, "factor.driver must be 'common', 'independent' or an index");
      } else {
        of.binding = DriverBinding::StateDriver;
        of.state_driver = f["driver"].get<int>();
      }
    }
    s.factor = of;
  }
  if (j.contains("gamma0") && !j["gamma0"].is_null())
    s.gamma0 = parse_stoch_vec(j["gamma0"], s.d, "gamma0");
  return s;
}

inline ProblemSpec load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::ParseError, "cannot open spec file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::ParseError, std::string("malformed JSON: ") + e.what());
  }
  return parse_problem(j);
}

inline json matrix_to_json(const Mat& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline json vector_to_json(const Vec& v) {
  json row = json::array();
  for (int i = 0; i < v.size(); ++i) row.push_back(v(i));
  return row;
}

inline json law_to_json(const FeedbackLaw& law) {
  json j;
  j["d"] = law.d;
  j["m"] = law.m;
  j["finite"] = law.finite;
  j["rho"] = law.rho;
  j["common_noise"] = law.common_noise;
  if (law.factor) {
    j["factor"] = {{"kappa", law.factor->kappa},
                   {"mean", law.factor->mean},
                   {"vol", law.factor->vol},
                   {"init", law.factor->init},
                   {"binding", law.factor->binding == DriverBinding::Common
                                   ? "common"
                                   : "independent"}};
  }
  j["grid"] = law.grid;
  json nodes = json::array();
  for (std::size_t k = 0; k < law.grid.size(); ++k) {
    json n;
    n["gain_centered"] = matrix_to_json(law.gain_centered[k]);
    n["gain_mean"] = matrix_to_json(law.gain_mean[k]);
    n["off_base"] = vector_to_json(law.off_base[k]);
    n["off_load"] = vector_to_json(law.off_load[k]);
    n["shatO_base"] = vector_to_json(law.shatO_base[k]);
    n["shatO_load"] = vector_to_json(law.shatO_load[k]);
    n["centered_load"] = vector_to_json(law.centered_load[k]);
    nodes.push_back(n);
  }
  j["nodes"] = nodes;
  return j;
}

inline FeedbackLaw law_from_json(const json& j) {
  FeedbackLaw law;
  law.d = j.at("d").get<int>();
  law.m = j.at("m").get<int>();
  law.finite = j.at("finite").get<bool>();
  law.rho = j.at("rho").get<double>();
  law.common_noise = j.value("common_noise", false);
  if (j.contains("factor")) {
    OuFactor f;
    f.kappa = j["factor"].value("kappa", 1.0);
    f.mean = j["factor"].value("mean", 0.0);
    f.vol = j["factor"].value("vol", 0.0);
    f.init = j["factor"].value("init", 0.0);
    f.binding = j["factor"].value("binding", "independent") == std::string("common")
                    ? DriverBinding::Common
                    : DriverBinding::Independent;
    law.factor = f;
  }
  law.grid = j.at("grid").get<std::vector<double>>();
  for (const auto& n : j.at("nodes")) {
    law.gain_centered.push_back(parse_matrix_entries(n.at("gain_centered"), "gain_centered"));
    law.gain_mean.push_back(parse_matrix_entries(n.at("gain_mean"), "gain_mean"));
    law.off_base.push_back(parse_vector_entries(n.at("off_base"), "off_base"));
    law.off_load.push_back(parse_vector_entries(n.at("off_load"), "off_load"));
    law.shatO_base.push_back(parse_vector_entries(n.at("shatO_base"), "shatO_base"));
    law.shatO_load.push_back(parse_vector_entries(n.at("shatO_load"), "shatO_load"));
    law.centered_load.push_back(parse_vector_entries(n.at("centered_load"), "centered_load"));
  }
  if (law.grid.size() != law.gain_centered.size() || law.grid.size() < 2)
    fail(ErrorKind::ParseError, "law bundle grid/node mismatch");
  return law;
}

inline void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::ParseError, "cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace io
}  // namespace lqmkv
