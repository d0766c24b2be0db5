#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "envelopes.hpp"
#include "feynman_kac.hpp"
#include "io.hpp"
#include "kato.hpp"
#include "spectral.hpp"

// Experiment orchestration: config -> classify -> spectral -> simulate -> fit -> verdict
namespace fklab::experiment {

using io::json;
using processes::ProcessSpec;

enum class Mode { theorem_1_3, corollary_1_5, theorem_1_7, single_op };

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::theorem_1_3: return "theorem_1_3";
    case Mode::corollary_1_5: return "corollary_1_5";
    case Mode::theorem_1_7: return "theorem_1_7";
    case Mode::single_op: return "single_op";
  }
  return "?";
}

struct Tolerances {
  double constant_cap = 8.0;     // fitted constants must lie in [1/cap, cap]
  double growth_tol = 0.02;      // tolerated rise of the last time slice in the fit
  double k_max = 10.0;
  double k_step = 0.0025;
  double identity_tol = 0.05;    // identity perturbation: |p/envelope - 1| beyond MC slack
  double k_match_tol = 0.30;     // diagnostic: fitted k versus |lambda|
  double lambda_zero = 1e-4;     // |lambda| below this is treated as undecided
  double ratio_finite = 0.7, ratio_divergent = 1.3;
  double theta_finite = 1.1, theta_divergent = 0.9;
  double hill_fraction = 0.01;
};

struct GaugeConfig {
  std::vector<Point> points;
  long long n_paths = 0;  // 0: use the experiment's n_paths
  double truncation_radius = 0.0;
};

struct ResolventConfig {
  Point x;
  std::vector<Point> probes;
  std::vector<double> T_ladder{1.0, 4.0, 16.0, 64.0};
  double bandwidth = 0.2;
  long long n_paths = 0;
};

struct Config {
  Mode mode = Mode::single_op;
  ProcessSpec process;
  std::optional<functionals::PotentialU> u;
  MeasureSpec mu = MeasureSpec::zero();
  std::optional<JumpPerturbation> F;
  std::optional<envelopes::EnvelopeFamily> envelope;
  double alpha = 0.0;
  std::vector<spectral::Mesh> meshes{spectral::Mesh{}};
  long long n_paths = 100000;
  std::uint64_t seed = 1;
  double dt = 2e-3;
  double bandwidth = 0.0;  // 0: plug-in
  std::vector<double> t_values{0.5, 1.0, 2.0};
  std::vector<std::pair<Point, Point>> pairs;
  std::string output_dir = "fklab_out";
  std::vector<double> classify_alphas{1.0, 4.0, 16.0, 64.0, 256.0};
  Tolerances tol;
  std::optional<GaugeConfig> gauge;
  std::optional<ResolventConfig> resolvent;
  json raw;  // the parsed document, echoed into the summary

  fk::Setup setup() const { return fk::Setup{process, u, mu, F}; }
  // process used for simulation and classification (killed at alpha in the killed mode)
  ProcessSpec sim_process() const {
    ProcessSpec s = process;
    if (mode == Mode::corollary_1_5) {
      s.kill_rate += alpha;
      if (s.is_brownian()) s.kind = processes::Kind::brownian_killed_alpha;
    }
    return s;
  }
};

// ---------------------------------------------------------------------------
// parsing

inline std::vector<std::pair<Point, Point>> all_pairs(const std::vector<Point>& pts) {
  std::vector<std::pair<Point, Point>> out;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i; j < pts.size(); ++j) out.emplace_back(pts[i], pts[j]);
  return out;
}

inline std::vector<Point> point_list(const json& j, const std::string& ctx) {
  if (!j.is_array()) io::bad(ctx, "expected an array of points");
  std::vector<Point> v;
  for (const auto& p : j) v.push_back(io::point(p, ctx));
  return v;
}

inline Tolerances tolerances_from_json(const json& j) {
  const std::string ctx = "tolerances";
  io::check_keys(j, {"constant_cap", "growth_tol", "k_max", "k_step", "identity_tol", "k_match_tol", "lambda_zero",
                     "ratio_finite", "ratio_divergent", "theta_finite", "theta_divergent", "hill_fraction"},
                 ctx);
  Tolerances t;
  t.constant_cap = io::num(j, "constant_cap", ctx, t.constant_cap);
  t.growth_tol = io::num(j, "growth_tol", ctx, t.growth_tol);
  t.k_max = io::num(j, "k_max", ctx, t.k_max);
  t.k_step = io::num(j, "k_step", ctx, t.k_step);
  t.identity_tol = io::num(j, "identity_tol", ctx, t.identity_tol);
  t.k_match_tol = io::num(j, "k_match_tol", ctx, t.k_match_tol);
  t.lambda_zero = io::num(j, "lambda_zero", ctx, t.lambda_zero);
  t.ratio_finite = io::num(j, "ratio_finite", ctx, t.ratio_finite);
  t.ratio_divergent = io::num(j, "ratio_divergent", ctx, t.ratio_divergent);
  t.theta_finite = io::num(j, "theta_finite", ctx, t.theta_finite);
  t.theta_divergent = io::num(j, "theta_divergent", ctx, t.theta_divergent);
  t.hill_fraction = io::num(j, "hill_fraction", ctx, t.hill_fraction);
  if (!(t.constant_cap > 1.0)) io::bad(ctx, "constant_cap must be > 1");
  return t;
}

inline spectral::Mesh mesh_from_json(const json& j, const std::string& ctx) {
  io::check_keys(j, {"h", "L"}, ctx);
  spectral::Mesh m;
  m.h = io::num(j, "h", ctx, m.h);
  m.L = io::num(j, "L", ctx, m.L);
  if (!(m.h > 0.0) || !(m.L > 0.0)) io::bad(ctx, "mesh needs h > 0 and L > 0");
  return m;
}

inline Config config_from_json(const json& j) {
  const std::string ctx = "config";
  io::check_keys(j, {"schema", "mode", "process", "u", "mu", "F", "envelope", "alpha", "mesh", "meshes", "n_paths", "seed",
                     "dt", "bandwidth", "t_values", "points", "pairs", "output_dir", "classify_alphas", "tolerances",
                     "gauge", "resolvent"},
                 ctx);
  if (!j.contains("schema") || !j["schema"].is_number_integer() || j["schema"].get<int>() != 1)
    io::bad(ctx, "\"schema\": 1 is required");
  Config c;
  c.raw = j;
  if (!j.contains("mode") || !j["mode"].is_string()) io::bad(ctx, "missing mode");
  const std::string m = j["mode"];
  bool found = false;
  for (Mode k : {Mode::theorem_1_3, Mode::corollary_1_5, Mode::theorem_1_7, Mode::single_op})
    if (m == mode_name(k)) c.mode = k, found = true;
  if (!found) io::bad(ctx, "unknown mode '" + m + "'");
  if (!j.contains("process")) io::bad(ctx, "missing process");
  c.process = io::process_from_json(j["process"]);
  if (j.contains("u")) c.u = io::potential_from_json(j["u"]);
  if (j.contains("mu")) c.mu = io::measure_from_json(j["mu"], "mu");
  if (j.contains("F")) c.F = io::jump_from_json(j["F"]);
  if (j.contains("envelope") && !j["envelope"].is_null()) {
    c.envelope = io::envelope_from_json(j["envelope"]);
    if (c.envelope->dim() != c.process.dim) io::bad("envelope", "dim does not match the process");
  }
  c.alpha = io::num(j, "alpha", ctx, 0.0);
  if (!(c.alpha >= 0.0)) io::bad(ctx, "alpha must be >= 0");
  if (j.contains("mesh") && j.contains("meshes")) io::bad(ctx, "give either mesh or meshes");
  if (j.contains("mesh")) c.meshes = {mesh_from_json(j["mesh"], "mesh")};
  if (j.contains("meshes")) {
    if (!j["meshes"].is_array() || j["meshes"].empty()) io::bad(ctx, "meshes must be a non-empty array");
    c.meshes.clear();
    for (const auto& mj : j["meshes"]) c.meshes.push_back(mesh_from_json(mj, "meshes"));
  }
  const double np = io::num(j, "n_paths", ctx, 1e5);
  if (!(np >= 1.0) || np != std::floor(np)) io::bad(ctx, "n_paths must be a positive integer");
  c.n_paths = static_cast<long long>(np);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) io::bad(ctx, "seed must be a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  c.dt = io::num(j, "dt", ctx, c.dt);
  c.bandwidth = io::num(j, "bandwidth", ctx, 0.0);
  if (j.contains("t_values")) c.t_values = io::numbers(j["t_values"], "t_values");
  if (j.contains("points") && j.contains("pairs")) io::bad(ctx, "give either points or pairs");
  if (j.contains("points")) c.pairs = all_pairs(point_list(j["points"], "points"));
  if (j.contains("pairs")) {
    if (!j["pairs"].is_array()) io::bad("pairs", "expected an array of [x, y]");
    for (const auto& p : j["pairs"]) {
      if (!p.is_array() || p.size() != 2) io::bad("pairs", "each pair is [x, y]");
      c.pairs.emplace_back(io::point(p[0], "pairs"), io::point(p[1], "pairs"));
    }
  }
  for (const auto& [x, y] : c.pairs)
    if (static_cast<int>(x.size()) != c.process.dim || static_cast<int>(y.size()) != c.process.dim)
      io::bad("pairs", "point dimension does not match the process");
  if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
  if (j.contains("classify_alphas")) c.classify_alphas = io::numbers(j["classify_alphas"], "classify_alphas");
  if (j.contains("tolerances")) c.tol = tolerances_from_json(j["tolerances"]);
  if (j.contains("gauge") && !j["gauge"].is_null()) {
    const json& g = j["gauge"];
    io::check_keys(g, {"points", "n_paths", "truncation_radius"}, "gauge");
    GaugeConfig gc;
    if (!g.contains("points")) io::bad("gauge", "missing points");
    gc.points = point_list(g["points"], "gauge.points");
    gc.n_paths = static_cast<long long>(io::num(g, "n_paths", "gauge", 0.0));
    gc.truncation_radius = io::num(g, "truncation_radius", "gauge", 0.0);
    c.gauge = gc;
  }
  if (j.contains("resolvent") && !j["resolvent"].is_null()) {
    const json& r = j["resolvent"];
    io::check_keys(r, {"x", "probes", "T_ladder", "bandwidth", "n_paths"}, "resolvent");
    ResolventConfig rc;
    rc.x = r.contains("x") ? io::point(r["x"], "resolvent.x") : Point(c.process.dim, 0.0);
    if (!r.contains("probes")) io::bad("resolvent", "missing probes");
    rc.probes = point_list(r["probes"], "resolvent.probes");
    if (r.contains("T_ladder")) rc.T_ladder = io::numbers(r["T_ladder"], "resolvent.T_ladder");
    rc.bandwidth = io::num(r, "bandwidth", "resolvent", rc.bandwidth);
    rc.n_paths = static_cast<long long>(io::num(r, "n_paths", "resolvent", 0.0));
    c.resolvent = rc;
  }

  if (c.mode == Mode::theorem_1_3 && !c.process.transient())
    io::bad(ctx, "mode theorem_1_3 requires a transient process");
  if (c.mode == Mode::corollary_1_5 && !(c.alpha > 0.0)) io::bad(ctx, "mode corollary_1_5 requires alpha > 0");
  if (c.mode != Mode::single_op && !c.envelope) io::bad(ctx, "verdict modes need an envelope");
  if (c.mode != Mode::single_op && c.pairs.empty()) io::bad(ctx, "verdict modes need points or pairs");
  return c;
}

inline Config load_config(const std::string& path) { return config_from_json(io::read_file(path)); }

// ---------------------------------------------------------------------------
// stages

struct ClassEntry {
  std::string name;
  std::optional<kato::ClassReport> report;
  std::string error;
};

inline std::vector<ClassEntry> classify_inputs(const Config& c) {
  std::vector<ClassEntry> out;
  kato::ClassifyOptions opt;
  opt.alphas = c.classify_alphas;
  const ProcessSpec spec = c.sim_process();
  auto run = [&](const std::string& name, const MeasureSpec& m) {
    if (m.is_zero()) return;
    ClassEntry e{name, std::nullopt, ""};
    try {
      e.report = kato::classify(m, spec, opt);
    } catch (const Error& err) {
      e.error = err.what();
    }
    out.push_back(std::move(e));
  };
  run("mu_1", c.mu.positive_part());
  run("mu_2", c.mu.negative_part());
  if (c.u && c.u->kind == functionals::PotentialU::Kind::resolvent_potential) {
    run("nu_1", c.u->nu1);
    run("nu_2", c.u->nu2);
  }
  return out;
}

struct SpectralStage {
  std::optional<double> lambda;  // empty when undecided
  bool plus_infinity = false;    // mu_bar_1 has no positive part
  spectral::MeshStudy study;
  std::optional<spectral::SpectralResult> finest;
  std::string error;
  json to_json() const {
    json j;
    j["lambda"] = lambda ? io::real(*lambda) : json(nullptr);
    j["plus_infinity"] = plus_infinity;
    if (!error.empty()) j["error"] = error;
    json rows = json::array();
    for (const auto& r : study.rows)
      rows.push_back({{"h", r.mesh.h}, {"L", r.mesh.L}, {"lambda", io::real(r.lambda)}, {"converged", r.converged}});
    j["mesh_study"] = rows;
    if (study.rows.size() >= 3) {
      j["extrapolated"] = io::real(study.extrapolated);
      j["observed_order"] = study.observed_order;
      j["monotone"] = study.monotone;
    }
    if (finest) {
      j["residual"] = finest->residual;
      j["converged"] = finest->converged;
      j["minus_infinity"] = finest->minus_infinity;
      j["iterations"] = finest->iterations;
    }
    return j;
  }
};

inline SpectralStage spectral_stage(const Config& c) {
  SpectralStage st;
  spectral::SpectralProblem P{c.process, c.u, c.mu, c.F, c.alpha};
  std::vector<spectral::MeshRow> rows;
  try {
    for (const auto& m : c.meshes) {
      auto r = P.solve(m);
      rows.push_back({m, r.lambda, r.converged});
      st.finest = r;
    }
    st.study = spectral::richardson(rows);
    const double lam = rows.size() >= 3 ? st.study.extrapolated : rows.back().lambda;
    if (st.finest && st.finest->minus_infinity)
      st.lambda = -kInf;
    else if (std::abs(lam) > c.tol.lambda_zero && std::all_of(rows.begin(), rows.end(), [](auto& r) { return r.converged; }))
      st.lambda = lam;
    else
      st.error = "lambda not separated from zero or solver not converged";
  } catch (const Error& e) {
    if (e.code() == Errc::singular_pencil) {
      st.plus_infinity = true;
      st.lambda = kInf;
    } else {
      st.error = e.what();
    }
    st.study.rows = rows;
  } catch (const std::exception& e) {
    st.error = e.what();
    st.study.rows = rows;
  }
  return st;
}

inline envelopes::FitOptions fit_options(const Tolerances& t) {
  envelopes::FitOptions o;
  o.constant_cap = t.constant_cap;
  o.growth_tol = t.growth_tol;
  o.k_max = t.k_max;
  o.k_step = t.k_step;
  return o;
}

inline fk::KernelOptions kernel_options(const Config& c) {
  fk::KernelOptions o;
  o.n_paths = c.n_paths;
  o.seed = c.seed;
  o.dt = c.dt;
  o.bandwidth = c.bandwidth;
  return o;
}

inline KernelEstimate kernel_stage(const Config& c) {
  fk::Setup S = c.setup();
  S.spec = c.sim_process();
  if (c.pairs.empty()) fail(Errc::invalid_input, "kernel estimation needs points or pairs");
  return fk::fk_kernel(S, c.t_values, c.pairs, kernel_options(c));
}

inline fk::GaugeEstimate gauge_stage(const Config& c) {
  fk::Setup S = c.setup();
  S.spec = c.sim_process();
  fk::GaugeOptions o;
  o.n_paths = c.gauge->n_paths > 0 ? c.gauge->n_paths : c.n_paths;
  o.seed = c.seed;
  o.dt = c.dt;
  o.truncation_radius = c.gauge->truncation_radius;
  o.hill_fraction = c.tol.hill_fraction;
  o.theta_bounded = c.tol.theta_finite;
  o.theta_divergent = c.tol.theta_divergent;
  return fk::gauge(S, c.gauge->points, o);
}

inline fk::ResolventTable resolvent_stage(const Config& c) {
  fk::Setup S = c.setup();
  S.spec = c.sim_process();
  fk::ResolventOptions o;
  o.n_paths = c.resolvent->n_paths > 0 ? c.resolvent->n_paths : c.n_paths;
  o.seed = c.seed;
  o.dt = c.dt;
  o.T_ladder = c.resolvent->T_ladder;
  o.bandwidth = c.resolvent->bandwidth;
  o.ratio_finite = c.tol.ratio_finite;
  o.ratio_divergent = c.tol.ratio_divergent;
  o.theta_finite = c.tol.theta_finite;
  o.theta_divergent = c.tol.theta_divergent;
  o.hill_fraction = c.tol.hill_fraction;
  return fk::resolvent_A(S, c.alpha, c.resolvent->x, c.resolvent->probes, o);
}

// ---------------------------------------------------------------------------
// CSV

inline std::string kernel_csv(const KernelEstimate& k) {
  std::ostringstream s;
  const std::size_t d = k.pairs.empty() ? 1 : k.pairs.front().first.size();
  s << "t";
  for (std::size_t i = 1; i <= d; ++i) s << ",x_" << i;
  for (std::size_t i = 1; i <= d; ++i) s << ",y_" << i;
  s << ",value,ci,bias\n";
  for (std::size_t j = 0; j < k.n_times(); ++j)
    for (std::size_t i = 0; i < k.n_pairs(); ++i) {
      s << io::fmt(k.t_values[j]);
      for (double v : k.pairs[i].first) s << ',' << io::fmt(v);
      for (double v : k.pairs[i].second) s << ',' << io::fmt(v);
      s << ',' << io::fmt(k.values[j][i]) << ',' << io::fmt(k.ci_half_width[j][i]) << ','
        << io::fmt(k.bias.empty() ? 0.0 : k.bias[j][i]) << '\n';
    }
  return s.str();
}

// p_hat / envelope versus d(x,y) per t, unit constants and k = 0
inline std::string ratio_csv(const KernelEstimate& k, const envelopes::EnvelopeFamily& fam) {
  std::ostringstream s;
  s << "t,distance,ratio,ratio_slack\n";
  for (std::size_t j = 0; j < k.n_times(); ++j)
    for (std::size_t i = 0; i < k.n_pairs(); ++i) {
      const auto& [x, y] = k.pairs[i];
      const double env = envelopes::eval_envelope(fam, k.t_values[j], x, y);
      s << io::fmt(k.t_values[j]) << ',' << io::fmt(dist(x, y)) << ',' << io::fmt(k.values[j][i] / env) << ','
        << io::fmt(k.slack(j, i) / env) << '\n';
    }
  return s.str();
}

inline std::string gauge_csv(const fk::GaugeEstimate& g) {
  std::ostringstream s;
  const std::size_t d = g.points.empty() ? 1 : g.points.front().size();
  for (std::size_t i = 1; i <= d; ++i) s << (i > 1 ? "," : "") << "x_" << i;
  s << ",h,ci,step_bias,theta\n";
  for (std::size_t i = 0; i < g.points.size(); ++i) {
    for (std::size_t k = 0; k < d; ++k) s << (k ? "," : "") << io::fmt(g.points[i][k]);
    s << ',' << io::fmt(g.h_hat[i]) << ',' << io::fmt(g.ci[i]) << ',' << io::fmt(g.step_bias[i]) << ','
      << io::fmt(g.theta[i]) << '\n';
  }
  return s.str();
}

inline std::string resolvent_csv(const fk::ResolventTable& r) {
  std::ostringstream s;
  const std::size_t d = r.x.size();
  s << "T";
  for (std::size_t i = 1; i <= d; ++i) s << ",y_" << i;
  s << ",value,ci,tail,corrected\n";
  for (const auto& row : r.rows)
    for (std::size_t k = 0; k < r.T.size(); ++k) {
      s << io::fmt(r.T[k]);
      for (double v : row.y) s << ',' << io::fmt(v);
      s << ',' << io::fmt(row.values[k]) << ',' << io::fmt(row.ci[k]) << ',' << io::fmt(row.tail[k]) << ','
        << io::fmt(row.corrected[k]) << '\n';
    }
  return s.str();
}

inline json gauge_json(const fk::GaugeEstimate& g, const std::optional<fk::GaugeIdentity>& id) {
  json j{{"bounded", tri_name(g.bounded)},
         {"theta_min", io::real(g.theta_min)},
         {"truncation_radius", g.truncation_radius},
         {"tail_bias_bound", g.tail_bias_bound},
         {"n_paths", g.n_paths}};
  if (id) {
    j["identity"] = {{"max_residual", id->max_residual}, {"max_error", id->max_error},
                     {"worst_ratio", io::real(id->worst_ratio)}, {"consistent", id->consistent}};
  }
  return j;
}

inline json resolvent_json(const fk::ResolventTable& r) {
  json rows = json::array();
  for (const auto& row : r.rows) rows.push_back({{"y", row.y}, {"finite", tri_name(row.finite)}, {"ratios", row.ratios}});
  return {{"alpha", r.alpha}, {"x", r.x}, {"T", r.T}, {"finite", tri_name(r.finite)},
          {"theta", io::real(r.theta)}, {"bandwidth", r.bandwidth}, {"n_paths", r.n_paths}, {"rows", rows}};
}

inline json kernel_json(const KernelEstimate& k) {
  return {{"n_paths", k.n_paths}, {"bandwidths", k.bandwidths}, {"bias_bound", k.bias_bound},
          {"n_times", k.n_times()}, {"n_pairs", k.n_pairs()}};
}

// ---------------------------------------------------------------------------
// run

enum class Status { consistent, inconsistent, inconclusive };

inline const char* status_name(Status s) {
  switch (s) {
    case Status::consistent: return "consistent";
    case Status::inconsistent: return "inconsistent";
    case Status::inconclusive: return "inconclusive";
  }
  return "?";
}

struct Bundle {
  json summary;
  json spectral;
  std::optional<KernelEstimate> kernel;
  std::optional<envelopes::EnvelopeFamily> envelope;
  std::optional<fk::GaugeEstimate> gauge;
  std::optional<fk::ResolventTable> resolvent;
  Status status = Status::inconclusive;
  std::string verdict;

  bool empty() const { return summary.is_null() && spectral.is_null() && !kernel && !gauge && !resolvent; }
};

namespace detail {

inline bool is_config_error(const std::exception& e) {
  const auto* fe = dynamic_cast<const Error*>(&e);
  return fe && fe->code() == Errc::config_error;
}

inline std::string num_str(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

inline json hyp(const std::string& h, const std::string& status, const std::string& result) {
  return {{"hypothesis", h}, {"status", status}, {"result", result}};
}

inline std::string flag_of(const std::vector<ClassEntry>& cls, const std::string& name, Tri kato::ClassReport::*f) {
  for (const auto& e : cls)
    if (e.name == name) return e.report ? tri_name((*e.report).*f) : "inconclusive";
  return "n/a";
}

// worst |p_hat/env - 1| after removing the MC slack
inline double identity_deviation(const KernelEstimate& k, const envelopes::EnvelopeFamily& fam) {
  double worst = 0.0;
  for (std::size_t j = 0; j < k.n_times(); ++j)
    for (std::size_t i = 0; i < k.n_pairs(); ++i) {
      const double env = envelopes::eval_envelope(fam, k.t_values[j], k.pairs[i].first, k.pairs[i].second);
      const double dev = std::max(0.0, std::abs(k.values[j][i] - env) - k.slack(j, i)) / env;
      worst = std::max(worst, dev);
    }
  return worst;
}

}  // namespace detail

inline Bundle run(const Config& c) {
  Bundle b;
  json warnings = json::array();
  json hyps = json::array();

  // classification
  const auto cls = classify_inputs(c);
  json classes = json::object();
  for (const auto& e : cls) {
    if (e.report) {
      classes[e.name] = io::to_json(*e.report);
      for (auto f : {&kato::ClassReport::kato, &kato::ClassReport::dynkin, &kato::ClassReport::extended_kato})
        if ((*e.report).*f == Tri::inconclusive) {
          warnings.push_back(e.name + ": a class flag is inconclusive");
          break;
        }
    } else {
      classes[e.name] = {{"error", e.error}};
      warnings.push_back(e.name + ": classification failed: " + e.error);
    }
  }
  using CR = kato::ClassReport;
  const bool has_mu1 = c.mu.has_pos(), has_mu2 = c.mu.has_neg();
  if (c.mode == Mode::theorem_1_3 || c.mode == Mode::corollary_1_5) {
    if (has_mu1) {
      hyps.push_back(detail::hyp("mu_1 in the Kato class", "checked", detail::flag_of(cls, "mu_1", &CR::kato)));
      hyps.push_back(detail::hyp("mu_1 Green-tight", "surrogate-checked", detail::flag_of(cls, "mu_1", &CR::green_tight)));
    }
    if (has_mu2) hyps.push_back(detail::hyp("mu_2 in the Dynkin class", "checked", detail::flag_of(cls, "mu_2", &CR::dynkin)));
  } else if (c.mode == Mode::theorem_1_7) {
    if (has_mu1)
      hyps.push_back(detail::hyp("mu_1 in the extended Kato class", "checked",
                                 detail::flag_of(cls, "mu_1", &CR::extended_kato)));
    if (has_mu2) hyps.push_back(detail::hyp("mu_2 in the Dynkin class", "checked", detail::flag_of(cls, "mu_2", &CR::dynkin)));
  }
  if (c.mode != Mode::single_op) {
    if (c.u && c.u->kind == functionals::PotentialU::Kind::resolvent_potential) {
      for (const char* n : {"nu_1", "nu_2"})
        if (detail::flag_of(cls, n, &CR::kato) != "n/a")
          hyps.push_back(detail::hyp(std::string(n) + " in the Kato class", "checked", detail::flag_of(cls, n, &CR::kato)));
    } else if (c.u) {
      hyps.push_back(detail::hyp("u in the local Dirichlet space with Kato energy measure", "assumed", "ell_beta family"));
    }
    if (c.F) {
      hyps.push_back(detail::hyp("F bounded, symmetric, vanishing on the diagonal", "checked", "yes (threshold form)"));
      hyps.push_back(detail::hyp("N(e^F - 1) mu_H in the Kato class", "assumed", "bounded F with jump-size cutoff"));
    }
    hyps.push_back(detail::hyp("heat kernel satisfies the two-sided envelope", "assumed", "process model"));
    hyps.push_back(detail::hyp("doubly Feller and irreducible", "assumed", "process model"));
  }

  // spectral
  const SpectralStage sp = spectral_stage(c);
  b.spectral = sp.to_json();
  if (!sp.error.empty()) warnings.push_back("spectral: " + sp.error);

  // kernel + fits
  json fits = json::object();
  std::optional<envelopes::EnvelopeVerdict> k0, kf;
  std::string kernel_error;
  if (!c.pairs.empty()) {
    try {
      b.kernel = kernel_stage(c);
      if (c.envelope) {
        b.envelope = c.envelope;
        const auto fo = fit_options(c.tol);
        k0 = envelopes::fit_envelope(*b.kernel, *c.envelope, false, fo);
        kf = envelopes::fit_envelope(*b.kernel, *c.envelope, true, fo);
        fits["k_zero"] = io::to_json(*k0);
        fits["allow_k"] = io::to_json(*kf);
      }
    } catch (const std::exception& e) {
      if (detail::is_config_error(e)) throw;
      kernel_error = e.what();
      warnings.push_back("kernel: " + kernel_error);
    }
  }

  // optional gauge and resolvent stages
  json gauge_j = nullptr, res_j = nullptr;
  std::optional<fk::GaugeIdentity> gid;
  if (c.gauge) {
    try {
      b.gauge = gauge_stage(c);
      if (c.gauge->points.size() >= 3 && c.mu.radial()) gid = fk::gauge_identity_residual(*b.gauge, c.mu, c.sim_process());
      gauge_j = gauge_json(*b.gauge, gid);
    } catch (const std::exception& e) {
      if (detail::is_config_error(e)) throw;
      gauge_j = {{"error", e.what()}};
      warnings.push_back(std::string("gauge: ") + e.what());
    }
  }
  if (c.resolvent) {
    try {
      b.resolvent = resolvent_stage(c);
      res_j = resolvent_json(*b.resolvent);
    } catch (const std::exception& e) {
      if (detail::is_config_error(e)) throw;
      res_j = {{"error", e.what()}};
      warnings.push_back(std::string("resolvent: ") + e.what());
    }
  }

  // verdict
  Status st = Status::inconclusive;
  std::string text;
  const fk::Setup S = c.setup();
  const bool lam_known = sp.lambda.has_value();
  const double lam = lam_known ? *sp.lambda : 0.0;
  const double tmax = c.t_values.empty() ? 0.0 : *std::max_element(c.t_values.begin(), c.t_values.end());
  if (c.mode == Mode::single_op) {
    text = "estimates only (single_op mode)";
  } else if (!k0) {
    text = "kernel stage failed: " + kernel_error;
  } else if (S.unperturbed()) {
    const double dev = detail::identity_deviation(*b.kernel, *c.envelope);
    fits["identity_deviation"] = dev;
    if (dev <= c.tol.identity_tol) {
      st = Status::consistent;
      text = "identity perturbation, constants within " + detail::num_str(100 * c.tol.identity_tol) + "% of 1";
    } else {
      text = "identity perturbation, kernel differs from the unit-constant envelope by " +
             detail::num_str(100 * dev) + "% (envelope not normalized to this process)";
    }
  } else if (c.mode == Mode::theorem_1_7) {
    const std::string ek = has_mu1 ? detail::flag_of(cls, "mu_1", &CR::extended_kato) : "yes";
    if (kf->passed_upper && kf->passed_lower) {
      st = Status::consistent;
      text = "extended-Kato inputs (" + ek + ") and finite fitted k = " + detail::num_str(kf->k);
    } else if (ek == "yes") {
      st = Status::inconsistent;
      text = "extended-Kato inputs but no finite k with k <= k_max fits two-sided";
    } else {
      text = "no finite k fits two-sided and the extended-Kato flag is " + ek;
    }
  } else if (!lam_known) {
    text = "lambda undecided: " + sp.error;
  } else if (lam > 0.0) {
    const std::string ls = sp.plus_infinity ? "lambda=+inf" : "λ>0";
    if (k0->passed_upper && k0->passed_lower) {
      st = Status::consistent;
      text = ls + " and k=0 two-sided fit passed";
    } else {
      st = Status::inconsistent;
      text = ls + " but k=0 " + std::string(!k0->passed_upper ? "upper" : "lower") + " fit failed";
    }
  } else {
    const double al = std::abs(lam);
    if (!k0->passed_upper) {
      st = Status::consistent;
      text = "λ<0 and k=0 upper fit failed; ";
      if (std::isfinite(al) && std::abs(kf->k - al) <= c.tol.k_match_tol * al)
        text += "fitted k ≈ |λ| within " + detail::num_str(100 * c.tol.k_match_tol) + "%";
      else
        text += "fitted k = " + detail::num_str(kf->k) + " vs |λ| = " + detail::num_str(al) + " (diagnostic)";
    } else {
      text = "λ<0 but no growth visible up to t=" + detail::num_str(tmax) + "; the k=0 fit passed on this horizon";
    }
  }
  if (c.mode == Mode::corollary_1_5 && kf) fits["k_alpha_bound"] = c.alpha;

  // concordance with the gauge and resolvent verdicts
  json conc = json::array();
  auto cross = [&](const std::string& what, Tri v) {
    if (!lam_known || v == Tri::inconclusive || c.mode == Mode::single_op) return;
    const bool lp = lam > 0.0, vp = v == Tri::yes;
    conc.push_back({{"check", what}, {"agrees", lp == vp}});
    if (lp != vp) {
      st = Status::inconsistent;
      text += "; " + what + " disagrees with the sign of λ";
    }
  };
  if (b.gauge) cross("gauge boundedness", b.gauge->bounded);
  if (b.resolvent) cross("resolvent finiteness", b.resolvent->finite);
  if (gid && !gid->consistent && c.mode != Mode::single_op) {
    st = Status::inconsistent;
    text += "; gauge identity residual exceeds 3x its error";
  }

  b.status = st;
  b.verdict = std::string(status_name(st)) + ": " + text;

  json flags = json::object();
  for (const auto& [k, v] : classes.items())
    if (v.contains("flags")) flags[k] = v["flags"];
  b.summary = {{"schema", 1},
               {"mode", mode_name(c.mode)},
               {"verdict",
                {{"status", status_name(st)},
                 {"text", b.verdict},
                 {"lambda", lam_known ? io::real(lam) : json(nullptr)},
                 {"class_flags", flags}}},
               {"hypotheses", hyps},
               {"classification", classes},
               {"spectral", {{"lambda", b.spectral["lambda"]}, {"file", "spectral.json"}}},
               {"fits", fits},
               {"kernel", b.kernel ? kernel_json(*b.kernel) : json(nullptr)},
               {"gauge", gauge_j},
               {"resolvent", res_j},
               {"concordance", conc},
               {"warnings", warnings},
               {"config", c.raw}};
  return b;
}

// Writes the bundle; all-or-nothing.
inline std::vector<std::string> report(const Bundle& b, const std::string& dir) {
  if (b.empty()) fail(Errc::invalid_input, "empty report bundle");
  io::AtomicWriter w(dir);
  std::vector<std::string> names;
  auto add = [&](const std::string& n, std::string content) {
    w.add(n, std::move(content));
    names.push_back(n);
  };
  if (!b.summary.is_null()) add("summary.json", b.summary.dump(2) + "\n");
  if (!b.spectral.is_null()) add("spectral.json", b.spectral.dump(2) + "\n");
  if (b.kernel) add("kernel.csv", kernel_csv(*b.kernel));
  if (b.kernel && b.envelope) add("ratio.csv", ratio_csv(*b.kernel, *b.envelope));
  if (b.gauge) add("gauge.csv", gauge_csv(*b.gauge));
  if (b.resolvent) add("resolvent.csv", resolvent_csv(*b.resolvent));
  w.commit();
  return names;
}

// path_id, time, x_1..x_d, is_jump, killed
inline std::string path_dump_csv(const Config& c, int n_paths) {
  const ProcessSpec spec = c.sim_process();
  const Point x0 = c.pairs.empty() ? Point(spec.dim, 0.0) : c.pairs.front().first;
  const double T = c.t_values.empty() ? 1.0 : *std::max_element(c.t_values.begin(), c.t_values.end());
  std::ostringstream s;
  s << "path_id,time";
  for (int i = 1; i <= spec.dim; ++i) s << ",x_" << i;
  s << ",is_jump,killed\n";
  for (int p = 0; p < n_paths; ++p) {
    const auto path = processes::sample_path(spec, x0, T, std::min(c.dt, T), c.seed, static_cast<std::uint64_t>(p));
    for (std::size_t i = 0; i < path.size(); ++i) {
      const bool last = i + 1 == path.size();
      s << p << ',' << io::fmt(path.times[i]);
      for (double v : path.pos(i)) s << ',' << io::fmt(v);
      s << ',' << int(path.is_jump[i]) << ',' << int(last && path.killed_at.has_value()) << '\n';
    }
  }
  return s.str();
}

}  // namespace fklab::experiment
