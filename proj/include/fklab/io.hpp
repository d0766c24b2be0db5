#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "core.hpp"
#include "envelopes.hpp"
#include "functionals.hpp"
#include "kato.hpp"
#include "measures.hpp"
#include "processes.hpp"

// JSON (de)serialization of the component specs
namespace fklab::io {

using json = nlohmann::json;

[[noreturn]] inline void bad(const std::string& ctx, const std::string& msg) {
  fail(Errc::config_error, ctx + ": " + msg);
}

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& ctx) {
  if (!j.is_object()) bad(ctx, "expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) bad(ctx, "unknown key '" + it.key() + "'");
}

inline double num(const json& j, const char* key, const std::string& ctx, std::optional<double> def = std::nullopt) {
  if (!j.contains(key)) {
    if (def) return *def;
    bad(ctx, std::string("missing key '") + key + "'");
  }
  const auto& v = j.at(key);
  if (v.is_string() && v.get<std::string>() == "inf") return kInf;
  if (!v.is_number()) bad(ctx, std::string("'") + key + "' must be a number");
  return v.get<double>();
}

inline Point point(const json& j, const std::string& ctx) {
  if (j.is_number()) return {j.get<double>()};
  if (!j.is_array()) bad(ctx, "point must be a number or an array");
  Point p;
  for (const auto& v : j) {
    if (!v.is_number()) bad(ctx, "point coordinates must be numbers");
    p.push_back(v.get<double>());
  }
  return p;
}

inline std::vector<double> numbers(const json& j, const std::string& ctx) {
  if (!j.is_array()) bad(ctx, "expected an array of numbers");
  std::vector<double> v;
  for (const auto& x : j) {
    if (!x.is_number()) bad(ctx, "expected an array of numbers");
    v.push_back(x.get<double>());
  }
  return v;
}

inline json read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    bad(path, e.what());
  }
}

// ---------------------------------------------------------------------------
// process

inline processes::ProcessSpec process_from_json(const json& j) {
  const std::string ctx = "process";
  check_keys(j, {"kind", "dim", "alpha_stable_index", "kill_rate", "jump_cutoff"}, ctx);
  processes::ProcessSpec s;
  if (!j.contains("kind") || !j["kind"].is_string()) bad(ctx, "missing kind");
  try {
    s.kind = processes::kind_from_name(j["kind"].get<std::string>());
  } catch (const Error& e) {
    bad(ctx, e.what());
  }
  s.dim = static_cast<int>(num(j, "dim", ctx, 1.0));
  s.alpha_stable_index = num(j, "alpha_stable_index", ctx, 1.0);
  s.kill_rate = num(j, "kill_rate", ctx, 0.0);
  s.jump_cutoff = num(j, "jump_cutoff", ctx, 1e-3);
  try {
    s.validate();
  } catch (const Error& e) {
    bad(ctx, e.what());
  }
  return s;
}

inline json to_json(const processes::ProcessSpec& s) {
  json j{{"kind", processes::kind_name(s.kind)}, {"dim", s.dim}, {"kill_rate", s.kill_rate}};
  if (s.is_stable()) {
    j["alpha_stable_index"] = s.alpha_stable_index;
    j["jump_cutoff"] = s.jump_cutoff;
  }
  return j;
}

// ---------------------------------------------------------------------------
// measures

inline Profile profile_from_json(const json& j, const std::string& ctx) {
  if (!j.is_object() || j.size() != 1) bad(ctx, "profile must be a single-key object");
  const std::string name = j.begin().key();
  const json& a = j.begin().value();
  const std::string c2 = ctx + "." + name;
  if (name == "uniform_ball") {
    check_keys(a, {"c", "radius"}, c2);
    return Profile::uniform_ball(num(a, "c", c2), num(a, "radius", c2));
  }
  if (name == "power") {
    check_keys(a, {"c", "exponent", "radius"}, c2);
    return Profile::power(num(a, "c", c2), num(a, "exponent", c2), num(a, "radius", c2));
  }
  if (name == "shifted_power") {
    check_keys(a, {"c", "exponent", "radius"}, c2);
    return Profile::shifted_power(num(a, "c", c2), num(a, "exponent", c2), num(a, "radius", c2));
  }
  if (name == "gaussian_bump") {
    check_keys(a, {"c", "sigma"}, c2);
    return Profile::gaussian_bump(num(a, "c", c2), num(a, "sigma", c2));
  }
  bad(ctx, "unknown profile '" + name + "'");
}

inline json to_json(const Profile& p) {
  switch (p.shape) {
    case Profile::Shape::uniform_ball: return {{"uniform_ball", {{"c", p.c}, {"radius", p.radius}}}};
    case Profile::Shape::power: return {{"power", {{"c", p.c}, {"exponent", p.exponent}, {"radius", p.radius}}}};
    case Profile::Shape::shifted_power:
      return {{"shifted_power", {{"c", p.c}, {"exponent", p.exponent}, {"radius", p.radius}}}};
    case Profile::Shape::gaussian_bump: return {{"gaussian_bump", {{"c", p.c}, {"sigma", p.sigma}}}};
  }
  return nullptr;
}

// {"label": s, "pos": profile|null, "neg": profile|null}
inline MeasureSpec measure_from_json(const json& j, const std::string& ctx = "measure") {
  if (j.is_null()) return MeasureSpec::zero();
  check_keys(j, {"label", "pos", "neg"}, ctx);
  std::optional<Profile> p, n;
  if (j.contains("pos") && !j["pos"].is_null()) p = profile_from_json(j["pos"], ctx + ".pos");
  if (j.contains("neg") && !j["neg"].is_null()) n = profile_from_json(j["neg"], ctx + ".neg");
  for (const auto& q : {p, n})
    if (q && (!(q->c > 0.0) || !(q->radius > 0.0) || !(q->sigma > 0.0))) bad(ctx, "profile constants must be > 0");
  const std::string label = j.contains("label") ? j["label"].get<std::string>() : "";
  if (!p && !n) {
    auto z = MeasureSpec::zero();
    if (!label.empty()) z.label = label;
    return z;
  }
  return MeasureSpec::from_profiles(p, n, label);
}

inline json to_json(const MeasureSpec& m) {
  json j{{"label", m.label}};
  j["pos"] = m.radial_pos ? to_json(*m.radial_pos) : json(nullptr);
  j["neg"] = m.radial_neg ? to_json(*m.radial_neg) : json(nullptr);
  return j;
}

// {"pos": {"threshold": {eps, min_jump}} | null, "neg": ...}
inline std::optional<JumpPerturbation> jump_from_json(const json& j, const std::string& ctx = "F") {
  if (j.is_null()) return std::nullopt;
  check_keys(j, {"pos", "neg"}, ctx);
  auto part = [&](const char* key) -> std::optional<ThresholdJump> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    const std::string c2 = ctx + "." + key;
    check_keys(j[key], {"threshold"}, c2);
    const json& a = j[key]["threshold"];
    check_keys(a, {"eps", "min_jump"}, c2 + ".threshold");
    ThresholdJump t{num(a, "eps", c2), num(a, "min_jump", c2)};
    if (!(t.eps >= 0.0) || !(t.min_jump > 0.0)) bad(c2, "threshold needs eps >= 0 and min_jump > 0");
    return t;
  };
  auto p = part("pos"), n = part("neg");
  if (!p && !n) return std::nullopt;
  return JumpPerturbation::threshold(p, n);
}

inline json to_json(const std::optional<JumpPerturbation>& F) {
  if (!F) return nullptr;
  auto part = [](const std::optional<ThresholdJump>& t) -> json {
    if (!t) return nullptr;
    return {{"threshold", {{"eps", t->eps}, {"min_jump", t->min_jump}}}};
  };
  return {{"pos", part(F->thr_pos)}, {"neg", part(F->thr_neg)}};
}

// {"kind": "resolvent_potential", "nu1", "nu2", "alpha", "cap"} | {"kind": "ell_beta", "beta", "eps"}
inline std::optional<functionals::PotentialU> potential_from_json(const json& j, const std::string& ctx = "u") {
  if (j.is_null()) return std::nullopt;
  if (!j.contains("kind") || !j["kind"].is_string()) bad(ctx, "missing kind");
  const std::string kind = j["kind"];
  if (kind == "resolvent_potential") {
    check_keys(j, {"kind", "nu1", "nu2", "alpha", "cap"}, ctx);
    auto u = functionals::PotentialU::resolvent(j.contains("nu1") ? measure_from_json(j["nu1"], ctx + ".nu1") : MeasureSpec::zero(),
                                                j.contains("nu2") ? measure_from_json(j["nu2"], ctx + ".nu2") : MeasureSpec::zero(),
                                                num(j, "alpha", ctx, 0.0));
    u.cap = num(j, "cap", ctx, 1e6);
    if (u.nu1.has_neg() || u.nu2.has_neg()) bad(ctx, "nu1 and nu2 must be positive measures");
    return u;
  }
  if (kind == "ell_beta") {
    check_keys(j, {"kind", "beta", "eps"}, ctx);
    try {
      return functionals::PotentialU::ell(num(j, "beta", ctx), num(j, "eps", ctx, 1e-3));
    } catch (const Error& e) {
      bad(ctx, e.what());
    }
  }
  bad(ctx, "unknown kind '" + kind + "'");
}

inline json to_json(const std::optional<functionals::PotentialU>& u) {
  if (!u) return nullptr;
  if (u->kind == functionals::PotentialU::Kind::ell_beta)
    return {{"kind", "ell_beta"}, {"beta", u->beta}, {"eps", u->eps}};
  return {{"kind", "resolvent_potential"}, {"nu1", to_json(u->nu1)}, {"nu2", to_json(u->nu2)}, {"alpha", u->alpha},
          {"cap", u->cap}};
}

// ---------------------------------------------------------------------------
// envelopes

inline envelopes::ScalingFunction scaling_from_json(const json& j, const std::string& ctx) {
  if (!j.contains("form") || !j["form"].is_string()) bad(ctx, "missing form");
  const std::string form = j["form"];
  try {
    if (form == "power") {
      check_keys(j, {"form", "beta", "coef"}, ctx);
      return envelopes::ScalingFunction::power(num(j, "beta", ctx), num(j, "coef", ctx, 1.0));
    }
    if (form == "table") {
      check_keys(j, {"form", "points"}, ctx);
      std::vector<std::pair<double, double>> pts;
      if (!j.contains("points") || !j["points"].is_array()) bad(ctx, "table needs points");
      for (const auto& p : j["points"]) {
        if (!p.is_array() || p.size() != 2) bad(ctx, "table points are [r, value]");
        pts.emplace_back(p[0].get<double>(), p[1].get<double>());
      }
      return envelopes::ScalingFunction::from_table(pts);
    }
  } catch (const Error& e) {
    if (e.code() == Errc::config_error) throw;
    bad(ctx, e.what());
  }
  bad(ctx, "unknown form '" + form + "'");
}

inline json to_json(const envelopes::ScalingFunction& f) {
  if (f.form == "table") {
    json pts = json::array();
    for (auto [r, v] : f.table) pts.push_back({r, v});
    return {{"form", "table"}, {"points", pts}};
  }
  return {{"form", "power"}, {"beta", f.power_beta}, {"coef", f.power_coef}};
}

// {"kind", "phi", "psi", "dim", "volume_coef", "beta_temper", "a0", "eta", "eps_nle"}
inline envelopes::EnvelopeFamily envelope_from_json(const json& j, const std::string& ctx = "envelope") {
  check_keys(j, {"kind", "phi", "psi", "dim", "volume_coef", "beta_temper", "a0", "eta", "eps_nle"}, ctx);
  envelopes::EnvelopeFamily f;
  if (!j.contains("kind") || !j["kind"].is_string()) bad(ctx, "missing kind");
  try {
    f.kind = envelopes::kind_from_name(j["kind"]);
  } catch (const Error& e) {
    bad(ctx, e.what());
  }
  if (!j.contains("phi")) bad(ctx, "missing phi");
  f.phi = scaling_from_json(j["phi"], ctx + ".phi");
  if (j.contains("psi") && !j["psi"].is_null()) f.psi = scaling_from_json(j["psi"], ctx + ".psi");
  const int d = static_cast<int>(num(j, "dim", ctx, 1.0));
  if (d < 1) bad(ctx, "dim must be >= 1");
  f.volume = j.contains("volume_coef") ? envelopes::VolumeFunction::scaled(d, num(j, "volume_coef", ctx))
                                       : envelopes::VolumeFunction::lebesgue(d);
  f.beta = num(j, "beta_temper", ctx, 1.0);
  f.a0 = num(j, "a0", ctx, 1.0);
  f.eta = num(j, "eta", ctx, 1.0);
  f.eps_nle = num(j, "eps_nle", ctx, 1.0);
  return f;
}

inline json to_json(const envelopes::EnvelopeFamily& f) {
  json j{{"kind", envelopes::kind_name(f.kind)}, {"phi", to_json(f.phi)}, {"dim", f.dim()},
         {"volume_coef", f.volume.coef}, {"a0", f.a0}, {"eta", f.eta}, {"eps_nle", f.eps_nle}};
  j["beta_temper"] = std::isinf(f.beta) ? json("inf") : json(f.beta);
  if (f.psi) j["psi"] = to_json(*f.psi);
  return j;
}

inline json to_json(const envelopes::EnvelopeVerdict& v) {
  json viol = json::array();
  for (const auto& p : v.violation_points) viol.push_back({{"t", p.t}, {"x", p.x}, {"y", p.y}, {"ratio", p.ratio}});
  return {{"C1", v.C1}, {"c1", v.c1}, {"C2", v.C2}, {"c2", v.c2}, {"k", v.k}, {"passed_upper", v.passed_upper},
          {"passed_lower", v.passed_lower}, {"growth_detected", v.growth_detected}, {"violation_points", viol}};
}

// ---------------------------------------------------------------------------
// reports

// JSON cannot hold inf; encode as the string "inf"
inline json real(double x) {
  if (std::isinf(x)) return x > 0 ? json("inf") : json("-inf");
  if (std::isnan(x)) return nullptr;
  return x;
}

inline json to_json(const kato::ClassReport& r) {
  json sup = json::array();
  for (std::size_t i = 0; i < r.alphas.size(); ++i) sup.push_back({{"alpha", r.alphas[i]}, {"sup", real(r.sup_R_alpha[i])}});
  json tight = json::array();
  for (std::size_t i = 0; i < r.tightness.radii.size(); ++i)
    tight.push_back({{"K", r.tightness.radii[i]}, {"value", real(r.tightness.curve[i])}});
  return {{"sup_R_alpha", sup},
          {"limit_estimate", real(r.limit)},
          {"decay_exponent", r.decay_exponent},
          {"flags",
           {{"dynkin", tri_name(r.dynkin)},
            {"green_bounded", tri_name(r.green_bounded)},
            {"kato", tri_name(r.kato)},
            {"extended_kato", tri_name(r.extended_kato)},
            {"green_tight", tri_name(r.green_tight)}}},
          {"tightness_curve", tight}};
}

// fixed-format number for byte-stable CSV output
inline std::string fmt(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

// Writes all files or none: contents go to temporaries first, then get renamed.
class AtomicWriter {
 public:
  explicit AtomicWriter(std::filesystem::path dir) : dir_(std::move(dir)) {}
  void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }
  bool empty() const { return files_.empty(); }
  void commit() {
    if (files_.empty()) fail(Errc::io_error, "nothing to write");
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) fail(Errc::io_error, "cannot create " + dir_.string());
    std::vector<std::filesystem::path> tmps;
    try {
      for (const auto& [name, content] : files_) {
        const auto tmp = dir_ / (name + ".tmp");
        std::ofstream out(tmp, std::ios::binary);
        if (!out) fail(Errc::io_error, "cannot write " + tmp.string());
        out << content;
        out.close();
        if (!out) fail(Errc::io_error, "write failed for " + tmp.string());
        tmps.push_back(tmp);
      }
    } catch (...) {
      for (const auto& t : tmps) std::filesystem::remove(t, ec);
      throw;
    }
    for (std::size_t i = 0; i < files_.size(); ++i) std::filesystem::rename(tmps[i], dir_ / files_[i].first);
  }

 private:
  std::filesystem::path dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

inline void write_text(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  AtomicWriter w(p.has_parent_path() ? p.parent_path() : std::filesystem::path("."));
  w.add(p.filename().string(), content);
  w.commit();
}

}  // namespace fklab::io
