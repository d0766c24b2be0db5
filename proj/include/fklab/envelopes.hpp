#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"
#include "kernel_estimate.hpp"

namespace fklab::envelopes {

// ---------------------------------------------------------------------------
// scale and volume functions

struct ScalingFunction {
  std::function<double(double)> eval;
  std::function<double(double)> inverse_eval;
  double beta_lower = 1.0;
  double beta_upper = 1.0;
  double c_lower = 1.0;
  double c_upper = 1.0;

  // serialization payload
  std::string form = "power";
  double power_beta = 1.0;
  double power_coef = 1.0;
  std::vector<std::pair<double, double>> table;

  double operator()(double r) const { return eval(r); }
  double inv(double t) const { return inverse_eval(t); }

  // coef * r^beta
  static ScalingFunction power(double beta, double coef = 1.0) {
    if (!(beta > 0.0) || !(coef > 0.0)) fail(Errc::invalid_input, "power scaling needs beta>0, coef>0");
    ScalingFunction f;
    f.eval = [beta, coef](double r) { return coef * std::pow(r, beta); };
    f.inverse_eval = [beta, coef](double t) { return std::pow(t / coef, 1.0 / beta); };
    f.beta_lower = f.beta_upper = beta;
    f.form = "power";
    f.power_beta = beta;
    f.power_coef = coef;
    return f;
  }

  // log-log linear interpolation through (r, value) points, end slopes
  // extrapolated; declared indices are the extreme slopes
  static ScalingFunction from_table(std::vector<std::pair<double, double>> pts) {
    if (pts.size() < 2) fail(Errc::invalid_input, "scaling table needs at least 2 points");
    std::sort(pts.begin(), pts.end());
    std::vector<double> lr, lv;
    for (auto [r, v] : pts) {
      if (!(r > 0.0) || !(v > 0.0)) fail(Errc::invalid_input, "scaling table entries must be positive");
      lr.push_back(std::log(r));
      lv.push_back(std::log(v));
    }
    double smin = kInf, smax = -kInf;
    for (std::size_t i = 1; i < lr.size(); ++i) {
      if (!(lr[i] > lr[i - 1]) || !(lv[i] > lv[i - 1]))
        fail(Errc::invalid_input, "scaling table must be strictly increasing");
      const double s = (lv[i] - lv[i - 1]) / (lr[i] - lr[i - 1]);
      smin = std::min(smin, s);
      smax = std::max(smax, s);
    }
    auto interp = [](const std::vector<double>& xs, const std::vector<double>& ys, double x) {
      std::size_t i = std::upper_bound(xs.begin(), xs.end(), x) - xs.begin();
      i = std::clamp<std::size_t>(i, 1, xs.size() - 1);
      const double w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
      return ys[i - 1] + w * (ys[i] - ys[i - 1]);
    };
    ScalingFunction f;
    f.eval = [=](double r) { return std::exp(interp(lr, lv, std::log(r))); };
    f.inverse_eval = [=](double t) { return std::exp(interp(lv, lr, std::log(t))); };
    f.beta_lower = smin;
    f.beta_upper = smax;
    f.form = "table";
    f.table = std::move(pts);
    return f;
  }
};

struct VolumeFunction {
  std::function<double(PointView, double)> eval;
  int dim = 1;
  double doubling_const = 2.0;
  double rvd_exponent = 1.0;
  double coef = 1.0;  // kappa in kappa*r^d; unit_ball_volume for Lebesgue

  double operator()(PointView x, double r) const { return eval(x, r); }

  static VolumeFunction lebesgue(int d) { return scaled(d, unit_ball_volume(d)); }

  // kappa * r^d, e.g. kappa=(4 pi)^{d/2} normalizes the Gaussian family
  static VolumeFunction scaled(int d, double kappa) {
    if (d < 1) fail(Errc::invalid_input, "dimension must be >= 1");
    if (!(kappa > 0.0)) fail(Errc::invalid_input, "volume constant must be positive");
    VolumeFunction v;
    v.dim = d;
    v.coef = kappa;
    v.eval = [d, kappa](PointView, double r) { return kappa * std::pow(r, d); };
    v.doubling_const = std::pow(2.0, d);
    v.rvd_exponent = d;
    return v;
  }
};

struct ScalingReport {
  double worst_c_lower = kInf;  // largest c with L(beta_lower, c) on the grid
  double worst_c_upper = 0.0;   // smallest C with U(beta_upper, C) on the grid
  bool passes_lower = true;
  bool passes_upper = true;
  bool monotone = true;
  double max_inverse_error = 0.0;
  bool passed() const { return passes_lower && passes_upper && monotone; }
};

inline ScalingReport check_scaling(const ScalingFunction& f, const std::vector<std::pair<double, double>>& grid) {
  ScalingReport rep;
  for (auto [r, R] : grid) {
    if (!(r > 0.0) || !(R > 0.0) || r > R) fail(Errc::invalid_grid, "grid pairs need 0 < r <= R");
    const double fr = f(r), fR = f(R), q = R / r;
    const double ratio = fR / fr;
    if (R > r && !(fR > fr)) rep.monotone = false;
    rep.worst_c_lower = std::min(rep.worst_c_lower, ratio / std::pow(q, f.beta_lower));
    rep.worst_c_upper = std::max(rep.worst_c_upper, ratio / std::pow(q, f.beta_upper));
    for (double s : {r, R}) {
      const double back = f.inv(f(s));
      rep.max_inverse_error = std::max(rep.max_inverse_error, std::abs(back - s) / s);
    }
  }
  const double tol = 1e-12;
  rep.passes_lower = rep.worst_c_lower >= f.c_lower * (1.0 - tol);
  rep.passes_upper = rep.worst_c_upper <= f.c_upper * (1.0 + tol);
  return rep;
}

// (VD) constant and reverse-doubling exponent observed on a grid of radii
struct VolumeReport {
  double max_doubling = 0.0;
  double min_rvd_exponent = kInf;
  bool passed = true;
};

inline VolumeReport check_volume(const VolumeFunction& v, PointView x, const std::vector<double>& radii) {
  VolumeReport rep;
  for (double r : radii) rep.max_doubling = std::max(rep.max_doubling, v(x, 2.0 * r) / v(x, r));
  for (std::size_t i = 0; i < radii.size(); ++i)
    for (std::size_t j = i + 1; j < radii.size(); ++j) {
      const double r = std::min(radii[i], radii[j]), R = std::max(radii[i], radii[j]);
      if (R <= r) continue;
      rep.min_rvd_exponent = std::min(rep.min_rvd_exponent, std::log(v(x, R) / v(x, r)) / std::log(R / r));
    }
  rep.passed = rep.max_doubling <= v.doubling_const * (1.0 + 1e-12) &&
               rep.min_rvd_exponent >= v.rvd_exponent * (1.0 - 1e-12);
  return rep;
}

// ---------------------------------------------------------------------------
// Phi(s,t) = sup_{r>0} ( s/r - t/phi(r) )

inline double phi_big(double s, double t, const ScalingFunction& phi) {
  if (!(s >= 0.0) || !(t > 0.0)) fail(Errc::invalid_input, "phi_big needs s >= 0, t > 0");
  if (s == 0.0) return 0.0;
  auto g = [&](double lr) {
    const double r = std::exp(lr);
    return s / r - t / phi(r);
  };
  constexpr int n = 200;
  const double lo = std::log(1e-8), hi = std::log(1e8), step = (hi - lo) / (n - 1);
  int best = 0;
  double gbest = -kInf;
  std::vector<double> vals(n);
  for (int i = 0; i < n; ++i) {
    vals[i] = g(lo + i * step);
    if (vals[i] > gbest) {
      gbest = vals[i];
      best = i;
    }
  }
  if (best == 0 && vals[0] > vals[1]) {
    // still climbing at the smallest radius
    if (phi.beta_lower <= 1.0) fail(Errc::non_superlinear_scaling, "supremum unbounded as r -> 0");
  }
  if (best == n - 1 || gbest <= 0.0) return std::max(0.0, gbest);

  // golden-section refinement on log r
  double a = lo + std::max(0, best - 1) * step, b = lo + std::min(n - 1, best + 1) * step;
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double gc = g(c), gd = g(d);
  for (int it = 0; it < 200 && b - a > 1e-13; ++it) {
    if (gc > gd) {
      b = d;
      d = c;
      gd = gc;
      c = b - gr * (b - a);
      gc = g(c);
    } else {
      a = c;
      c = d;
      gc = gd;
      d = a + gr * (b - a);
      gd = g(d);
    }
  }
  return std::max({0.0, gbest, gc, gd});
}

// ---------------------------------------------------------------------------
// envelope families

enum class Kind { gaussian_UE, gaussian_LE, gaussian_NLE, jump_HK_upper, jump_HK_lower, q_beta, h_psi_beta };

inline const char* kind_name(Kind k) {
  switch (k) {
    case Kind::gaussian_UE: return "gaussian_UE";
    case Kind::gaussian_LE: return "gaussian_LE";
    case Kind::gaussian_NLE: return "gaussian_NLE";
    case Kind::jump_HK_upper: return "jump_HK_upper";
    case Kind::jump_HK_lower: return "jump_HK_lower";
    case Kind::q_beta: return "q_beta";
    case Kind::h_psi_beta: return "h_psi_beta";
  }
  return "?";
}

inline Kind kind_from_name(const std::string& s) {
  for (Kind k : {Kind::gaussian_UE, Kind::gaussian_LE, Kind::gaussian_NLE, Kind::jump_HK_upper,
                 Kind::jump_HK_lower, Kind::q_beta, Kind::h_psi_beta})
    if (s == kind_name(k)) return k;
  fail(Errc::invalid_input, "unknown envelope kind '" + s + "'");
}

struct EnvelopeFamily {
  Kind kind = Kind::gaussian_UE;
  ScalingFunction phi = ScalingFunction::power(2.0);
  std::optional<ScalingFunction> psi;
  VolumeFunction volume = VolumeFunction::lebesgue(1);
  double beta = 1.0;  // tempering index; +inf allowed; 0 means 0+ for h_psi_beta
  double a0 = 1.0;
  double eta = 1.0;
  double eps_nle = 1.0;

  int dim() const { return volume.dim; }
  const ScalingFunction& jump_scale() const { return psi ? *psi : phi; }
};

// Gaussian family whose unit-constant envelope is exactly the heat kernel of
// the generator 1/2 Laplacian: phi(r)=2r^2 gives Phi(s,t)=s^2/(2t) and
// V(phi^{-1}(t)) = (2 pi t)^{d/2}.
inline EnvelopeFamily gaussian_heat_family(int d, Kind kind = Kind::gaussian_UE) {
  EnvelopeFamily f;
  f.kind = kind;
  f.phi = ScalingFunction::power(2.0, 2.0);
  f.volume = VolumeFunction::scaled(d, std::pow(4.0 * kPi, 0.5 * d));
  return f;
}

// alpha-stable jump family: phi = psi = r^alpha, Lebesgue volume
inline EnvelopeFamily stable_jump_family(double alpha, int d = 1, Kind kind = Kind::jump_HK_upper) {
  EnvelopeFamily f;
  f.kind = kind;
  f.phi = ScalingFunction::power(alpha);
  f.psi = ScalingFunction::power(alpha);
  f.volume = VolumeFunction::lebesgue(d);
  return f;
}

namespace detail {

// Phi with the non-superlinear case mapped to +inf (jump envelopes only)
inline double phi_big_or_inf(double s, double t, const ScalingFunction& phi) {
  try {
    return phi_big(s, t, phi);
  } catch (const Error& e) {
    if (e.code() == Errc::non_superlinear_scaling) return kInf;
    throw;
  }
}

inline double pow_beta(double r, double beta) {
  if (std::isinf(beta)) return r < 1.0 ? 0.0 : (r == 1.0 ? 1.0 : kInf);
  if (beta == 0.0) return 1.0;
  return std::pow(r, beta);
}

inline double log_plus(double x) { return std::log(std::max(x, 1.0)); }

// r (1 + log+(r/t))^{(beta-1)/beta}
inline double tempered_rate(double r, double t, double beta) {
  const double e = std::isinf(beta) ? 1.0 : (beta - 1.0) / beta;
  return r * std::pow(1.0 + log_plus(r / t), e);
}

inline double q_beta(const EnvelopeFamily& f, double t, double r) {
  const int d = f.dim();
  const double beta = f.beta;
  if (!(beta > 0.0)) fail(Errc::unsupported_regime, "q_beta needs beta > 0");
  auto small_time = [&] {
    const double diag = 1.0 / std::pow(f.phi.inv(t), d);
    if (r == 0.0) return diag;
    const double jump = t / (std::pow(r, d) * f.phi(r) * std::exp(pow_beta(r, beta)));
    return std::min(diag, jump);
  };
  if (beta <= 1.0) {
    if (t <= 1.0) return small_time();
    return std::pow(t, -0.5 * d) * std::exp(-std::min(pow_beta(r, beta), r * r / t));
  }
  if (t <= 1.0) {
    if (r < 1.0) return small_time();
    return t * std::exp(-std::min(tempered_rate(r, t, beta), pow_beta(r, beta)));
  }
  return std::pow(t, -0.5 * d) * std::exp(-std::min(tempered_rate(r, t, beta), r * r / t));
}

inline double h_psi_beta(const EnvelopeFamily& f, PointView x, double t, double r) {
  if (!f.psi) fail(Errc::unsupported_regime, "h_psi_beta needs psi");
  const double beta = f.beta;
  const auto& V = f.volume;
  const double v_sqrt = V(x, std::sqrt(t));
  const bool zero_plus = beta == 0.0;
  // psi_* for the 0+ case
  auto psi = [&](double s) { return zero_plus && s > 1.0 ? s * s : (*f.psi)(s); };
  auto psi_inv = [&](double tt) {
    if (!zero_plus) return f.psi->inv(tt);
    const double p1 = (*f.psi)(1.0);
    return tt <= p1 ? f.psi->inv(tt) : std::sqrt(tt);
  };
  auto p = [&]() {
    const double diag = 1.0 / V(x, psi_inv(t));
    const double tail = r > 0.0 ? t / (V(x, r) * psi(r) * std::exp(pow_beta(r, beta))) : kInf;
    return std::exp(-r * r / t) / v_sqrt + std::min(diag, tail);
  };
  if (zero_plus) return std::min(1.0 / v_sqrt, p());
  if (beta <= 1.0) {
    if (t <= 1.0) return std::min(1.0 / v_sqrt, p());
    return std::exp(-std::min(pow_beta(r, beta), r * r / t)) / v_sqrt;
  }
  if (t <= 1.0) {
    if (r <= 1.0) return std::min(1.0 / v_sqrt, p());
    const double rate = std::isinf(beta) ? tempered_rate(r, t, beta)
                                         : std::min(tempered_rate(r, t, beta), pow_beta(r, beta));
    return t / (V(x, r) * psi(r)) * std::exp(-rate);
  }
  return std::exp(-std::min(tempered_rate(r, t, beta), r * r / t)) / v_sqrt;
}

}  // namespace detail

// Envelope value at time t and distance r from x, unit leading constant.
inline double eval_envelope_r(const EnvelopeFamily& f, double t, PointView x, double r) {
  if (!(t > 0.0) || !(r >= 0.0)) fail(Errc::invalid_input, "envelope needs t > 0, r >= 0");
  switch (f.kind) {
    case Kind::gaussian_UE:
    case Kind::gaussian_LE: {
      const double v = f.volume(x, f.phi.inv(t));
      return std::exp(-phi_big(r, t, f.phi)) / v;
    }
    case Kind::gaussian_NLE: {
      const double rt = f.phi.inv(t);
      return r <= f.eps_nle * rt ? 1.0 / f.volume(x, rt) : 0.0;
    }
    case Kind::jump_HK_upper: {
      const auto& psi = f.jump_scale();
      const double diag = 1.0 / f.volume(x, f.phi.inv(t));
      if (r == 0.0) return diag;
      const double jump = t / (f.volume(x, r) * psi(r));
      const double Phi = detail::phi_big_or_inf(r, t, f.phi);
      const double gauss = std::isinf(Phi) ? 0.0 : diag * std::exp(-f.a0 * Phi);
      return std::min(diag, jump + gauss);
    }
    case Kind::jump_HK_lower: {
      const auto& psi = f.jump_scale();
      const double rt = f.phi.inv(t);
      if (r <= f.eta * rt) return 1.0 / f.volume(x, rt);
      return t / (f.volume(x, r) * psi(r));
    }
    case Kind::q_beta: return detail::q_beta(f, t, r);
    case Kind::h_psi_beta: return detail::h_psi_beta(f, x, t, r);
  }
  fail(Errc::unsupported_regime, "unknown envelope kind");
}

inline double eval_envelope(const EnvelopeFamily& f, double t, PointView x, PointView y) {
  return eval_envelope_r(f, t, x, dist(x, y));
}

// ---------------------------------------------------------------------------
// fitting the comparison relations

struct Violation {
  double t;
  Point x, y;
  double ratio;
};

struct EnvelopeVerdict {
  double C1 = 0.0, c1 = 1.0, C2 = 0.0, c2 = 1.0, k = 0.0;
  bool passed_upper = false;
  bool passed_lower = false;
  bool growth_detected = false;  // persistent exponential growth at k
  std::vector<Violation> violation_points;
};

struct FitOptions {
  std::vector<double> c_grid = logspace(0.25, 4.0, 41);  // contains 1 exactly
  double constant_cap = 8.0;   // C2 <= cap and C1 >= 1/cap
  double growth_tol = 0.02;    // tolerated relative rise of the last time slice
  double k_max = 10.0;
  double k_step = 0.0025;
  bool use_ci = true;          // subtract/add CI + bias slack
  std::optional<double> fixed_c1, fixed_c2;
};

namespace detail {

struct FitTables {
  std::vector<double> cs;
  // env[ci][j][i]
  std::vector<std::vector<std::vector<double>>> env;
};

inline FitTables fit_tables(const KernelEstimate& est, const EnvelopeFamily& fam, const std::vector<double>& cs) {
  FitTables tb;
  tb.cs = cs;
  tb.env.resize(cs.size());
  for (std::size_t a = 0; a < cs.size(); ++a) {
    tb.env[a].assign(est.n_times(), std::vector<double>(est.n_pairs()));
    for (std::size_t j = 0; j < est.n_times(); ++j)
      for (std::size_t i = 0; i < est.n_pairs(); ++i) {
        const auto& [x, y] = est.pairs[i];
        tb.env[a][j][i] = eval_envelope_r(fam, est.t_values[j], x, cs[a] * dist(x, y));
      }
  }
  return tb;
}

// order in which c values are tried: 1 first, then outward in log distance
inline std::vector<std::size_t> c_order(const std::vector<double>& cs) {
  std::vector<std::size_t> idx(cs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(std::log(cs[a])) < std::abs(std::log(cs[b]));
  });
  return idx;
}

struct SideResult {
  double C = 0.0;
  bool admissible = false;
  bool growth = false;
};

inline std::vector<std::size_t> time_order(const KernelEstimate& est) {
  std::vector<std::size_t> ord(est.n_times());
  for (std::size_t j = 0; j < ord.size(); ++j) ord[j] = j;
  std::sort(ord.begin(), ord.end(), [&](auto a, auto b) { return est.t_values[a] < est.t_values[b]; });
  return ord;
}

// Upper side at fixed (c, k). The per-slice maxima M_j of
// p_hat e^{-kt}/env drive a persistence test: growth is flagged when the
// last slice rises by more than the noise tolerance and its log-slope has
// not decayed below half of the previous slope.
inline SideResult upper_side(const KernelEstimate& est, const std::vector<std::vector<double>>& env, double k,
                             const FitOptions& o) {
  SideResult res;
  const auto ord = time_order(est);
  std::vector<double> M(ord.size(), 0.0), rel(ord.size(), 0.0);
  double C = 0.0;
  for (std::size_t q = 0; q < ord.size(); ++q) {
    const std::size_t j = ord[q];
    const double t = est.t_values[j], damp = std::exp(-k * t);
    for (std::size_t i = 0; i < est.n_pairs(); ++i) {
      const double p = est.values[j][i];
      const double sl = o.use_ci ? est.slack(j, i) : 0.0;
      const double e = env[j][i];
      if (e <= 0.0) {
        if (p - sl > 0.0) C = kInf;
        continue;
      }
      C = std::max(C, std::max(p - sl, 0.0) * damp / e);
      const double r = p * damp / e;
      if (r > M[q]) {
        M[q] = r;
        rel[q] = p > 0.0 ? sl / p : 0.0;
      }
    }
  }
  res.C = C;
  const std::size_t n = ord.size();
  if (n >= 3 && M[n - 2] > 0.0 && M[n - 3] > 0.0 && M[n - 1] > 0.0) {
    const double t1 = est.t_values[ord[n - 3]], t2 = est.t_values[ord[n - 2]], t3 = est.t_values[ord[n - 1]];
    const double inc_last = std::log(M[n - 1] / M[n - 2]);
    const double s_prev = std::log(M[n - 2] / M[n - 3]) / (t2 - t1);
    const double s_last = inc_last / (t3 - t2);
    const double tol = std::log1p(o.growth_tol + rel[n - 1] + rel[n - 2]);
    res.growth = inc_last > tol && s_last >= 0.5 * s_prev;
  }
  res.admissible = C <= o.constant_cap && !res.growth;
  return res;
}

inline SideResult lower_side(const KernelEstimate& est, const std::vector<std::vector<double>>& env, double k,
                             const FitOptions& o) {
  SideResult res;
  double C = kInf;
  for (std::size_t j = 0; j < est.n_times(); ++j) {
    const double grow = std::exp(k * est.t_values[j]);
    for (std::size_t i = 0; i < est.n_pairs(); ++i) {
      const double e = env[j][i];
      if (e <= 0.0) continue;  // indicator envelopes impose nothing here
      const double sl = o.use_ci ? est.slack(j, i) : 0.0;
      C = std::min(C, (est.values[j][i] + sl) * grow / e);
    }
  }
  res.C = std::isinf(C) ? 0.0 : C;
  res.admissible = res.C >= 1.0 / o.constant_cap;
  return res;
}

}  // namespace detail

// Fixed-constant upper check: every point obeys p - slack <= C2 e^{kt} env(t, c2 d).
inline bool check_upper(const KernelEstimate& est, const EnvelopeFamily& fam, double C2, double c2, double k,
                        bool use_ci = true) {
  for (std::size_t j = 0; j < est.n_times(); ++j)
    for (std::size_t i = 0; i < est.n_pairs(); ++i) {
      const auto& [x, y] = est.pairs[i];
      const double t = est.t_values[j];
      const double lhs = est.values[j][i] - (use_ci ? est.slack(j, i) : 0.0);
      if (lhs > C2 * std::exp(k * t) * eval_envelope_r(fam, t, x, c2 * dist(x, y))) return false;
    }
  return true;
}

inline bool check_lower(const KernelEstimate& est, const EnvelopeFamily& fam, double C1, double c1, double k,
                        bool use_ci = true) {
  for (std::size_t j = 0; j < est.n_times(); ++j)
    for (std::size_t i = 0; i < est.n_pairs(); ++i) {
      const auto& [x, y] = est.pairs[i];
      const double t = est.t_values[j];
      const double rhs = est.values[j][i] + (use_ci ? est.slack(j, i) : 0.0);
      if (rhs < C1 * std::exp(-k * t) * eval_envelope_r(fam, t, x, c1 * dist(x, y))) return false;
    }
  return true;
}

inline EnvelopeVerdict fit_envelope(const KernelEstimate& est, const EnvelopeFamily& fam, bool allow_k,
                                    const FitOptions& opt = {}) {
  std::vector<double> tset = est.t_values;
  std::sort(tset.begin(), tset.end());
  tset.erase(std::unique(tset.begin(), tset.end()), tset.end());
  if (tset.size() < 3 || est.n_pairs() < 10) fail(Errc::insufficient_data, "need >= 3 times and >= 10 pairs");
  if (est.values.size() != est.n_times()) fail(Errc::insufficient_data, "value matrix shape mismatch");
  bool any = false;
  for (const auto& row : est.values)
    for (double v : row) any = any || v > 0.0;
  if (!any) fail(Errc::degenerate_estimate, "all kernel values are zero");

  std::vector<double> cs = opt.c_grid;
  if (opt.fixed_c1) cs.push_back(*opt.fixed_c1);
  if (opt.fixed_c2) cs.push_back(*opt.fixed_c2);
  const auto tb = detail::fit_tables(est, fam, cs);
  const std::size_t n_grid = opt.c_grid.size();
  auto find_c = [&](std::optional<double> fixed, std::size_t slot) -> std::vector<std::size_t> {
    if (fixed) return {slot};
    std::vector<std::size_t> ord = detail::c_order(std::vector<double>(cs.begin(), cs.begin() + n_grid));
    return ord;
  };
  const auto up_order = find_c(opt.fixed_c2, n_grid + (opt.fixed_c1 ? 1 : 0));
  const auto lo_order = find_c(opt.fixed_c1, n_grid);

  EnvelopeVerdict v;
  auto try_upper = [&](double k, std::size_t& c_idx, detail::SideResult& out) {
    for (std::size_t a : up_order) {
      auto r = detail::upper_side(est, tb.env[a], k, opt);
      if (r.admissible) {
        c_idx = a;
        out = r;
        return true;
      }
    }
    return false;
  };
  auto try_lower = [&](double k, std::size_t& c_idx, detail::SideResult& out) {
    for (std::size_t a : lo_order) {
      auto r = detail::lower_side(est, tb.env[a], k, opt);
      if (r.admissible) {
        c_idx = a;
        out = r;
        return true;
      }
    }
    return false;
  };

  std::size_t cu = up_order.front(), cl = lo_order.front();
  detail::SideResult ru, rl;
  double k = 0.0;
  bool ok_u = try_upper(0.0, cu, ru);
  bool ok_l = try_lower(0.0, cl, rl);
  if (allow_k && !(ok_u && ok_l)) {
    // bisection on k: admissibility is monotone in k
    auto both = [&](double kk) {
      std::size_t a = 0, b = 0;
      detail::SideResult x, y;
      return try_upper(kk, a, x) && try_lower(kk, b, y);
    };
    if (both(opt.k_max)) {
      double lo = 0.0, hi = opt.k_max;
      while (hi - lo > opt.k_step) {
        const double mid = 0.5 * (lo + hi);
        (both(mid) ? hi : lo) = mid;
      }
      k = hi;
      ok_u = try_upper(k, cu, ru);
      ok_l = try_lower(k, cl, rl);
    }
  }
  if (!ok_u) ru = detail::upper_side(est, tb.env[cu], k, opt);
  if (!ok_l) rl = detail::lower_side(est, tb.env[cl], k, opt);
  v.k = k;
  v.c2 = cs[cu];
  v.c1 = cs[cl];
  v.C2 = ru.C;
  v.C1 = rl.C;
  v.passed_upper = ok_u;
  v.passed_lower = ok_l;
  v.growth_detected = ru.growth;

  // irreparable points at the reported constants
  const auto ord = detail::time_order(est);
  const std::size_t last = ord.back();
  for (std::size_t j = 0; j < est.n_times(); ++j)
    for (std::size_t i = 0; i < est.n_pairs(); ++i) {
      const auto& [x, y] = est.pairs[i];
      const double t = est.t_values[j];
      const double sl = opt.use_ci ? est.slack(j, i) : 0.0;
      const double eu = tb.env[cu][j][i], el = tb.env[cl][j][i];
      const double up = eu > 0.0 ? std::max(est.values[j][i] - sl, 0.0) * std::exp(-k * t) / eu : kInf;
      const double lo = el > 0.0 ? (est.values[j][i] + sl) * std::exp(k * t) / el : kInf;
      const bool bad_up = !ok_u && (up > opt.constant_cap || (ru.growth && j == last && up > 0.0 &&
                                                              up >= ru.C / (1.0 + opt.growth_tol)));
      const bool bad_lo = !ok_l && lo < 1.0 / opt.constant_cap;
      if (bad_up) v.violation_points.push_back({t, x, y, up});
      if (bad_lo) v.violation_points.push_back({t, x, y, lo});
    }
  return v;
}

}  // namespace fklab::envelopes
