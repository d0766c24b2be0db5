#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/quadrature/ooura_fourier_integrals.hpp>
#include <boost/math/special_functions/bessel.hpp>

#include "core.hpp"
#include "quadrature.hpp"
#include "rng.hpp"

namespace fklab::processes {

enum class Kind { brownian, brownian_killed_alpha, alpha_stable_1d };

inline const char* kind_name(Kind k) {
  switch (k) {
    case Kind::brownian: return "brownian";
    case Kind::brownian_killed_alpha: return "brownian_killed_alpha";
    case Kind::alpha_stable_1d: return "alpha_stable_1d";
  }
  return "?";
}

inline Kind kind_from_name(const std::string& s) {
  for (Kind k : {Kind::brownian, Kind::brownian_killed_alpha, Kind::alpha_stable_1d})
    if (s == kind_name(k)) return k;
  fail(Errc::invalid_input, "unknown process kind '" + s + "'");
}

struct ProcessSpec {
  Kind kind = Kind::brownian;
  int dim = 1;
  double alpha_stable_index = 1.0;
  double kill_rate = 0.0;
  double jump_cutoff = 1e-3;

  bool is_stable() const { return kind == Kind::alpha_stable_1d; }
  bool is_brownian() const { return !is_stable(); }

  void validate() const {
    if (dim < 1) fail(Errc::invalid_input, "dim must be >= 1");
    if (!(kill_rate >= 0.0)) fail(Errc::invalid_input, "kill_rate must be >= 0");
    if (is_stable()) {
      if (dim != 1) fail(Errc::unsupported_dim, "alpha-stable simulation is 1-d only");
      if (!(alpha_stable_index > 0.0 && alpha_stable_index < 2.0))
        fail(Errc::invalid_input, "stable index must lie in (0,2)");
      if (!(jump_cutoff > 0.0)) fail(Errc::invalid_input, "jump_cutoff must be > 0");
    }
  }

  // transient for the 0-order resolvent (killing makes everything transient)
  bool transient() const {
    if (kill_rate > 0.0) return true;
    if (is_stable()) return alpha_stable_index < dim;
    return dim >= 3;
  }
};

inline ProcessSpec brownian(int d, double kill = 0.0) {
  ProcessSpec s;
  s.kind = kill > 0.0 ? Kind::brownian_killed_alpha : Kind::brownian;
  s.dim = d;
  s.kill_rate = kill;
  return s;
}

inline ProcessSpec stable(double alpha, double cutoff = 1e-3, double kill = 0.0) {
  ProcessSpec s;
  s.kind = Kind::alpha_stable_1d;
  s.dim = 1;
  s.alpha_stable_index = alpha;
  s.jump_cutoff = cutoff;
  s.kill_rate = kill;
  return s;
}

// Levy density C_alpha |z|^{-1-alpha} of the process with exponent |xi|^alpha
inline double levy_constant(double alpha) {
  return std::tgamma(1.0 + alpha) * std::sin(kPi * alpha / 2.0) / kPi;
}

inline double levy_density(double alpha, double z) {
  return levy_constant(alpha) * std::pow(std::abs(z), -1.0 - alpha);
}

// intensity of jumps with |z| >= eps
inline double large_jump_rate(double alpha, double eps) {
  return 2.0 * levy_constant(alpha) * std::pow(eps, -alpha) / alpha;
}

// variance per unit time of jumps with |z| < eps
inline double small_jump_variance(double alpha, double eps) {
  return 2.0 * levy_constant(alpha) * std::pow(eps, 2.0 - alpha) / (2.0 - alpha);
}

// expected number of jumps per unit time with |z| in [a,b)
inline double jump_count_rate(double alpha, double a, double b) {
  const double ta = a > 0.0 ? std::pow(a, -alpha) : kInf;
  const double tb = std::isinf(b) ? 0.0 : std::pow(b, -alpha);
  return 2.0 * levy_constant(alpha) * (ta - tb) / alpha;
}

// Chambers-Mallows-Stuck, symmetric, characteristic function exp(-|xi|^alpha)
inline double sample_stable_unit(double alpha, Philox& rng) {
  const double V = kPi * (rng.uniform() - 0.5);
  const double W = rng.exponential(1.0);
  if (alpha == 1.0) return std::tan(V);
  const double a = std::sin(alpha * V) / std::pow(std::cos(V), 1.0 / alpha);
  const double b = std::pow(std::cos((1.0 - alpha) * V) / W, (1.0 - alpha) / alpha);
  return a * b;
}

// ---------------------------------------------------------------------------
// path carrier

struct JumpEvent {
  double time;
  Point from, to;
};

struct PathSample {
  int dim = 1;
  std::vector<double> times;
  std::vector<double> positions;  // flattened, dim entries per time
  std::vector<JumpEvent> jumps;
  std::vector<unsigned char> is_jump;  // 1 where position i is a post-jump point
  std::optional<double> killed_at;
  std::uint64_t rng_stream_id = 0;
  bool brownian = true;

  std::size_t size() const { return times.size(); }
  PointView pos(std::size_t i) const { return {positions.data() + i * dim, static_cast<std::size_t>(dim)}; }
  double horizon() const { return times.empty() ? 0.0 : times.back(); }
  // last time at which functionals may be evaluated
  double end_time() const { return killed_at ? std::min(*killed_at, horizon()) : horizon(); }
};

// Options controlling a single walk.
struct WalkPlan {
  double dt = 1e-3;
  double horizon = 1.0;
  std::vector<double> checkpoints;  // sorted, reported exactly
  bool record_jumps = true;         // stable only
};

// Drives one trajectory and reports it to an observer:
//   obs.segment(t0, x0, t1, x1)  continuous piece (small-jump noise included)
//   obs.jump(t, from, to)        recorded jump of size >= cutoff
//   obs.checkpoint(k, t, x)      at checkpoints[k]
//   obs.max_step(t, x)           optional adaptive step limit
//   obs.stop()                   observer may end the walk early
// Returns the killing time if the clock rang before the horizon.
template <class Obs>
std::optional<double> walk(const ProcessSpec& spec, PointView x0, const WalkPlan& plan, Philox& rng, Obs& obs) {
  const int d = spec.dim;
  std::vector<double> x(x0.begin(), x0.end()), y(d), mid(d);
  double t = 0.0;
  const double zeta = spec.kill_rate > 0.0 ? rng.exponential(spec.kill_rate) : kInf;
  const double end = std::min(plan.horizon, zeta);
  if (!std::isfinite(end)) fail(Errc::invalid_input, "infinite horizon needs killing");
  std::size_t ck = 0;
  while (ck < plan.checkpoints.size() && plan.checkpoints[ck] <= 0.0) {
    obs.checkpoint(ck, 0.0, PointView(x));
    ++ck;
  }

  const bool stable = spec.is_stable();
  const double alpha = spec.alpha_stable_index;
  const bool split = stable && plan.record_jumps;
  const double lam = split ? large_jump_rate(alpha, spec.jump_cutoff) : 0.0;
  const double sig = split ? std::sqrt(small_jump_variance(alpha, spec.jump_cutoff)) : 0.0;
  double next_jump = split ? rng.exponential(lam) : kInf;

  while (t < end) {
    double h = plan.dt;
    if constexpr (requires { obs.max_step(t, PointView(x)); }) h = std::min(h, obs.max_step(t, PointView(x)));
    double t1 = std::min(t + h, end);
    if (ck < plan.checkpoints.size()) t1 = std::min(t1, plan.checkpoints[ck]);
    if (t1 - t < 1e-14 * std::max(1.0, t)) t1 = std::min(end, t + 1e-14 * std::max(1.0, t));
    if (!stable) {
      const double s = std::sqrt(t1 - t);
      for (int i = 0; i < d; ++i) y[i] = x[i] + s * rng.normal();
      obs.segment(t, PointView(x), t1, PointView(y));
    } else if (!split) {
      y[0] = x[0] + std::pow(t1 - t, 1.0 / alpha) * sample_stable_unit(alpha, rng);
      obs.segment(t, PointView(x), t1, PointView(y));
    } else {
      double tc = t;
      mid[0] = x[0];
      while (next_jump <= t1) {
        y[0] = mid[0] + sig * std::sqrt(next_jump - tc) * rng.normal();
        obs.segment(tc, PointView(mid), next_jump, PointView(y));
        const double size = spec.jump_cutoff * std::pow(rng.uniform(), -1.0 / alpha);
        const double to = y[0] + (rng.uniform() < 0.5 ? -size : size);
        const double from = y[0];
        obs.jump(next_jump, PointView(&from, 1), PointView(&to, 1));
        mid[0] = to;
        tc = next_jump;
        next_jump += rng.exponential(lam);
      }
      y[0] = mid[0] + sig * std::sqrt(t1 - tc) * rng.normal();
      obs.segment(tc, PointView(mid), t1, PointView(y));
    }
    std::swap(x, y);
    t = t1;
    while (ck < plan.checkpoints.size() && plan.checkpoints[ck] <= t + 1e-12 && plan.checkpoints[ck] <= end) {
      obs.checkpoint(ck, t, PointView(x));
      ++ck;
    }
    if constexpr (requires { obs.stop(); }) {
      if (obs.stop()) return std::nullopt;
    }
  }
  if (zeta < plan.horizon) return zeta;
  return std::nullopt;
}

namespace detail {

struct Recorder {
  PathSample* p;
  int d;
  void push(double t, PointView x, bool jump) {
    p->times.push_back(t);
    p->positions.insert(p->positions.end(), x.begin(), x.end());
    p->is_jump.push_back(jump ? 1 : 0);
  }
  void segment(double, PointView, double t1, PointView x1) { push(t1, x1, false); }
  void jump(double t, PointView from, PointView to) {
    p->jumps.push_back({t, Point(from.begin(), from.end()), Point(to.begin(), to.end())});
    push(t, to, true);
  }
  void checkpoint(std::size_t, double, PointView) {}
};

}  // namespace detail

inline PathSample sample_path(const ProcessSpec& spec, PointView x0, double horizon, double dt, std::uint64_t seed,
                              std::uint64_t stream = 0) {
  if (!(dt > 0.0)) fail(Errc::invalid_step, "dt must be > 0");
  spec.validate();
  if (static_cast<int>(x0.size()) != spec.dim) fail(Errc::invalid_input, "start point dimension mismatch");
  if (std::isfinite(horizon) && dt > horizon) fail(Errc::invalid_step, "dt exceeds horizon");
  PathSample p;
  p.dim = spec.dim;
  p.rng_stream_id = stream;
  p.brownian = spec.is_brownian();
  Philox rng(seed, stream);
  detail::Recorder rec{&p, spec.dim};
  rec.push(0.0, x0, false);
  WalkPlan plan;
  plan.dt = dt;
  plan.horizon = horizon;
  plan.record_jumps = true;
  p.killed_at = walk(spec, x0, plan, rng, rec);
  return p;
}

// ---------------------------------------------------------------------------
// closed-form and quadrature kernels

namespace detail {

// unit-time symmetric stable density by Fourier inversion:
// p_1(z) = (1/pi) int_0^inf cos(xi z) exp(-xi^alpha) dxi
inline double stable_unit_density(double alpha, double z) {
  z = std::abs(z);
  if (alpha == 1.0) return 1.0 / (kPi * (1.0 + z * z));
  auto f = [alpha](double xi) { return std::exp(-std::pow(xi, alpha)); };
  if (z < 1e-12) return std::tgamma(1.0 + 1.0 / alpha) / kPi;
  if (z < 4.0) {
    // smooth enough for Gauss-Kronrod once the Gaussian-like tail is cut
    const double cut = std::pow(60.0, 1.0 / alpha);
    auto g = [&](double xi) { return std::cos(xi * z) * f(xi); };
    const std::size_t n = static_cast<std::size_t>(std::ceil(cut * z / kPi)) + 1;
    double s = 0.0, a = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
      const double b = i == n ? cut : std::min(cut, i * kPi / z);
      if (b > a) s += quad::gk(g, a, b, 1e-12, 12).value;
      a = b;
    }
    return s / kPi;
  }
  // far field: Ooura double-exponential Fourier quadrature
  static thread_local std::unique_ptr<boost::math::quadrature::ooura_fourier_cos<double>> oc;
  if (!oc) oc = std::make_unique<boost::math::quadrature::ooura_fourier_cos<double>>(1e-12, 8);
  const auto [v, err] = oc->integrate(f, z);
  (void)err;
  return v / kPi;
}

}  // namespace detail

inline double gaussian_density(int d, double t, double r) {
  return std::pow(2.0 * kPi * t, -0.5 * d) * std::exp(-r * r / (2.0 * t));
}

inline double transition_density_r(const ProcessSpec& spec, double t, double r) {
  if (!(t > 0.0)) fail(Errc::invalid_input, "t must be > 0");
  const double kill = std::exp(-spec.kill_rate * t);
  if (spec.is_brownian()) return kill * gaussian_density(spec.dim, t, r);
  if (spec.dim != 1) fail(Errc::no_closed_form, "stable density only in d=1");
  const double a = spec.alpha_stable_index;
  if (a == 1.0) return kill * t / (kPi * (t * t + r * r));
  const double s = std::pow(t, 1.0 / a);
  return kill * detail::stable_unit_density(a, r / s) / s;
}

inline double transition_density(const ProcessSpec& spec, double t, PointView x, PointView y) {
  return transition_density_r(spec, t, dist(x, y));
}

// R_alpha(x,y) = int_0^inf e^{-alpha t} p_t(x,y) dt, as a function of r=|x-y|.
inline double resolvent_kernel_r(const ProcessSpec& spec, double alpha, double r) {
  if (!(alpha >= 0.0) || !(r >= 0.0)) fail(Errc::invalid_input, "need alpha >= 0 and r >= 0");
  const double a = alpha + spec.kill_rate;
  const int d = spec.dim;
  if (spec.is_brownian()) {
    if (d == 1) {
      if (a == 0.0) return kInf;
      const double k = std::sqrt(2.0 * a);
      return std::exp(-k * r) / k;
    }
    if (r == 0.0) return kInf;
    if (d == 2) {
      if (a == 0.0) return kInf;
      return boost::math::cyl_bessel_k(0, std::sqrt(2.0 * a) * r) / kPi;
    }
    if (d == 3) return std::exp(-std::sqrt(2.0 * a) * r) / (2.0 * kPi * r);
    if (a == 0.0) return std::tgamma(0.5 * d - 1.0) / (2.0 * std::pow(kPi, 0.5 * d) * std::pow(r, d - 2));
    // (1/pi)^{d/2} ... Bessel form: (2a)^{nu/2} ... use time quadrature
    auto f = [&](double t) { return std::exp(-a * t) * gaussian_density(d, t, r); };
    return quad::integrate(f, 0.0, kInf, 1e-8, 1e-300, 1e4);
  }
  const double s = spec.alpha_stable_index;
  if (a == 0.0) {
    if (s >= 1.0) return kInf;
    if (r == 0.0) return kInf;
    return std::tgamma(0.5 * (1.0 - s)) / (std::pow(2.0, s) * std::sqrt(kPi) * std::tgamma(0.5 * s)) *
           std::pow(r, s - 1.0);
  }
  if (r == 0.0 && s <= 1.0) return kInf;
  ProcessSpec base = spec;
  base.kill_rate = 0.0;
  auto f = [&](double t) { return t > 0.0 ? std::exp(-a * t) * transition_density_r(base, t, r) : 0.0; };
  // split at the crossover time t ~ r^s where the density peaks
  const double tc = r > 0.0 ? std::pow(r, s) : 1.0 / a;
  return quad::integrate(f, 0.0, tc, 1e-7, 1e-300, 1e4) + quad::integrate(f, tc, kInf, 1e-7, 1e-300, 1e4);
}

inline double resolvent_kernel(const ProcessSpec& spec, double alpha, PointView x, PointView y) {
  return resolvent_kernel_r(spec, alpha, dist(x, y));
}

}  // namespace fklab::processes
