#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include <boost/math/interpolators/makima.hpp>

#include "core.hpp"
#include "functionals.hpp"
#include "kernel_estimate.hpp"
#include "measures.hpp"
#include "parallel.hpp"
#include "potential.hpp"
#include "processes.hpp"
#include "quadrature.hpp"
#include "rng.hpp"
#include "stats.hpp"

// Monte Carlo estimators for the Feynman-Kac semigroup, kernel, gauge and resolvent
namespace fklab::fk {

using functionals::PotentialU;
using processes::ProcessSpec;

// A process together with its perturbation (u, mu, F).
struct Setup {
  ProcessSpec spec;
  std::optional<PotentialU> u;
  MeasureSpec mu = MeasureSpec::zero();
  std::optional<JumpPerturbation> F;

  bool has_u() const { return u && !u->is_zero(); }
  bool has_F() const { return F && !F->is_zero(); }
  bool unperturbed() const { return !has_u() && mu.is_zero() && !has_F(); }
  // weights never exceed one
  bool subprobability() const {
    return !has_u() && !mu.has_pos() && (!has_F() || !F->F_pos);
  }
};

struct McOptions {
  long long n_paths = 100000;
  std::uint64_t seed = 1;
  double dt = 2e-3;
  unsigned threads = 0;
  bool adaptive = true;  // larger Brownian steps far from where anything accumulates
};

namespace detail {

inline double gauss_kernel(int d, double bw, double r2) {
  return std::exp(-0.5 * r2 / (bw * bw)) / std::pow(std::sqrt(2.0 * kPi) * bw, d);
}

// Laplacian of the Gaussian kernel
inline double gauss_kernel_lap(int d, double bw, double r2) {
  const double b2 = bw * bw;
  return gauss_kernel(d, bw, r2) * (r2 / (b2 * b2) - d / b2);
}

inline double sqdist(PointView a, PointView b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// Shared per-call state: prepared potential and stepping policy.
struct Engine {
  const Setup* S = nullptr;
  functionals::PreparedU pu;
  bool use_u = false, ell = false, use_mu = false, use_F = false;
  bool exact = false;     // nothing accumulates: step straight to checkpoints
  bool adaptive = false;  // Brownian far-field stepping
  double dt = 2e-3;
  double region = 0.0;    // accumulation confined to |x| <= region
  std::vector<Point> probes;
  double probe_margin = 0.0;

  Engine(const Setup& s, const McOptions& o) : S(&s), dt(o.dt) {
    s.spec.validate();
    if (!(o.dt > 0.0)) fail(Errc::invalid_step, "dt must be > 0");
    use_u = s.has_u();
    ell = use_u && s.u->kind == PotentialU::Kind::ell_beta;
    if (use_u) pu = functionals::prepare(*s.u, s.spec);
    use_mu = !s.mu.is_zero();
    use_F = s.has_F();
    if (use_F && !s.spec.is_stable()) use_F = false;  // continuous paths have no jumps
    exact = !use_u && !use_mu && !use_F;
    adaptive = o.adaptive && !exact && s.spec.is_brownian() && !use_u;
    if (use_mu) region = s.mu.support_radius;
  }

  double step_at(PointView x) const {
    if (!adaptive) return kInf;
    double d = norm(x) - region;
    for (const auto& y : probes) d = std::min(d, std::sqrt(sqdist(x, y)) - probe_margin);
    if (d <= 0.0) return dt;
    return std::max(dt, d * d / 25.0);
  }

  processes::WalkPlan plan(double horizon, std::vector<double> checkpoints) const {
    processes::WalkPlan p;
    p.horizon = horizon;
    p.checkpoints = std::move(checkpoints);
    p.dt = (exact || adaptive) ? horizon : dt;
    if (adaptive && !probes.empty()) p.dt = horizon;
    p.record_jumps = S->spec.is_stable() && use_F;
    return p;
  }
};

// time integral of e^{-alpha s} e^{A_s} K_bw(X_s - y) per probe y
struct OccupationAcc {
  const std::vector<Point>* probes = nullptr;
  double alpha = 0.0, bw = 0.1;
  int d = 1;
  std::vector<double> value;
  double f(double t, double la, PointView x, std::size_t k) const {
    if (!std::isfinite(la)) return 0.0;
    return std::exp(la - alpha * t) * gauss_kernel(d, bw, sqdist(x, (*probes)[k]));
  }
  void add(double t0, PointView x0, double la0, double t1, PointView x1, double la1) {
    const double h = t1 - t0;
    if (h <= 0.0) return;
    for (std::size_t k = 0; k < probes->size(); ++k) value[k] += 0.5 * h * (f(t0, la0, x0, k) + f(t1, la1, x1, k));
  }
};

struct PathObs {
  const Engine* E;
  functionals::CafAcc caf;
  functionals::JumpAcc jmp;
  functionals::ZeroEnergyAcc ze;
  functionals::HilbertAcc hil;
  int d;
  double* xs = nullptr;  // checkpoint positions, d per checkpoint
  double* la = nullptr;  // checkpoint log-weights
  OccupationAcc* occ = nullptr;
  double* occ_snap = nullptr;  // occupation values per checkpoint

  explicit PathObs(const Engine* e)
      : E(e),
        caf{&e->S->mu},
        jmp{e->S->F ? &*e->S->F : nullptr},
        ze{&e->pu, e->use_u ? &e->S->u->nu1 : nullptr, e->use_u ? &e->S->u->nu2 : nullptr,
           e->use_u ? e->S->u->alpha : 0.0},
        hil{e->ell ? e->S->u->beta : 0.0, e->ell ? e->S->u->eps : 1.0},
        d(e->S->spec.dim) {}

  double logA() const {
    double a = 0.0;
    if (E->use_mu) a += caf.pos - caf.neg;
    if (E->use_F) a += jmp.pos - jmp.neg;
    if (E->use_u) a += E->ell ? hil.value : ze.value;
    return a;
  }
  void segment(double t0, PointView x0, double t1, PointView x1) {
    const double la0 = occ ? logA() : 0.0;
    if (E->use_mu) caf.segment(t0, x0, t1, x1);
    if (E->use_u) {
      if (E->ell)
        hil.segment(t0, x0, t1, x1);
      else
        ze.segment(t0, x0, t1, x1);
    }
    if (occ) occ->add(t0, x0, la0, t1, x1, logA());
  }
  void jump(double, PointView from, PointView to) {
    if (E->use_F) jmp.jump(from, to);
  }
  void checkpoint(std::size_t k, double, PointView x) {
    if (xs)
      for (int i = 0; i < d; ++i) xs[k * d + i] = x[i];
    if (la) la[k] = logA();
    if (occ && occ_snap)
      for (std::size_t j = 0; j < occ->value.size(); ++j) occ_snap[k * occ->value.size() + j] = occ->value[j];
  }
  double max_step(double, PointView x) const { return E->step_at(x); }
};

// Simulates n paths from x0 and stores checkpoint positions and log-weights
// (log-weight -inf once the path is killed).
struct Batch {
  std::size_t n = 0, nt = 0;
  int d = 1;
  std::vector<double> xs, la;
  PointView x(std::size_t p, std::size_t j) const { return {xs.data() + (p * nt + j) * d, static_cast<std::size_t>(d)}; }
  double lw(std::size_t p, std::size_t j) const { return la[p * nt + j]; }
};

inline Batch simulate(const Engine& E, PointView x0, const std::vector<double>& ts, long long n, std::uint64_t seed,
                      unsigned threads) {
  Batch b;
  b.n = static_cast<std::size_t>(n);
  b.nt = ts.size();
  b.d = E.S->spec.dim;
  b.xs.assign(b.n * b.nt * b.d, 0.0);
  b.la.assign(b.n * b.nt, -kInf);
  const auto plan = E.plan(ts.back(), ts);
  const std::size_t nblocks = (b.n + kPathBlock - 1) / kPathBlock;
  parallel_for(
      nblocks,
      [&](std::size_t blk) {
        const std::size_t lo = blk * kPathBlock, hi = std::min(b.n, lo + kPathBlock);
        for (std::size_t p = lo; p < hi; ++p) {
          Philox rng(seed, p);
          PathObs obs(&E);
          obs.xs = b.xs.data() + p * b.nt * b.d;
          obs.la = b.la.data() + p * b.nt;
          processes::walk(E.S->spec, x0, plan, rng, obs);
        }
      },
      threads);
  return b;
}

inline void check_times(const std::vector<double>& ts) {
  if (ts.empty()) fail(Errc::invalid_input, "need at least one time");
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (!(ts[i] > 0.0) || !std::isfinite(ts[i])) fail(Errc::invalid_input, "times must be positive and finite");
    if (i > 0 && !(ts[i] > ts[i - 1])) fail(Errc::invalid_input, "times must be strictly increasing");
  }
}

// 1.06 min(sd, IQR/1.349) n^{-1/5}, smallest over the marginals
inline double plugin_bandwidth(const Batch& b, std::size_t j) {
  double best = kInf;
  for (int k = 0; k < b.d; ++k) {
    std::vector<double> v;
    v.reserve(b.n);
    Moments m;
    for (std::size_t p = 0; p < b.n; ++p) {
      if (!std::isfinite(b.lw(p, j))) continue;
      const double x = b.x(p, j)[k];
      v.push_back(x);
      m.add(x);
    }
    if (v.size() < 2) continue;
    const double iqr = quantile(v, 0.75) - quantile(v, 0.25);
    double s = m.sd();
    if (iqr > 0.0) s = std::min(s, iqr / 1.349);
    best = std::min(best, 1.06 * s * std::pow(static_cast<double>(v.size()), -0.2));
  }
  return best;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// semigroup

struct SemigroupEstimate {
  double value = 0.0, ci = 0.0;
  double mean_A = 0.0, ci_A = 0.0;  // E_x[A_t] on surviving paths (killed paths count 0)
  long long n_paths = 0;
};

inline SemigroupEstimate fk_semigroup(const Setup& S, const std::function<double(PointView)>& f, double t,
                                      PointView x, const McOptions& o) {
  detail::check_times({t});
  if (static_cast<int>(x.size()) != S.spec.dim) fail(Errc::invalid_input, "start point dimension mismatch");
  detail::Engine E(S, o);
  const auto b = detail::simulate(E, x, {t}, o.n_paths, mix_seed(o.seed, 0), o.threads);
  struct Acc {
    Moments w, a;
  };
  const auto acc = reduce_paths<Acc>(
      b.n, [] { return Acc{}; },
      [&](Acc& A, std::size_t p) {
        const double la = b.lw(p, 0);
        const bool alive = std::isfinite(la);
        A.w.add(alive ? std::exp(la) * f(b.x(p, 0)) : 0.0);
        A.a.add(alive ? la : 0.0);
      },
      [](Acc& l, const Acc& r) {
        l.w.merge(r.w);
        l.a.merge(r.a);
      },
      o.threads);
  SemigroupEstimate out;
  out.value = acc.w.mean;
  out.ci = acc.w.ci95();
  out.mean_A = acc.a.mean;
  out.ci_A = acc.a.ci95();
  out.n_paths = o.n_paths;
  return out;
}

// ---------------------------------------------------------------------------
// kernel

struct KernelOptions : McOptions {
  double bandwidth = 0.0;  // 0: plug-in per time
  bool symmetrize = true;
  double pilot_factor = 2.0;  // pilot bandwidth for the curvature (bias) estimate
};

inline KernelEstimate fk_kernel(const Setup& S, const std::vector<double>& t_values,
                                const std::vector<std::pair<Point, Point>>& pairs, const KernelOptions& o) {
  detail::check_times(t_values);
  if (pairs.empty()) fail(Errc::invalid_input, "need at least one pair");
  if (o.bandwidth < 0.0) fail(Errc::bandwidth_too_small, "bandwidth must be > 0");
  const int d = S.spec.dim;
  for (const auto& [x, y] : pairs)
    if (static_cast<int>(x.size()) != d || static_cast<int>(y.size()) != d)
      fail(Errc::invalid_input, "pair dimension mismatch");
  detail::Engine E(S, o);

  // starting points and the targets seen from each
  std::vector<Point> starts;
  auto start_index = [&](const Point& p) {
    for (std::size_t i = 0; i < starts.size(); ++i)
      if (starts[i] == p) return i;
    starts.push_back(p);
    return starts.size() - 1;
  };
  struct Task {
    std::size_t pair;
    bool reversed;
  };
  std::vector<std::vector<Task>> tasks;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::size_t sx = start_index(pairs[i].first);
    if (tasks.size() < starts.size()) tasks.resize(starts.size());
    tasks[sx].push_back({i, false});
    if (o.symmetrize) {
      const std::size_t sy = start_index(pairs[i].second);
      if (tasks.size() < starts.size()) tasks.resize(starts.size());
      tasks[sy].push_back({i, true});
    }
  }

  const std::size_t nt = t_values.size(), np = pairs.size();
  KernelEstimate K = KernelEstimate::shaped(t_values, pairs);
  K.n_paths = o.n_paths;
  K.bandwidths.assign(nt, o.bandwidth);
  // per direction: value, ci, bias
  std::vector<std::vector<double>> v[2], c[2], bi[2];
  for (int r = 0; r < 2; ++r) {
    v[r].assign(nt, std::vector<double>(np, 0.0));
    c[r] = v[r];
    bi[r] = v[r];
  }

  for (std::size_t s = 0; s < starts.size(); ++s) {
    const auto b = detail::simulate(E, starts[s], t_values, o.n_paths, mix_seed(o.seed, s + 1), o.threads);
    if (s == 0 && o.bandwidth == 0.0)
      for (std::size_t j = 0; j < nt; ++j) K.bandwidths[j] = detail::plugin_bandwidth(b, j);
    for (std::size_t j = 0; j < nt; ++j)
      if (!(K.bandwidths[j] > 0.0) || !std::isfinite(K.bandwidths[j]))
        fail(Errc::bandwidth_too_small, "degenerate sample spread for the plug-in bandwidth");
    const auto& tk = tasks[s];
    const std::size_t m = tk.size();
    using Acc = std::vector<Moments>;
    const auto acc = reduce_paths<Acc>(
        b.n, [&] { return Acc(2 * m * nt); },
        [&](Acc& A, std::size_t p) {
          for (std::size_t j = 0; j < nt; ++j) {
            const double la = b.lw(p, j);
            const double w = std::isfinite(la) ? std::exp(la) : 0.0;
            const double bw = K.bandwidths[j], bp = o.pilot_factor * bw;
            for (std::size_t q = 0; q < m; ++q) {
              const auto& pr = pairs[tk[q].pair];
              const Point& y = tk[q].reversed ? pr.first : pr.second;
              const double r2 = w > 0.0 ? detail::sqdist(b.x(p, j), y) : 0.0;
              A[(j * m + q) * 2].add(w > 0.0 ? w * detail::gauss_kernel(d, bw, r2) : 0.0);
              A[(j * m + q) * 2 + 1].add(w > 0.0 ? w * detail::gauss_kernel_lap(d, bp, r2) : 0.0);
            }
          }
        },
        [](Acc& l, const Acc& r) {
          for (std::size_t i = 0; i < l.size(); ++i) l[i].merge(r[i]);
        },
        o.threads);
    for (std::size_t j = 0; j < nt; ++j)
      for (std::size_t q = 0; q < m; ++q) {
        const int r = tk[q].reversed ? 1 : 0;
        const std::size_t i = tk[q].pair;
        const auto& mk = acc[(j * m + q) * 2];
        const auto& ml = acc[(j * m + q) * 2 + 1];
        const double bw = K.bandwidths[j];
        v[r][j][i] = mk.mean;
        c[r][j][i] = mk.ci95();
        bi[r][j][i] = 0.5 * bw * bw * (std::abs(ml.mean) + ml.ci95());
      }
  }

  for (std::size_t j = 0; j < nt; ++j) {
    bool all_blown = true;
    for (std::size_t i = 0; i < np; ++i) {
      if (o.symmetrize) {
        K.values[j][i] = 0.5 * (v[0][j][i] + v[1][j][i]);
        K.ci_half_width[j][i] = 0.5 * std::hypot(c[0][j][i], c[1][j][i]);
        K.bias[j][i] = 0.5 * (bi[0][j][i] + bi[1][j][i]);
      } else {
        K.values[j][i] = v[0][j][i];
        K.ci_half_width[j][i] = c[0][j][i];
        K.bias[j][i] = bi[0][j][i];
      }
      K.bias_bound = std::max(K.bias_bound, K.bias[j][i]);
      if (K.ci_half_width[j][i] < K.values[j][i]) all_blown = false;
    }
    if (all_blown) fail(Errc::bandwidth_too_small, "confidence intervals exceed the estimates at every pair");
  }
  K.bandwidth = K.bandwidths.front();
  return K;
}

// ---------------------------------------------------------------------------
// gauge h(x) = E_x[e_A(zeta)] for transient d=3 Brownian motion

struct GaugeOptions : McOptions {
  double truncation_radius = 0.0;  // 0: 4 support radii
  double hill_fraction = 0.01;
  double theta_bounded = 1.1, theta_divergent = 0.9;
};

struct GaugeEstimate {
  std::vector<Point> points;
  std::vector<double> h_hat, ci;
  std::vector<double> step_bias;  // discretization bias estimate from a paired coarse accumulation
  std::vector<double> theta;      // tail rate of the log-weights (finite mean iff > 1)
  double truncation_radius = 0.0;
  double tail_bias_bound = 0.0;
  double theta_min = kInf;
  Tri bounded = Tri::inconclusive;
  long long n_paths = 0;
  double support_radius = 0.0;
};

inline GaugeEstimate gauge(const Setup& S, const std::vector<Point>& points, const GaugeOptions& o) {
  S.spec.validate();
  if (!S.spec.transient()) fail(Errc::recurrent_process, "the gauge needs a transient process");
  if (!(S.spec.is_brownian() && S.spec.dim == 3)) fail(Errc::unsupported_dim, "gauge is implemented for d=3 Brownian motion");
  if (S.has_u() || S.has_F()) fail(Errc::unsupported_regime, "gauge supports u=0 and F=0");
  if (!S.mu.is_zero() && !S.mu.radial()) fail(Errc::unsupported_regime, "gauge needs a radial measure");
  if (!(o.dt > 0.0)) fail(Errc::invalid_step, "dt must be > 0");
  GaugeEstimate G;
  G.points = points;
  G.n_paths = o.n_paths;
  const double a = S.mu.support_radius;
  G.support_radius = a;
  G.truncation_radius = o.truncation_radius > 0.0 ? o.truncation_radius : 4.0 * a;
  if (G.truncation_radius < 4.0 * a * (1.0 - 1e-12)) fail(Errc::invalid_input, "truncation radius must be >= 4 support radii");
  // returns from the truncation sphere are drawn from the exact hitting law,
  // so no tail bias remains
  G.tail_bias_bound = 0.0;
  const std::size_t n = static_cast<std::size_t>(o.n_paths);
  const double Rc = G.truncation_radius, kill = S.spec.kill_rate, kk = std::sqrt(2.0 * kill);
  const MeasureSpec& mu = S.mu;
  auto dens = [&](const double* x) {
    const double r = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
    return r > a ? 0.0 : mu.radial_value(r, +1) - mu.radial_value(r, -1);
  };

  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != 3) fail(Errc::invalid_input, "gauge points must be 3-d");
    std::vector<double> logw(n), dlt(n);
    const std::uint64_t seed = mix_seed(o.seed, 1000 + i);
    const std::size_t nblocks = (n + kPathBlock - 1) / kPathBlock;
    parallel_for(
        nblocks,
        [&](std::size_t blk) {
          const std::size_t lo = blk * kPathBlock, hi = std::min(n, lo + kPathBlock);
          for (std::size_t p = lo; p < hi; ++p) {
            Philox rng(seed, p);
            double x[3] = {points[i][0], points[i][1], points[i][2]}, y[3];
            double A = 0.0, Ac = 0.0;
            bool pending = false;
            double fa = 0.0, h1 = 0.0;
            double t = 0.0;
            const double zeta = kill > 0.0 ? rng.exponential(kill) : kInf;
            double fx = dens(x);
            auto flush = [&](double fb) {
              if (pending) Ac += 0.5 * h1 * (fa + fb);
              pending = false;
            };
            for (;;) {
              const double r = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
              if (r >= Rc) {
                flush(fx);
                const double phit = (a / r) * std::exp(-kk * (r - a));
                if (rng.uniform() >= phit) break;
                // radial measure: only the radius of the entrance point matters
                double u[3], s = 0.0;
                for (double& c : u) {
                  c = rng.normal();
                  s += c * c;
                }
                s = std::sqrt(s);
                for (int k = 0; k < 3; ++k) x[k] = a * u[k] / s;
                fx = dens(x);
                continue;
              }
              double h = o.dt;
              if (r > a) h = std::max(o.dt, (r - a) * (r - a) / 25.0);
              bool last = false;
              if (t + h >= zeta) {
                h = zeta - t;
                last = true;
              }
              const double sh = std::sqrt(h);
              for (int k = 0; k < 3; ++k) y[k] = x[k] + sh * rng.normal();
              const double fy = dens(y);
              A += 0.5 * h * (fx + fy);
              if (!pending) {
                pending = true;
                fa = fx;
                h1 = h;
              } else {
                Ac += 0.5 * (h1 + h) * (fa + fy);
                pending = false;
              }
              t += h;
              std::copy(y, y + 3, x);
              fx = fy;
              if (last) {
                flush(fx);
                break;
              }
            }
            flush(fx);
            logw[p] = A;
            dlt[p] = std::exp(A) - std::exp(Ac);
          }
        },
        o.threads);
    Moments mw, md;
    {
      struct Acc {
        Moments w, d;
      };
      const auto acc = reduce_paths<Acc>(
          n, [] { return Acc{}; },
          [&](Acc& A, std::size_t p) {
            A.w.add(std::exp(logw[p]));
            A.d.add(dlt[p]);
          },
          [](Acc& l, const Acc& r) {
            l.w.merge(r.w);
            l.d.merge(r.d);
          },
          o.threads);
      mw = acc.w;
      md = acc.d;
    }
    G.h_hat.push_back(mw.mean);
    G.ci.push_back(mw.ci95());
    // first order: bias(dt) ~ bias(2dt) - bias(dt); allow order 1/2
    G.step_bias.push_back((std::abs(md.mean) + md.ci95()) / (std::sqrt(2.0) - 1.0));
    const double th = mu.has_pos() ? hill_tail_rate(logw, o.hill_fraction) : kInf;
    G.theta.push_back(th);
    G.theta_min = std::min(G.theta_min, th);
  }
  if (G.theta_min > o.theta_bounded)
    G.bounded = Tri::yes;
  else if (G.theta_min < o.theta_divergent)
    G.bounded = Tri::no;
  return G;
}

// Residual of h = R(h mu) + 1 on the gauge points, with a radial interpolant of h.
struct GaugeIdentity {
  std::vector<double> radii, lhs, rhs, residual, error;
  double max_residual = 0.0;
  double max_error = 0.0;
  double worst_ratio = 0.0;  // max residual_i / error_i
  bool consistent = true;    // residual_i <= 3 error_i everywhere
};

inline GaugeIdentity gauge_identity_residual(const GaugeEstimate& g, const MeasureSpec& mu, const ProcessSpec& spec) {
  if (!(spec.is_brownian() && spec.dim == 3)) fail(Errc::unsupported_dim, "gauge identity needs d=3 Brownian motion");
  if (!mu.is_zero() && !mu.radial()) fail(Errc::unsupported_regime, "gauge identity needs a radial measure");
  GaugeIdentity out;
  const std::size_t n = g.points.size();
  if (n < 4) fail(Errc::insufficient_data, "need >= 4 gauge points");
  std::vector<std::size_t> ord(n);
  for (std::size_t i = 0; i < n; ++i) ord[i] = i;
  std::sort(ord.begin(), ord.end(), [&](auto i, auto j) { return norm(g.points[i]) < norm(g.points[j]); });
  std::vector<double> r, h, ci, sb;
  for (auto i : ord) {
    r.push_back(norm(g.points[i]));
    h.push_back(g.h_hat[i]);
    ci.push_back(g.ci[i]);
    sb.push_back(g.step_bias.empty() ? 0.0 : g.step_bias[i]);
  }
  for (std::size_t i = 1; i < n; ++i)
    if (!(r[i] > r[i - 1])) fail(Errc::invalid_input, "gauge points need distinct radii");
  const double a = mu.is_zero() ? 0.0 : mu.support_radius;
  if (!mu.is_zero() && (r.front() > 1e-12 || r.back() < a * (1.0 - 1e-12)))
    fail(Errc::invalid_input, "gauge points must cover the support radially");
  using boost::math::interpolators::makima;
  auto mk = [&](std::vector<double> ys) { return makima<std::vector<double>>(std::vector<double>(r), std::move(ys)); };
  const auto hs = mk(h), cs = mk(ci), bs = mk(sb);
  auto linear = [&](double x) {
    const std::size_t k = std::min<std::size_t>(n - 2, std::upper_bound(r.begin(), r.end(), x) - r.begin() - 1);
    const double w = (x - r[k]) / (r[k + 1] - r[k]);
    return h[k] + w * (h[k + 1] - h[k]);
  };
  const double k = std::sqrt(2.0 * spec.kill_rate);
  auto R = [&](double x, const std::function<double(double)>& f, int part) {
    if (mu.is_zero()) return 0.0;
    auto gfun = [&](double rho) {
      const double m = part == 0 ? mu.radial_value(rho, +1) - mu.radial_value(rho, -1) : mu.radial_value(rho, 0);
      return m == 0.0 ? 0.0 : 4.0 * kPi * rho * rho * m * potential::detail::sphere_avg_d3(k, x, rho) * f(rho);
    };
    std::vector<double> br(r.begin(), r.end());
    br.push_back(x);
    br.push_back(a);
    std::sort(br.begin(), br.end());
    double s = 0.0;
    for (std::size_t i = 1; i < br.size(); ++i) {
      const double lo = br[i - 1], hi = std::min(br[i], a);
      if (hi > lo) s += quad::gk(gfun, lo, hi, 1e-10, 12).value;
    }
    return s;
  };
  auto hf = [&](double x) { return hs(x); };
  auto hl = [&](double x) { return linear(x); };
  auto cf = [&](double x) { return std::abs(cs(x)); };
  auto bf = [&](double x) { return std::abs(bs(x)); };
  for (std::size_t i = 0; i < n; ++i) {
    const double x = r[i];
    const double rhs = 1.0 + R(x, hf, 0);
    const double interp = std::abs(R(x, hf, 0) - R(x, hl, 0));
    const double err = ci[i] + R(x, cf, 1) + interp + sb[i] + R(x, bf, 1);
    const double res = std::abs(h[i] - rhs);
    out.radii.push_back(x);
    out.lhs.push_back(h[i]);
    out.rhs.push_back(rhs);
    out.residual.push_back(res);
    out.error.push_back(err);
    out.max_residual = std::max(out.max_residual, res);
    out.max_error = std::max(out.max_error, err);
    const double ratio = err > 0.0 ? res / err : (res > 1e-12 ? kInf : 0.0);
    out.worst_ratio = std::max(out.worst_ratio, ratio);
    if (ratio > 3.0) out.consistent = false;
  }
  return out;
}

// ---------------------------------------------------------------------------
// perturbed resolvent on a time ladder

struct ResolventOptions : McOptions {
  std::vector<double> T_ladder{1.0, 4.0, 16.0, 64.0};
  double bandwidth = 0.2;
  double ratio_finite = 0.7, ratio_divergent = 1.3;
  double theta_finite = 1.1, theta_divergent = 0.9;
  double hill_fraction = 0.01;
};

struct ResolventRow {
  Point y;
  std::vector<double> values, ci;  // R(x,y;T) per ladder time
  std::vector<double> tail;        // unperturbed int_T^inf e^{-alpha t} p_t(x,y) dt
  std::vector<double> corrected;   // values + tail
  std::vector<double> ratios;      // successive increment ratios
  std::vector<double> inc_ci;      // CI of each increment between ladder times
  Tri finite = Tri::inconclusive;
};

struct ResolventTable {
  double alpha = 0.0;
  Point x;
  std::vector<double> T;
  std::vector<ResolventRow> rows;
  double theta = kInf;
  Tri finite = Tri::inconclusive;
  long long n_paths = 0;
  double bandwidth = 0.0;
};

inline double unperturbed_tail(const ProcessSpec& spec, double alpha, PointView x, PointView y, double T) {
  auto f = [&](double t) { return std::exp(-alpha * t) * processes::transition_density(spec, t, x, y); };
  // t = s^{-2} turns the algebraic tail into a smooth integrand on a finite range
  auto g = [&](double s) { return s > 0.0 ? 2.0 * f(1.0 / (s * s)) / (s * s * s) : 0.0; };
  const double T1 = std::max(T, 1.0);
  double v = quad::gk(g, 0.0, 1.0 / std::sqrt(T1), 1e-10, 12).value;
  if (T < T1) v += quad::gk(f, T, T1, 1e-10, 12).value;
  return v;
}

inline ResolventTable resolvent_A(const Setup& S, double alpha, const Point& x, const std::vector<Point>& probes,
                                  const ResolventOptions& o) {
  if (!(alpha >= 0.0)) fail(Errc::invalid_input, "alpha must be >= 0");
  detail::check_times(o.T_ladder);
  if (o.T_ladder.size() < 3) fail(Errc::invalid_input, "need >= 3 ladder times");
  if (!(o.bandwidth > 0.0)) fail(Errc::bandwidth_too_small, "bandwidth must be > 0");
  const int d = S.spec.dim;
  if (static_cast<int>(x.size()) != d) fail(Errc::invalid_input, "start point dimension mismatch");
  detail::Engine E(S, o);
  E.probes = probes;
  E.probe_margin = 5.0 * o.bandwidth;
  // occupation integrals need resolution near the probes even when unperturbed
  if (E.exact) {
    E.exact = false;
    E.adaptive = o.adaptive && S.spec.is_brownian();
    E.region = -kInf;
  }
  ResolventTable tab;
  tab.alpha = alpha;
  tab.x = x;
  tab.T = o.T_ladder;
  tab.n_paths = o.n_paths;
  tab.bandwidth = o.bandwidth;
  const std::size_t n = static_cast<std::size_t>(o.n_paths), nt = o.T_ladder.size(), m = probes.size();
  std::vector<double> snap(n * nt * m, 0.0), lastA(n, -kInf);
  auto plan = E.plan(o.T_ladder.back(), o.T_ladder);
  if (!E.adaptive) plan.dt = o.dt;
  const std::uint64_t seed = mix_seed(o.seed, 7);
  const std::size_t nblocks = (n + kPathBlock - 1) / kPathBlock;
  parallel_for(
      nblocks,
      [&](std::size_t blk) {
        const std::size_t lo = blk * kPathBlock, hi = std::min(n, lo + kPathBlock);
        std::vector<double> la(nt, -kInf);
        for (std::size_t p = lo; p < hi; ++p) {
          Philox rng(seed, p);
          detail::OccupationAcc occ{&probes, alpha, o.bandwidth, d, std::vector<double>(m, 0.0)};
          detail::PathObs obs(&E);
          std::fill(la.begin(), la.end(), -kInf);
          obs.la = la.data();
          obs.occ = &occ;
          obs.occ_snap = snap.data() + p * nt * m;
          const auto killed = processes::walk(S.spec, x, plan, rng, obs);
          // a killed path keeps its occupation total at later ladder times
          for (std::size_t j = 0; j < nt; ++j)
            if (!std::isfinite(la[j]) && killed && *killed <= o.T_ladder[j])
              for (std::size_t k = 0; k < m; ++k) obs.occ_snap[j * m + k] = occ.value[k];
          lastA[p] = obs.logA();
        }
      },
      o.threads);
  using Acc = std::vector<Moments>;
  const auto acc = reduce_paths<Acc>(
      n, [&] { return Acc(nt * m + (nt - 1) * m); },
      [&](Acc& A, std::size_t p) {
        const double* sp = snap.data() + p * nt * m;
        for (std::size_t i = 0; i < nt * m; ++i) A[i].add(sp[i]);
        for (std::size_t j = 1; j < nt; ++j)
          for (std::size_t k = 0; k < m; ++k) A[nt * m + (j - 1) * m + k].add(sp[j * m + k] - sp[(j - 1) * m + k]);
      },
      [](Acc& l, const Acc& r) {
        for (std::size_t i = 0; i < l.size(); ++i) l[i].merge(r[i]);
      },
      o.threads);
  const bool can_grow = S.has_u() || S.mu.has_pos() || (S.has_F() && S.F->F_pos);
  tab.theta = can_grow ? hill_tail_rate(lastA, o.hill_fraction) : kInf;
  bool any_no = false, all_yes = true;
  for (std::size_t k = 0; k < m; ++k) {
    ResolventRow row;
    row.y = probes[k];
    for (std::size_t j = 0; j < nt; ++j) {
      row.values.push_back(acc[j * m + k].mean);
      row.ci.push_back(acc[j * m + k].ci95());
      row.tail.push_back(unperturbed_tail(S.spec, alpha, x, probes[k], o.T_ladder[j]));
      row.corrected.push_back(row.values.back() + row.tail.back());
    }
    std::vector<double> inc;
    for (std::size_t j = 1; j < nt; ++j) {
      inc.push_back(row.values[j] - row.values[j - 1]);
      row.inc_ci.push_back(acc[nt * m + (j - 1) * m + k].ci95());
    }
    for (std::size_t j = 1; j < inc.size(); ++j)
      row.ratios.push_back(inc[j - 1] > 0.0 ? inc[j] / inc[j - 1] : kInf);
    // a divergence call needs the last increment to stay large after subtracting its CI
    const double prev = inc[inc.size() - 2], last = inc.back(), ci = row.inc_ci.back();
    const bool ratio_ok = prev > 0.0;
    if ((ratio_ok && (last - ci) / prev >= o.ratio_divergent) || tab.theta < o.theta_divergent)
      row.finite = Tri::no;
    else if (ratio_ok && last / prev <= o.ratio_finite && tab.theta > o.theta_finite)
      row.finite = Tri::yes;
    if (row.finite == Tri::no) any_no = true;
    if (row.finite != Tri::yes) all_yes = false;
    tab.rows.push_back(std::move(row));
  }
  tab.finite = any_no ? Tri::no : (all_yes ? Tri::yes : Tri::inconclusive);
  return tab;
}

}  // namespace fklab::fk
