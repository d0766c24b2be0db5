#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "core.hpp"
#include "measures.hpp"
#include "potential.hpp"
#include "processes.hpp"
#include "quadrature.hpp"

namespace fklab::functionals {

using processes::PathSample;
using processes::ProcessSpec;

// u = R_alpha nu1 - R_alpha nu2, or the l_beta family (1-d Brownian only).
struct PotentialU {
  enum class Kind { resolvent_potential, ell_beta };
  Kind kind = Kind::resolvent_potential;
  MeasureSpec nu1 = MeasureSpec::zero();
  MeasureSpec nu2 = MeasureSpec::zero();
  double alpha = 0.0;
  double beta = -0.5;
  double eps = 1e-3;
  double bound = 0.0;  // filled in by prepare(); cap checked there
  double cap = 1e6;

  static PotentialU resolvent(MeasureSpec n1, MeasureSpec n2, double alpha) {
    PotentialU u;
    u.kind = Kind::resolvent_potential;
    u.nu1 = std::move(n1);
    u.nu2 = std::move(n2);
    u.alpha = alpha;
    return u;
  }
  static PotentialU ell(double beta, double eps) {
    if (!(beta > -1.5 && beta <= 0.0)) fail(Errc::invalid_input, "beta must lie in (-3/2, 0]");
    PotentialU u;
    u.kind = Kind::ell_beta;
    u.beta = beta;
    u.eps = eps;
    return u;
  }

  bool is_zero() const { return kind == Kind::resolvent_potential && nu1.is_zero() && nu2.is_zero(); }
};

// l_beta(x) = 2 sgn(x)|x|^{beta+2}/((beta+1)(beta+2)); half its second
// derivative is |x|^beta sgn(x), so its zero-energy part is H^beta
inline double ell_beta(double beta, double x) {
  const double ax = std::abs(x), sg = x < 0.0 ? -1.0 : 1.0;
  if (ax == 0.0) return 0.0;
  if (beta == -1.0) return 2.0 * sg * (ax * std::log(ax) - ax);
  return 2.0 * sg * std::pow(ax, beta + 2.0) / ((beta + 1.0) * (beta + 2.0));
}

inline double ell_beta_prime(double beta, double x) {
  const double ax = std::abs(x);
  if (beta == -1.0) return ax > 0.0 ? 2.0 * std::log(ax) : -kInf;
  return 2.0 * std::pow(ax, beta + 1.0) / (beta + 1.0);
}

// prepared potential: radial table for resolvent potentials
struct PreparedU {
  const PotentialU* u = nullptr;
  potential::PotentialTable table;
  bool zero = true;

  double value(PointView x) const {
    if (zero) return 0.0;
    if (u->kind == PotentialU::Kind::ell_beta) return ell_beta(u->beta, x[0]);
    return table.at(x);
  }
};

inline PreparedU prepare(const PotentialU& u, const ProcessSpec& spec) {
  PreparedU p;
  p.u = &u;
  if (u.kind == PotentialU::Kind::ell_beta) {
    if (!(spec.is_brownian() && spec.dim == 1)) fail(Errc::non_brownian_path, "l_beta needs 1-d Brownian motion");
    p.zero = false;
    return p;
  }
  p.zero = u.is_zero();
  if (!p.zero) {
    p.table = potential::build_table(u.nu1, u.nu2, u.alpha, spec);
    if (p.table.sup_abs > u.cap) fail(Errc::unbounded_potential, "sup R nu exceeds the configured cap");
  }
  return p;
}

// ---------------------------------------------------------------------------
// online accumulators, shared by PathSample functions and the MC estimators

struct CafAcc {
  const MeasureSpec* mu;
  double pos = 0.0, neg = 0.0;
  void segment(double t0, PointView x0, double t1, PointView x1) {
    const double h = t1 - t0;
    if (h <= 0.0) return;
    if (mu->has_pos()) pos += 0.5 * h * (mu->pos(x0) + mu->pos(x1));
    if (mu->has_neg()) neg += 0.5 * h * (mu->neg(x0) + mu->neg(x1));
  }
};

struct JumpAcc {
  const JumpPerturbation* F;
  double pos = 0.0, neg = 0.0;
  void jump(PointView from, PointView to) {
    pos += F->pos(from, to);
    neg += F->neg(from, to);
  }
};

// alpha int u(X_s) ds - A^nu for u = R_alpha nu1 - R_alpha nu2
struct ZeroEnergyAcc {
  const PreparedU* pu;
  const MeasureSpec* nu1;
  const MeasureSpec* nu2;
  double alpha = 0.0;
  double value = 0.0;
  void segment(double t0, PointView x0, double t1, PointView x1) {
    const double h = t1 - t0;
    if (h <= 0.0 || pu->zero) return;
    double v = 0.0;
    if (alpha > 0.0) v += alpha * 0.5 * h * (pu->table.at(x0) + pu->table.at(x1));
    v -= 0.5 * h * (nu1->total(x0) + nu1->total(x1));
    v += 0.5 * h * (nu2->total(x0) + nu2->total(x1));
    value += v;
  }
};

// int |X|^beta sgn(X) 1{|X|>=eps} ds, trapezoid
struct HilbertAcc {
  double beta, eps;
  double value = 0.0;
  double f(double x) const {
    const double ax = std::abs(x);
    if (ax < eps) return 0.0;
    return (x < 0.0 ? -1.0 : 1.0) * std::pow(ax, beta);
  }
  void segment(double t0, PointView x0, double t1, PointView x1) {
    const double h = t1 - t0;
    if (h > 0.0) value += 0.5 * h * (f(x0[0]) + f(x1[0]));
  }
};

// ---------------------------------------------------------------------------
// PathSample API

namespace detail {

// replay the path up to t (interpolating the final partial segment)
template <class Seg, class Jmp>
void replay(const PathSample& p, double t, Seg&& seg, Jmp&& jmp) {
  if (t > p.horizon() + 1e-12) fail(Errc::beyond_horizon, "t exceeds the simulated horizon");
  const double tend = std::min(t, p.end_time());
  const int d = p.dim;
  std::vector<double> xi(d);
  for (std::size_t i = 1; i < p.size(); ++i) {
    const double t0 = p.times[i - 1], t1 = p.times[i];
    if (t0 >= tend) break;
    if (p.is_jump[i]) {
      if (t1 <= tend) jmp(p.pos(i - 1), p.pos(i));
      continue;
    }
    if (t1 <= tend) {
      seg(t0, p.pos(i - 1), t1, p.pos(i));
    } else {
      const double w = (tend - t0) / (t1 - t0);
      for (int k = 0; k < d; ++k) xi[k] = p.pos(i - 1)[k] + w * (p.pos(i)[k] - p.pos(i - 1)[k]);
      seg(t0, p.pos(i - 1), tend, PointView(xi));
      break;
    }
  }
}

}  // namespace detail

inline std::pair<double, double> caf_integral(const PathSample& p, const MeasureSpec& mu, double t) {
  CafAcc acc{&mu};
  detail::replay(p, t, [&](double a, PointView x, double b, PointView y) { acc.segment(a, x, b, y); },
                 [](PointView, PointView) {});
  return {acc.pos, acc.neg};
}

struct JumpFunctionalValue {
  double pos = 0.0, neg = 0.0;
  double bias_bound = 0.0;  // from jumps below the recording cutoff
};

inline JumpFunctionalValue jump_functional(const PathSample& p, const JumpPerturbation& F, double t,
                                           const ProcessSpec& spec) {
  JumpFunctionalValue out;
  JumpAcc acc{&F};
  detail::replay(p, t, [](double, PointView, double, PointView) {},
                 [&](PointView a, PointView b) { acc.jump(a, b); });
  out.pos = acc.pos;
  out.neg = acc.neg;
  if (!F.is_zero() && spec.is_stable() && F.min_jump < spec.jump_cutoff) {
    const double te = std::min(t, p.end_time());
    out.bias_bound = F.bound * te * processes::jump_count_rate(spec.alpha_stable_index, F.min_jump, spec.jump_cutoff);
  }
  return out;
}

// N(G)(x) = int G(x,y) J(x,y) dy in d=1, split at |x-y| = inner and at the
// caller's breakpoints (discontinuities of G in |x-y|).
inline double compensator_NF(PointView x, const std::function<double(PointView, PointView)>& G,
                             const std::function<double(PointView, PointView)>& J, double inner = 0.0,
                             std::vector<double> breaks = {}, double rel = 1e-6) {
  if (x.size() != 1) fail(Errc::unsupported_dim, "compensator quadrature is 1-d");
  if (!G) return 0.0;
  const double x0 = x[0];
  auto h = [&](double z) {
    if (z <= 0.0) return 0.0;
    const double yp[1] = {x0 + z}, ym[1] = {x0 - z};
    // J is singular at the diagonal; skip it where G vanishes
    const double gp = G(x, PointView(yp, 1)), gm = G(x, PointView(ym, 1));
    return (gp == 0.0 ? 0.0 : gp * J(x, PointView(yp, 1))) + (gm == 0.0 ? 0.0 : gm * J(x, PointView(ym, 1)));
  };
  breaks.push_back(inner);
  breaks.push_back(std::max(inner, 1.0));
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  double total = 0.0, err = 0.0, l1 = 0.0;
  auto add = [&](double a, double b) {
    const auto r = a == 0.0 ? quad::ts(h, a, b, rel) : quad::gk(h, a, b, rel, 15);
    total += r.value;
    err += r.error;
    l1 += r.l1;
  };
  double lo = 0.0;
  for (double b : breaks) {
    if (b > lo) add(lo, b);
    lo = std::max(lo, b);
  }
  add(lo, kInf);
  if (!std::isfinite(total) || err > 100.0 * rel * std::max(l1, 1e-300))
    fail(Errc::quadrature_failure, "compensator integral did not reach the tolerance");
  return total;
}

inline double zero_energy(const PathSample& p, const PotentialU& u, const PreparedU& pu, double t) {
  if (u.kind != PotentialU::Kind::resolvent_potential) fail(Errc::invalid_input, "zero_energy needs a resolvent potential");
  ZeroEnergyAcc acc{&pu, &u.nu1, &u.nu2, u.alpha};
  detail::replay(p, t, [&](double a, PointView x, double b, PointView y) { acc.segment(a, x, b, y); },
                 [](PointView, PointView) {});
  return acc.value;
}

inline double zero_energy(const PathSample& p, const PotentialU& u, const ProcessSpec& spec, double t) {
  const PreparedU pu = prepare(u, spec);
  return zero_energy(p, u, pu, t);
}

inline double hilbert_transform(const PathSample& p, double beta, double eps, double t) {
  if (!p.brownian || p.dim != 1) fail(Errc::non_brownian_path, "H^beta needs a 1-d Brownian path");
  if (!(eps > 0.0)) fail(Errc::invalid_input, "eps must be > 0");
  HilbertAcc acc{beta, eps};
  detail::replay(p, t, [&](double a, PointView x, double b, PointView y) { acc.segment(a, x, b, y); },
                 [](PointView, PointView) {});
  return acc.value;
}

// eps-ladder {eps, eps/2, eps/4}: finest value and the spread as error estimate
struct HilbertLadder {
  double value = 0.0;
  double spread = 0.0;
  std::vector<double> rungs;
};

inline HilbertLadder hilbert_ladder(const PathSample& p, double beta, double eps, double t) {
  HilbertLadder out;
  for (double e : {eps, eps / 2.0, eps / 4.0}) out.rungs.push_back(hilbert_transform(p, beta, e, t));
  out.value = out.rungs.back();
  out.spread = std::abs(out.rungs[2] - out.rungs[1]);
  return out;
}

// log of the Feynman-Kac weight, A_t = N^u_t + A^mu_t + A^F_t at t ^ zeta
inline double fk_log_weight(const PathSample& p, const PotentialU* u, const PreparedU* pu, const MeasureSpec& mu,
                            const JumpPerturbation* F, double t) {
  double A = 0.0;
  if (u && pu && !pu->zero) {
    if (u->kind == PotentialU::Kind::ell_beta)
      A += hilbert_transform(p, u->beta, u->eps, t);
    else
      A += zero_energy(p, *u, *pu, t);
  }
  if (!mu.is_zero()) {
    const auto [ap, an] = caf_integral(p, mu, t);
    A += ap - an;
  }
  if (F && !F->is_zero()) {
    JumpAcc acc{F};
    detail::replay(p, t, [](double, PointView, double, PointView) {},
                   [&](PointView a, PointView b) { acc.jump(a, b); });
    A += acc.pos - acc.neg;
  }
  return A;
}

inline double fk_weight(const PathSample& p, const PotentialU* u, const PreparedU* pu, const MeasureSpec& mu,
                        const JumpPerturbation* F, double t) {
  return std::exp(fk_log_weight(p, u, pu, mu, F, t));
}

}  // namespace fklab::functionals
