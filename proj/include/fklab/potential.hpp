#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "core.hpp"
#include "measures.hpp"
#include "processes.hpp"
#include "quadrature.hpp"

// alpha-order resolvent potentials R_alpha nu(x) = int R_alpha(x,y) nu(dy)
namespace fklab::potential {

using processes::ProcessSpec;

namespace detail {

// sphere average over |y|=rho of e^{-k|x-y|}/(2 pi |x-y|), |x|=r (d=3, 1/2 Laplacian)
inline double sphere_avg_d3(double k, double r, double rho) {
  if (r == 0.0 && rho == 0.0) return kInf;
  if (r == 0.0) return std::exp(-k * rho) / (2.0 * kPi * rho);
  if (rho == 0.0) return std::exp(-k * r) / (2.0 * kPi * r);
  const double mx = std::max(r, rho), mn = std::min(r, rho);
  if (k == 0.0) return 1.0 / (2.0 * kPi * mx);
  // (e^{-k|r-rho|} - e^{-k(r+rho)})/(4 pi r rho k), cancellation-free
  return std::exp(-k * (mx - mn)) * -std::expm1(-2.0 * k * mn) / (4.0 * kPi * r * rho * k);
}

struct LadderResult {
  double value = 0.0;
  bool divergent = false;
};

// int_0^b g for g possibly singular at 0: refine the cut delta and watch the
// increments; persistent non-decaying increments mean divergence.
template <class G>
LadderResult origin_ladder(G&& g, double b, double rel, bool ts_main = false) {
  LadderResult res;
  double delta = b * 1e-2;
  double val = ts_main ? quad::ts(g, delta, b, rel).value : quad::gk(g, delta, b, rel, 15).value;
  double prev_inc = kInf, inc = 0.0, last_ratio = 0.0;
  for (int j = 0; j < 8; ++j) {
    const double d2 = delta * 1e-2;
    // increments only need absolute accuracy; shallow depth avoids chasing roundoff
    inc = quad::gk(g, d2, delta, rel, 6).value;
    val += inc;
    delta = d2;
    if (std::abs(inc) <= rel * std::abs(val)) break;
    if (j >= 2 && std::abs(inc) > 0.9 * std::abs(prev_inc)) {
      res.divergent = true;
      res.value = kInf;
      return res;
    }
    last_ratio = std::isfinite(prev_inc) && prev_inc != 0.0 ? inc / prev_inc : 0.0;
    prev_inc = inc;
  }
  // geometric tail of the remaining increments
  if (last_ratio > 0.0 && last_ratio < 1.0 && std::abs(inc) > rel * std::abs(val))
    val += inc * last_ratio / (1.0 - last_ratio);
  res.value = val;
  return res;
}

// cached radial table of the stable resolvent kernel for a fixed total rate
struct StableKernelTable {
  double s, a;
  std::vector<double> lr, lv;
  double eval(double r) const {
    if (r <= 0.0) return kInf;
    const double x = std::log(r);
    if (x <= lr.front()) {
      // extrapolate with the local slope
      const double sl = (lv[1] - lv[0]) / (lr[1] - lr[0]);
      return std::exp(lv[0] + sl * (x - lr[0]));
    }
    if (x >= lr.back()) {
      const std::size_t n = lr.size();
      const double sl = (lv[n - 1] - lv[n - 2]) / (lr[n - 1] - lr[n - 2]);
      return std::exp(lv[n - 1] + sl * (x - lr[n - 1]));
    }
    const std::size_t i = std::upper_bound(lr.begin(), lr.end(), x) - lr.begin();
    const double w = (x - lr[i - 1]) / (lr[i] - lr[i - 1]);
    return std::exp(lv[i - 1] + w * (lv[i] - lv[i - 1]));
  }
};

inline const StableKernelTable& stable_kernel_table(double s, double a) {
  static std::mutex mu;
  static std::map<std::pair<double, double>, std::unique_ptr<StableKernelTable>> cache;
  std::lock_guard<std::mutex> lk(mu);
  auto& slot = cache[{s, a}];
  if (!slot) {
    auto tb = std::make_unique<StableKernelTable>();
    tb->s = s;
    tb->a = a;
    const ProcessSpec sp = processes::stable(s, 1e-3, 0.0);
    for (double r : logspace(1e-6, 1e4, 401)) {
      tb->lr.push_back(std::log(r));
      tb->lv.push_back(std::log(processes::resolvent_kernel_r(sp, a, r)));
    }
    slot = std::move(tb);
  }
  return *slot;
}

}  // namespace detail

// 1-d kernel r -> R_alpha(r), fast path for the simulated processes
inline std::function<double(double)> kernel_1d(const ProcessSpec& spec, double alpha) {
  const double a = alpha + spec.kill_rate;
  if (spec.is_brownian()) {
    if (a == 0.0) return [](double) { return kInf; };
    const double k = std::sqrt(2.0 * a);
    return [k](double r) { return std::exp(-k * r) / k; };
  }
  const double s = spec.alpha_stable_index;
  if (a == 0.0) {
    if (s >= 1.0) return [](double) { return kInf; };
    ProcessSpec sp = spec;
    return [sp](double r) { return processes::resolvent_kernel_r(sp, 0.0, r); };
  }
  const auto* tb = &detail::stable_kernel_table(s, a);
  return [tb](double r) { return tb->eval(r); };
}

// R_alpha nu(x) for the measure part (`part`: +1 positive, -1 negative, 0 total).
// Returns +inf when the potential diverges.
inline double resolvent_potential(const MeasureSpec& nu, double alpha, PointView x, const ProcessSpec& spec,
                                  int part = 0, double rel = 1e-9) {
  if (!(alpha >= 0.0)) fail(Errc::invalid_input, "alpha must be >= 0");
  const bool use_pos = part >= 0 && nu.has_pos(), use_neg = part <= 0 && nu.has_neg();
  if (!use_pos && !use_neg) return 0.0;
  const double a = nu.support_radius;
  const int d = spec.dim;
  if (static_cast<int>(x.size()) != d) fail(Errc::invalid_input, "point dimension mismatch");

  if (d == 3 && spec.is_brownian()) {
    if (!nu.radial()) fail(Errc::unsupported_regime, "d=3 potentials need radial measures");
    const double k = std::sqrt(2.0 * (alpha + spec.kill_rate));
    const double r = norm(x);
    const bool sing = (use_pos && nu.radial_pos->singular_at_origin()) ||
                      (use_neg && nu.radial_neg->singular_at_origin());
    auto g = [&](double rho) {
      const double n = nu.radial_value(rho, part);
      if (n == 0.0) return 0.0;
      return 4.0 * kPi * rho * rho * n * detail::sphere_avg_d3(k, r, rho);
    };
    std::vector<double> br{0.0};
    if (r > 0.0 && r < a) br.push_back(r);
    br.push_back(a);
    double total = 0.0;
    for (std::size_t i = 1; i < br.size(); ++i) {
      if (i == 1 && (sing || r == 0.0)) {
        const auto lr = detail::origin_ladder(g, br[1], rel);
        if (lr.divergent) return kInf;
        total += lr.value;
      } else {
        total += quad::gk(g, br[i - 1], br[i], rel, 15).value;
      }
    }
    return total;
  }

  if (d == 1) {
    const auto K = kernel_1d(spec, alpha);
    if (std::isinf(K(1.0))) return kInf;
    const double x0 = x[0];
    auto dens = [&](double y) {
      const double p[1] = {y};
      double v = 0.0;
      if (use_pos) v += nu.pos(PointView(p, 1));
      if (use_neg) v += nu.neg(PointView(p, 1));
      return v;
    };
    auto g = [&](double y) {
      const double dv = dens(y);
      return dv == 0.0 ? 0.0 : K(std::abs(x0 - y)) * dv;
    };
    std::vector<double> br{-a, 0.0, a};
    if (x0 > -a && x0 < a && x0 != 0.0) br.push_back(x0);
    std::sort(br.begin(), br.end());
    double total = 0.0;
    const bool smooth_kernel = spec.is_brownian();
    const bool sing = (use_pos && nu.radial_pos && nu.radial_pos->singular_at_origin()) ||
                      (use_neg && nu.radial_neg && nu.radial_neg->singular_at_origin());
    for (std::size_t i = 1; i < br.size(); ++i) {
      if (br[i] <= br[i - 1]) continue;
      if (sing && (br[i - 1] == 0.0 || br[i] == 0.0)) {
        // density singular at the origin: refine toward it and detect divergence
        const bool right = br[i - 1] == 0.0;
        const double len = br[i] - br[i - 1];
        auto gs = [&](double s) { return g(right ? s : -s); };
        const auto lr = detail::origin_ladder(gs, len, rel, !smooth_kernel);
        if (lr.divergent) return kInf;
        total += lr.value;
        continue;
      }
      const auto res = smooth_kernel ? quad::gk(g, br[i - 1], br[i], rel, 15) : quad::ts(g, br[i - 1], br[i], rel);
      if (!std::isfinite(res.value)) return kInf;
      total += res.value;
    }
    return total;
  }
  fail(Errc::unsupported_dim, "resolvent potentials implemented for d=1 and d=3 Brownian, d=1 stable");
}

// Radial table of u = R_alpha nu1 - R_alpha nu2 with exact exterior decay.
struct PotentialTable {
  int dim = 1;
  double alpha = 0.0;
  double k = 0.0;  // exterior decay rate
  double a = 1.0;  // support radius
  double h = 0.0;
  std::vector<double> values;  // on r = i*h, i = 0..n
  double ext = 0.0;            // exterior coefficient
  double sup_abs = 0.0;
  bool zero = true;

  double operator()(double r) const {
    if (zero) return 0.0;
    if (r >= a) {
      if (dim == 3) return ext * std::exp(-k * (r - a)) * a / r;
      return ext * std::exp(-k * (r - a));
    }
    const double s = r / h;
    const std::size_t i = std::min(static_cast<std::size_t>(s), values.size() - 2);
    const double w = s - i;
    return values[i] + w * (values[i + 1] - values[i]);
  }
  double at(PointView x) const { return (*this)(norm(x)); }
  // radial derivative by central differences of the interpolant
  double dr(double r) const {
    const double e = std::max(1e-6, 0.5 * h);
    return ((*this)(r + e) - (*this)(std::max(0.0, r - e))) / (r + e - std::max(0.0, r - e));
  }
};

// Builds the table; nu1, nu2 enter through their total variation.
inline PotentialTable build_table(const MeasureSpec& nu1, const MeasureSpec& nu2, double alpha,
                                  const ProcessSpec& spec, int n = 2000) {
  PotentialTable tb;
  tb.dim = spec.dim;
  tb.alpha = alpha;
  tb.zero = nu1.is_zero() && nu2.is_zero();
  if (tb.zero) return tb;
  if (!spec.is_brownian() || (spec.dim != 1 && spec.dim != 3))
    fail(Errc::unsupported_process, "potential-type u is implemented for Brownian d=1 and d=3");
  if (!nu1.radial() || !nu2.radial()) fail(Errc::unsupported_regime, "potential tables need radial measures");
  tb.a = std::max(nu1.is_zero() ? 0.0 : nu1.support_radius, nu2.is_zero() ? 0.0 : nu2.support_radius);
  tb.k = std::sqrt(2.0 * (alpha + spec.kill_rate));
  tb.h = tb.a / n;
  tb.values.resize(n + 1);
  for (int i = 0; i <= n; ++i) {
    Point x(spec.dim, 0.0);
    x[0] = i * tb.h;
    const double v1 = nu1.is_zero() ? 0.0 : resolvent_potential(nu1, alpha, x, spec);
    const double v2 = nu2.is_zero() ? 0.0 : resolvent_potential(nu2, alpha, x, spec);
    if (std::isinf(v1) || std::isinf(v2)) fail(Errc::unbounded_potential, "resolvent potential is infinite");
    tb.values[i] = v1 - v2;
    tb.sup_abs = std::max(tb.sup_abs, std::abs(v1) + std::abs(v2));
  }
  tb.ext = tb.values.back();
  return tb;
}

}  // namespace fklab::potential
