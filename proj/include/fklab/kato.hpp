#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "core.hpp"
#include "measures.hpp"
#include "potential.hpp"
#include "processes.hpp"
#include "quadrature.hpp"

// Kato-class membership of smooth measures via resolvent potentials
namespace fklab::kato {

using processes::ProcessSpec;

inline double resolvent_potential(const MeasureSpec& nu, double alpha, PointView x, const ProcessSpec& spec) {
  return potential::resolvent_potential(nu, alpha, x, spec, 0);
}

struct TightnessResult {
  std::vector<double> radii;
  std::vector<double> curve;  // sup_x int_{|y|>=K} R(x,y) |nu|(dy)
  Tri tight = Tri::inconclusive;
};

struct ClassReport {
  std::vector<double> alphas;
  std::vector<double> sup_R_alpha;
  double limit = 0.0;
  double decay_exponent = 0.0;
  Tri kato = Tri::inconclusive;
  Tri extended_kato = Tri::inconclusive;
  Tri dynkin = Tri::inconclusive;
  Tri green_bounded = Tri::inconclusive;
  Tri green_tight = Tri::inconclusive;
  TightnessResult tightness;
};

struct ClassifyOptions {
  std::vector<double> alphas{1.0, 4.0, 16.0, 64.0, 256.0};
  int grid_points = 41;  // radial evaluation grid for the sup
  std::vector<double> radii;  // tightness radii; default derived from the support
};

namespace detail {

// sup over x of R_alpha |nu|(x); radial measures reduce to a radial grid
inline double sup_potential(const MeasureSpec& nu, double alpha, const ProcessSpec& spec, int npts) {
  const double a = nu.support_radius;
  std::vector<double> rs{0.0};
  for (int i = 1; i < npts; ++i) rs.push_back(a * std::pow(static_cast<double>(i) / (npts - 1), 2.0));
  rs.push_back(1.5 * a);
  double best = 0.0;
  auto eval = [&](const Point& x) {
    const double v = potential::resolvent_potential(nu, alpha, x, spec, 0);
    best = std::max(best, v);
  };
  for (double r : rs) {
    Point x(spec.dim, 0.0);
    x[0] = r;
    eval(x);
    if (std::isinf(best)) return best;
    if (spec.dim == 1 && r > 0.0 && !nu.radial()) {
      x[0] = -r;
      eval(x);
      if (std::isinf(best)) return best;
    }
  }
  return best;
}

}  // namespace detail

// sup_x int_{|y|>=K} R_0(x,y)|nu|(dy) for each K; transient processes only
inline TightnessResult green_tight_check(const MeasureSpec& nu, const ProcessSpec& spec, std::vector<double> radii) {
  spec.validate();
  if (!spec.transient()) fail(Errc::recurrent_process, "Green kernel is infinite for a recurrent process");
  TightnessResult out;
  const double a = nu.support_radius;
  if (radii.empty())
    for (double f : {0.0, 0.125, 0.25, 0.5, 1.0, 2.0}) radii.push_back(f * a);
  std::sort(radii.begin(), radii.end());
  out.radii = radii;
  const double kill = spec.kill_rate;
  for (double K : radii) {
    double sup = 0.0;
    if (K >= a) {
      out.curve.push_back(0.0);
      continue;
    }
    if (spec.dim == 3 && spec.is_brownian()) {
      if (!nu.radial()) fail(Errc::unsupported_regime, "d=3 tightness needs radial measures");
      const double k = std::sqrt(2.0 * kill);
      // the tail potential at |x| = r; its max over r lies in [0, a]
      auto tail = [&](double r) {
        auto g = [&](double rho) {
          const double n = nu.radial_value(rho, 0);
          return n == 0.0 ? 0.0 : 4.0 * kPi * rho * rho * n * potential::detail::sphere_avg_d3(k, r, rho);
        };
        std::vector<double> br{K};
        if (r > K && r < a) br.push_back(r);
        br.push_back(a);
        double s = 0.0;
        for (std::size_t i = 1; i < br.size(); ++i) s += quad::gk(g, br[i - 1], br[i], 1e-10, 15).value;
        return s;
      };
      for (int i = 0; i <= 40; ++i) sup = std::max(sup, tail(a * i / 40.0));
    } else if (spec.dim == 1) {
      const auto R = potential::kernel_1d(spec, 0.0);
      const bool smooth = spec.is_brownian();
      const bool sing = (nu.radial_pos && nu.radial_pos->singular_at_origin()) ||
                        (nu.radial_neg && nu.radial_neg->singular_at_origin());
      auto tail = [&](double x0) {
        auto g = [&](double y) {
          const double p[1] = {y};
          const double dv = nu.total(PointView(p, 1));
          // a singular density is infinite only on a null set
          return dv == 0.0 || !std::isfinite(dv) ? 0.0 : R(std::abs(x0 - y)) * dv;
        };
        double s = 0.0;
        for (auto [lo, hi] : {std::pair{K, a}, std::pair{-a, -K}}) {
          std::vector<double> br{lo};
          if (x0 > lo && x0 < hi) br.push_back(x0);
          br.push_back(hi);
          for (std::size_t i = 1; i < br.size(); ++i) {
            if (sing && (br[i - 1] == 0.0 || br[i] == 0.0)) {
              const bool right = br[i - 1] == 0.0;
              auto gs = [&](double u) { return g(right ? u : -u); };
              const auto lr = potential::detail::origin_ladder(gs, br[i] - br[i - 1], 1e-8, !smooth);
              if (lr.divergent) return kInf;
              s += lr.value;
            } else {
              s += smooth ? quad::gk(g, br[i - 1], br[i], 1e-8, 15).value : quad::ts(g, br[i - 1], br[i], 1e-8).value;
            }
          }
        }
        return s;
      };
      for (int i = -40; i <= 40; ++i) sup = std::max(sup, tail(a * i / 40.0));
    } else {
      fail(Errc::unsupported_dim, "tightness implemented for d=1 and radial d=3");
    }
    out.curve.push_back(sup);
  }
  const double c0 = out.curve.front();
  if (!std::isfinite(c0))
    out.tight = Tri::no;
  else if (c0 == 0.0 || out.curve.back() < 1e-3 * c0)
    out.tight = Tri::yes;
  else
    out.tight = Tri::inconclusive;
  return out;
}

inline ClassReport classify(const MeasureSpec& nu, const ProcessSpec& spec, const ClassifyOptions& opt = {}) {
  spec.validate();
  ClassReport rep;
  if (opt.alphas.size() < 3) fail(Errc::invalid_input, "classify needs at least three alphas");
  rep.alphas = opt.alphas;
  std::sort(rep.alphas.begin(), rep.alphas.end());
  if (nu.is_zero()) {
    rep.sup_R_alpha.assign(rep.alphas.size(), 0.0);
    rep.kato = rep.extended_kato = rep.dynkin = rep.green_bounded = rep.green_tight = Tri::yes;
    return rep;
  }
  for (double a : rep.alphas) rep.sup_R_alpha.push_back(detail::sup_potential(nu, a, spec, opt.grid_points));

  const std::size_t n = rep.sup_R_alpha.size();
  const double v0 = rep.sup_R_alpha.front();
  const double v1 = rep.sup_R_alpha[n - 3], v2 = rep.sup_R_alpha[n - 2], v3 = rep.sup_R_alpha[n - 1];
  if (std::isinf(v3)) {
    rep.limit = kInf;
  } else {
    // Aitken extrapolation of the tail of the ladder
    const double den = v1 + v3 - 2.0 * v2;
    rep.limit = (den != 0.0 && std::abs(den) > 1e-14 * std::abs(v1)) ? (v1 * v3 - v2 * v2) / den : v3;
    if (v3 > 0.0 && v2 > 0.0)
      rep.decay_exponent = std::log(v2 / v3) / std::log(rep.alphas[n - 1] / rep.alphas[n - 2]);
    // monotone decreasing ladder: the limit sits in [0, v3]
    rep.limit = std::clamp(rep.limit, 0.0, v3);
  }

  if (std::isinf(rep.limit) || (std::isfinite(v0) && rep.limit > 1e-2 * v0))
    rep.kato = Tri::no;
  else if (rep.limit < 1e-3 * v0)
    rep.kato = Tri::yes;
  if (rep.limit < 0.5)
    rep.extended_kato = Tri::yes;
  else if (rep.limit > 2.0)
    rep.extended_kato = Tri::no;
  rep.dynkin = std::isfinite(v0) ? Tri::yes : Tri::no;

  if (!spec.transient()) {
    rep.green_bounded = Tri::no;
    rep.green_tight = Tri::no;
  } else {
    const double g = detail::sup_potential(nu, 0.0, spec, opt.grid_points);
    rep.green_bounded = std::isfinite(g) ? Tri::yes : Tri::no;
    if (rep.green_bounded == Tri::yes) {
      rep.tightness = green_tight_check(nu, spec, opt.radii);
      rep.green_tight = rep.tightness.tight;
    } else {
      rep.green_tight = Tri::no;
    }
  }
  // lattice: Kato implies extended Kato; bounded Green potential implies Dynkin
  if (rep.kato == Tri::yes) rep.extended_kato = Tri::yes;
  if (rep.green_bounded == Tri::yes) rep.dynkin = Tri::yes;
  if (rep.extended_kato == Tri::no) rep.kato = Tri::no;
  return rep;
}

}  // namespace fklab::kato
