#pragma once

#include <cmath>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "core.hpp"

namespace fklab::quad {

struct Result {
  double value = 0.0;
  double error = 0.0;
  double l1 = 0.0;
};

// Adaptive Gauss-Kronrod (61 point) on [a,b]; infinite ends are mapped by Boost.
template <class F>
Result gk(F&& f, double a, double b, double rel = 1e-10, unsigned depth = 15) {
  Result r;
  if (a == b) return r;
  r.value = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, depth, rel, &r.error, &r.l1);
  return r;
}

// As gk, but raises QuadratureFailure when the error estimate misses the target
// by more than `slack` times.
template <class F>
double integrate(F&& f, double a, double b, double rel = 1e-10, double abs_floor = 1e-300, double slack = 100.0,
                 unsigned depth = 15) {
  const Result r = gk(f, a, b, rel, depth);
  if (!std::isfinite(r.value)) fail(Errc::quadrature_failure, "non-finite integral");
  if (r.error > slack * std::max(rel * r.l1, abs_floor))
    fail(Errc::quadrature_failure, "error estimate " + std::to_string(r.error) + " above target");
  return r.value;
}

// tanh-sinh for pieces with integrable endpoint singularities
template <class F>
Result ts(F&& f, double a, double b, double rel = 1e-9) {
  static thread_local boost::math::quadrature::tanh_sinh<double> integrator(12);
  Result r;
  if (a == b) return r;
  std::size_t levels = 0;
  r.value = integrator.integrate(f, a, b, rel, &r.error, &r.l1, &levels);
  return r;
}

// piecewise integration over consecutive breakpoints
template <class F>
double integrate_pieces(F&& f, const std::vector<double>& br, double rel = 1e-10, double abs_floor = 1e-300) {
  double s = 0.0;
  for (std::size_t i = 1; i < br.size(); ++i)
    if (br[i] > br[i - 1]) s += integrate(f, br[i - 1], br[i], rel, abs_floor);
  return s;
}

}  // namespace fklab::quad
