#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"

namespace fklab {

// Named radial density shapes from the measure library.
struct Profile {
  enum class Shape { uniform_ball, power, shifted_power, gaussian_bump };
  Shape shape = Shape::uniform_ball;
  double c = 1.0;
  double radius = 1.0;
  double exponent = 0.0;
  double sigma = 1.0;

  // c 1{r<=radius}
  static Profile uniform_ball(double c, double radius) { return {Shape::uniform_ball, c, radius, 0.0, 1.0}; }
  // c r^exponent 1{r<=radius}
  static Profile power(double c, double exponent, double radius) { return {Shape::power, c, radius, exponent, 1.0}; }
  // c (1+r)^exponent 1{r<=radius}
  static Profile shifted_power(double c, double exponent, double radius) {
    return {Shape::shifted_power, c, radius, exponent, 1.0};
  }
  // c exp(-r^2/(2 sigma^2)), cut at 8 sigma
  static Profile gaussian_bump(double c, double sigma) { return {Shape::gaussian_bump, c, 8.0 * sigma, 0.0, sigma}; }

  double operator()(double r) const {
    if (r > radius) return 0.0;
    switch (shape) {
      case Shape::uniform_ball: return c;
      case Shape::power: return r > 0.0 ? c * std::pow(r, exponent) : (exponent >= 0.0 ? (exponent == 0.0 ? c : 0.0) : kInf);
      case Shape::shifted_power: return c * std::pow(1.0 + r, exponent);
      case Shape::gaussian_bump: return c * std::exp(-0.5 * r * r / (sigma * sigma));
    }
    return 0.0;
  }

  // integrable singularity at the origin (power law with negative exponent)
  bool singular_at_origin() const { return shape == Shape::power && exponent < 0.0; }
  bool discontinuous_edge() const { return shape != Shape::gaussian_bump; }
  double sup() const {
    switch (shape) {
      case Shape::power: return exponent < 0.0 ? kInf : c * std::pow(radius, exponent);
      default: return c;
    }
  }
};

// Signed smooth measure mu = mu_+ - mu_- given by densities. Library-built
// measures carry their radial profiles, which the quadrature code exploits.
struct MeasureSpec {
  std::function<double(PointView)> density_pos;
  std::function<double(PointView)> density_neg;
  double support_radius = 1.0;
  std::string label;
  std::optional<Profile> radial_pos, radial_neg;

  double pos(PointView x) const { return density_pos ? density_pos(x) : 0.0; }
  double neg(PointView x) const { return density_neg ? density_neg(x) : 0.0; }
  double value(PointView x) const { return pos(x) - neg(x); }
  double total(PointView x) const { return pos(x) + neg(x); }

  bool has_pos() const { return static_cast<bool>(density_pos); }
  bool has_neg() const { return static_cast<bool>(density_neg); }
  bool is_zero() const { return !has_pos() && !has_neg(); }
  bool radial() const { return (!has_pos() || radial_pos) && (!has_neg() || radial_neg); }

  // radial profile of a part: +1 positive, -1 negative, 0 total variation
  double radial_value(double r, int part = 0) const {
    double v = 0.0;
    if (part >= 0 && radial_pos) v += (*radial_pos)(r);
    if (part <= 0 && radial_neg) v += (*radial_neg)(r);
    return v;
  }

  static MeasureSpec zero() {
    MeasureSpec m;
    m.label = "zero";
    m.support_radius = 1.0;
    return m;
  }

  static MeasureSpec from_profiles(std::optional<Profile> p, std::optional<Profile> n, std::string label = "") {
    MeasureSpec m;
    m.label = std::move(label);
    m.radial_pos = p;
    m.radial_neg = n;
    double R = 0.0;
    if (p) {
      const Profile q = *p;
      m.density_pos = [q](PointView x) { return q(norm(x)); };
      R = std::max(R, q.radius);
    }
    if (n) {
      const Profile q = *n;
      m.density_neg = [q](PointView x) { return q(norm(x)); };
      R = std::max(R, q.radius);
    }
    m.support_radius = R > 0.0 ? R : 1.0;
    return m;
  }

  static MeasureSpec positive(Profile p, std::string label = "") { return from_profiles(p, std::nullopt, label); }
  static MeasureSpec negative(Profile p, std::string label = "") { return from_profiles(std::nullopt, p, label); }

  // c * mu
  MeasureSpec scaled(double c) const {
    MeasureSpec m = *this;
    auto sc = [c](std::optional<Profile> q) {
      if (q) q->c *= c;
      return q;
    };
    m.radial_pos = sc(radial_pos);
    m.radial_neg = sc(radial_neg);
    if (density_pos) m.density_pos = [f = density_pos, c](PointView x) { return c * f(x); };
    if (density_neg) m.density_neg = [f = density_neg, c](PointView x) { return c * f(x); };
    return m;
  }

  // positive part only / negative part only (as positive measures)
  MeasureSpec positive_part() const { return from_parts(density_pos, radial_pos, label + "+"); }
  MeasureSpec negative_part() const { return from_parts(density_neg, radial_neg, label + "-"); }

 private:
  MeasureSpec from_parts(std::function<double(PointView)> f, std::optional<Profile> p, std::string lab) const {
    MeasureSpec m;
    m.density_pos = std::move(f);
    m.radial_pos = p;
    m.support_radius = support_radius;
    m.label = std::move(lab);
    return m;
  }
};

// F_i(x,y) = eps 1{|x-y| >= min_jump}
struct ThresholdJump {
  double eps = 0.0;
  double min_jump = 1.0;
  double operator()(double r) const { return r >= min_jump ? eps : 0.0; }
};

// Symmetric bounded jump perturbation F = F_+ - F_- vanishing on the diagonal.
struct JumpPerturbation {
  std::function<double(PointView, PointView)> F_pos;
  std::function<double(PointView, PointView)> F_neg;
  double bound = 0.0;     // sup (F_pos + F_neg)
  double min_jump = 0.0;  // both parts vanish for |x-y| < min_jump
  std::optional<ThresholdJump> thr_pos, thr_neg;

  double pos(PointView x, PointView y) const { return F_pos ? F_pos(x, y) : 0.0; }
  double neg(PointView x, PointView y) const { return F_neg ? F_neg(x, y) : 0.0; }
  double value(PointView x, PointView y) const { return pos(x, y) - neg(x, y); }
  bool is_zero() const { return !F_pos && !F_neg; }

  static JumpPerturbation threshold(std::optional<ThresholdJump> p, std::optional<ThresholdJump> n = std::nullopt) {
    JumpPerturbation j;
    j.thr_pos = p;
    j.thr_neg = n;
    double m = kInf, b = 0.0;
    if (p) {
      const ThresholdJump q = *p;
      j.F_pos = [q](PointView x, PointView y) { return q(dist(x, y)); };
      m = std::min(m, q.min_jump);
      b += q.eps;
    }
    if (n) {
      const ThresholdJump q = *n;
      j.F_neg = [q](PointView x, PointView y) { return q(dist(x, y)); };
      m = std::min(m, q.min_jump);
      b += q.eps;
    }
    j.bound = b;
    j.min_jump = std::isinf(m) ? 0.0 : m;
    return j;
  }
};

}  // namespace fklab
