#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fklab {

using Point = std::vector<double>;
using PointView = std::span<const double>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kPi = std::numbers::pi;

enum class Errc {
  invalid_input,
  non_superlinear_scaling,
  invalid_grid,
  unsupported_regime,
  insufficient_data,
  degenerate_estimate,
  invalid_step,
  unsupported_dim,
  no_closed_form,
  beyond_horizon,
  quadrature_failure,
  unbounded_potential,
  non_brownian_path,
  recurrent_process,
  mesh_too_coarse,
  unsupported_process,
  singular_pencil,
  bandwidth_too_small,
  tail_bias_too_large,
  config_error,
  io_error,
};

inline const char* errc_name(Errc e) {
  switch (e) {
    case Errc::invalid_input: return "InvalidInput";
    case Errc::non_superlinear_scaling: return "NonSuperlinearScaling";
    case Errc::invalid_grid: return "InvalidGrid";
    case Errc::unsupported_regime: return "UnsupportedRegime";
    case Errc::insufficient_data: return "InsufficientData";
    case Errc::degenerate_estimate: return "DegenerateEstimate";
    case Errc::invalid_step: return "InvalidStep";
    case Errc::unsupported_dim: return "UnsupportedDim";
    case Errc::no_closed_form: return "NoClosedForm";
    case Errc::beyond_horizon: return "BeyondHorizon";
    case Errc::quadrature_failure: return "QuadratureFailure";
    case Errc::unbounded_potential: return "UnboundedPotential";
    case Errc::non_brownian_path: return "NonBrownianPath";
    case Errc::recurrent_process: return "RecurrentProcess";
    case Errc::mesh_too_coarse: return "MeshTooCoarse";
    case Errc::unsupported_process: return "UnsupportedProcess";
    case Errc::singular_pencil: return "SingularPencil";
    case Errc::bandwidth_too_small: return "BandwidthTooSmall";
    case Errc::tail_bias_too_large: return "TailBiasTooLarge";
    case Errc::config_error: return "ConfigError";
    case Errc::io_error: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline double norm(PointView x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

inline double dist(PointView x, PointView y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return std::sqrt(s);
}

// volume of the unit ball in R^d
inline double unit_ball_volume(int d) {
  return std::pow(kPi, 0.5 * d) / std::tgamma(0.5 * d + 1.0);
}

// surface area of the unit sphere in R^d
inline double unit_sphere_area(int d) { return d * unit_ball_volume(d); }

enum class Tri { yes, no, inconclusive };

inline const char* tri_name(Tri t) {
  switch (t) {
    case Tri::yes: return "yes";
    case Tri::no: return "no";
    default: return "inconclusive";
  }
}

// log-spaced grid, both ends inclusive
inline std::vector<double> logspace(double a, double b, int n) {
  std::vector<double> out(n);
  const double la = std::log(a), lb = std::log(b);
  for (int i = 0; i < n; ++i) out[i] = std::exp(la + (lb - la) * i / std::max(1, n - 1));
  return out;
}

inline std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = a + (b - a) * i / std::max(1, n - 1);
  return out;
}

}  // namespace fklab
