#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "fklab/envelopes.hpp"
#include "fklab/feynman_kac.hpp"
#include "fklab/io.hpp"
#include "fklab/kato.hpp"
#include "fklab/quadrature.hpp"
#include "fklab/rng.hpp"
#include "fklab/spectral.hpp"

using namespace fklab;

namespace {

// hand-rolled generator on top of the counter-based RNG
struct Gen {
  Philox rng;
  explicit Gen(std::uint64_t property) : rng(20261019, property) {}
  double uniform(double a, double b) { return a + (b - a) * rng.uniform(); }
  double log_uniform(double a, double b) { return std::exp(uniform(std::log(a), std::log(b))); }
  int integer(int lo, int hi) { return lo + static_cast<int>(rng.uniform() * (hi - lo + 1)); }
  bool coin() { return rng.uniform() < 0.5; }
  Point point(int d, double scale) {
    Point p(d);
    for (auto& x : p) x = uniform(-scale, scale);
    return p;
  }
  Profile profile(bool singular_ok) {
    switch (integer(0, 2)) {
      case 0: return Profile::uniform_ball(log_uniform(0.1, 3.0), uniform(0.5, 2.0));
      case 1: return Profile::power(log_uniform(0.1, 3.0), singular_ok ? uniform(-2.9, 0.0) : uniform(0.0, 2.0), uniform(0.5, 2.0));
      default: return Profile::gaussian_bump(log_uniform(0.1, 3.0), uniform(0.1, 0.4));
    }
  }
};

constexpr int kCases = 40;

}  // namespace

TEST(Property, TransitionDensitySymmetric) {
  Gen g(1);
  for (int i = 0; i < kCases; ++i) {
    const int d = g.coin() ? 1 : 3;
    const auto spec = d == 1 && g.coin() ? processes::stable(g.uniform(0.3, 1.9)) : processes::brownian(d, g.uniform(0, 1));
    const auto x = g.point(d, 2.0), y = g.point(d, 2.0);
    const double t = g.log_uniform(0.05, 5.0);
    EXPECT_DOUBLE_EQ(processes::transition_density(spec, t, x, y), processes::transition_density(spec, t, y, x));
  }
}

TEST(Property, ChapmanKolmogorov) {
  Gen g(2);
  for (int i = 0; i < 12; ++i) {
    const auto spec = g.coin() ? processes::brownian(1) : processes::stable(g.uniform(0.8, 1.8));
    const double s = g.uniform(0.2, 2.0), t = g.uniform(0.2, 2.0), x = g.uniform(-1, 1), y = g.uniform(-1, 1);
    auto f = [&](double z) {
      return processes::transition_density_r(spec, s, std::abs(x - z)) * processes::transition_density_r(spec, t, std::abs(z - y));
    };
    const double lhs = quad::gk(f, -kInf, std::min(x, y), 1e-10).value + quad::gk(f, std::min(x, y), std::max(x, y), 1e-10).value +
                       quad::gk(f, std::max(x, y), kInf, 1e-10).value;
    const double rhs = processes::transition_density_r(spec, s + t, std::abs(x - y));
    EXPECT_NEAR(lhs, rhs, 1e-6 * rhs) << spec.alpha_stable_index;
  }
}

TEST(Property, ResolventEquation) {
  // R_a R_b = (R_a - R_b)/(b - a) for 1-d Brownian kernels
  Gen g(3);
  const auto spec = processes::brownian(1);
  for (int i = 0; i < kCases; ++i) {
    const double a = g.log_uniform(0.05, 5.0), b = a * g.uniform(1.2, 4.0);
    const double x = g.uniform(-1, 1), y = g.uniform(-1, 1);
    auto f = [&](double z) {
      return processes::resolvent_kernel_r(spec, a, std::abs(x - z)) * processes::resolvent_kernel_r(spec, b, std::abs(z - y));
    };
    const double lo = std::min(x, y), hi = std::max(x, y);
    const double lhs = quad::gk(f, -kInf, lo).value + quad::gk(f, lo, hi).value + quad::gk(f, hi, kInf).value;
    const double rhs =
        (processes::resolvent_kernel_r(spec, a, std::abs(x - y)) - processes::resolvent_kernel_r(spec, b, std::abs(x - y))) / (b - a);
    EXPECT_NEAR(lhs, rhs, 1e-8 * rhs);
  }
}

TEST(Property, ResolventPotentialDecreasingInAlpha) {
  Gen g(4);
  for (int i = 0; i < kCases; ++i) {
    const auto nu = MeasureSpec::positive(g.profile(false));
    const int d = g.coin() ? 1 : 3;
    const auto x = g.point(d, 1.5);
    const double a = g.log_uniform(0.1, 10.0), b = a * g.uniform(1.1, 5.0);
    const auto spec = processes::brownian(d);
    EXPECT_GE(kato::resolvent_potential(nu, a, x, spec), kato::resolvent_potential(nu, b, x, spec));
  }
}

TEST(Property, KhasminskiiMonotoneInCoupling) {
  Gen g(5);
  for (int i = 0; i < 8; ++i) {
    const auto prof = g.profile(false);
    const double c1 = g.uniform(-1.0, 1.0), c2 = c1 + g.uniform(0.1, 1.0);
    auto setup = [&](double c) {
      fk::Setup s;
      s.spec = processes::brownian(1);
      Profile p = prof;
      p.c = std::abs(c) * prof.c;
      s.mu = c >= 0 ? MeasureSpec::positive(p) : MeasureSpec::negative(p);
      return s;
    };
    fk::McOptions o;
    o.n_paths = 500;
    o.seed = 100 + i;
    const auto one = [](PointView) { return 1.0; };
    const Point x{g.uniform(-0.5, 0.5)};
    EXPECT_LE(fk::fk_semigroup(setup(c1), one, 1.0, x, o).value, fk::fk_semigroup(setup(c2), one, 1.0, x, o).value);
  }
}

TEST(Property, ClassLattice) {
  Gen g(6);
  for (int i = 0; i < 20; ++i) {
    const auto nu = MeasureSpec::positive(g.profile(true));
    const auto spec = g.coin() ? processes::brownian(3) : processes::brownian(1, g.coin() ? 0.0 : 0.5);
    const auto r = kato::classify(nu, spec);
    if (r.kato == Tri::yes) { EXPECT_EQ(r.extended_kato, Tri::yes); }
    if (r.extended_kato == Tri::no) { EXPECT_EQ(r.kato, Tri::no); }
    if (r.green_bounded == Tri::yes) { EXPECT_EQ(r.dynkin, Tri::yes); }
    if (r.green_tight == Tri::yes) { EXPECT_EQ(r.green_bounded, Tri::yes); }
    if (r.dynkin == Tri::no) { EXPECT_NE(r.kato, Tri::yes); }
    for (std::size_t k = 1; k < r.sup_R_alpha.size(); ++k)
      if (std::isfinite(r.sup_R_alpha[k])) { EXPECT_LE(r.sup_R_alpha[k], r.sup_R_alpha[k - 1]); }
  }
}

TEST(Property, PhiBigMonotone) {
  Gen g(7);
  for (int i = 0; i < kCases; ++i) {
    const auto phi = envelopes::ScalingFunction::power(g.uniform(1.2, 4.0), g.log_uniform(0.5, 3.0));
    const double s = g.log_uniform(0.05, 5.0), t = g.log_uniform(0.05, 5.0);
    const double v = envelopes::phi_big(s, t, phi);
    EXPECT_LE(v, envelopes::phi_big(s * g.uniform(1.01, 2.0), t, phi));
    EXPECT_GE(v, envelopes::phi_big(s, t * g.uniform(1.01, 2.0), phi));
  }
}

TEST(Property, EnvelopeDecreasingInDistance) {
  Gen g(8);
  for (int i = 0; i < kCases; ++i) {
    const int d = g.coin() ? 1 : 3;
    const auto fam = g.coin() || d == 3 ? envelopes::gaussian_heat_family(d) : envelopes::stable_jump_family(g.uniform(0.5, 1.9));
    const double t = g.log_uniform(0.1, 10.0), r = g.uniform(0.0, 4.0);
    const Point x(d, 0.0);
    EXPECT_GE(envelopes::eval_envelope_r(fam, t, x, r), envelopes::eval_envelope_r(fam, t, x, r + g.uniform(0.01, 1.0)));
  }
}

TEST(Property, KernelDeterministicAcrossThreads) {
  Gen g(9);
  for (int i = 0; i < 3; ++i) {
    fk::Setup s;
    s.spec = processes::brownian(1);
    s.mu = MeasureSpec::positive(g.profile(false));
    fk::KernelOptions o;
    o.n_paths = 6000;
    o.seed = static_cast<std::uint64_t>(g.integer(1, 1 << 20));
    const std::vector<std::pair<Point, Point>> pairs{{Point{0.0}, Point{0.5}}, {Point{0.3}, Point{0.3}}};
    o.threads = 1;
    const auto a = fk::fk_kernel(s, {0.5, 1.0}, pairs, o);
    o.threads = 3;
    const auto b = fk::fk_kernel(s, {0.5, 1.0}, pairs, o);
    EXPECT_EQ(a.values, b.values);
    EXPECT_EQ(a.ci_half_width, b.ci_half_width);
  }
}

TEST(Property, StollmannVoigt) {
  // int f^2 dmu <= ||R_0 mu||_inf E(f,f): the bottom of the pencil is >= 1/sup R_0 mu
  Gen g(10);
  for (int i = 0; i < 10; ++i) {
    const auto prof = g.profile(false);
    const auto mu = MeasureSpec::positive(prof);
    const auto spec = processes::brownian(3);
    const double h = prof.radius / 16, L = 4 * prof.radius;
    const auto D = spectral::assemble(spec, nullptr, mu, nullptr, {h, L});
    const double lam = spectral::takeda_lambda(mu, MeasureSpec::zero(), D).lambda;
    const double sup = kato::detail::sup_potential(mu, 0.0, spec, 41);
    EXPECT_GE(lam * sup, 0.98) << lam << " " << sup;
  }
}

TEST(Property, FormEquivalence) {
  Gen g(11);
  for (int i = 0; i < 10; ++i) {
    const auto prof = g.profile(false);
    const auto mu = MeasureSpec::positive(prof);
    const auto spec = g.coin() ? processes::brownian(1) : processes::brownian(3);
    const spectral::Mesh m{prof.radius / 16, 4 * prof.radius};
    const auto D = spectral::assemble(spec, nullptr, mu, nullptr, m);
    const double t = spectral::takeda_lambda(mu, MeasureSpec::zero(), D).lambda;
    spectral::SpectralProblem p{spec, std::nullopt, mu, std::nullopt, 0.0};
    EXPECT_NEAR(p.solve(m).lambda, t - 1.0, 1e-7 * std::max(1.0, std::abs(t)));
  }
}

TEST(Property, PencilMatchesDenseSolver) {
  Gen g(12);
  for (int i = 0; i < kCases; ++i) {
    const int n = g.integer(2, 12);
    Eigen::MatrixXd M(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) M(r, c) = g.uniform(-1, 1);
    const Eigen::MatrixXd A = M + M.transpose() + g.uniform(-1.0, 4.0) * Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd b(n);
    for (int k = 0; k < n; ++k) b[k] = g.uniform(0.1, 2.0);
    const Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(A, b.asDiagonal().toDenseMatrix());
    const auto r = spectral::solve_pencil(A.sparseView(), b);
    EXPECT_NEAR(r.lambda, es.eigenvalues()[0], 1e-7 * std::max(1.0, std::abs(r.lambda)));
  }
}

TEST(Property, RichardsonExactOnPowerLaws) {
  Gen g(13);
  for (int i = 0; i < kCases; ++i) {
    const double a = g.uniform(-2, 2), b = g.uniform(0.1, 3) * (g.coin() ? 1 : -1), p = g.uniform(1.0, 3.0);
    std::vector<spectral::MeshRow> rows;
    for (double h : {0.1, 0.05, 0.025}) rows.push_back({{h, 1.0}, a + b * std::pow(h, p), true});
    const auto st = spectral::richardson(rows);
    EXPECT_NEAR(st.extrapolated, a, 1e-9);
    EXPECT_NEAR(st.observed_order, p, 1e-9);
  }
}

TEST(Property, CsvFormatRoundTrip) {
  Gen g(14);
  for (int i = 0; i < 200; ++i) {
    const double x = g.log_uniform(1e-12, 1e12) * (g.coin() ? 1 : -1);
    EXPECT_NEAR(std::stod(io::fmt(x)), x, 1e-9 * std::abs(x));
  }
}

TEST(Property, FitConstantScalesWithKernel) {
  // multiplying an exact kernel by s in [1, 4] multiplies the upper constant by s
  Gen g(15);
  const auto fam = envelopes::gaussian_heat_family(1);
  for (int i = 0; i < 10; ++i) {
    const double s = g.uniform(1.0, 4.0);
    std::vector<std::pair<Point, Point>> pairs;
    const std::vector<double> pts{0.0, 0.5, 1.0, 2.0};
    for (std::size_t a = 0; a < pts.size(); ++a)
      for (std::size_t b = a; b < pts.size(); ++b) pairs.emplace_back(Point{pts[a]}, Point{pts[b]});
    auto est = KernelEstimate::shaped({0.5, 1.0, 2.0}, pairs);
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < pairs.size(); ++k)
        est.values[j][k] = s * processes::gaussian_density(1, est.t_values[j], dist(pairs[k].first, pairs[k].second));
    const auto v = envelopes::fit_envelope(est, fam, false);
    EXPECT_TRUE(v.passed_upper);
    EXPECT_NEAR(v.C2, s, 1e-6 * s);
    EXPECT_EQ(v.c2, 1.0);
  }
}
