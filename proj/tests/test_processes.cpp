#include <gtest/gtest.h>

#include <cmath>

#include "fklab/processes.hpp"
#include "fklab/quadrature.hpp"
#include "fklab/stats.hpp"

using namespace fklab;
using namespace fklab::processes;

TEST(Spec, Validation) {
  EXPECT_NO_THROW(brownian(3).validate());
  ProcessSpec s = stable(1.5);
  s.dim = 2;
  EXPECT_THROW(s.validate(), Error);
  EXPECT_THROW(stable(2.0).validate(), Error);
  EXPECT_THROW(stable(1.0, 0.0).validate(), Error);
  EXPECT_THROW(brownian(1, -1.0).validate(), Error);
}

TEST(Spec, Transience) {
  EXPECT_FALSE(brownian(1).transient());
  EXPECT_TRUE(brownian(3).transient());
  EXPECT_TRUE(brownian(1, 0.5).transient());
  EXPECT_FALSE(stable(1.0).transient());
  EXPECT_TRUE(stable(0.5).transient());
}

TEST(Spec, KindNames) {
  for (Kind k : {Kind::brownian, Kind::brownian_killed_alpha, Kind::alpha_stable_1d}) EXPECT_EQ(kind_from_name(kind_name(k)), k);
  EXPECT_THROW(kind_from_name("levy"), Error);
}

TEST(Density, GaussianNormalized) {
  const auto spec = brownian(1);
  const auto r = quad::gk([&](double y) { return transition_density_r(spec, 0.7, std::abs(y)); }, -kInf, kInf);
  EXPECT_NEAR(r.value, 1.0, 1e-10);
}

TEST(Density, KillingFactor) {
  const auto s0 = brownian(1), s1 = brownian(1, 0.3);
  EXPECT_NEAR(transition_density_r(s1, 2.0, 0.5), std::exp(-0.6) * transition_density_r(s0, 2.0, 0.5), 1e-15);
}

TEST(Density, CauchyClosedForm) {
  const auto spec = stable(1.0);
  for (double t : {0.5, 1.0, 3.0})
    for (double r : {0.0, 0.4, 2.0}) EXPECT_NEAR(transition_density_r(spec, t, r), t / (kPi * (t * t + r * r)), 1e-14);
}

TEST(Density, StableOracleValues) {
  // mpmath Fourier inversion of exp(-|xi|^1.5)
  const auto spec = stable(1.5);
  EXPECT_NEAR(transition_density_r(spec, 1.0, 0.5), 0.26229684036390461, 1e-9);
  EXPECT_NEAR(transition_density_r(spec, 1.0, 1.0), 0.20203815960957512, 1e-9);
  EXPECT_NEAR(transition_density_r(spec, 1.0, 3.0), 0.031509423616436235, 1e-9);
  EXPECT_NEAR(transition_density_r(spec, 1.0, 10.0), 0.001047776024934927, 1e-10);
  EXPECT_NEAR(transition_density_r(spec, 1.0, 0.0), std::tgamma(1.0 + 1.0 / 1.5) / kPi, 1e-12);
}

TEST(Density, StableScaling) {
  const auto spec = stable(1.5);
  for (double t : {0.3, 2.0})
    for (double r : {0.2, 1.7}) {
      const double s = std::pow(t, 1.0 / 1.5);
      EXPECT_NEAR(transition_density_r(spec, t, r), transition_density_r(spec, 1.0, r / s) / s, 1e-10);
    }
}

TEST(Density, StableNormalizedAndHeavyTailed) {
  const auto spec = stable(1.5);
  const auto r = quad::gk([&](double y) { return 2.0 * transition_density_r(spec, 1.0, y); }, 0.0, kInf, 1e-9);
  EXPECT_NEAR(r.value, 1.0, 1e-6);
  // tail ~ C_alpha t r^{-1-alpha}
  const double r0 = 200.0;
  EXPECT_NEAR(transition_density_r(spec, 1.0, r0) / levy_density(1.5, r0), 1.0, 0.02);
}

TEST(Resolvent, BrownianClosedForms) {
  EXPECT_NEAR(resolvent_kernel_r(brownian(1), 2.0, 0.5), std::exp(-2.0 * 0.5) / 2.0, 1e-15);
  EXPECT_NEAR(resolvent_kernel_r(brownian(3), 0.0, 2.0), 1.0 / (4.0 * kPi), 1e-15);
  EXPECT_NEAR(resolvent_kernel_r(brownian(3), 0.5, 1.0), std::exp(-1.0) / (2.0 * kPi), 1e-15);
  EXPECT_TRUE(std::isinf(resolvent_kernel_r(brownian(1), 0.0, 1.0)));
  EXPECT_THROW(resolvent_kernel_r(brownian(1), -1.0, 1.0), Error);
}

TEST(Resolvent, MatchesTimeIntegral) {
  for (const auto& spec : {brownian(3), brownian(4), stable(1.5)}) {
    const double a = 0.7, r = 0.8;
    auto f = [&](double t) { return std::exp(-a * t) * transition_density_r(spec, t, r); };
    const double ref = quad::gk(f, 0.0, 1.0, 1e-10).value + quad::gk(f, 1.0, kInf, 1e-10).value;
    EXPECT_NEAR(resolvent_kernel_r(spec, a, r), ref, 1e-6 * ref) << spec.dim;
  }
}

TEST(Resolvent, StableRieszPotential) {
  // alpha-stable Green kernel in d=1, index 0.5 < 1
  const auto spec = stable(0.5);
  const double r = 1.3, s = 0.5;
  const double ex = std::tgamma(0.5 * (1 - s)) / (std::pow(2.0, s) * std::sqrt(kPi) * std::tgamma(0.5 * s)) * std::pow(r, s - 1);
  EXPECT_NEAR(resolvent_kernel_r(spec, 0.0, r), ex, 1e-14);
}

TEST(Levy, RatesConsistent) {
  const double a = 1.2;
  EXPECT_NEAR(jump_count_rate(a, 0.5, kInf), large_jump_rate(a, 0.5), 1e-14);
  EXPECT_NEAR(jump_count_rate(a, 0.5, 1.0) + jump_count_rate(a, 1.0, kInf), jump_count_rate(a, 0.5, kInf), 1e-12);
  // mpmath quadrature of 2 z^2 nu(z) over (0, 0.3)
  EXPECT_NEAR(small_jump_variance(a, 0.3), 0.318271107351059, 1e-13);
}

TEST(Path, DeterministicPerStream) {
  const auto spec = stable(1.3, 0.01);
  const Point x0{0.0};
  const auto a = sample_path(spec, x0, 1.0, 0.01, 7, 3), b = sample_path(spec, x0, 1.0, 0.01, 7, 3);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.pos(i)[0], b.pos(i)[0]);
  const auto c = sample_path(spec, x0, 1.0, 0.01, 7, 4);
  EXPECT_NE(a.pos(a.size() - 1)[0], c.pos(c.size() - 1)[0]);
}

TEST(Path, Errors) {
  const Point x0{0.0};
  EXPECT_THROW(sample_path(brownian(1), x0, 1.0, 0.0, 1), Error);
  EXPECT_THROW(sample_path(brownian(1), x0, 1.0, 2.0, 1), Error);
  EXPECT_THROW(sample_path(brownian(2), x0, 1.0, 0.1, 1), Error);
}

TEST(Path, BrownianVariancePerUnitTime) {
  const auto spec = brownian(2);
  const Point x0{0.0, 0.0};
  Moments m0, m1;
  for (std::uint64_t p = 0; p < 20000; ++p) {
    const auto path = sample_path(spec, x0, 1.5, 0.5, 11, p);
    const auto end = path.pos(path.size() - 1);
    m0.add(end[0]);
    m1.add(end[1]);
  }
  EXPECT_NEAR(m0.var(), 1.5, 0.06);
  EXPECT_NEAR(m1.var(), 1.5, 0.06);
  EXPECT_NEAR(m0.mean, 0.0, 0.03);
}

TEST(Path, KillingProbability) {
  const auto spec = brownian(1, 0.8);
  const Point x0{0.0};
  int killed = 0;
  const int n = 20000;
  for (int p = 0; p < n; ++p) killed += sample_path(spec, x0, 1.0, 0.1, 5, p).killed_at.has_value();
  const double pk = 1.0 - std::exp(-0.8);
  EXPECT_NEAR(static_cast<double>(killed) / n, pk, 4.0 * std::sqrt(pk * (1 - pk) / n));
}

TEST(Path, StableJumpsRecordedAboveCutoff) {
  const double a = 1.0, cut = 0.05;
  const auto spec = stable(a, cut);
  const Point x0{0.0};
  double count = 0.0;
  const int n = 4000;
  for (int p = 0; p < n; ++p) {
    const auto path = sample_path(spec, x0, 1.0, 0.01, 9, p);
    for (const auto& j : path.jumps) {
      ASSERT_GE(std::abs(j.to[0] - j.from[0]), cut * (1 - 1e-12));
      count += 1.0;
    }
  }
  const double rate = large_jump_rate(a, cut);
  EXPECT_NEAR(count / n, rate, 4.0 * std::sqrt(rate / n));
}

TEST(Path, CauchyMarginalQuantiles) {
  // P(|X_1| <= 1) = 1/2 for the standard Cauchy process
  const auto spec = stable(1.0, 0.01);
  const Point x0{0.0};
  int inside = 0;
  const int n = 20000;
  for (int p = 0; p < n; ++p) {
    const auto path = sample_path(spec, x0, 1.0, 0.05, 13, p);
    inside += std::abs(path.pos(path.size() - 1)[0]) <= 1.0;
  }
  EXPECT_NEAR(static_cast<double>(inside) / n, 0.5, 0.015);
}

TEST(Walk, CheckpointsExact) {
  struct Obs {
    std::vector<double> seen;
    void segment(double, PointView, double, PointView) {}
    void jump(double, PointView, PointView) {}
    void checkpoint(std::size_t, double t, PointView) { seen.push_back(t); }
  } obs;
  WalkPlan plan;
  plan.dt = 0.3;
  plan.horizon = 1.0;
  plan.checkpoints = {0.25, 0.5, 1.0};
  Philox rng(1, 1);
  const Point x0{0.0};
  walk(brownian(1), x0, plan, rng, obs);
  ASSERT_EQ(obs.seen.size(), 3u);
  EXPECT_DOUBLE_EQ(obs.seen[0], 0.25);
  EXPECT_DOUBLE_EQ(obs.seen[2], 1.0);
}
