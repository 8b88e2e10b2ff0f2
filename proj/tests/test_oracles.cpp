#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "thinfilm/oracles.hpp"
#include "thinfilm/prox_flow.hpp"

using namespace thinfilm;

namespace {
constexpr double kPi = std::numbers::pi;
const EnergyParams kUnit = EnergyParams::with_c0(1.0);
}  // namespace

TEST(StationaryProfile, UnshiftedNormalizationAtOrigin) {
  EXPECT_DOUBLE_EQ(stationary_profile(2.0, 0.0), -1.0 / 6.0);
}

TEST(StationaryProfile, EvenAndPeriodic) {
  for (double a : {0.3, 1.0, 2.0})
    for (double h : {0.1, 0.25, 0.4})
      EXPECT_NEAR(stationary_profile(a, h), stationary_profile(a, -h), 1e-15);
  EXPECT_NEAR(stationary_profile(1.0, 0.3), stationary_profile(1.0, 1.3), 1e-15);
}

TEST(StationaryParabola, ParamsValidated) {
  EXPECT_THROW(stationary_parabola({1.0, 1.0}, Grid(32)), Error);
  EXPECT_THROW(stationary_parabola({-0.1, 1.0}, Grid(32)), Error);
}

TEST(StationaryParabola, DiscreteCurvatureIsFlatPlusSpike) {
  const double a = 0.5;
  const Grid g(64);
  const Field w = stationary_parabola({a, 1.0}, g);
  EXPECT_NEAR(mean(w), 0.0, 1e-14);
  const Field s = d2(w);
  EXPECT_NEAR(s[0], a / g.dh() - a, 1e-9);
  for (int i = 1; i < g.n(); ++i) EXPECT_NEAR(s[i], -a, 1e-9);
}

TEST(StationaryParabola, MaxNormResidualGrowsUnderRefinement) {
  // The spike carries (c0 - a)^{-3} - (c0 - a + a/dh)^{-3}, whose second
  // difference is about 2 (c0 - a)^{-3} / dh^2 at the spike.
  const StationaryParams sp{0.5, 1.0};
  double prev = 0;
  for (int n : {64, 128, 256}) {
    const Field r = grad_phi(stationary_parabola(sp, Grid(n)), kUnit);
    const double m = max_abs(r);
    EXPECT_NEAR(m * std::pow(1.0 / n, 2), 2.0 * 8.0, 0.01 * 16.0);
    if (prev > 0) EXPECT_NEAR(m / prev, 4.0, 0.02);
    prev = m;
  }
}

TEST(StationaryParabola, WeakResidualIsFirstOrder) {
  const StationaryParams sp{0.5, 1.0};
  double prev = 0;
  for (int n : {64, 128, 256, 512}) {
    const Field r = grad_phi(stationary_parabola(sp, Grid(n)), kUnit);
    const double m = max_abs(poisson_solve(poisson_solve(r)));
    if (prev > 0) EXPECT_NEAR(prev / m, 2.0, 0.05);
    prev = m;
  }
}

TEST(LinearDecayRate, ContinuumValues) {
  const Grid g(128);
  const DecayRate r1 = linear_decay_rate(1, 1.0, g);
  EXPECT_NEAR(r1.continuum, 4675.6363696, 1e-6);
  EXPECT_NEAR(linear_decay_rate(2, 1.0, g).continuum / r1.continuum, 16.0, 1e-12);
  EXPECT_NEAR(linear_decay_rate(1, 2.0, g).continuum, r1.continuum / 16.0, 1e-9);
}

TEST(LinearDecayRate, GridCorrectedUsesStencilSymbol) {
  const Grid g(128);
  const double dh = g.dh();
  const double lam = (2 / (dh * dh)) * (1 - std::cos(2 * kPi * dh));
  EXPECT_NEAR(linear_decay_rate(1, 1.0, g).grid_corrected, 3 * lam * lam, 1e-9);
  const Grid s(128, D2Kind::spectral);
  const DecayRate rs = linear_decay_rate(3, 1.0, s);
  EXPECT_NEAR(rs.grid_corrected, rs.continuum, 1e-9 * rs.continuum);
}

TEST(LinearDecayRate, RangeChecked) {
  const Grid g(32);
  EXPECT_THROW(linear_decay_rate(0, 1.0, g), Error);
  EXPECT_THROW(linear_decay_rate(9, 1.0, g), Error);
  EXPECT_NO_THROW(linear_decay_rate(8, 1.0, g));
}

TEST(BruteForceProx, ZeroIsFixed) {
  EXPECT_EQ(max_abs(brute_force_prox(Field(Grid(16)), 1e-4, kUnit)), 0.0);
}

TEST(BruteForceProx, AgreesWithNewton) {
  const Grid g(16);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const Field w = random_domain_field(g, kUnit, rng);
    ProxConfig cfg;
    cfg.tau = 1e-4;
    const Field v = resolvent(w, cfg, kUnit).w_next;
    EXPECT_LE(l2_norm(v - brute_force_prox(w, 1e-4, kUnit)), 1e-6);
  }
}

TEST(BruteForceProx, SmallTauMovesAtMostTwiceGradientStep) {
  const Grid g(16);
  std::mt19937_64 rng(8);
  const Field w = random_domain_field(g, kUnit, rng);
  const double gn = l2_norm(grad_phi(w, kUnit));
  for (double tau : {1e-5, 1e-6, 1e-7}) {
    const Field v = brute_force_prox(w, tau, kUnit);
    EXPECT_LE(l2_norm(v - w), 2 * tau * gn);
  }
}

TEST(BruteForceProx, RejectsOutsideDomain) {
  const Grid g(16);
  const Field w = project_mean_zero(
      Field::sample(g, [](double h) { return std::cos(2 * kPi * h); }));
  EXPECT_THROW(brute_force_prox(w, 1e-4, kUnit), DomainViolation);
}

TEST(RandomDomainField, CurvatureFractionHonoured) {
  const Grid g(64);
  std::mt19937_64 rng(2);
  const Field w = random_domain_field(g, kUnit, rng, 4, 0.3);
  EXPECT_NEAR(max_abs(d2(w)), 0.3, 1e-12);
  EXPECT_TRUE(is_mean_zero(w));
  std::mt19937_64 again(2);
  EXPECT_EQ(random_domain_field(g, kUnit, again, 4, 0.3), w);
}
