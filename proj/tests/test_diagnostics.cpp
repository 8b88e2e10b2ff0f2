#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "thinfilm/diagnostics.hpp"
#include "thinfilm/oracles.hpp"
#include "thinfilm/prox_flow.hpp"

using namespace thinfilm;

namespace {

constexpr double kPi = std::numbers::pi;
const EnergyParams kUnit = EnergyParams::with_c0(1.0);

Field cosine(const Grid& g, int k, double eps) {
  return project_mean_zero(
      Field::sample(g, [&](double h) { return eps * std::cos(2 * kPi * k * h); }));
}

ProxConfig with_tau(double tau) {
  ProxConfig c;
  c.tau = tau;
  return c;
}

}  // namespace

TEST(ViResidual, ZeroStateZeroVelocityIsNonnegative) {
  const Field w(Grid(32));
  EXPECT_GE(vi_residual(w, w, kUnit), 0.0);
}

TEST(ViResidual, MinimalSectionSatisfiesInequality) {
  const Grid g(64);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Field w = random_domain_field(g, kUnit, rng, 4, 0.6);
    EXPECT_GE(vi_residual(w, -grad_phi(w, kUnit), kUnit), -1e-8);
  }
}

TEST(ViResidual, WrongSignVelocityIsDetected) {
  const Grid g(64);
  const Field w = cosine(g, 1, 0.01);
  EXPECT_LT(vi_residual(w, grad_phi(w, kUnit), kUnit), -1e-3);
}

TEST(ViResidual, InfeasibleStateThrows) {
  const Grid g(64);
  const Field w = cosine(g, 1, 1.0);
  EXPECT_THROW(vi_residual(w, w, kUnit), DomainViolation);
}

TEST(ViResidual, AllSamplesInfeasibleGivesInfinity) {
  const Grid g(32);
  const Field w = cosine(g, 1, 1e-3);
  const std::vector<Field> bad{cosine(g, 1, 1.0)};
  EXPECT_TRUE(std::isinf(vi_residual(w, w, kUnit, bad)));
}

TEST(ViResidual, SampleFamilyShape) {
  const Grid g(32);
  const auto fam = vi_sample_family(cosine(g, 1, 1e-3), kUnit);
  EXPECT_EQ(fam.size(), 11u);
  for (const auto& v : fam) {
    EXPECT_TRUE(is_mean_zero(v));
    EXPECT_TRUE(in_domain(v, kUnit));
  }
}

TEST(StrongResidual, ZeroCase) {
  const Field w(Grid(32));
  EXPECT_EQ(strong_residual(w, w, kUnit), 0.0);
}

TEST(StrongResidual, WrongSignIsTwiceGradient) {
  const Grid g(64);
  const Field w = cosine(g, 2, 0.002);
  const Field gr = grad_phi(w, kUnit);
  EXPECT_NEAR(strong_residual(w, gr, kUnit), 2 * l2_norm(gr), 1e-12 * l2_norm(gr));
}

TEST(StrongResidual, OutsideDomainThrows) {
  const Grid g(64);
  const Field w = cosine(g, 1, 1.0);
  EXPECT_THROW(strong_residual(w, w, kUnit), NonPositiveCurvature);
}

TEST(Dissipation, ConstantZeroTrajectoryPassesWithZeroMargins) {
  const Trajectory t = evolve(Field(Grid(32)), 1e-6, with_tau(1e-7), kUnit);
  const DissipationReport r = dissipation_report(t);
  EXPECT_TRUE(r.pass());
  EXPECT_EQ(r.phi_worst_increase, 0.0);
  EXPECT_EQ(r.E_worst_excess, 0.0);
  EXPECT_EQ(r.step_norm_worst_excess, 0.0);
  EXPECT_TRUE(all_pass(record_invariants(t)));
}

TEST(Dissipation, LinearDecayRunApproachesJensenFloor) {
  const Grid g(64);
  const Trajectory t = evolve(cosine(g, 1, 0.01), 4e-3, with_tau(4e-5), kUnit);
  EXPECT_TRUE(dissipation_report(t).pass());
  EXPECT_NEAR(t.records.back().phi, 0.5, 1e-9);
  EXPECT_GT(t.records.front().phi, t.records.back().phi);
}

TEST(Dissipation, InjectedIncreaseFlagged) {
  const Trajectory t = evolve(cosine(Grid(32), 1, 0.01), 1e-6, with_tau(1e-7), kUnit);
  auto rec = t.records;
  rec[4].phi = rec[3].phi + 1e-9;
  const DissipationReport r = dissipation_report(rec);
  EXPECT_FALSE(r.phi_nonincreasing);
  EXPECT_EQ(r.phi_violations, std::vector<std::size_t>{4});
  auto rec2 = t.records;
  rec2[3].E = ExtReal(rec2[0].E.value() * 1.1);
  rec2[6].step_norm = rec2[0].step_norm * 1.01;
  const DissipationReport r2 = dissipation_report(rec2);
  EXPECT_EQ(r2.E_violations, std::vector<std::size_t>{3});
  EXPECT_EQ(r2.step_violations, std::vector<std::size_t>{6});
  EXPECT_THROW(dissipation_report(std::vector<DiagnosticsRecord>{}), Error);
}

TEST(Dissipation, InfiniteInitialEnergySkipsBound) {
  std::vector<DiagnosticsRecord> rec(2);
  rec[0].E = ExtReal::infinity();
  rec[1].t = 1;
  rec[1].E = ExtReal(5.0);
  const DissipationReport r = dissipation_report(rec);
  EXPECT_FALSE(r.E_checked);
  EXPECT_TRUE(r.E_bounded);
}

TEST(Records, EvolveStepsSatisfyDiscreteVi) {
  const Grid g(64);
  std::mt19937_64 rng(12);
  const ProxConfig cfg = with_tau(5e-6);
  const Trajectory t = evolve(random_domain_field(g, kUnit, rng, 4, 0.7), 1e-4, cfg, kUnit);
  for (const auto& r : t.records) {
    EXPECT_GE(r.vi_min, -1e-8);
    EXPECT_NEAR(r.mass, 1.0, 1e-12);
  }
  EXPECT_TRUE(strong_residual_check(t, cfg.newton_tol).pass);
}

TEST(Checks, MarginSign) {
  const Check up{"u", true, 1.0, 3.0, ""};
  const Check lo{"l", false, 1.0, 3.0, "", Check::Bound::lower};
  EXPECT_EQ(up.margin(), 2.0);
  EXPECT_EQ(lo.margin(), -2.0);
}

TEST(Atoms, StationaryDatumHasOneAtomAtOrigin) {
  const StationaryParams sp{0.5, 1.0};
  const AtomReport r =
      detect_atoms(stationary_parabola(sp, Grid(128)), stationary_parabola(sp, Grid(256)), kUnit, 0.1);
  ASSERT_EQ(r.atoms.size(), 1u);
  EXPECT_EQ(r.atoms[0].position, 0.0);
  EXPECT_NEAR(r.atoms[0].fine_mass, sp.a, 0.1 * sp.a);
  EXPECT_NEAR(r.atoms[0].ratio, 1.0, 0.05);
}

TEST(Atoms, InfiniteThresholdGivesNothing) {
  const StationaryParams sp{0.5, 1.0};
  const AtomReport r = detect_atoms(stationary_parabola(sp, Grid(64)),
                                    stationary_parabola(sp, Grid(128)), kUnit,
                                    std::numeric_limits<double>::infinity());
  EXPECT_TRUE(r.atoms.empty());
}

TEST(Atoms, ResolutionsMustBeOneToTwo) {
  EXPECT_THROW(detect_atoms(Field(Grid(64)), Field(Grid(64)), kUnit, 0.1), GridMismatch);
  EXPECT_THROW(detect_atoms(Field(Grid(64)), Field(Grid(256)), kUnit, 0.1), GridMismatch);
}

TEST(Atoms, SmoothRunsHaveNoneAboveSmallThresholds) {
  const Field c0 = cosine(Grid(64), 1, 0.01), f0 = cosine(Grid(128), 1, 0.01);
  const Trajectory tc = evolve(c0, 1e-5, with_tau(1e-6), kUnit);
  const Trajectory tf = evolve(f0, 1e-5, with_tau(1e-6), kUnit);
  for (double th : {0.05, 0.1, 0.5})
    EXPECT_TRUE(detect_atoms(tc, tf, th).atoms.empty());
}

TEST(Atoms, RunsMustShareFinalTime) {
  const Trajectory tc = evolve(cosine(Grid(32), 1, 0.01), 1e-6, with_tau(1e-7), kUnit);
  const Trajectory tf = evolve(cosine(Grid(64), 1, 0.01), 2e-6, with_tau(1e-7), kUnit);
  EXPECT_THROW(detect_atoms(tc, tf, 0.1), GridMismatch);
}
