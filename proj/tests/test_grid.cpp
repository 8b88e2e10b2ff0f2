#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "thinfilm/grid.hpp"
#include "thinfilm/oracles.hpp"

using namespace thinfilm;

namespace {

constexpr double kPi = std::numbers::pi;

Field random_mean_zero(const Grid& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Field f(g);
  for (int i = 0; i < g.n(); ++i) f[i] = nd(rng);
  return project_mean_zero(std::move(f));
}

class BothKinds : public ::testing::TestWithParam<D2Kind> {};

}  // namespace

TEST(Grid, RejectsTinyAndOddSpectral) {
  EXPECT_THROW(Grid(4), Error);
  EXPECT_THROW(Grid(33, D2Kind::spectral), Error);
  EXPECT_NO_THROW(Grid(33, D2Kind::fd3));
}

TEST(Grid, CoordinatesAreUniform) {
  const Grid g(64);
  EXPECT_DOUBLE_EQ(g.dh(), 1.0 / 64);
  EXPECT_DOUBLE_EQ(g.coord(0), 0.0);
  EXPECT_DOUBLE_EQ(g.coord(32), 0.5);
}

TEST(Field, ArithmeticOnMismatchedGridsThrows) {
  Field a(Grid(16)), b(Grid(32));
  EXPECT_THROW(a += b, GridMismatch);
  Field c(Grid(16, D2Kind::spectral));
  EXPECT_THROW(a - c, GridMismatch);
}

TEST_P(BothKinds, SecondDerivativeOfZeroIsZero) {
  const Grid g(32, GetParam());
  EXPECT_EQ(max_abs(d2(Field(g))), 0.0);
}

TEST(D2, Fd3CosineIsExactEigenvector) {
  const Grid g(64);
  const double dh = g.dh();
  const Field f = Field::sample(g, [](double h) { return std::cos(2 * kPi * h); });
  const double lam = -(2.0 / (dh * dh)) * (1.0 - std::cos(2 * kPi * dh));
  const Field r = d2(f);
  for (int i = 0; i < g.n(); ++i) EXPECT_NEAR(r[i], lam * f[i], 1e-10);
  EXPECT_DOUBLE_EQ(g.d2_symbol(1), -lam);
}

TEST(D2, SpectralCosineMatchesContinuum) {
  const Grid g(64, D2Kind::spectral);
  const Field f = Field::sample(g, [](double h) { return std::cos(2 * kPi * h); });
  const Field r = d2(f);
  for (int i = 0; i < g.n(); ++i) EXPECT_NEAR(r[i], -4 * kPi * kPi * f[i], 1e-10);
}

TEST(D2, SpectralHigherModeAndSine) {
  const Grid g(64, D2Kind::spectral);
  const Field f = Field::sample(g, [](double h) { return std::sin(2 * kPi * 5 * h); });
  const Field r = d2(f);
  const double lam = std::pow(2 * kPi * 5, 2);
  for (int i = 0; i < g.n(); ++i) EXPECT_NEAR(r[i], -lam * f[i], 1e-9);
}

TEST_P(BothKinds, D2IsSymmetric) {
  const Grid g(48, GetParam());
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Field a = random_mean_zero(g, 2 * s), b = random_mean_zero(g, 2 * s + 1);
    const double lhs = inner(d2(a), b), rhs = inner(a, d2(b));
    EXPECT_NEAR(lhs, rhs, 1e-12 * (1 + std::abs(lhs)) * g.d2_spectral_radius());
  }
}

TEST_P(BothKinds, D2AnnihilatesMean) {
  const Grid g(40, GetParam());
  Field f = random_mean_zero(g, 3);
  f += 5.0;
  const Field r = d2(f);
  EXPECT_NEAR(mean(r), 0.0, 1e-15 * max_abs(r));
}

TEST_P(BothKinds, D4MatchesTwoSecondDerivatives) {
  const Grid g(64, GetParam());
  const Field f = random_mean_zero(g, 11);
  const Field a = d4(f), b = d2(d2(f));
  EXPECT_LE(max_abs(a - b), 1e-9 * max_abs(b));
}

TEST_P(BothKinds, PoissonInvertsD2) {
  const Grid g(64, GetParam());
  const Field f = random_mean_zero(g, 5);
  EXPECT_LE(max_abs(poisson_solve(d2(f)) - f), 1e-10);
  const Field r = random_mean_zero(g, 6);
  const Field sol = poisson_solve(r);
  EXPECT_LE(max_abs(d2(sol) - r), 1e-12 * max_abs(r) * 1e3);
  EXPECT_TRUE(is_mean_zero(sol));
}

TEST_P(BothKinds, PoissonOfZeroIsZero) {
  const Grid g(32, GetParam());
  EXPECT_EQ(max_abs(poisson_solve(Field(g))), 0.0);
}

TEST_P(BothKinds, PoissonRejectsNonzeroMean) {
  const Grid g(32, GetParam());
  Field r(g);
  r += 1.0;
  EXPECT_THROW(poisson_solve(r), NonZeroMean);
}

TEST_P(BothKinds, DenseD2MatchesOperator) {
  const Grid g(16, GetParam());
  const auto D = dense_d2(g);
  const Field f = random_mean_zero(g, 9);
  const Field r = d2(f);
  for (int i = 0; i < g.n(); ++i) {
    double s = 0;
    for (int j = 0; j < g.n(); ++j) s += D[i * g.n() + j] * f[j];
    EXPECT_NEAR(s, r[i], 1e-9);
  }
}

TEST(Norms, ZeroField) {
  const Norms nz = norms(Field(Grid(32)));
  EXPECT_EQ(nz.l2, 0.0);
  EXPECT_EQ(nz.tilde_v, 0.0);
}

TEST(Norms, CosineL2) {
  const double eps = 0.3;
  const Grid g(64);
  const Field f = Field::sample(g, [&](double h) { return eps * std::cos(2 * kPi * h); });
  EXPECT_NEAR(norms(f).l2, eps / std::sqrt(2.0), 1e-10);
}

TEST(Norms, StationaryTotalMassIsTwiceAtom) {
  const Field w = stationary_parabola({1.0, 2.0}, Grid(256));
  EXPECT_NEAR(norms(w).tilde_v, 2.0, 0.05 * 2.0);
}

TEST(Field, CosineAmplitude) {
  const Grid g(32);
  const Field f = Field::sample(g, [](double h) {
    return 0.7 * std::cos(2 * kPi * 2 * h) + 0.1 * std::cos(2 * kPi * h);
  });
  EXPECT_NEAR(cosine_amplitude(f, 2), 0.7, 1e-14);
  EXPECT_NEAR(cosine_amplitude(f, 1), 0.1, 1e-14);
}

namespace thinfilm {
void PrintTo(D2Kind k, std::ostream* os) { *os << to_string(k); }
}  // namespace thinfilm

INSTANTIATE_TEST_SUITE_P(Kinds, BothKinds, ::testing::Values(D2Kind::fd3, D2Kind::spectral),
                         [](const auto& info) { return std::string(to_string(info.param)); });
