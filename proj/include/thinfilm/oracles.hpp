#ifndef THINFILM_ORACLES_HPP
#define THINFILM_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <limits>
#include <random>
#include <vector>

#include "thinfilm/energetics.hpp"
#include "thinfilm/errors.hpp"
#include "thinfilm/grid.hpp"

namespace thinfilm {

struct StationaryParams {
  /// Mass of the atom at h = 0; the absolutely continuous part is c0 - a.
  double a = 0.5;
  double c0 = 1.0;

  void validate() const {
    if (!(c0 > 0.0)) throw Error("StationaryParams: c0 must be positive");
    if (!(a > 0.0 && a < c0)) throw Error("StationaryParams: need 0 < a < c0");
  }
};

/// Continuum profile (a/2) (-(h - 1/2)^2 + 1/12) on [0,1), extended
/// periodically. Its second derivative is -a + a delta_0; a = 2 is the
/// unshifted profile -(h -+ 1/2)^2 + 1/12.
inline double stationary_profile(double a, double h) {
  double x = h - std::floor(h);  // [0,1)
  const double d = x - 0.5;
  return 0.5 * a * (-d * d + 1.0 / 12.0);
}

/// Samples of the stationary profile, shifted to exact discrete mean zero.
/// Its fd3 second derivative is -a except a/dh - a at cell 0.
inline Field stationary_parabola(const StationaryParams& sp, const Grid& grid) {
  sp.validate();
  return project_mean_zero(
      Field::sample(grid, [&](double h) { return stationary_profile(sp.a, h); }));
}

struct DecayRate {
  /// 3 c0^{-4} (2 pi k)^4
  double continuum;
  /// 3 c0^{-4} Lambda(k)^2 with Lambda the discrete d2 symbol
  double grid_corrected;
};

/// Decay rate of the mode cos(2 pi k h) for the flow linearized about w = 0.
inline DecayRate linear_decay_rate(int k, double c0, const Grid& grid) {
  if (k < 1 || k > grid.n() / 4) throw Error("linear_decay_rate: need 1 <= k <= n/4");
  if (!(c0 > 0.0)) throw Error("linear_decay_rate: c0 must be positive");
  const double w = 2.0 * std::numbers::pi * k;
  const double lam = grid.d2_symbol(k);
  const double s = 3.0 / std::pow(c0, 4);
  return {s * w * w * w * w, s * lam * lam};
}

struct BruteForceOptions {
  double grad_tol = 1e-9;
  long max_iter = 1'000'000;
};

/// Minimizes phi(v) + ||v - w||^2 / (2 tau) over mean-zero v by gradient
/// descent with Barzilai-Borwein trial steps, Armijo backtracking and
/// backoff from the boundary of the domain. Objective differences are
/// evaluated in a cancellation-free form so Armijo stays meaningful down to
/// gradient norms near 1e-9.
inline Field brute_force_prox(const Field& w, double tau, const EnergyParams& p,
                              const BruteForceOptions& opt = {}) {
  if (!in_domain(w, p)) throw DomainViolation("brute_force_prox: w outside the domain");
  if (!(tau > 0.0)) throw Error("brute_force_prox: tau must be positive");
  const double dh = w.grid().dh();
  const int n = w.size();

  auto gradient = [&](const Field& v) {
    Field gr = v - w;
    gr *= 1.0 / tau;
    gr += grad_phi(v, p);
    return project_mean_zero(std::move(gr));
  };
  // Q(v + s) - Q(v), or +inf if v + s leaves the domain.
  auto objective_change = [&](const Field& v, const Field& gv, const Field& s) {
    const Field ds = d2(s);
    double dphi = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = gv[i], d = ds[i];
      const double y = x + d;
      if (!(y > 0.0)) return std::numeric_limits<double>::infinity();
      dphi += -0.5 * d * (2.0 * x + d) / (x * x * y * y);
    }
    double dq = 0.0;
    for (int i = 0; i < n; ++i) dq += s[i] * (2.0 * (v[i] - w[i]) + s[i]);
    return dh * dphi + dh * dq / (2.0 * tau);
  };

  Field v = w;
  Field gr = gradient(v);
  double step = tau;
  Field prev_v = v, prev_g = gr;
  for (long it = 0; it < opt.max_iter; ++it) {
    const double gnorm = l2_norm(gr);
    if (gnorm <= opt.grad_tol) return v;
    if (it > 0) {
      const Field sv = v - prev_v;
      const Field sg = gr - prev_g;
      const double sy = inner(sv, sg);
      if (sy > 0.0) step = inner(sv, sv) / sy;
    }
    const Field gv = curvature(v, p);
    bool accepted = false;
    for (int bt = 0; bt < 200; ++bt) {
      const Field s = -step * gr;
      const double dq = objective_change(v, gv, s);
      if (dq <= -1e-4 * step * gnorm * gnorm) {
        prev_v = v;
        prev_g = gr;
        v += s;
        gr = gradient(v);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) throw NoConvergence("brute_force_prox: line search failed");
  }
  throw NoConvergence("brute_force_prox: iteration limit reached");
}

/// Random mean-zero trigonometric polynomial with modes 1..max_mode,
/// scaled so that max |d2 w| = curvature_fraction * c0.
inline Field random_domain_field(const Grid& grid, const EnergyParams& p,
                                 std::mt19937_64& rng, int max_mode = 4,
                                 double curvature_fraction = 0.3) {
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  std::vector<double> a(max_mode + 1), b(max_mode + 1);
  for (int k = 1; k <= max_mode; ++k) {
    a[k] = coef(rng) / (k * k);
    b[k] = coef(rng) / (k * k);
  }
  Field w = Field::sample(grid, [&](double h) {
    double s = 0.0;
    for (int k = 1; k <= max_mode; ++k) {
      const double x = 2.0 * std::numbers::pi * k * h;
      s += a[k] * std::cos(x) + b[k] * std::sin(x);
    }
    return s;
  });
  w = project_mean_zero(std::move(w));
  const double m = max_abs(d2(w));
  if (m > 0.0) w *= curvature_fraction * p.c0 / m;
  return w;
}

}  // namespace thinfilm

#endif  // THINFILM_ORACLES_HPP
