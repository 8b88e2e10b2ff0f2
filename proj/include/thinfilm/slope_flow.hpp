#ifndef THINFILM_SLOPE_FLOW_HPP
#define THINFILM_SLOPE_FLOW_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "thinfilm/energetics.hpp"
#include "thinfilm/errors.hpp"
#include "thinfilm/grid.hpp"

namespace thinfilm {

struct SlopeConfig {
  double dt = 1e-9;
  /// Fraction of the RK4 linear stability limit actually used.
  double safety = 0.25;
  double u_floor = 1e-3;

  void validate() const {
    if (!(dt > 0.0)) throw Error("SlopeConfig: dt must be positive");
    if (!(safety > 0.0 && safety <= 1.0)) throw Error("SlopeConfig: safety must lie in (0,1]");
    if (!(u_floor > 0.0)) throw Error("SlopeConfig: u_floor must be positive");
  }
};

/// Extent of the classical RK4 stability region on the negative real axis.
inline constexpr double kRk4RealStability = 2.785;

namespace detail {

inline void require_positive_slope(const Field& u, const char* who) {
  const double m = min_value(u);
  if (!(m > 0.0))
    throw NonPositiveSlope(std::string(who) + ": min(u) = " + std::to_string(m));
}

}  // namespace detail

/// -u^2 d4(u^3).
inline Field u_rhs(const Field& u) {
  detail::require_positive_slope(u, "u_rhs");
  const Field cube = map(u, [](double x) { return x * x * x; });
  Field r = d4(cube);
  for (int i = 0; i < u.size(); ++i) r[i] *= -u[i] * u[i];
  return r;
}

/// Largest explicit step for which the linearization -3 u^4 d2 d2 stays
/// inside the RK4 stability interval, scaled by cfg.safety.
inline double slope_stable_dt(const Field& u, const SlopeConfig& cfg) {
  const double umax = max_value(u);
  const double rho = u.grid().d2_spectral_radius();
  return cfg.safety * kRk4RealStability / (3.0 * std::pow(umax, 4) * rho * rho);
}

struct SlopeStep {
  Field u;
  double dt = 0.0;
};

/// One RK4 step of size min(cfg.dt, dt_cap, stable dt). A step that
/// leaves u nonpositive is rejected and halved, at most 20 times.
inline SlopeStep slope_step(const Field& u, const SlopeConfig& cfg,
                            double dt_cap = std::numeric_limits<double>::infinity()) {
  cfg.validate();
  const double umin = min_value(u);
  if (!(umin > cfg.u_floor))
    throw SlopeDegenerate("slope_step: min(u) = " + std::to_string(umin) +
                              " is below u_floor",
                          0.0);
  double dt = std::min({cfg.dt, dt_cap, slope_stable_dt(u, cfg)});
  const Field k1 = u_rhs(u);
  for (int halving = 0; halving <= 20; ++halving, dt *= 0.5) {
    try {
      const Field k2 = u_rhs(u + (0.5 * dt) * k1);
      const Field k3 = u_rhs(u + (0.5 * dt) * k2);
      const Field k4 = u_rhs(u + dt * k3);
      Field next = u;
      for (int i = 0; i < u.size(); ++i)
        next[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      const double m = min_value(next);
      if (m > 0.0 && std::isfinite(m) && std::isfinite(max_value(next)))
        return {std::move(next), dt};
    } catch (const NonPositiveSlope&) {
      // an intermediate stage left the positive cone; retry smaller
    }
  }
  throw SlopeDegenerate("slope_step: no positive step after 20 halvings", 0.0);
}

/// Integrates from t_from to t_to exactly. SlopeDegenerate carries the
/// time at which u fell below the floor.
inline Field advance_slope(Field u, double t_from, double t_to, const SlopeConfig& cfg,
                           long* steps_taken = nullptr) {
  double t = t_from;
  long steps = 0;
  while (t < t_to) {
    const double remaining = t_to - t;
    try {
      SlopeStep s = slope_step(u, cfg, remaining);
      u = std::move(s.u);
      t = (s.dt >= remaining) ? t_to : t + s.dt;
      ++steps;
    } catch (const SlopeDegenerate& e) {
      throw SlopeDegenerate(e.what(), t);
    }
  }
  if (steps_taken) *steps_taken += steps;
  return u;
}

/// u = 1 / (d2 w + c0).
inline Field u_from_w(const Field& w, const EnergyParams& p) {
  const Field g = curvature(w, p);
  thinfilm::detail::require_positive(g, "u_from_w");
  return map(g, [](double x) { return 1.0 / x; });
}

struct WFromU {
  Field w;
  double c0;
};

/// c0 = dh * sum(1/u) and the mean-zero w with d2 w = 1/u - c0.
inline WFromU w_from_u(const Field& u) {
  detail::require_positive_slope(u, "w_from_u");
  const Field inv = map(u, [](double x) { return 1.0 / x; });
  double s = 0.0;
  for (double v : inv.values()) s += v;
  const double c0 = u.grid().dh() * s;
  Field rhs = inv;
  rhs += -c0;
  return {poisson_solve(project_mean_zero(std::move(rhs))), c0};
}

/// dh * sum(1/u).
inline double inverse_slope_mass(const Field& u) {
  double s = 0.0;
  for (double v : u.values()) s += 1.0 / v;
  return u.grid().dh() * s;
}

}  // namespace thinfilm

#endif  // THINFILM_SLOPE_FLOW_HPP
