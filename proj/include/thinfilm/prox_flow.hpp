#ifndef THINFILM_PROX_FLOW_HPP
#define THINFILM_PROX_FLOW_HPP

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>

#include "thinfilm/diagnostics.hpp"
#include "thinfilm/energetics.hpp"
#include "thinfilm/errors.hpp"
#include "thinfilm/grid.hpp"
#include "thinfilm/trajectory.hpp"

namespace thinfilm {

struct ProxConfig {
  double tau = 1e-7;
  double newton_tol = 1e-10;
  int newton_max_iter = 50;
  /// Fraction of the current d2 v + c0 that every cell must keep.
  double boundary_fraction = 0.01;
  double tau_shrink = 0.5;
  double tau_min = 1e-14;

  void validate() const {
    if (!(tau_min > 0.0 && tau > tau_min))
      throw Error("ProxConfig: need tau > tau_min > 0");
    if (!(boundary_fraction > 0.0 && boundary_fraction < 1.0))
      throw Error("ProxConfig: boundary_fraction must lie in (0,1)");
    if (!(tau_shrink > 0.0 && tau_shrink < 1.0))
      throw Error("ProxConfig: tau_shrink must lie in (0,1)");
    if (newton_max_iter < 1) throw Error("ProxConfig: newton_max_iter must be positive");
    if (!(newton_tol > 0.0)) throw Error("ProxConfig: newton_tol must be positive");
  }
};

struct ProxResult {
  Field w_next;
  int iterations = 0;
  double residual_norm = 0.0;
  /// Newton stopped because its correction fell below the rounding
  /// resolution of w_next while the residual was still above newton_tol.
  bool rounding_limited = false;
  /// phi(w) - [phi(w_next) + ||w_next - w||^2 / (2 tau)], nonnegative.
  double objective_decrease = 0.0;
  double tau_used = 0.0;
};

namespace detail {

/// phi(v) + ||v - w||^2 / (2 tau).
inline ExtReal prox_objective(const Field& v, const Field& w, double tau,
                              const EnergyParams& p) {
  const ExtReal f = phi(v, p);
  if (f.is_infinite()) return f;
  const double d = l2_norm(v - w);
  return ExtReal(f.value() + d * d / (2.0 * tau));
}

/// The prox subproblem written in the increment delta = v - w. Curvature is
/// formed as d2(w) + c0 + d2(delta) with the first part computed once, so
/// rounding noise in the residual scales with |delta| rather than |v|; the
/// fourth-order amplification would otherwise put a floor near 1e-9 on the
/// attainable residual on fine grids.
class ProxSubproblem {
 public:
  ProxSubproblem(const Field& w, double tau, const EnergyParams& p)
      : tau_(tau), base_(curvature(w, p)) {}

  Field curvature_at(const Field& delta) const { return base_ + d2(delta); }

  /// delta/tau - d2(g^{-3}).
  Field residual(const Field& delta, const Field& g) const {
    Field r = delta;
    r *= 1.0 / tau_;
    r -= d2(inverse_cube(g));
    return r;
  }

  ExtReal objective(const Field& delta, const Field& g) const {
    const ExtReal f = phi_of_curvature(g);
    if (f.is_infinite()) return f;
    const double d = l2_norm(delta);
    return ExtReal(f.value() + d * d / (2.0 * tau_));
  }

  double tau() const { return tau_; }

 private:
  double tau_;
  Field base_;
};

struct NewtonOutcome {
  bool converged = false;
  Field v;
  int iterations = 0;
  double residual = 0.0;
  bool rounding_limited = false;
};

/// Damped Newton for the prox subproblem starting from v0. The Jacobian
/// I/tau + 3 D2 diag(g^{-4}) D2 is assembled densely and factored by
/// Cholesky. Steps obey the fraction-to-boundary rule on g = d2 v + c0 and
/// are backtracked on the subproblem objective.
inline NewtonOutcome newton_prox(const Field& w, const Field& v0, double tau,
                                 const ProxConfig& cfg, const EnergyParams& p) {
  const Grid& grid = w.grid();
  const int n = grid.n();
  const double tol = cfg.newton_tol * (1.0 + l2_norm(w));
  const std::vector<double> d2_dense = dense_d2(grid);
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                       Eigen::RowMajor>>
      D(d2_dense.data(), n, n);

  const ProxSubproblem sub(w, tau, p);
  Field delta = v0 - w;
  Field g = sub.curvature_at(delta);
  Field res = sub.residual(delta, g);
  double rnorm = l2_norm(res);
  ExtReal obj = sub.objective(delta, g);

  int it = 0;
  for (; it < cfg.newton_max_iter && rnorm > tol; ++it) {
    Eigen::VectorXd weight(n);
    for (int i = 0; i < n; ++i) {
      const double g2 = g[i] * g[i];
      weight[i] = 3.0 / (g2 * g2);
    }
    Eigen::MatrixXd J = D * weight.asDiagonal() * D;
    J.diagonal().array() += 1.0 / tau;
    const Eigen::Map<const Eigen::VectorXd> rhs(res.values().data(), n);
    Eigen::VectorXd step;
    Eigen::LLT<Eigen::MatrixXd> llt(J);
    if (llt.info() == Eigen::Success) {
      step = llt.solve(-rhs);
    } else {
      step = J.ldlt().solve(-rhs);
    }
    const Field dir =
        project_mean_zero(Field(grid, std::vector<double>(step.data(), step.data() + n)));
    // The residual carries rounding noise of order eps |delta| rho(D2)^2 g^{-4};
    // once the correction cannot change v in floating point, stop.
    const double resolution =
        8.0 * std::numeric_limits<double>::epsilon() * (max_abs(w) + max_abs(delta));
    if (max_abs(dir) <= resolution) return {true, w + delta, it, rnorm, true};

    // fraction to the boundary: g + alpha dg >= boundary_fraction * g
    double alpha = 1.0;
    const Field dg = d2(dir);
    for (int i = 0; i < n; ++i) {
      if (dg[i] < 0.0)
        alpha = std::min(alpha, (1.0 - cfg.boundary_fraction) * g[i] / (-dg[i]));
    }
    const double slope = inner(res, dir);
    if (!(slope < 0.0)) break;

    // Armijo on the objective; near the solution, where the predicted
    // decrease is below the rounding level of the objective, a decrease of
    // the residual norm is accepted instead.
    bool accepted = false;
    for (int bt = 0; bt < 60 && !accepted; ++bt, alpha *= 0.5) {
      Field trial = delta + alpha * dir;
      Field tg = sub.curvature_at(trial);
      const ExtReal tobj = sub.objective(trial, tg);
      if (tobj.is_infinite()) continue;
      Field tres = sub.residual(trial, tg);
      const double tnorm = l2_norm(tres);
      const bool armijo = tobj.value() <= obj.value() + 1e-4 * alpha * slope;
      const bool residual_drop = tnorm <= (1.0 - 1e-4 * alpha) * rnorm;
      if (armijo || residual_drop) {
        delta = std::move(trial);
        g = std::move(tg);
        res = std::move(tres);
        rnorm = tnorm;
        obj = tobj;
        accepted = true;
      }
    }
    if (!accepted) break;
  }
  return {rnorm <= tol, w + delta, it, rnorm, false};
}

/// Initial guess with the curvature floor lifted by delta on
/// {d2 w + c0 <= delta}, mean-corrected so the lift integrates to zero.
inline std::optional<Field> lifted_guess(const Field& w, const EnergyParams& p, double delta) {
  const Field g = curvature(w, p);
  Field lift(w.grid());
  int count = 0;
  for (int i = 0; i < g.size(); ++i) {
    if (g[i] <= delta) {
      lift[i] = delta;
      ++count;
    }
  }
  if (count == 0 || count == g.size()) return std::nullopt;
  lift = project_mean_zero(std::move(lift));
  return w + poisson_solve(lift);
}

}  // namespace detail

/// Resolvent (I + tau grad_phi)^{-1} w at the configured tau. On Newton
/// failure the solve is restarted from a lifted guess, then tau is reduced
/// by tau_shrink until it would fall below tau_min.
inline ProxResult resolvent(const Field& w, const ProxConfig& cfg, const EnergyParams& p) {
  cfg.validate();
  const ExtReal f0 = phi(w, p);
  if (f0.is_infinite()) throw DomainViolation("resolvent: w is outside the domain of phi");

  for (double tau = cfg.tau; tau >= cfg.tau_min; tau *= cfg.tau_shrink) {
    auto attempt = detail::newton_prox(w, w, tau, cfg, p);
    if (!attempt.converged) {
      const double delta = 10.0 * cfg.boundary_fraction * p.c0;
      if (auto guess = detail::lifted_guess(w, p, delta);
          guess && in_domain(*guess, p)) {
        attempt = detail::newton_prox(w, std::move(*guess), tau, cfg, p);
      }
    }
    if (attempt.converged) {
      ProxResult r{attempt.v, attempt.iterations, attempt.residual,
                   attempt.rounding_limited, 0.0, tau};
      r.objective_decrease =
          f0.value() - detail::prox_objective(r.w_next, w, tau, p).value();
      return r;
    }
  }
  throw NewtonDiverged("resolvent: Newton failed for every tau down to tau_min");
}

/// Called after each accepted step with (step index, time, state).
using StepObserver = std::function<void(std::size_t, double, const Field&)>;

/// Implicit Euler trajectory w^{n+1} = resolvent(w^n) on [0, t_final].
/// After a tau reduction the step grows back by 1/tau_shrink per step, never
/// beyond the configured tau. The last step is clipped to land on t_final.
inline Trajectory evolve(const Field& w0, double t_final, const ProxConfig& cfg,
                         const EnergyParams& p, const StepObserver& observer = {}) {
  cfg.validate();
  p.validate();
  if (!(t_final > 0.0)) throw Error("evolve: t_final must be positive");
  if (!in_domain(w0, p)) throw DomainViolation("evolve: w0 is outside the domain of phi");
  if (psi(w0, p).is_infinite())
    throw DomainViolation("evolve: w0 is outside the invariant ball");

  Trajectory traj;
  traj.params = p;
  traj.states.push_back(w0);
  traj.records.push_back(initial_record(w0, p));
  if (observer) observer(0, 0.0, w0);

  double t = 0.0;
  double tau_next = cfg.tau;
  while (t < t_final) {
    const double remaining = t_final - t;
    double tau = tau_next;
    bool last = false;
    if (remaining <= tau * (1.0 + 1e-6)) {
      tau = remaining;
      last = true;
    }
    ProxConfig sub = cfg;
    sub.tau = tau;
    sub.tau_min = std::min(cfg.tau_min, 0.5 * tau);
    ProxResult res = [&] {
      try {
        return resolvent(traj.states.back(), sub, p);
      } catch (const NewtonDiverged& e) {
        throw NewtonDiverged(std::string(e.what()) + " at step " +
                                 std::to_string(traj.steps() + 1),
                             static_cast<long>(traj.steps() + 1));
      }
    }();
    if (res.tau_used < tau) last = false;
    t = last ? t_final : t + res.tau_used;

    Field wdot = res.w_next - traj.states.back();
    wdot *= 1.0 / res.tau_used;
    traj.records.push_back(make_record(t, res.w_next, wdot, p));
    traj.taus.push_back(res.tau_used);
    traj.iterations.push_back(res.iterations);
    traj.states.push_back(std::move(res.w_next));
    if (observer) observer(traj.steps(), t, traj.states.back());
    tau_next = std::min(cfg.tau, traj.taus.back() / cfg.tau_shrink);
  }
  return traj;
}

}  // namespace thinfilm

#endif  // THINFILM_PROX_FLOW_HPP
