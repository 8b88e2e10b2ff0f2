#ifndef THINFILM_DIAGNOSTICS_HPP
#define THINFILM_DIAGNOSTICS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "thinfilm/energetics.hpp"
#include "thinfilm/errors.hpp"
#include "thinfilm/grid.hpp"
#include "thinfilm/trajectory.hpp"

namespace thinfilm {

/// Outcome of one named check with the measured value and its threshold.
/// Upper checks pass for value <= threshold, lower ones for value >= threshold.
struct Check {
  enum class Bound { upper, lower };

  std::string name;
  bool pass = false;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
  Bound bound = Bound::upper;

  /// Distance to the threshold on the passing side; negative on failure.
  double margin() const { return bound == Bound::upper ? threshold - value : value - threshold; }
};

inline bool all_pass(const std::vector<Check>& checks) {
  return std::all_of(checks.begin(), checks.end(),
                     [](const Check& c) { return c.pass; });
}

// ---------------------------------------------------------------------------
// Variational inequality and strong form

/// Fixed test family for the variational inequality at w:
/// 0, (1 +- s) w for s in {0.1, 0.5}, and w +- eps sin(2 pi k h)/(2 pi k)^2
/// for k = 1, 2, 3 with eps = min(d2 w + c0) / 2.
inline std::vector<Field> vi_sample_family(const Field& w, const EnergyParams& p) {
  std::vector<Field> out;
  out.emplace_back(w.grid());
  for (double s : {0.1, 0.5}) {
    out.push_back((1.0 + s) * w);
    out.push_back((1.0 - s) * w);
  }
  const double eps = 0.5 * std::max(min_curvature(w, p), 0.0);
  for (int k = 1; k <= 3; ++k) {
    const double wk = 2.0 * std::numbers::pi * k;
    const Field bump = project_mean_zero(Field::sample(
        w.grid(), [wk](double h) { return std::sin(wk * h) / (wk * wk); }));
    out.push_back(w + eps * bump);
    out.push_back(w - eps * bump);
  }
  return out;
}

/// min over samples v of <wdot, v - w> + (phi+psi)(v) - (phi+psi)(w);
/// samples with infinite value are skipped. +inf if every sample is skipped.
inline double vi_residual(const Field& w, const Field& wdot, const EnergyParams& p,
                          const std::vector<Field>& samples) {
  const ExtReal fw = phi_plus_psi(w, p);
  if (fw.is_infinite()) throw DomainViolation("vi_residual: w is not feasible");
  double best = std::numeric_limits<double>::infinity();
  for (const Field& v : samples) {
    const ExtReal fv = phi_plus_psi(v, p);
    if (fv.is_infinite()) continue;
    const double r = inner(wdot, v - w) + fv.value() - fw.value();
    best = std::min(best, r);
  }
  return best;
}

inline double vi_residual(const Field& w, const Field& wdot, const EnergyParams& p) {
  return vi_residual(w, wdot, p, vi_sample_family(w, p));
}

/// ||wdot - d2((d2 w + c0)^{-3})||.
inline double strong_residual(const Field& w, const Field& wdot, const EnergyParams& p) {
  const Field g = curvature(w, p);
  detail::require_positive(g, "strong_residual");
  return l2_norm(wdot - d2(detail::inverse_cube(g)));
}

inline DiagnosticsRecord make_record(double t, const Field& w, const Field& wdot,
                                     const EnergyParams& p) {
  DiagnosticsRecord r;
  const Field g = curvature(w, p);
  r.t = t;
  r.phi = phi_of_curvature(g).to_double();
  r.E = energy_E(w, p);
  r.mass = mass(w, p);
  r.min_g = min_value(g);
  r.tilde_v = norms(w).tilde_v;
  r.step_norm = l2_norm(wdot);
  r.vi_min = vi_residual(w, wdot, p);
  r.strong_residual = strong_residual(w, wdot, p);
  return r;
}

/// Record of the initial datum: wdot is the minimal section -grad_phi(w0).
inline DiagnosticsRecord initial_record(const Field& w0, const EnergyParams& p) {
  return make_record(0.0, w0, -grad_phi(w0, p), p);
}

// ---------------------------------------------------------------------------
// Trajectory-level reports

struct DissipationReport {
  bool phi_nonincreasing = true;
  double phi_worst_increase = 0.0;
  std::vector<std::size_t> phi_violations;

  /// False when E(0) is infinite; the E bound is then not applied.
  bool E_checked = false;
  bool E_bounded = true;
  double E_worst_excess = 0.0;
  std::vector<std::size_t> E_violations;

  bool step_norm_bounded = true;
  double step_norm_worst_excess = 0.0;
  std::vector<std::size_t> step_violations;

  bool pass() const { return phi_nonincreasing && E_bounded && step_norm_bounded; }
};

inline constexpr double kPhiStepTol = 1e-12;
inline constexpr double kERelTol = 1e-8;
inline constexpr double kEAbsTol = 1e-12;
inline constexpr double kStepNormRelTol = 1e-6;

/// Monotonicity of phi, the E bound and the step-norm bound along records.
inline DissipationReport dissipation_report(const std::vector<DiagnosticsRecord>& rec) {
  if (rec.empty()) throw Error("dissipation_report: empty trajectory");
  DissipationReport rep;
  for (std::size_t i = 1; i < rec.size(); ++i) {
    const double inc = rec[i].phi - rec[i - 1].phi;
    rep.phi_worst_increase = std::max(rep.phi_worst_increase, inc);
    if (inc > kPhiStepTol) rep.phi_violations.push_back(i);
  }
  rep.phi_nonincreasing = rep.phi_violations.empty();

  rep.E_checked = rec.front().E.is_finite();
  if (rep.E_checked) {
    const double e0 = rec.front().E.value();
    const double bound = e0 * (1.0 + kERelTol) + kEAbsTol;
    for (std::size_t i = 1; i < rec.size(); ++i) {
      const double ei = rec[i].E.to_double();
      rep.E_worst_excess = std::max(rep.E_worst_excess, ei - e0);
      if (!(ei <= bound)) rep.E_violations.push_back(i);
    }
    rep.E_bounded = rep.E_violations.empty();
  }

  const double s0 = rec.front().step_norm;
  for (std::size_t i = 1; i < rec.size(); ++i) {
    const double ex = rec[i].step_norm - s0;
    rep.step_norm_worst_excess = std::max(rep.step_norm_worst_excess, ex);
    if (rec[i].step_norm > s0 * (1.0 + kStepNormRelTol)) rep.step_violations.push_back(i);
  }
  rep.step_norm_bounded = rep.step_violations.empty();
  return rep;
}

inline DissipationReport dissipation_report(const Trajectory& traj) {
  return dissipation_report(traj.records);
}

inline std::vector<Check> dissipation_checks(const DissipationReport& rep,
                                             const std::vector<DiagnosticsRecord>& rec) {
  std::vector<Check> out;
  out.push_back({"phi_nonincreasing", rep.phi_nonincreasing, rep.phi_worst_increase,
                 kPhiStepTol, "largest per-step increase of phi"});
  if (rep.E_checked) {
    const double e0 = rec.front().E.value();
    const double rel = e0 > 0.0 ? rep.E_worst_excess / e0 : rep.E_worst_excess;
    out.push_back({"E_bounded", rep.E_bounded, rel, kERelTol, "max (E(t) - E(0)) / E(0)"});
  } else {
    out.push_back({"E_bounded", true, 0.0, kERelTol, "E(0) infinite, bound not applied"});
  }
  const double s0 = rec.front().step_norm;
  const double rel = s0 > 0.0 ? rep.step_norm_worst_excess / s0 : rep.step_norm_worst_excess;
  out.push_back({"step_norm_bounded", rep.step_norm_bounded, rel, kStepNormRelTol,
                 "max (|wdot| - |grad phi(w0)|) / |grad phi(w0)|"});
  return out;
}

/// Per-record invariants: conserved mass, positivity, invariant ball, VI.
inline std::vector<Check> record_invariants(const Trajectory& traj) {
  const EnergyParams& p = traj.params;
  double mass_dev = 0.0, min_g = std::numeric_limits<double>::infinity();
  double max_tv = 0.0, vi = std::numeric_limits<double>::infinity();
  for (const auto& r : traj.records) {
    mass_dev = std::max(mass_dev, std::abs(r.mass - p.c0));
    min_g = std::min(min_g, r.min_g);
    max_tv = std::max(max_tv, r.tilde_v);
    vi = std::min(vi, r.vi_min);
  }
  return {
      {"mass_conserved", mass_dev <= 1e-12, mass_dev, 1e-12, "max |mass - c0|"},
      {"positivity", min_g > 0.0, min_g, 0.0, "min over steps of min(d2 w + c0)",
       Check::Bound::lower},
      {"invariant_ball", max_tv <= p.cap_C, max_tv, p.cap_C, "max tilde_v"},
      {"vi_residual", vi >= -1e-8, vi, -1e-8, "min vi_min", Check::Bound::lower},
  };
}

/// Strong-form residual at accepted steps against
/// 10 * (newton_tol * (1 + ||w^{n+1}||) + ||grad_phi(w^{n+1}) - grad_phi(w^n)||).
inline Check strong_residual_check(const Trajectory& traj, double newton_tol) {
  double worst_ratio = 0.0;
  std::size_t worst = 0;
  for (std::size_t i = 1; i < traj.states.size(); ++i) {
    const Field& w1 = traj.states[i];
    const Field& w0 = traj.states[i - 1];
    const double lip = l2_norm(grad_phi(w1, traj.params) - grad_phi(w0, traj.params));
    const double bound = 10.0 * (newton_tol * (1.0 + l2_norm(w1)) + lip);
    const double r = traj.records[i].strong_residual;
    const double ratio = bound > 0.0 ? r / bound : (r > 0.0 ? 2.0 : 0.0);
    if (ratio > worst_ratio) {
      worst_ratio = ratio;
      worst = i;
    }
  }
  return {"strong_residual", worst_ratio <= 1.0, worst_ratio, 1.0,
          "max residual/bound ratio (step " + std::to_string(worst) + ")"};
}

// ---------------------------------------------------------------------------
// Atom detection

struct Atom {
  double position = 0.0;
  double coarse_mass = 0.0;
  double fine_mass = 0.0;
  double ratio = 0.0;
};

struct AtomReport {
  std::vector<Atom> atoms;
};

inline constexpr int kAtomHalfWindow = 2;  // cells each side: width 4 dh
inline constexpr double kAtomRatioCutoff = 0.9;

namespace detail {

inline double window_mass(const Field& s, int centre) {
  const int n = s.size();
  double m = 0.0;
  for (int j = centre - kAtomHalfWindow; j <= centre + kAtomHalfWindow; ++j)
    m += s[((j % n) + n) % n];
  return s.grid().dh() * m;
}

}  // namespace detail

/// Compares final states of runs at n and 2n. Around each maximum of d2 w
/// over its own window (first index on ties) the mass over a 4-cell-wide
/// window is measured on each grid; mass that persists under refinement
/// (ratio >= 0.9) is reported as an atom.
inline AtomReport detect_atoms(const Field& coarse, const Field& fine,
                               const EnergyParams& p, double threshold) {
  const int nc = coarse.size();
  if (fine.size() != 2 * nc) throw GridMismatch("detect_atoms: resolutions are not 1:2");
  AtomReport rep;
  if (std::isinf(threshold)) return rep;
  const Field sc = d2(coarse);
  const Field sf = d2(fine);
  const int nf = fine.size();
  for (int i = 0; i < nc; ++i) {
    bool window_max = true;
    for (int d = -kAtomHalfWindow; d <= kAtomHalfWindow && window_max; ++d) {
      const double o = sc[((i + d) % nc + nc) % nc];
      window_max = d < 0 ? sc[i] > o : sc[i] >= o;
    }
    if (!window_max) continue;
    const double cm = detail::window_mass(sc, i);
    if (!(cm > threshold * p.c0)) continue;
    int best = 2 * i;
    for (int j = 2 * i - 2 * kAtomHalfWindow; j <= 2 * i + 2 * kAtomHalfWindow; ++j) {
      const int jj = ((j % nf) + nf) % nf;
      if (sf[jj] > sf[best]) best = jj;
    }
    const double fm = detail::window_mass(sf, best);
    const double ratio = fm / cm;
    if (ratio >= kAtomRatioCutoff) rep.atoms.push_back({coarse.grid().coord(i), cm, fm, ratio});
  }
  return rep;
}

inline AtomReport detect_atoms(const Trajectory& run_coarse, const Trajectory& run_fine,
                               double threshold) {
  const double tc = run_coarse.t_final(), tf = run_fine.t_final();
  if (std::abs(tc - tf) > 1e-12 * std::max({1.0, std::abs(tc), std::abs(tf)}))
    throw GridMismatch("detect_atoms: runs end at different times");
  return detect_atoms(run_coarse.final(), run_fine.final(), run_coarse.params, threshold);
}

}  // namespace thinfilm

#endif  // THINFILM_DIAGNOSTICS_HPP
