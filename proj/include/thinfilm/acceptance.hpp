#ifndef THINFILM_ACCEPTANCE_HPP
#define THINFILM_ACCEPTANCE_HPP

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "thinfilm/app.hpp"

namespace thinfilm::acceptance {

namespace fs = std::filesystem;

struct CriterionResult {
  int id = 0;
  std::string title;
  std::vector<Check> checks;
  double seconds = 0.0;
  double limit_seconds = 0.0;
  /// Supplementary measurements printed next to the verdict.
  std::vector<std::string> notes;
  std::optional<std::string> error;

  bool within_time() const { return seconds <= limit_seconds; }
  bool pass() const { return !error && all_pass(checks) && within_time(); }
};

struct Options {
  fs::path out_dir = "acceptance_out";
  bool quiet = false;
  /// Called once per finished criterion.
  std::function<void(const CriterionResult&)> on_result;
};

namespace detail {

inline std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

inline EnergyParams unit_params() { return EnergyParams::with_c0(1.0); }

inline Field cosine(const Grid& g, int k, double eps) {
  const double wk = 2.0 * std::numbers::pi * k;
  return project_mean_zero(Field::sample(g, [&](double h) { return eps * std::cos(wk * h); }));
}

/// Least-squares slope of log|amplitude| against t.
inline double fitted_decay_rate(const Trajectory& traj, int k) {
  double st = 0, sy = 0, stt = 0, sty = 0;
  const auto m = static_cast<double>(traj.states.size());
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    const double t = traj.records[i].t;
    const double y = std::log(std::abs(cosine_amplitude(traj.states[i], k)));
    st += t;
    sy += y;
    stt += t * t;
    sty += t * y;
  }
  return -(m * sty - st * sy) / (m * stt - st * st);
}

}  // namespace detail

// Shared scenario of criteria 3, 7 and 9.
inline app::RunConfig smooth_run_config(const fs::path& out) {
  app::RunConfig c;
  c.mode = app::Mode::prox;
  c.n = 128;
  c.n_given = true;
  c.c0 = 1.0;
  c.initial.kind = app::InitialSpec::Kind::cosine;
  c.initial.k = 1;
  c.initial.eps = 0.01;
  c.tau = 1e-7;
  c.prox.tau = 1e-7;
  c.t_final = 1e-5;
  c.out_dir = out;
  return c;
}

inline CriterionResult criterion1() {
  CriterionResult r{1, "resolvent nonexpansive", {}, 0, 60};
  const Grid g(64);
  const app::ResolventStudy s =
      app::resolvent_study(g, detail::unit_params(), ProxConfig{}, {1e-6, 1e-4}, 100, 1, false);
  r.checks.push_back({"nonexpansive", s.max_excess <= 1e-10, s.max_excess, 1e-10,
                      "max ||Jx - Jy|| - ||x - y|| over 100 pairs per tau"});
  return r;
}

inline CriterionResult criterion2() {
  CriterionResult r{2, "Newton resolvent vs brute-force prox", {}, 0, 120};
  const EnergyParams p = detail::unit_params();
  double worst = 0.0;
  for (int n : {8, 16}) {
    const Grid g(n);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(seed);
      const Field w = random_domain_field(g, p, rng, 4, 0.3);
      for (double tau : {1e-6, 1e-4}) {
        ProxConfig cfg;
        cfg.tau = tau;
        const ProxResult res = resolvent(w, cfg, p);
        worst = std::max(worst, l2_norm(res.w_next - brute_force_prox(w, res.tau_used, p)));
      }
    }
  }
  r.checks.push_back({"oracle_gap", worst <= 1e-6, worst, 1e-6, "max l2 gap, 80 solves"});
  return r;
}

inline CriterionResult criterion3(const Trajectory& traj) {
  CriterionResult r{3, "dissipation suite on the smooth run", {}, 0, 60};
  r.checks = dissipation_checks(dissipation_report(traj), traj.records);
  for (auto& c : record_invariants(traj))
    if (c.name != "vi_residual") r.checks.push_back(c);
  return r;
}

inline CriterionResult criterion4() {
  CriterionResult r{4, "linearized decay rates", {}, 0, 60};
  const Grid g(128);
  const EnergyParams p = detail::unit_params();
  ProxConfig cfg;
  cfg.tau = 1e-7;
  for (int k : {1, 2}) {
    const Trajectory traj = evolve(detail::cosine(g, k, 1e-4), 1e-5, cfg, p);
    const double fit = detail::fitted_decay_rate(traj, k);
    const DecayRate rate = linear_decay_rate(k, p.c0, g);
    const double eg = std::abs(fit - rate.grid_corrected) / rate.grid_corrected;
    const double ec = std::abs(fit - rate.continuum) / rate.continuum;
    const std::string ks = std::to_string(k);
    r.checks.push_back({"k" + ks + "_grid_corrected", eg <= 5e-3, eg, 5e-3,
                        "relative error of fitted rate " + detail::fmt("%.6g", fit)});
    r.checks.push_back({"k" + ks + "_continuum", ec <= 2e-2, ec, 2e-2,
                        "relative error against " + detail::fmt("%.6g", rate.continuum)});
  }
  return r;
}

inline CriterionResult criterion5() {
  CriterionResult r{5, "stationary singular solution", {}, 0, 120};
  const StationaryParams sp{0.5, 1.0};
  const EnergyParams p = detail::unit_params();
  const app::StationaryStudy s =
      app::stationary_study(sp, p, {64, 128, 256, 512}, D2Kind::fd3, 0.1);
  r.checks = app::stationary_checks(s, sp.a, 0.8);
  std::string mx = "max-norm residuals:", weak = "orders of max |d2^-2 residual|:";
  for (double v : s.residual_max) mx += detail::fmt(" %.4g", v);
  for (double v : s.order_weak) weak += detail::fmt(" %.3f", v);
  r.notes.push_back(mx);
  r.notes.push_back(weak);
  return r;
}

struct CrossModel {
  std::vector<double> taus;
  std::vector<double> mismatch;
  std::vector<app::CompareRow> finest_rows;
};

inline CrossModel cross_model_study() {
  const Grid g(128);
  const Field u0 = Field::sample(
      g, [](double h) { return 1.0 + 0.1 * std::cos(2.0 * std::numbers::pi * h); });
  const WFromU init = w_from_u(u0);
  const EnergyParams p = EnergyParams::with_c0(init.c0);
  CrossModel cm;
  for (double tau : {4e-7, 2e-7, 1e-7}) {
    ProxConfig prox;
    prox.tau = tau;
    SlopeConfig slope;
    slope.dt = tau / 10.0;
    app::CompareRun run = app::compare_engines(init.w, u0, p, 1e-5, prox, slope);
    if (run.degenerate_time) throw SlopeDegenerate(run.degenerate_message, *run.degenerate_time);
    cm.taus.push_back(tau);
    cm.mismatch.push_back(run.rows.back().relative);
    cm.finest_rows = std::move(run.rows);
  }
  return cm;
}

inline CriterionResult criterion6(const fs::path& out) {
  CriterionResult r{6, "cross-model agreement", {}, 0, 300};
  const CrossModel cm = cross_model_study();
  app::write_compare_csv(out / "compare.csv", cm.finest_rows);
  const double finest = cm.mismatch.back();
  r.checks.push_back({"mismatch", finest <= 1e-3, finest, 1e-3,
                      "relative l2 mismatch at tau = 1e-7"});
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < cm.mismatch.size(); ++i)
    worst = std::min(worst, std::log2(cm.mismatch[i] / cm.mismatch[i + 1]));
  r.checks.push_back({"order", worst >= 0.8, worst, 0.8,
                      "min observed order under tau halving", Check::Bound::lower});
  std::string m = "mismatch at tau 4e-7, 2e-7, 1e-7:";
  for (double v : cm.mismatch) m += detail::fmt(" %.3g", v);
  r.notes.push_back(m);
  return r;
}

inline CriterionResult criterion7(const Trajectory& traj, double newton_tol) {
  CriterionResult r{7, "variational inequality and strong residual", {}, 0, 60};
  for (auto& c : record_invariants(traj))
    if (c.name == "vi_residual") r.checks.push_back(c);
  r.checks.push_back(strong_residual_check(traj, newton_tol));
  return r;
}

/// Directions nearly orthogonal to the gradient are redrawn: the relative
/// error is not defined for them.
inline CriterionResult criterion8() {
  CriterionResult r{8, "gradient vs finite differences", {}, 0, 60};
  const Grid g(64);
  const EnergyParams p = detail::unit_params();
  const double s = 1e-7;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const Field w = random_domain_field(g, p, rng, 4, 0.3);
    const Field gr = grad_phi(w, p);
    Field v = random_domain_field(g, p, rng, 4, 0.3);
    while (std::abs(inner(gr, v)) < 0.1 * l2_norm(gr) * l2_norm(v))
      v = random_domain_field(g, p, rng, 4, 0.3);
    const double fd = (phi(w + s * v, p).value() - phi(w, p).value()) / s;
    const double an = inner(gr, v);
    worst = std::max(worst, std::abs(fd - an) / std::abs(an));
  }
  r.checks.push_back({"relative_error", worst <= 1e-6, worst, 1e-6,
                      "max relative error, forward difference s = 1e-7"});
  return r;
}

inline CriterionResult criterion9(const fs::path& out, const fs::path& reference) {
  CriterionResult r{9, "deterministic diagnostics", {}, 0, 120};
  const std::string ref = io::read_file(reference);
  int identical = 0;
  for (const char* name : {"repeat_a", "repeat_b"}) {
    const fs::path dir = out / name;
    app::run_config(smooth_run_config(dir), {true});
    identical += io::read_file(dir / "diagnostics.csv") == ref ? 1 : 0;
  }
  r.checks.push_back({"byte_identical", identical == 2, static_cast<double>(identical), 2.0,
                      "repeated runs matching the reference diagnostics.csv",
                      Check::Bound::lower});
  return r;
}

inline std::string format_line(const CriterionResult& r) {
  std::string s = r.pass() ? "PASS" : "FAIL";
  s += " criterion " + std::to_string(r.id) + " (" + r.title + ")";
  for (const auto& c : r.checks) {
    s += c.pass ? " | " : " | FAILED ";
    s += c.name + "=" + detail::fmt("%.4g", c.value) +
         (c.bound == Check::Bound::upper ? " <= " : " >= ") + detail::fmt("%.4g", c.threshold);
  }
  if (r.error) s += " | error: " + *r.error;
  s += " | " + detail::fmt("%.2f", r.seconds) + " s (limit " +
       detail::fmt("%.0f", r.limit_seconds) + " s" + (r.within_time() ? ")" : ", EXCEEDED)");
  return s;
}

/// Runs criteria 1 to 9. out_dir receives diagnostics.csv from the smooth
/// run, compare.csv from the cross-model study and report.json.
inline std::vector<CriterionResult> run_all(const Options& opt) {
  fs::create_directories(opt.out_dir);
  std::vector<CriterionResult> results;
  auto timed = [&](int id, auto&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    CriterionResult r;
    try {
      r = body();
    } catch (const std::exception& e) {
      r.id = id;
      r.title = "criterion " + std::to_string(id);
      r.limit_seconds = 0;
      r.error = e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (opt.on_result) opt.on_result(r);
    results.push_back(std::move(r));
  };

  timed(1, [] { return criterion1(); });
  timed(2, [] { return criterion2(); });

  // 3 and 7 share one trajectory; its runtime is charged to 3.
  std::optional<Trajectory> smooth;
  const app::RunConfig sc = smooth_run_config(opt.out_dir);
  timed(3, [&] {
    const app::Prepared prep = app::prepare_initial(sc);
    smooth = evolve(prep.w0, sc.t_final, sc.prox, prep.p);
    io::write_diagnostics_csv(opt.out_dir / "diagnostics.csv", smooth->records);
    return criterion3(*smooth);
  });
  timed(4, [] { return criterion4(); });
  timed(5, [] { return criterion5(); });
  timed(6, [&] { return criterion6(opt.out_dir); });
  timed(7, [&] {
    if (!smooth) throw Error("smooth run unavailable");
    return criterion7(*smooth, sc.prox.newton_tol);
  });
  timed(8, [] { return criterion8(); });
  timed(9, [&] { return criterion9(opt.out_dir, opt.out_dir / "diagnostics.csv"); });

  app::json rep = app::json::array();
  for (const auto& r : results) {
    app::json checks = app::json::array();
    for (const auto& c : r.checks) checks.push_back(app::to_json(c));
    rep.push_back({{"criterion", r.id},
                   {"title", r.title},
                   {"pass", r.pass()},
                   {"checks", checks},
                   {"notes", r.notes},
                   {"error", r.error ? app::json(*r.error) : app::json(nullptr)}});
  }
  std::ofstream(opt.out_dir / "report.json", std::ios::binary) << rep.dump(2) << '\n';
  return results;
}

}  // namespace thinfilm::acceptance

#endif  // THINFILM_ACCEPTANCE_HPP
