#ifndef THINFILM_APP_HPP
#define THINFILM_APP_HPP

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "thinfilm/diagnostics.hpp"
#include "thinfilm/energetics.hpp"
#include "thinfilm/errors.hpp"
#include "thinfilm/grid.hpp"
#include "thinfilm/io.hpp"
#include "thinfilm/oracles.hpp"
#include "thinfilm/prox_flow.hpp"
#include "thinfilm/slope_flow.hpp"

namespace thinfilm::app {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 2;
inline constexpr int kExitSolverFailed = 3;
inline constexpr int kExitConfigError = 4;

enum class Mode { prox, slope, compare, stationary_check, resolvent_test };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::prox: return "prox";
    case Mode::slope: return "slope";
    case Mode::compare: return "compare";
    case Mode::stationary_check: return "stationary-check";
    case Mode::resolvent_test: return "resolvent-test";
  }
  return "?";
}

struct InitialSpec {
  enum class Kind { zero, cosine, stationary, file };
  Kind kind = Kind::zero;
  int k = 1;
  double eps = 0.0;
  double a = 0.5;
  std::string path;
};

/// Parsed run configuration. physics holds exactly one of c0 or u_mean;
/// with u_mean the initial profile describes u rather than w.
struct RunConfig {
  Mode mode = Mode::prox;
  int n = 128;
  bool n_given = false;
  D2Kind d2_kind = D2Kind::fd3;
  std::optional<double> c0;
  std::optional<double> u_mean;
  std::optional<double> cap_C;
  InitialSpec initial;
  std::optional<double> tau;
  std::optional<double> dt;
  double t_final = 0.0;
  fs::path out_dir = "out";
  int snapshot_every = 0;
  std::uint64_t seed = 0;
  ProxConfig prox;
  SlopeConfig slope;
  std::optional<double> record_every;
  int pairs = 20;
  std::vector<double> taus{1e-6, 1e-4};
  double oracle_tol = 1e-6;
  std::vector<int> resolutions{64, 128, 256, 512};
  double atom_threshold = 0.1;
  double min_order = 0.8;
  double compare_tol = 1e-3;
};

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline void allow_keys(const json& j, std::initializer_list<const char*> keys,
                       const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(keys.begin(), keys.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

template <class T>
std::optional<T> get_opt(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) return std::nullopt;
  return get<T>(j, key, where);
}

inline double positive(double x, const std::string& what) {
  if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError(what + " must be positive");
  return x;
}

inline Mode parse_mode(const std::string& s) {
  if (s == "prox") return Mode::prox;
  if (s == "slope") return Mode::slope;
  if (s == "compare") return Mode::compare;
  if (s == "stationary-check") return Mode::stationary_check;
  if (s == "resolvent-test") return Mode::resolvent_test;
  throw ConfigError("mode: unknown value '" + s + "'");
}

}  // namespace detail

inline RunConfig parse_config(const json& j) {
  using detail::allow_keys;
  using detail::get;
  using detail::get_opt;
  allow_keys(j, {"mode", "grid", "physics", "initial", "time", "output", "solver", "slope",
                 "resolvent_test", "stationary_check", "compare"},
             "config");
  RunConfig c;
  c.mode = detail::parse_mode(get<std::string>(j, "mode", "config"));

  if (j.contains("grid")) {
    const json& g = j["grid"];
    allow_keys(g, {"n", "d2_kind"}, "grid");
    if (auto n = get_opt<int>(g, "n", "grid")) {
      c.n = *n;
      c.n_given = true;
    }
    if (auto k = get_opt<std::string>(g, "d2_kind", "grid")) {
      if (*k == "fd3") c.d2_kind = D2Kind::fd3;
      else if (*k == "spectral") c.d2_kind = D2Kind::spectral;
      else throw ConfigError("grid.d2_kind: unknown value '" + *k + "'");
    }
  }

  if (j.contains("physics")) {
    const json& ph = j["physics"];
    allow_keys(ph, {"c0", "u_mean", "cap_C"}, "physics");
    c.c0 = get_opt<double>(ph, "c0", "physics");
    c.u_mean = get_opt<double>(ph, "u_mean", "physics");
    c.cap_C = get_opt<double>(ph, "cap_C", "physics");
    if (c.c0 && c.u_mean) throw ConfigError("physics: give c0 or u_mean, not both");
    if (c.c0) detail::positive(*c.c0, "physics.c0");
    if (c.u_mean) detail::positive(*c.u_mean, "physics.u_mean");
  }
  if (!c.c0 && !c.u_mean) c.c0 = 1.0;

  if (j.contains("initial")) {
    const json& in = j["initial"];
    const auto kind = get<std::string>(in, "kind", "initial");
    if (kind == "zero") {
      allow_keys(in, {"kind"}, "initial");
      c.initial.kind = InitialSpec::Kind::zero;
    } else if (kind == "cosine") {
      allow_keys(in, {"kind", "k", "eps"}, "initial");
      c.initial.kind = InitialSpec::Kind::cosine;
      c.initial.k = get_opt<int>(in, "k", "initial").value_or(1);
      c.initial.eps = get<double>(in, "eps", "initial");
      if (c.initial.k < 1) throw ConfigError("initial.k must be at least 1");
    } else if (kind == "stationary") {
      allow_keys(in, {"kind", "a"}, "initial");
      c.initial.kind = InitialSpec::Kind::stationary;
      c.initial.a = get<double>(in, "a", "initial");
    } else if (kind == "file") {
      allow_keys(in, {"kind", "path"}, "initial");
      c.initial.kind = InitialSpec::Kind::file;
      c.initial.path = get<std::string>(in, "path", "initial");
    } else {
      throw ConfigError("initial.kind: unknown value '" + kind + "'");
    }
  }

  if (j.contains("time")) {
    const json& t = j["time"];
    allow_keys(t, {"tau", "dt", "t_final", "record_every"}, "time");
    c.tau = get_opt<double>(t, "tau", "time");
    c.dt = get_opt<double>(t, "dt", "time");
    c.record_every = get_opt<double>(t, "record_every", "time");
    if (auto tf = get_opt<double>(t, "t_final", "time")) c.t_final = *tf;
    if (c.tau) detail::positive(*c.tau, "time.tau");
    if (c.dt) detail::positive(*c.dt, "time.dt");
    if (c.record_every) detail::positive(*c.record_every, "time.record_every");
  }

  if (j.contains("output")) {
    const json& o = j["output"];
    allow_keys(o, {"dir", "snapshot_every", "seed"}, "output");
    if (auto d = get_opt<std::string>(o, "dir", "output")) c.out_dir = *d;
    c.snapshot_every = get_opt<int>(o, "snapshot_every", "output").value_or(0);
    c.seed = get_opt<std::uint64_t>(o, "seed", "output").value_or(0);
    if (c.snapshot_every < 0) throw ConfigError("output.snapshot_every must be nonnegative");
  }

  if (j.contains("solver")) {
    const json& s = j["solver"];
    allow_keys(s, {"newton_tol", "newton_max_iter", "boundary_fraction", "tau_shrink", "tau_min"},
               "solver");
    c.prox.newton_tol = get_opt<double>(s, "newton_tol", "solver").value_or(c.prox.newton_tol);
    c.prox.newton_max_iter =
        get_opt<int>(s, "newton_max_iter", "solver").value_or(c.prox.newton_max_iter);
    c.prox.boundary_fraction =
        get_opt<double>(s, "boundary_fraction", "solver").value_or(c.prox.boundary_fraction);
    c.prox.tau_shrink = get_opt<double>(s, "tau_shrink", "solver").value_or(c.prox.tau_shrink);
    c.prox.tau_min = get_opt<double>(s, "tau_min", "solver").value_or(c.prox.tau_min);
  }
  if (j.contains("slope")) {
    const json& s = j["slope"];
    allow_keys(s, {"safety", "u_floor"}, "slope");
    c.slope.safety = get_opt<double>(s, "safety", "slope").value_or(c.slope.safety);
    c.slope.u_floor = get_opt<double>(s, "u_floor", "slope").value_or(c.slope.u_floor);
  }
  if (j.contains("resolvent_test")) {
    const json& r = j["resolvent_test"];
    allow_keys(r, {"pairs", "taus", "oracle_tol"}, "resolvent_test");
    c.pairs = get_opt<int>(r, "pairs", "resolvent_test").value_or(c.pairs);
    c.taus = get_opt<std::vector<double>>(r, "taus", "resolvent_test").value_or(c.taus);
    c.oracle_tol = get_opt<double>(r, "oracle_tol", "resolvent_test").value_or(c.oracle_tol);
    if (c.pairs < 1 || c.taus.empty()) throw ConfigError("resolvent_test: need pairs and taus");
    for (double t : c.taus) detail::positive(t, "resolvent_test.taus");
  }
  if (j.contains("stationary_check")) {
    const json& s = j["stationary_check"];
    allow_keys(s, {"resolutions", "atom_threshold", "min_order"}, "stationary_check");
    c.resolutions =
        get_opt<std::vector<int>>(s, "resolutions", "stationary_check").value_or(c.resolutions);
    c.atom_threshold =
        get_opt<double>(s, "atom_threshold", "stationary_check").value_or(c.atom_threshold);
    c.min_order = get_opt<double>(s, "min_order", "stationary_check").value_or(c.min_order);
    if (c.resolutions.size() < 2) throw ConfigError("stationary_check: need two resolutions");
  }
  if (j.contains("compare")) {
    const json& s = j["compare"];
    allow_keys(s, {"tol"}, "compare");
    c.compare_tol = get_opt<double>(s, "tol", "compare").value_or(c.compare_tol);
  }

  // per-mode requirements
  const bool needs_tau = c.mode == Mode::prox || c.mode == Mode::compare;
  const bool needs_t = needs_tau || c.mode == Mode::slope;
  if (needs_tau && !c.tau) throw ConfigError("time.tau is required for mode " + to_string(c.mode));
  if (needs_t && !(c.t_final > 0.0))
    throw ConfigError("time.t_final must be positive for mode " + to_string(c.mode));
  if (c.mode == Mode::stationary_check && c.initial.kind != InitialSpec::Kind::stationary)
    throw ConfigError("stationary-check needs initial.kind = stationary");
  if (c.tau) c.prox.tau = *c.tau;
  if (c.dt) c.slope.dt = *c.dt;
  try {
    c.prox.tau_min = std::min(c.prox.tau_min, 0.5 * c.prox.tau);
    c.prox.validate();
    c.slope.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline RunConfig load_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Initial data

struct Prepared {
  Field w0;
  EnergyParams p;
  /// Slope datum; present when the initial profile describes u, or when
  /// the mode needs u and w0 admits one.
  std::optional<Field> u0;
};

inline Prepared prepare_initial(const RunConfig& c) {
  int n = c.n;
  std::optional<io::Snapshot> snap;
  if (c.initial.kind == InitialSpec::Kind::file) {
    try {
      snap = io::read_snapshot(fs::path(c.initial.path));
    } catch (const Error& e) {
      throw ConfigError("initial.path: " + std::string(e.what()));
    }
    const int rows = static_cast<int>(snap->rows());
    if (c.n_given && rows != c.n)
      throw ConfigError("initial file has " + std::to_string(rows) + " rows, grid.n is " +
                        std::to_string(c.n));
    n = rows;
  }
  std::optional<Grid> grid;
  try {
    grid.emplace(n, c.d2_kind);
  } catch (const Error& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }

  const bool describes_u =
      c.u_mean.has_value() || (snap && snap->has("u") && !snap->has("w"));
  std::optional<Field> w0, u0;
  double c0 = c.c0.value_or(0.0);

  if (describes_u) {
    const double um = c.u_mean.value_or(1.0);
    Field u(*grid);
    switch (c.initial.kind) {
      case InitialSpec::Kind::zero:
        u = Field::sample(*grid, [um](double) { return um; });
        break;
      case InitialSpec::Kind::cosine: {
        const double wk = 2.0 * std::numbers::pi * c.initial.k;
        u = Field::sample(*grid,
                          [&](double h) { return um + c.initial.eps * std::cos(wk * h); });
        break;
      }
      case InitialSpec::Kind::file:
        u = Field(*grid, snap->data.at("u"));
        break;
      case InitialSpec::Kind::stationary:
        throw ConfigError("initial.kind = stationary needs physics.c0");
    }
    if (!(min_value(u) > 0.0))
      throw ConfigError("initial slope profile is not positive: min(u) = " +
                        std::to_string(min_value(u)));
    WFromU t = w_from_u(u);
    w0 = std::move(t.w);
    c0 = t.c0;
    u0 = std::move(u);
  } else {
    switch (c.initial.kind) {
      case InitialSpec::Kind::zero:
        w0 = Field(*grid);
        break;
      case InitialSpec::Kind::cosine: {
        const double wk = 2.0 * std::numbers::pi * c.initial.k;
        w0 = project_mean_zero(Field::sample(
            *grid, [&](double h) { return c.initial.eps * std::cos(wk * h); }));
        break;
      }
      case InitialSpec::Kind::stationary: {
        const StationaryParams sp{c.initial.a, c0};
        try {
          sp.validate();
        } catch (const Error& e) {
          throw ConfigError(std::string("initial: ") + e.what());
        }
        w0 = stationary_parabola(sp, *grid);
        break;
      }
      case InitialSpec::Kind::file: {
        if (!snap->has("w")) throw ConfigError("initial file has neither a w nor a u column");
        Field w(*grid, snap->data.at("w"));
        if (!is_mean_zero(w)) throw ConfigError("initial file: w does not have mean zero");
        w0 = project_mean_zero(std::move(w));
        break;
      }
    }
  }

  EnergyParams p = EnergyParams::with_c0(c0);
  if (c.cap_C) p.cap_C = *c.cap_C;
  try {
    p.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("physics: ") + e.what());
  }
  const double mg = min_curvature(*w0, p);
  if (!(mg > 0.0))
    throw ConfigError("initial datum leaves the domain: min(d2 w + c0) = " + std::to_string(mg));
  if (psi(*w0, p).is_infinite())
    throw ConfigError("initial datum lies outside the invariant ball");
  if (!u0 && (c.mode == Mode::slope || c.mode == Mode::compare)) u0 = u_from_w(*w0, p);
  return {std::move(*w0), p, std::move(u0)};
}

// ---------------------------------------------------------------------------
// Reports

inline json number(double x) {
  if (std::isfinite(x)) return x;
  return x > 0 ? "inf" : (x < 0 ? "-inf" : "nan");
}

inline json to_json(const Check& c) {
  return {{"name", c.name},
          {"pass", c.pass},
          {"value", number(c.value)},
          {"threshold", number(c.threshold)},
          {"margin", number(c.margin())},
          {"bound", c.bound == Check::Bound::upper ? "upper" : "lower"},
          {"detail", c.detail}};
}

struct RunResult {
  int exit_code = kExitOk;
  std::vector<Check> checks;
  json info = json::object();
  std::optional<std::string> error;
};

inline void write_report(const fs::path& dir, const RunConfig& c, const RunResult& r) {
  json rep;
  rep["mode"] = to_string(c.mode);
  rep["exit_code"] = r.exit_code;
  rep["pass"] = r.exit_code == kExitOk;
  json checks = json::array();
  for (const auto& ch : r.checks) checks.push_back(to_json(ch));
  rep["checks"] = checks;
  rep["info"] = r.info;
  if (r.error) rep["error"] = *r.error;
  std::ofstream os(dir / "report.json", std::ios::binary);
  os << rep.dump(2) << '\n';
}

inline std::string snapshot_name(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%06zu.csv", step);
  return buf;
}

inline int exit_for(const std::vector<Check>& checks) {
  return all_pass(checks) ? kExitOk : kExitCheckFailed;
}

struct RunOptions {
  bool quiet = false;
};

// ---------------------------------------------------------------------------
// Modes

inline RunResult run_prox(const RunConfig& c, const Prepared& prep, const fs::path& out,
                          const RunOptions&) {
  const fs::path snaps = out / "snapshots";
  if (c.snapshot_every > 0) fs::create_directories(snaps);
  auto observer = [&](std::size_t step, double, const Field& w) {
    if (c.snapshot_every > 0 && step % static_cast<std::size_t>(c.snapshot_every) == 0)
      io::write_snapshot(snaps / snapshot_name(step), w, {true, std::nullopt});
  };
  RunResult r;
  const Trajectory traj = evolve(prep.w0, c.t_final, c.prox, prep.p, observer);
  io::write_diagnostics_csv(out / "diagnostics.csv", traj.records);
  r.checks = dissipation_checks(dissipation_report(traj), traj.records);
  for (auto& ch : record_invariants(traj)) r.checks.push_back(ch);
  r.checks.push_back(strong_residual_check(traj, c.prox.newton_tol));
  r.info["steps"] = traj.steps();
  r.info["t_final"] = traj.t_final();
  r.info["min_tau"] = traj.taus.empty() ? c.prox.tau
                                        : *std::min_element(traj.taus.begin(), traj.taus.end());
  r.exit_code = exit_for(r.checks);
  return r;
}

inline RunResult run_slope(const RunConfig& c, const Prepared& prep, const fs::path& out,
                           const RunOptions&) {
  const fs::path snaps = out / "snapshots";
  if (c.snapshot_every > 0) fs::create_directories(snaps);
  const double every = c.record_every.value_or(c.t_final / 100.0);
  const long n_rec = std::max(1L, static_cast<long>(std::ceil(c.t_final / every - 1e-9)));

  RunResult r;
  Field u = *prep.u0;
  Field w = prep.w0;
  const double inv0 = inverse_slope_mass(u);
  double min_u = min_value(u);
  std::vector<DiagnosticsRecord> rec{initial_record(w, prep.p)};
  if (c.snapshot_every > 0) io::write_snapshot(snaps / snapshot_name(0), w, {true, u});
  long steps = 0;
  double t = 0.0;
  try {
    for (long k = 1; k <= n_rec; ++k) {
      const double t_next = (k == n_rec) ? c.t_final : k * every;
      u = advance_slope(std::move(u), t, t_next, c.slope, &steps);
      min_u = std::min(min_u, min_value(u));
      Field w_next = w_from_u(u).w;
      Field wdot = w_next - w;
      wdot *= 1.0 / (t_next - t);
      rec.push_back(make_record(t_next, w_next, wdot, prep.p));
      w = std::move(w_next);
      t = t_next;
      if (c.snapshot_every > 0 && k % c.snapshot_every == 0)
        io::write_snapshot(snaps / snapshot_name(static_cast<std::size_t>(k)), w, {true, u});
    }
  } catch (const SlopeDegenerate& e) {
    io::write_diagnostics_csv(out / "diagnostics.csv", rec);
    r.exit_code = kExitSolverFailed;
    r.error = e.what();
    r.info["degenerate_time"] = e.time();
    r.info["steps"] = steps;
    return r;
  }
  io::write_diagnostics_csv(out / "diagnostics.csv", rec);
  const double drift = std::abs(inverse_slope_mass(u) - inv0) / inv0;
  r.checks = dissipation_checks(dissipation_report(rec), rec);
  r.checks.push_back({"sign_persistence", min_u > 0.0, min_u, 0.0, "min u over the run",
                      Check::Bound::lower});
  r.checks.push_back({"inverse_mass_drift", drift <= 1e-6, drift, 1e-6,
                      "relative drift of integral of 1/u"});
  r.info["steps"] = steps;
  r.info["t_final"] = t;
  r.exit_code = exit_for(r.checks);
  return r;
}

struct CompareRow {
  double t;
  double mismatch;
  double relative;
};

inline void write_compare_csv(const fs::path& path, const std::vector<CompareRow>& rows) {
  std::ofstream os(path, std::ios::binary);
  os << "t,mismatch_l2,mismatch_rel\n";
  for (const auto& r : rows)
    os << io::format_real(r.t) << ',' << io::format_real(r.mismatch) << ','
       << io::format_real(r.relative) << '\n';
}

struct CompareRun {
  Trajectory traj;
  std::vector<CompareRow> rows;
  std::optional<double> degenerate_time;
  std::string degenerate_message;
  long slope_steps = 0;
};

/// Steps both engines in lockstep: after each accepted implicit step the
/// slope engine is advanced to the same time and the u fields compared.
inline CompareRun compare_engines(const Field& w0, const Field& u0, const EnergyParams& p,
                                  double t_final, const ProxConfig& prox,
                                  const SlopeConfig& slope,
                                  const std::function<void(std::size_t, const Field&,
                                                           const Field&)>& snap = {}) {
  CompareRun run;
  const double unorm = l2_norm(u0);
  Field us = u0;
  double t_prev = 0.0;
  auto observer = [&](std::size_t step, double t, const Field& w) {
    const Field up = u_from_w(w, p);
    if (!run.degenerate_time && t > t_prev) {
      try {
        us = advance_slope(std::move(us), t_prev, t, slope, &run.slope_steps);
      } catch (const SlopeDegenerate& e) {
        run.degenerate_time = e.time();
        run.degenerate_message = e.what();
      }
    }
    t_prev = t;
    if (run.degenerate_time) return;
    const double m = l2_norm(up - us);
    run.rows.push_back({t, m, m / unorm});
    if (snap) snap(step, w, up);
  };
  run.traj = evolve(w0, t_final, prox, p, observer);
  return run;
}

inline RunResult run_compare(const RunConfig& c, const Prepared& prep, const fs::path& out,
                             const RunOptions&) {
  const fs::path snaps = out / "snapshots";
  if (c.snapshot_every > 0) fs::create_directories(snaps);
  auto snap = [&](std::size_t step, const Field& w, const Field& u) {
    if (c.snapshot_every > 0 && step % static_cast<std::size_t>(c.snapshot_every) == 0)
      io::write_snapshot(snaps / snapshot_name(step), w, {true, u});
  };
  CompareRun run = compare_engines(prep.w0, *prep.u0, prep.p, c.t_final, c.prox, c.slope, snap);
  io::write_diagnostics_csv(out / "diagnostics.csv", run.traj.records);
  write_compare_csv(out / "compare.csv", run.rows);
  RunResult r;
  r.info["slope_steps"] = run.slope_steps;
  r.info["prox_steps"] = run.traj.steps();
  if (run.degenerate_time) {
    r.exit_code = kExitSolverFailed;
    r.error = run.degenerate_message;
    r.info["degenerate_time"] = *run.degenerate_time;
    return r;
  }
  const double final_rel = run.rows.back().relative;
  r.checks.push_back({"cross_model_mismatch", final_rel <= c.compare_tol, final_rel,
                      c.compare_tol, "final ||u_prox - u_slope|| / ||u0||"});
  r.exit_code = exit_for(r.checks);
  return r;
}

struct StationaryStudy {
  std::vector<int> n;
  std::vector<double> residual_max;
  /// max |d2^{-2} grad_phi|, reported alongside the max norm
  std::vector<double> residual_weak;
  std::vector<double> tilde_v;
  std::vector<double> order_max;
  std::vector<double> order_weak;
  AtomReport atoms;
};

inline StationaryStudy stationary_study(const StationaryParams& sp, const EnergyParams& p,
                                        const std::vector<int>& resolutions, D2Kind kind,
                                        double atom_threshold) {
  StationaryStudy s;
  std::vector<Field> data;
  for (int n : resolutions) {
    const Grid g(n, kind);
    Field w = stationary_parabola(sp, g);
    const Field r = grad_phi(w, p);
    s.n.push_back(n);
    s.residual_max.push_back(max_abs(r));
    s.residual_weak.push_back(max_abs(poisson_solve(poisson_solve(r))));
    s.tilde_v.push_back(norms(w).tilde_v);
    data.push_back(std::move(w));
  }
  for (std::size_t i = 0; i + 1 < s.n.size(); ++i) {
    const double ratio = static_cast<double>(s.n[i + 1]) / s.n[i];
    s.order_max.push_back(std::log(s.residual_max[i] / s.residual_max[i + 1]) / std::log(ratio));
    s.order_weak.push_back(std::log(s.residual_weak[i] / s.residual_weak[i + 1]) /
                           std::log(ratio));
  }
  // finest 1:2 pair
  for (std::size_t i = s.n.size() - 1; i > 0; --i) {
    if (s.n[i] == 2 * s.n[i - 1]) {
      s.atoms = detect_atoms(data[i - 1], data[i], p, atom_threshold);
      break;
    }
  }
  return s;
}

inline std::vector<Check> stationary_checks(const StationaryStudy& s, double a, double min_order) {
  std::vector<Check> out;
  const double worst = *std::min_element(s.order_max.begin(), s.order_max.end());
  out.push_back({"residual_order", worst >= min_order, worst, min_order,
                 "min observed order of max |grad_phi| under refinement", Check::Bound::lower});
  const double count = static_cast<double>(s.atoms.atoms.size());
  out.push_back({"atom_count", s.atoms.atoms.size() == 1, count, 1.0, "atoms detected"});
  if (s.atoms.atoms.size() == 1) {
    const Atom& at = s.atoms.atoms.front();
    const double dist = std::min(at.position, 1.0 - at.position);
    out.push_back({"atom_position", dist == 0.0, dist, 0.0, "distance of the atom from h = 0"});
    const double rel = std::abs(at.fine_mass - a) / a;
    out.push_back({"atom_mass", rel <= 0.1, rel, 0.1, "|fine mass - a| / a"});
  }
  return out;
}

inline RunResult run_stationary_check(const RunConfig& c, const Prepared& prep,
                                      const fs::path& out, const RunOptions&) {
  const StationaryParams sp{c.initial.a, prep.p.c0};
  std::vector<int> res = c.resolutions;
  StationaryStudy s;
  try {
    s = stationary_study(sp, prep.p, res, c.d2_kind, c.atom_threshold);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("stationary_check: ") + e.what());
  }
  {
    std::ofstream os(out / "stationary.csv", std::ios::binary);
    os << "n,residual_max,residual_weak,tilde_v\n";
    for (std::size_t i = 0; i < s.n.size(); ++i)
      os << s.n[i] << ',' << io::format_real(s.residual_max[i]) << ','
         << io::format_real(s.residual_weak[i]) << ',' << io::format_real(s.tilde_v[i]) << '\n';
  }
  io::write_diagnostics_csv(out / "diagnostics.csv", {initial_record(prep.w0, prep.p)});
  RunResult r;
  r.checks = stationary_checks(s, sp.a, c.min_order);
  r.info["order_max"] = s.order_max;
  r.info["order_weak"] = s.order_weak;
  json atoms = json::array();
  for (const auto& at : s.atoms.atoms)
    atoms.push_back({{"position", at.position},
                     {"coarse_mass", at.coarse_mass},
                     {"fine_mass", at.fine_mass},
                     {"ratio", at.ratio}});
  r.info["atoms"] = atoms;
  r.exit_code = exit_for(r.checks);
  return r;
}

struct ResolventStudy {
  double max_excess = -std::numeric_limits<double>::infinity();
  double max_oracle_gap = 0.0;
  bool oracle_run = false;
  struct Row {
    double tau;
    int pair;
    double dist_in, dist_out, oracle_gap;
  };
  std::vector<Row> rows;
};

/// Seeded pairs: even pairs are independent random fields, odd pairs are a
/// field and a small perturbation of it.
inline ResolventStudy resolvent_study(const Grid& grid, const EnergyParams& p,
                                      const ProxConfig& base, const std::vector<double>& taus,
                                      int pairs, std::uint64_t seed, bool with_oracle) {
  ResolventStudy s;
  s.oracle_run = with_oracle;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> frac(0.1, 0.6);
  for (double tau : taus) {
    ProxConfig cfg = base;
    cfg.tau = tau;
    cfg.tau_min = std::min(cfg.tau_min, 0.5 * tau);
    for (int i = 0; i < pairs; ++i) {
      const Field x = random_domain_field(grid, p, rng, 4, frac(rng));
      Field y = (i % 2 == 0) ? random_domain_field(grid, p, rng, 4, frac(rng))
                             : x + random_domain_field(grid, p, rng, 4, 0.05);
      const ProxResult jx = resolvent(x, cfg, p);
      const ProxResult jy = resolvent(y, cfg, p);
      const double din = l2_norm(x - y), dout = l2_norm(jx.w_next - jy.w_next);
      s.max_excess = std::max(s.max_excess, dout - din);
      double gap = 0.0;
      if (with_oracle) {
        gap = l2_norm(jx.w_next - brute_force_prox(x, jx.tau_used, p));
        s.max_oracle_gap = std::max(s.max_oracle_gap, gap);
      }
      s.rows.push_back({tau, i, din, dout, gap});
    }
  }
  return s;
}

inline constexpr int kOracleMaxN = 32;

inline RunResult run_resolvent_test(const RunConfig& c, const Prepared& prep,
                                    const fs::path& out, const RunOptions&) {
  const Grid& grid = prep.w0.grid();
  const bool oracle = grid.n() <= kOracleMaxN;
  const ResolventStudy s =
      resolvent_study(grid, prep.p, c.prox, c.taus, c.pairs, c.seed, oracle);
  {
    std::ofstream os(out / "resolvent.csv", std::ios::binary);
    os << "tau,pair,dist_in,dist_out,oracle_gap\n";
    for (const auto& r : s.rows)
      os << io::format_real(r.tau) << ',' << r.pair << ',' << io::format_real(r.dist_in) << ','
         << io::format_real(r.dist_out) << ',' << io::format_real(r.oracle_gap) << '\n';
  }
  io::write_diagnostics_csv(out / "diagnostics.csv", {});
  RunResult r;
  r.checks.push_back({"nonexpansive", s.max_excess <= 1e-10, s.max_excess, 1e-10,
                      "max ||Jx - Jy|| - ||x - y||"});
  if (oracle)
    r.checks.push_back({"oracle_gap", s.max_oracle_gap <= c.oracle_tol, s.max_oracle_gap,
                        c.oracle_tol, "max ||J x - brute force prox x||"});
  r.info["oracle_max_deviation"] = oracle ? json(s.max_oracle_gap) : json(nullptr);
  r.exit_code = exit_for(r.checks);
  return r;
}

// ---------------------------------------------------------------------------
// Entry points

/// Runs one parsed config into out_dir; never throws for solver failures.
inline int run_config(const RunConfig& c, const RunOptions& opt = {}) {
  Prepared prep = prepare_initial(c);
  fs::create_directories(c.out_dir);
  RunResult r;
  try {
    switch (c.mode) {
      case Mode::prox: r = run_prox(c, prep, c.out_dir, opt); break;
      case Mode::slope: r = run_slope(c, prep, c.out_dir, opt); break;
      case Mode::compare: r = run_compare(c, prep, c.out_dir, opt); break;
      case Mode::stationary_check: r = run_stationary_check(c, prep, c.out_dir, opt); break;
      case Mode::resolvent_test: r = run_resolvent_test(c, prep, c.out_dir, opt); break;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    r = {};
    r.exit_code = kExitSolverFailed;
    r.error = e.what();
    if (const auto* nd = dynamic_cast<const NewtonDiverged*>(&e)) r.info["failed_step"] = nd->step();
    if (const auto* sd = dynamic_cast<const SlopeDegenerate*>(&e))
      r.info["degenerate_time"] = sd->time();
  }
  write_report(c.out_dir, c, r);
  if (!opt.quiet) {
    for (const auto& ch : r.checks)
      std::cerr << (ch.pass ? "  ok   " : "  FAIL ") << ch.name << ": " << ch.value << " ("
                << (ch.bound == Check::Bound::upper ? "<= " : ">= ") << ch.threshold << ")\n";
    if (r.error) std::cerr << "solver failure: " << *r.error << '\n';
  }
  return r.exit_code;
}

/// Loads, optionally redirects output and runs; maps errors to exit codes.
inline int run_file(const fs::path& config, const std::optional<fs::path>& out,
                    const RunOptions& opt = {}, std::optional<Mode> require = std::nullopt) {
  try {
    RunConfig c = load_config(config);
    if (require && c.mode != *require)
      throw ConfigError("config mode is " + to_string(c.mode) + ", expected " +
                        to_string(*require));
    if (out) c.out_dir = *out;
    return run_config(c, opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitSolverFailed;
  }
}

// ---------------------------------------------------------------------------
// Sweeps

/// Sets a dotted path such as "grid.n" inside a JSON object.
inline void set_path(json& j, const std::string& dotted, const json& value) {
  json* cur = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw ConfigError("sweep: bad parameter path '" + dotted + "'");
    if (dot == std::string::npos) {
      (*cur)[key] = value;
      return;
    }
    if (!cur->contains(key)) (*cur)[key] = json::object();
    cur = &(*cur)[key];
    start = dot + 1;
  }
}

/// Cartesian product of the parameter lists applied to the template, in
/// lexicographic order of the parameter names.
inline std::vector<json> expand_sweep(const json& spec) {
  detail::allow_keys(spec, {"template", "parameters"}, "sweep");
  if (!spec.contains("template")) throw ConfigError("sweep: missing template");
  const json& tmpl = spec["template"];
  std::vector<std::pair<std::string, std::vector<json>>> params;
  if (spec.contains("parameters")) {
    const json& ps = spec["parameters"];
    if (!ps.is_object()) throw ConfigError("sweep.parameters must be an object");
    for (auto it = ps.begin(); it != ps.end(); ++it) {
      if (!it.value().is_array() || it.value().empty())
        throw ConfigError("sweep.parameters." + it.key() + " must be a nonempty array");
      params.emplace_back(it.key(), std::vector<json>(it.value().begin(), it.value().end()));
    }
  }
  std::vector<json> out{tmpl};
  for (const auto& [path, values] : params) {
    std::vector<json> next;
    for (const auto& base : out)
      for (const auto& v : values) {
        json e = base;
        set_path(e, path, v);
        next.push_back(std::move(e));
      }
    out = std::move(next);
  }
  return out;
}

/// Runs every sweep entry into out/entry_XXX with up to `jobs` workers.
/// Returns the largest entry exit code.
inline int run_sweep(const fs::path& spec_path, const fs::path& out, int jobs,
                     const RunOptions& opt = {}) {
  std::vector<json> entries;
  try {
    std::ifstream is(spec_path);
    if (!is) throw ConfigError("cannot read sweep spec " + spec_path.string());
    json spec;
    try {
      spec = json::parse(is);
    } catch (const json::exception& e) {
      throw ConfigError("sweep spec is not valid JSON: " + std::string(e.what()));
    }
    entries = expand_sweep(spec);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfigError;
  }
  fs::create_directories(out);
  std::vector<int> codes(entries.size(), kExitOk);
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  RunOptions quiet = opt;
  quiet.quiet = true;
  auto worker = [&] {
    for (std::size_t i = next++; i < entries.size(); i = next++) {
      char name[32];
      std::snprintf(name, sizeof name, "entry_%03zu", i);
      int code;
      try {
        RunConfig c = parse_config(entries[i]);
        c.out_dir = out / name;
        code = run_config(c, quiet);
      } catch (const ConfigError& e) {
        std::lock_guard lock(log_mutex);
        std::cerr << name << ": config error: " << e.what() << '\n';
        code = kExitConfigError;
      } catch (const std::exception& e) {
        std::lock_guard lock(log_mutex);
        std::cerr << name << ": error: " << e.what() << '\n';
        code = kExitSolverFailed;
      }
      codes[i] = code;
      if (!opt.quiet) {
        std::lock_guard lock(log_mutex);
        std::cerr << name << ": exit " << code << '\n';
      }
    }
  };
  const int n_workers = std::max(1, std::min<int>(jobs, static_cast<int>(entries.size())));
  std::vector<std::thread> pool;
  for (int k = 1; k < n_workers; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  json summary = json::array();
  for (std::size_t i = 0; i < entries.size(); ++i)
    summary.push_back({{"index", i}, {"exit_code", codes[i]}, {"config", entries[i]}});
  std::ofstream(out / "sweep.json", std::ios::binary) << summary.dump(2) << '\n';
  return *std::max_element(codes.begin(), codes.end());
}

}  // namespace thinfilm::app

#endif  // THINFILM_APP_HPP
