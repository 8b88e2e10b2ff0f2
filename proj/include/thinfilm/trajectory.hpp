#ifndef THINFILM_TRAJECTORY_HPP
#define THINFILM_TRAJECTORY_HPP

#include <vector>

#include "thinfilm/energetics.hpp"
#include "thinfilm/grid.hpp"

namespace thinfilm {

/// Per-state diagnostics. Row 0 describes the initial datum with
/// wdot = -grad_phi(w0); row n >= 1 describes the n-th accepted step with
/// wdot = (w^n - w^{n-1}) / tau_n.
struct DiagnosticsRecord {
  double t = 0.0;
  double phi = 0.0;
  ExtReal E = 0.0;
  double mass = 0.0;
  double min_g = 0.0;
  double tilde_v = 0.0;
  double step_norm = 0.0;
  double vi_min = 0.0;
  double strong_residual = 0.0;
};

/// States w^0..w^N, the step sizes between them and one record per state.
struct Trajectory {
  EnergyParams params;
  std::vector<Field> states;
  std::vector<double> taus;
  std::vector<DiagnosticsRecord> records;
  /// Newton iterations per accepted step.
  std::vector<int> iterations;

  const Field& initial() const { return states.front(); }
  const Field& final() const { return states.back(); }
  double t_final() const { return records.back().t; }
  std::size_t steps() const { return taus.size(); }
};

}  // namespace thinfilm

#endif  // THINFILM_TRAJECTORY_HPP
