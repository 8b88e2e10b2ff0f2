#ifndef THINFILM_GRID_HPP
#define THINFILM_GRID_HPP

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <mutex>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "thinfilm/errors.hpp"

namespace thinfilm {

/// Discretization used for the second derivative.
enum class D2Kind { fd3, spectral };

inline const char* to_string(D2Kind k) {
  return k == D2Kind::fd3 ? "fd3" : "spectral";
}

namespace detail {

// FFTW's planner is not re-entrant; execution with the new-array API is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// Real-to-complex and complex-to-real plans of one transform length.
class SpectralPlan {
 public:
  explicit SpectralPlan(int n) : n_(n) {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    std::vector<double> in(n);
    std::vector<std::complex<double>> out(n / 2 + 1);
    auto* cout = reinterpret_cast<fftw_complex*>(out.data());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    forward_ = fftw_plan_dft_r2c_1d(n, in.data(), cout, flags);
    backward_ = fftw_plan_dft_c2r_1d(n, cout, in.data(), flags);
  }
  SpectralPlan(const SpectralPlan&) = delete;
  SpectralPlan& operator=(const SpectralPlan&) = delete;
  ~SpectralPlan() {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }

  /// Applies the Fourier multiplier symbol(k), k = 0..n/2, to real data.
  template <typename Symbol>
  void apply(std::span<const double> in, std::span<double> out,
             Symbol&& symbol) const {
    std::vector<double> buf(in.begin(), in.end());
    std::vector<std::complex<double>> spec(n_ / 2 + 1);
    auto* c = reinterpret_cast<fftw_complex*>(spec.data());
    fftw_execute_dft_r2c(forward_, buf.data(), c);
    for (int k = 0; k <= n_ / 2; ++k) spec[k] *= symbol(k);
    // c2r destroys its input; spec is scratch.
    fftw_execute_dft_c2r(backward_, c, out.data());
    const double scale = 1.0 / n_;
    for (auto& v : out) v *= scale;
  }

 private:
  int n_;
  fftw_plan forward_{};
  fftw_plan backward_{};
};

}  // namespace detail

/// Uniform cell-centred grid on the unit torus, sample i at h = i*dh.
class Grid {
 public:
  explicit Grid(int n, D2Kind kind = D2Kind::fd3)
      : n_(n), dh_(1.0 / n), kind_(kind) {
    if (n < 8) throw Error("Grid: n must be at least 8");
    if (kind == D2Kind::spectral) {
      if (n % 2 != 0) throw Error("Grid: spectral grids need even n");
      plan_ = std::make_shared<const detail::SpectralPlan>(n);
    }
  }

  int n() const { return n_; }
  double dh() const { return dh_; }
  D2Kind d2_kind() const { return kind_; }
  double coord(int i) const { return i * dh_; }

  /// Spectral plan; null for fd3 grids.
  const detail::SpectralPlan* plan() const { return plan_.get(); }

  /// Spectral radius of the discrete second derivative.
  double d2_spectral_radius() const {
    if (kind_ == D2Kind::fd3) return 4.0 / (dh_ * dh_);
    const double kmax = std::numbers::pi * n_;
    return kmax * kmax;
  }

  /// Magnitude of the d2 symbol on the cosine mode of wavenumber k.
  double d2_symbol(int k) const {
    if (kind_ == D2Kind::fd3)
      return 2.0 / (dh_ * dh_) * (1.0 - std::cos(2.0 * std::numbers::pi * k * dh_));
    const double w = 2.0 * std::numbers::pi * k;
    return w * w;
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.n_ == b.n_ && a.kind_ == b.kind_;
  }

 private:
  int n_;
  double dh_;
  D2Kind kind_;
  std::shared_ptr<const detail::SpectralPlan> plan_;
};

/// Grid function on the torus. Value type; carries its grid.
class Field {
 public:
  explicit Field(Grid grid) : grid_(std::move(grid)), values_(grid_.n(), 0.0) {}
  Field(Grid grid, std::vector<double> values)
      : grid_(std::move(grid)), values_(std::move(values)) {
    if (static_cast<int>(values_.size()) != grid_.n())
      throw Error("Field: value count does not match grid size");
  }

  template <typename F>
  static Field sample(const Grid& grid, F&& f) {
    Field out(grid);
    for (int i = 0; i < grid.n(); ++i) out.values_[i] = f(grid.coord(i));
    return out;
  }

  const Grid& grid() const { return grid_; }
  int size() const { return grid_.n(); }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  const std::vector<double>& vec() const { return values_; }

  double operator[](int i) const { return values_[i]; }
  double& operator[](int i) { return values_[i]; }

  Field& operator+=(const Field& o) {
    check_same(o);
    for (int i = 0; i < size(); ++i) values_[i] += o.values_[i];
    return *this;
  }
  Field& operator-=(const Field& o) {
    check_same(o);
    for (int i = 0; i < size(); ++i) values_[i] -= o.values_[i];
    return *this;
  }
  Field& operator*=(double s) {
    for (auto& v : values_) v *= s;
    return *this;
  }
  Field& operator+=(double s) {
    for (auto& v : values_) v += s;
    return *this;
  }

  friend Field operator+(Field a, const Field& b) { return a += b; }
  friend Field operator-(Field a, const Field& b) { return a -= b; }
  friend Field operator*(double s, Field a) { return a *= s; }
  friend Field operator*(Field a, double s) { return a *= s; }
  friend Field operator-(Field a) { return a *= -1.0; }

  friend bool operator==(const Field& a, const Field& b) {
    return a.grid_ == b.grid_ && a.values_ == b.values_;
  }

 private:
  void check_same(const Field& o) const {
    if (!(grid_ == o.grid_)) throw GridMismatch("Field: grids differ");
  }

  Grid grid_;
  std::vector<double> values_;
};

/// Applies f to every value.
template <typename F>
Field map(Field x, F&& f) {
  for (auto& v : x.values()) v = f(v);
  return x;
}

/// Discrete L2 inner product dh * sum(a_i b_i).
inline double inner(const Field& a, const Field& b) {
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return a.grid().dh() * s;
}

inline double l2_norm(const Field& f) { return std::sqrt(inner(f, f)); }

inline double mean(const Field& f) {
  return std::accumulate(f.values().begin(), f.values().end(), 0.0) / f.size();
}

inline double max_abs(const Field& f) {
  double m = 0.0;
  for (double v : f.values()) m = std::max(m, std::abs(v));
  return m;
}

inline double min_value(const Field& f) {
  return *std::min_element(f.values().begin(), f.values().end());
}

inline double max_value(const Field& f) {
  return *std::max_element(f.values().begin(), f.values().end());
}

inline Field project_mean_zero(Field f) {
  const double m = mean(f);
  for (auto& v : f.values()) v -= m;
  return f;
}

inline bool is_mean_zero(const Field& f) {
  const double s = f.grid().dh() *
                   std::accumulate(f.values().begin(), f.values().end(), 0.0);
  return std::abs(s) <= 1e-12 * (1.0 + max_abs(f));
}

/// Discrete second derivative. The result is projected to zero mean.
inline Field d2(const Field& f) {
  const Grid& g = f.grid();
  const int n = g.n();
  Field out(g);
  if (g.d2_kind() == D2Kind::fd3) {
    const double inv = 1.0 / (g.dh() * g.dh());
    for (int i = 0; i < n; ++i) {
      const int im = (i + n - 1) % n;
      const int ip = (i + 1) % n;
      out[i] = (f[im] - 2.0 * f[i] + f[ip]) * inv;
    }
  } else {
    g.plan()->apply(f.values(), out.values(), [](int k) {
      const double w = 2.0 * std::numbers::pi * k;
      return std::complex<double>(-w * w, 0.0);
    });
  }
  return project_mean_zero(std::move(out));
}

/// d2(d2(f)), with a single transform pair on spectral grids.
inline Field d4(const Field& f) {
  const Grid& g = f.grid();
  if (g.d2_kind() == D2Kind::fd3) return d2(d2(f));
  Field out(g);
  g.plan()->apply(f.values(), out.values(), [](int k) {
    const double w = 2.0 * std::numbers::pi * k;
    return std::complex<double>(w * w * w * w, 0.0);
  });
  return project_mean_zero(std::move(out));
}

/// First derivative: centred difference (fd3) or spectral with the Nyquist
/// mode dropped. Used only for snapshot output.
inline Field d1(const Field& f) {
  const Grid& g = f.grid();
  const int n = g.n();
  Field out(g);
  if (g.d2_kind() == D2Kind::fd3) {
    const double inv = 1.0 / (2.0 * g.dh());
    for (int i = 0; i < n; ++i) out[i] = (f[(i + 1) % n] - f[(i + n - 1) % n]) * inv;
  } else {
    g.plan()->apply(f.values(), out.values(), [n](int k) {
      if (k == n / 2) return std::complex<double>(0.0, 0.0);
      return std::complex<double>(0.0, 2.0 * std::numbers::pi * k);
    });
  }
  return out;
}

/// Dense matrix of d2 in row-major order, n*n entries.
inline std::vector<double> dense_d2(const Grid& g) {
  const int n = g.n();
  std::vector<double> m(static_cast<size_t>(n) * n, 0.0);
  if (g.d2_kind() == D2Kind::fd3) {
    const double inv = 1.0 / (g.dh() * g.dh());
    for (int i = 0; i < n; ++i) {
      m[i * n + i] += -2.0 * inv;
      m[i * n + (i + 1) % n] += inv;
      m[i * n + (i + n - 1) % n] += inv;
    }
    return m;
  }
  Field e(g);
  for (int j = 0; j < n; ++j) {
    e[j] = 1.0;
    const Field col = d2(e);
    for (int i = 0; i < n; ++i) m[i * n + j] = col[i];
    e[j] = 0.0;
  }
  return m;
}

/// Unique mean-zero g with d2(g) = rhs.
inline Field poisson_solve(const Field& rhs) {
  const Grid& g = rhs.grid();
  const int n = g.n();
  const double m = mean(rhs);
  if (std::abs(m) > 1e-10 * (1.0 + max_abs(rhs)))
    throw NonZeroMean("poisson_solve: right-hand side has mean " + std::to_string(m));
  Field r = project_mean_zero(rhs);
  Field out(g);
  if (g.d2_kind() == D2Kind::fd3) {
    // Pin out[0] = 0; the remaining rows form the tridiagonal (1,-2,1)
    // system on cells 1..n-1. Row 0 then holds by compatibility.
    const int m1 = n - 1;
    const double h2 = g.dh() * g.dh();
    std::vector<double> c(m1), d(m1);
    double beta = -2.0;
    c[0] = 1.0 / beta;
    d[0] = h2 * r[1] / beta;
    for (int i = 1; i < m1; ++i) {
      beta = -2.0 - c[i - 1];
      c[i] = 1.0 / beta;
      d[i] = (h2 * r[i + 1] - d[i - 1]) / beta;
    }
    out[m1] = d[m1 - 1];
    for (int i = m1 - 2; i >= 0; --i) out[i + 1] = d[i] - c[i] * out[i + 2];
    out[0] = 0.0;
  } else {
    g.plan()->apply(r.values(), out.values(), [](int k) {
      if (k == 0) return std::complex<double>(0.0, 0.0);
      const double w = 2.0 * std::numbers::pi * k;
      return std::complex<double>(-1.0 / (w * w), 0.0);
    });
  }
  return project_mean_zero(std::move(out));
}

struct Norms {
  double l2;
  /// dh * sum |d2 f|: grid proxy for the total mass of f_hh.
  double tilde_v;
};

inline Norms norms(const Field& f) {
  const Field s = d2(f);
  double mass = 0.0;
  for (double v : s.values()) mass += std::abs(v);
  return {l2_norm(f), f.grid().dh() * mass};
}

/// Amplitude of the cos(2 pi k h) component.
inline double cosine_amplitude(const Field& f, int k) {
  const Field c = Field::sample(f.grid(), [k](double h) {
    return std::cos(2.0 * std::numbers::pi * k * h);
  });
  return 2.0 * inner(f, c);
}

}  // namespace thinfilm

#endif  // THINFILM_GRID_HPP
