#ifndef THINFILM_ENERGETICS_HPP
#define THINFILM_ENERGETICS_HPP

#include <cmath>
#include <compare>
#include <limits>
#include <string>

#include "thinfilm/errors.hpp"
#include "thinfilm/grid.hpp"

namespace thinfilm {

/// Real number or +infinity. The infinite state is a tag, never a
/// floating-point inf inside arithmetic.
class ExtReal {
 public:
  constexpr ExtReal(double v) : value_(v), infinite_(false) {}  // NOLINT
  static constexpr ExtReal infinity() { return ExtReal(); }

  constexpr bool is_infinite() const { return infinite_; }
  constexpr bool is_finite() const { return !infinite_; }

  double value() const {
    if (infinite_) throw Error("ExtReal: value() of +infinity");
    return value_;
  }
  /// For output only: +inf as an IEEE infinity.
  double to_double() const {
    return infinite_ ? std::numeric_limits<double>::infinity() : value_;
  }

  friend ExtReal operator+(ExtReal a, ExtReal b) {
    if (a.infinite_ || b.infinite_) return infinity();
    return ExtReal(a.value_ + b.value_);
  }
  friend bool operator==(ExtReal a, ExtReal b) {
    if (a.infinite_ || b.infinite_) return a.infinite_ == b.infinite_;
    return a.value_ == b.value_;
  }
  friend std::partial_ordering operator<=>(ExtReal a, ExtReal b) {
    if (a.infinite_ && b.infinite_) return std::partial_ordering::equivalent;
    if (a.infinite_) return std::partial_ordering::greater;
    if (b.infinite_) return std::partial_ordering::less;
    return a.value_ <=> b.value_;
  }

 private:
  constexpr ExtReal() : value_(0.0), infinite_(true) {}
  double value_;
  bool infinite_;
};

struct EnergyParams {
  double c0 = 1.0;
  /// Radius of the invariant ball used by psi.
  double cap_C = 3.0;

  static EnergyParams with_c0(double c0) { return {c0, 2.0 * c0 + 1.0}; }

  void validate() const {
    if (!(c0 > 0.0)) throw Error("EnergyParams: c0 must be positive");
    if (!(cap_C >= 2.0 * c0 + 1.0))
      throw Error("EnergyParams: cap_C must be at least 2*c0+1");
  }
};

/// x^{-2}/2 for x > 0, +infinity otherwise.
inline ExtReal big_phi(double x) {
  if (!(x > 0.0)) return ExtReal::infinity();
  return ExtReal(0.5 / (x * x));
}

/// d2(w) + c0, the density of the absolutely continuous part of w_hh + c0.
inline Field curvature(const Field& w, const EnergyParams& p) {
  Field g = d2(w);
  g += p.c0;
  return g;
}

inline double min_curvature(const Field& w, const EnergyParams& p) {
  return min_value(curvature(w, p));
}

inline bool in_domain(const Field& w, const EnergyParams& p) {
  return min_curvature(w, p) > 0.0;
}

inline ExtReal phi_of_curvature(const Field& g) {
  double s = 0.0;
  for (double x : g.values()) {
    if (!(x > 0.0)) return ExtReal::infinity();
    s += 0.5 / (x * x);
  }
  return ExtReal(g.grid().dh() * s);
}

inline ExtReal phi(const Field& w, const EnergyParams& p) {
  return phi_of_curvature(curvature(w, p));
}

inline ExtReal psi(const Field& w, const EnergyParams& p) {
  return norms(w).tilde_v <= p.cap_C ? ExtReal(0.0) : ExtReal::infinity();
}

inline ExtReal phi_plus_psi(const Field& w, const EnergyParams& p) {
  const ExtReal ps = psi(w, p);
  if (ps.is_infinite()) return ps;
  return phi(w, p);
}

namespace detail {

inline Field inverse_cube(const Field& g) {
  return map(g, [](double x) { return 1.0 / (x * x * x); });
}

inline void require_positive(const Field& g, const char* who) {
  const double m = min_value(g);
  if (!(m > 0.0))
    throw NonPositiveCurvature(std::string(who) +
                               ": d2(w)+c0 has minimum " + std::to_string(m));
}

}  // namespace detail

/// Gradient of phi in the discrete L2 metric: -d2((d2 w + c0)^{-3}).
inline Field grad_phi(const Field& w, const EnergyParams& p) {
  const Field g = curvature(w, p);
  detail::require_positive(g, "grad_phi");
  return -d2(detail::inverse_cube(g));
}

/// 0.5 * ||d2((d2 w + c0)^{-3})||^2, or +infinity outside the domain.
inline ExtReal energy_E(const Field& w, const EnergyParams& p) {
  const Field g = curvature(w, p);
  if (!(min_value(g) > 0.0)) return ExtReal::infinity();
  const double r = l2_norm(d2(detail::inverse_cube(g)));
  return ExtReal(0.5 * r * r);
}

/// dh * sum(d2 w + c0); equals c0 up to rounding.
inline double mass(const Field& w, const EnergyParams& p) {
  const Field g = curvature(w, p);
  double s = 0.0;
  for (double x : g.values()) s += x;
  return g.grid().dh() * s;
}

}  // namespace thinfilm

#endif  // THINFILM_ENERGETICS_HPP
