#pragma once

// Quadratic minorants of the per-server success factors as functions of the
// task share phi, built from global lower bounds on their second derivatives.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>

#include "aircomp/special_functions.hpp"
#include "aircomp/system_model.hpp"

namespace aircomp {

// Smallest share the solvers assign to a non-frozen index.
inline constexpr double kMinShare = 1e-6;

// c1 phi^2 + c2 phi + c3
struct Quadratic {
  double c1{0.0};
  double c2{0.0};
  double c3{1.0};

  double operator()(double phi) const { return (c1 * phi + c2) * phi + c3; }
  double derivative(double phi) const { return 2.0 * c1 * phi + c2; }
  bool is_constant() const { return c1 == 0.0 && c2 == 0.0; }
};

struct SurrogateCoeffs {
  Quadratic r;  // transmission factor; constant 1 for the local index
  Quadratic l;  // computation factor
  double phi_L{0.0};
  double phi_U{1.0};
  double xi{0.0};
  double eta{0.0};
  double psi{0.0};
};

// Lower bound of d^2 chi / dx^2 over x >= 0.
inline double b_chi(double y) {
  if (!(y > 0.0)) throw std::domain_error("b_chi: y must be positive");
  const double v = (3.0 - std::sqrt(5.0)) / 2.0;
  const double psi_v = std::exp(-v) * (v * v - v);
  return std::numbers::ln2 * std::numbers::ln2 * std::exp(1.0 / y) * psi_v;
}

// Lower bound of d^2 gamma(alpha, psi/t) / dt^2 over t > 0: the second
// derivative evaluated at its minimizer t1. Scales as 1 / psi^2.
inline double b_gamma(double psi, const GammaWorkload& w) {
  if (!(psi > 0.0)) throw std::domain_error("b_gamma: psi must be positive");
  const double a = w.alpha;
  const double ratio = (a + 1.0) * (a + 2.0) / (a + 2.0 - std::sqrt(a + 2.0));  // psi / t1
  return (a + 1.0 - ratio) * std::exp((a + 2.0) * std::log(ratio) - ratio - std::lgamma(a)) / (psi * psi);
}

inline double b_gamma_minimizer(double psi, const GammaWorkload& w) {
  const double a = w.alpha;
  return psi * (a + 2.0 - std::sqrt(a + 2.0)) / ((a + 1.0) * (a + 2.0));
}

// Quadratic through f(phi_hat), f'(phi_hat) with curvature half_curv.
inline Quadratic taylor_minorant(double f, double df, double half_curv, double phi_hat) {
  Quadratic q;
  q.c1 = half_curv;
  q.c2 = df - 2.0 * half_curv * phi_hat;
  q.c3 = f - df * phi_hat + half_curv * phi_hat * phi_hat;
  return q;
}

inline Quadratic surrogate_transmission(const SystemParams& p, int m, double T_m, double P_S, double phi_hat) {
  if (!(T_m > 0.0)) throw std::domain_error("surrogate_transmission: T_m must be positive");
  if (!(phi_hat > 0.0 && phi_hat <= 1.0)) throw std::domain_error("surrogate_transmission: phi_hat outside (0,1]");
  if (!(P_S > 0.0)) throw std::domain_error("surrogate_transmission: P_S must be positive");
  const double rate_per_share = p.L / (p.B_w * T_m);
  const double eta = mean_snr(p, m, P_S);
  const double x = rate_per_share * phi_hat;
  const double f = chi(x, eta);
  const double df = -f * std::exp2(x) * std::numbers::ln2 / eta * rate_per_share;
  return taylor_minorant(f, df, 0.5 * rate_per_share * rate_per_share * b_chi(eta), phi_hat);
}

// Minorant of gamma(alpha, psi / phi) around phi_hat.
inline Quadratic computation_minorant(double psi, double phi_hat, const GammaWorkload& w) {
  if (!(psi > 0.0)) throw std::domain_error("computation_minorant: psi must be positive");
  if (!(phi_hat > 0.0 && phi_hat <= 1.0)) throw std::domain_error("computation_minorant: phi_hat outside (0,1]");
  const double z = psi / phi_hat;
  const double f = regularized_lower_gamma(w.alpha, z);
  const double df = -gamma_pdf(z, {w.alpha, 1.0}) * psi / (phi_hat * phi_hat);
  return taylor_minorant(f, df, 0.5 * b_gamma(psi, w), phi_hat);
}

inline double computation_psi(const SystemParams& p, int m, double t_elapsed) {
  return p.s[m - 1] * (p.gamma_T - t_elapsed) / (p.L * p.workload.beta);
}

inline double local_psi(const SystemParams& p, double rho) { return rho / (p.L * p.workload.beta); }

inline Quadratic surrogate_computation(const SystemParams& p, int m, double t_elapsed, double phi_hat) {
  return computation_minorant(computation_psi(p, m, t_elapsed), phi_hat, p.workload);
}

inline Quadratic surrogate_local(const SystemParams& p, double rho, double phi_hat) {
  return computation_minorant(local_psi(p, rho), phi_hat, p.workload);
}

struct Interval {
  double lo;
  double hi;
};

namespace detail {

// Open-downward quadratic: the region where it is positive, if any.
inline std::optional<Interval> positive_region(const Quadratic& q) {
  if (q.is_constant()) {
    if (q.c3 > 0.0) return Interval{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    return std::nullopt;
  }
  if (!(q.c1 < 0.0)) throw std::domain_error("positive_region: leading coefficient must be negative");
  const double disc = q.c2 * q.c2 - 4.0 * q.c1 * q.c3;
  if (!(disc > 0.0)) return std::nullopt;
  const double sq = std::sqrt(disc);
  // Cancellation-free pair of roots.
  const double qq = -0.5 * (q.c2 + std::copysign(sq, q.c2));
  double r1 = qq / q.c1;
  double r2 = q.c3 / qq;
  if (r1 > r2) std::swap(r1, r2);
  return Interval{r1, r2};
}

}  // namespace detail

// Shares in [0,1] where both minorants stay positive; empty when they do not overlap.
inline std::optional<Interval> phi_interval(const Quadratic& r, const Quadratic& l) {
  const auto a = detail::positive_region(r);
  const auto b = detail::positive_region(l);
  if (!a || !b) return std::nullopt;
  const double lo = std::max({a->lo, b->lo, 0.0});
  const double hi = std::min({a->hi, b->hi, 1.0});
  if (!(lo <= hi)) return std::nullopt;
  return Interval{lo, hi};
}

}  // namespace aircomp
