#pragma once

// Real roots of low-degree polynomials. The quartic path follows Ferrari's
// construction through the resolvent cubic; the cubic and quadratic paths
// handle degenerate leading coefficients. Every reported root is polished
// with a few Newton steps on the original polynomial.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace aircomp {

// a x^4 + b x^3 + c x^2 + d x + e
struct QuarticCoeffs {
  double a{0.0};
  double b{0.0};
  double c{0.0};
  double d{0.0};
  double e{0.0};

  double operator()(double x) const { return (((a * x + b) * x + c) * x + d) * x + e; }
  double derivative(double x) const { return ((4.0 * a * x + 3.0 * b) * x + 2.0 * c) * x + d; }
  double max_abs() const {
    return std::max({std::abs(a), std::abs(b), std::abs(c), std::abs(d), std::abs(e)});
  }
};

class degenerate_polynomial_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kDefaultImagTol = 1e-8;
inline constexpr double kRootMergeTol = 1e-8;
inline constexpr double kSplitRootTol = 1e-6;
inline constexpr double kDegenerateLeadTol = 1e-14;

namespace detail {

// Highest degree first.
inline double horner(std::span<const double> p, double x) {
  double acc = 0.0;
  for (double c : p) acc = acc * x + c;
  return acc;
}

inline std::complex<double> horner(std::span<const double> p, std::complex<double> z) {
  std::complex<double> acc = 0.0;
  for (double c : p) acc = acc * z + c;
  return acc;
}

inline double horner_derivative(std::span<const double> p, double x) {
  const std::size_t n = p.size() - 1;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc = acc * x + p[i] * static_cast<double>(n - i);
  return acc;
}

inline std::complex<double> horner_derivative(std::span<const double> p, std::complex<double> z) {
  const std::size_t n = p.size() - 1;
  std::complex<double> acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc = acc * z + p[i] * static_cast<double>(n - i);
  return acc;
}

inline std::complex<double> polish_complex(std::span<const double> p, std::complex<double> z) {
  for (int it = 0; it < 8; ++it) {
    const auto f = horner(p, z);
    const auto df = horner_derivative(p, z);
    if (std::abs(df) == 0.0) break;
    const auto next = z - f / df;
    if (!(std::abs(horner(p, next)) < std::abs(f))) break;
    z = next;
  }
  return z;
}

inline double polish_real(std::span<const double> p, double x) {
  for (int it = 0; it < 16; ++it) {
    const double f = horner(p, x);
    if (f == 0.0) break;
    const double df = horner_derivative(p, x);
    if (df == 0.0) break;
    const double next = x - f / df;
    if (!(std::abs(horner(p, next)) < std::abs(f))) break;
    x = next;
  }
  return x;
}

// Keeps the (numerically) real candidates, polishes, sorts, merges near-duplicates.
inline std::vector<double> finish_roots(std::span<const double> p,
                                        std::span<const std::complex<double>> candidates,
                                        double imag_tol) {
  std::vector<double> roots;
  for (auto z : candidates) {
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) continue;
    z = polish_complex(p, z);
    if (std::abs(z.imag()) > imag_tol * std::max(1.0, std::abs(z.real()))) continue;
    roots.push_back(polish_real(p, z.real()));
  }
  std::sort(roots.begin(), roots.end());
  // A double root polishes to a pair split by about sqrt(eps); merge such a
  // pair when the midpoint residual is at rounding level.
  auto noise_level = [&p](double x) {
    double acc = 0.0;
    for (double c : p) acc = acc * std::abs(x) + std::abs(c);
    return 64.0 * std::numeric_limits<double>::epsilon() * acc;
  };
  std::vector<double> merged;
  for (double r : roots) {
    if (!merged.empty()) {
      const double gap = std::abs(r - merged.back());
      const double rel = std::max(1.0, std::abs(r));
      if (gap < kRootMergeTol * rel) continue;
      const double mid = 0.5 * (r + merged.back());
      if (gap < kSplitRootTol * rel && std::abs(horner(p, mid)) <= noise_level(mid)) {
        merged.back() = mid;
        continue;
      }
    }
    merged.push_back(r);
  }
  return merged;
}

inline std::complex<double> principal_cbrt(std::complex<double> w) {
  if (w == 0.0) return 0.0;
  if (w.imag() == 0.0) return std::cbrt(w.real());
  return std::pow(w, 1.0 / 3.0);
}

}  // namespace detail

inline std::vector<double> solve_linear_real(double b, double c) {
  if (b == 0.0) {
    throw degenerate_polynomial_error("solve_linear_real: zero leading coefficient");
  }
  return {-c / b};
}

// b x^2 + c x + d, real roots ascending (double root reported once).
inline std::vector<double> solve_quadratic_real(double a, double b, double c) {
  if (a == 0.0) {
    throw degenerate_polynomial_error("solve_quadratic_real: zero leading coefficient");
  }
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return {};
  if (disc == 0.0) return {-b / (2.0 * a)};
  // Cancellation-free pair.
  const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
  double r1 = q / a;
  double r2 = (q != 0.0) ? c / q : -r1;
  if (r1 > r2) std::swap(r1, r2);
  return {r1, r2};
}

inline std::vector<double> solve_cubic_real(double a, double b, double c, double d,
                                            double imag_tol = kDefaultImagTol) {
  if (a == 0.0) {
    throw degenerate_polynomial_error("solve_cubic_real: zero leading coefficient");
  }
  const std::array<double, 4> p{a, b, c, d};
  // Depressed cubic t^3 + pt + q with x = t - b/(3a).
  const double bn = b / a, cn = c / a, dn = d / a;
  const double shift = -bn / 3.0;
  const double pp = cn - bn * bn / 3.0;
  const double qq = 2.0 * bn * bn * bn / 27.0 - bn * cn / 3.0 + dn;
  const std::complex<double> disc = std::sqrt(std::complex<double>(qq * qq / 4.0 + pp * pp * pp / 27.0));
  std::complex<double> w = -qq / 2.0 + disc;
  if (std::abs(-qq / 2.0 - disc) > std::abs(w)) w = -qq / 2.0 - disc;
  const std::complex<double> u0 = detail::principal_cbrt(w);
  const std::complex<double> omega(-0.5, std::sqrt(3.0) / 2.0);
  std::array<std::complex<double>, 3> cand;
  std::complex<double> u = u0;
  for (auto& z : cand) {
    const std::complex<double> v = (u == 0.0) ? std::complex<double>(0.0) : -pp / (3.0 * u);
    z = u + v + shift;
    u *= omega;
  }
  return detail::finish_roots(p, cand, imag_tol);
}

// Ferrari: the resolvent-cubic root (u + v) yields M = 4a sqrt-term; roots are
// (-b + s M + t sqrt(S + s T)) / (4a) for s, t in {+1, -1}.
inline std::vector<double> solve_quartic_real(const QuarticCoeffs& q, double imag_tol = kDefaultImagTol) {
  const double scale = std::max(1.0, q.max_abs());
  if (!(std::abs(q.a) > kDegenerateLeadTol * scale)) {
    throw degenerate_polynomial_error("solve_quartic_real: leading coefficient is degenerate");
  }
  // Work on coefficients normalized by their largest magnitude.
  const double inv = 1.0 / q.max_abs();
  const double a = q.a * inv, b = q.b * inv, c = q.c * inv, d = q.d * inv, e = q.e * inv;
  const std::array<double, 5> p{a, b, c, d, e};
  using cd = std::complex<double>;

  const double P = (c * c + 12.0 * a * e - 3.0 * b * d) / 9.0;
  const double U = (27.0 * a * d * d + 2.0 * c * c * c + 27.0 * b * b * e - 72.0 * a * c * e - 9.0 * b * c * d) / 54.0;
  const cd D = std::sqrt(cd(U * U - P * P * P));
  // Either sign of D gives a valid cube; the larger magnitude avoids cancellation.
  cd w = cd(U) + D;
  if (std::abs(cd(U) - D) > std::abs(w)) w = cd(U) - D;
  const cd u0 = detail::principal_cbrt(w);
  const cd omega(-0.5, std::sqrt(3.0) / 2.0);

  const double base_m = b * b - 8.0 / 3.0 * a * c;
  const double base_s = 2.0 * b * b - 16.0 / 3.0 * a * c;
  cd best_m = 0.0, best_uv = 0.0;
  double best_abs = -1.0;
  cd u = u0;
  for (int k = 1; k <= 3; ++k) {
    const cd v = (u == 0.0) ? cd(0.0) : cd(P) / u;
    const cd uv = u + v;
    const cd m = std::sqrt(cd(base_m) + 4.0 * a * uv);
    if (std::abs(m) > best_abs) {
      best_abs = std::abs(m);
      best_m = m;
      best_uv = uv;
    }
    u *= omega;
  }

  cd M = best_m, S, T;
  if (best_abs <= 1e-12 * std::max(1.0, std::abs(b))) {
    M = 0.0;
    S = cd(base_m);
    T = 0.0;
  } else {
    S = cd(base_s) - 4.0 * a * best_uv;
    T = cd(8.0 * a * b * c - 16.0 * a * a * d - 2.0 * b * b * b) / M;
  }

  std::array<cd, 4> cand;
  for (int n = 1; n <= 4; ++n) {
    const double s = ((n + 1) / 2) % 2 == 1 ? -1.0 : 1.0;  // (-1)^ceil(n/2)
    const double t = (n % 2 == 1) ? 1.0 : -1.0;            // (-1)^(n+1)
    cand[n - 1] = (-b + s * M + t * std::sqrt(S + s * T)) / (4.0 * a);
  }
  return detail::finish_roots(p, cand, imag_tol);
}

// Real roots of a polynomial of degree <= 4 (highest degree first). Leading
// coefficients below the degeneracy threshold are dropped, routing to the
// cubic, quadratic or linear solver.
inline std::vector<double> solve_polynomial_real(std::span<const double> coeffs,
                                                 double imag_tol = kDefaultImagTol) {
  if (coeffs.empty() || coeffs.size() > 5) {
    throw std::invalid_argument("solve_polynomial_real: supports degree 0..4");
  }
  double scale = 1.0;
  for (double c : coeffs) scale = std::max(scale, std::abs(c));
  std::size_t lead = 0;
  while (lead + 1 < coeffs.size() && !(std::abs(coeffs[lead]) > kDegenerateLeadTol * scale)) ++lead;
  const auto p = coeffs.subspan(lead);
  switch (p.size()) {
    case 5: return solve_quartic_real({p[0], p[1], p[2], p[3], p[4]}, imag_tol);
    case 4: return solve_cubic_real(p[0], p[1], p[2], p[3], imag_tol);
    case 3: return solve_quadratic_real(p[0], p[1], p[2]);
    case 2: return solve_linear_real(p[0], p[1]);
    default: return {};
  }
}

}  // namespace aircomp
