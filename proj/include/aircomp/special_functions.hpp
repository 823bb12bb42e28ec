#pragma once

// Scalar building blocks shared by the outage model, the solvers and the
// multi-user environment: the regularized lower incomplete Gamma function
// and its log-derivatives, the Gamma workload density, and the Rayleigh
// success kernel chi(x, y) = exp(-(2^x - 1) / y).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace aircomp {

// CPU-cycles-per-bit workload, kappa ~ Gamma(shape = alpha, scale = beta).
struct GammaWorkload {
  double alpha{10.0};
  double beta{50.0};

  void validate() const {
    if (!(alpha > 0.0) || !(beta > 0.0)) {
      throw std::domain_error("GammaWorkload: alpha and beta must be positive");
    }
  }
  double mean() const { return alpha * beta; }
  double variance() const { return alpha * beta * beta; }
};

namespace detail {

inline constexpr double kGammaRelTol = 1e-16;
inline constexpr int kGammaMaxTerms = 100000;

// Sum of the power series x^n / (alpha (alpha+1) ... (alpha+n)), n >= 0.
inline double lower_gamma_series_sum(double alpha, double x) {
  double term = 1.0 / alpha;
  double sum = term;
  for (int n = 1; n < kGammaMaxTerms; ++n) {
    term *= x / (alpha + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * kGammaRelTol) break;
  }
  return sum;
}

// Continued fraction for the regularized upper function Q(alpha, x), modified Lentz.
inline double upper_gamma_fraction(double alpha, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - alpha;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kGammaMaxTerms; ++i) {
    const double an = -i * (i - alpha);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kGammaRelTol) break;
  }
  return std::exp(-x + alpha * std::log(x) - std::lgamma(alpha)) * h;
}

inline void check_gamma_args(double alpha, double x) {
  if (!(alpha > 0.0)) throw std::domain_error("regularized_lower_gamma: alpha must be positive");
  if (!(x >= 0.0)) throw std::domain_error("regularized_lower_gamma: x must be non-negative");
}

}  // namespace detail

// gamma(alpha, x) / Gamma(alpha). Series below alpha + 1, continued fraction above.
inline double regularized_lower_gamma(double alpha, double x) {
  detail::check_gamma_args(alpha, x);
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (x < alpha + 1.0) {
    const double log_prefactor = alpha * std::log(x) - x - std::lgamma(alpha);
    return std::min(1.0, std::exp(log_prefactor) * detail::lower_gamma_series_sum(alpha, x));
  }
  return std::max(0.0, 1.0 - detail::upper_gamma_fraction(alpha, x));
}

// ln of the regularized lower incomplete Gamma function; accurate deep in the
// lower tail where the probability itself underflows.
inline double log_regularized_lower_gamma(double alpha, double x) {
  detail::check_gamma_args(alpha, x);
  if (x == 0.0) return -std::numeric_limits<double>::infinity();
  if (std::isinf(x)) return 0.0;
  if (x < alpha + 1.0) {
    return alpha * std::log(x) - x - std::lgamma(alpha) +
           std::log(detail::lower_gamma_series_sum(alpha, x));
  }
  return std::log1p(-detail::upper_gamma_fraction(alpha, x));
}

// d/dx of the regularized lower function: x^(alpha-1) e^-x / Gamma(alpha).
inline double regularized_lower_gamma_derivative(double alpha, double x) {
  if (x <= 0.0) return alpha == 1.0 ? 1.0 : (alpha < 1.0 ? std::numeric_limits<double>::infinity() : 0.0);
  return std::exp((alpha - 1.0) * std::log(x) - x - std::lgamma(alpha));
}

// First and second derivative of u(x) = ln gamma(alpha, x) (regularized).
struct LogGammaDerivatives {
  double first;
  double second;
};

inline LogGammaDerivatives log_regularized_lower_gamma_derivatives(double alpha, double x) {
  detail::check_gamma_args(alpha, x);
  if (std::isinf(x)) return {0.0, 0.0};
  if (x == 0.0) {
    const double inf = std::numeric_limits<double>::infinity();
    return {inf, -inf};
  }
  const double log_density = (alpha - 1.0) * std::log(x) - x - std::lgamma(alpha);
  const double ratio = std::exp(log_density - log_regularized_lower_gamma(alpha, x));
  return {ratio, ratio * ((alpha - 1.0) / x - 1.0 - ratio)};
}

inline double gamma_pdf(double x, const GammaWorkload& w) {
  if (!(x >= 0.0)) throw std::domain_error("gamma_pdf: x must be non-negative");
  w.validate();
  const double z = x / w.beta;
  if (z == 0.0) {
    if (w.alpha == 1.0) return 1.0 / w.beta;
    return w.alpha < 1.0 ? std::numeric_limits<double>::infinity() : 0.0;
  }
  return std::exp((w.alpha - 1.0) * std::log(z) - z - std::lgamma(w.alpha)) / w.beta;
}

// Probability that an exponential channel gain with mean SNR y supports
// spectral efficiency x: exp(-(2^x - 1) / y).
inline double chi(double x, double y) {
  if (!(y > 0.0)) throw std::domain_error("chi: mean SNR must be positive");
  if (!(x >= 0.0)) throw std::domain_error("chi: spectral efficiency must be non-negative");
  return std::exp(-std::expm1(x * std::numbers::ln2) / y);
}

// ln chi(x, y), finite for every finite demand.
inline double log_chi(double x, double y) {
  if (!(y > 0.0)) throw std::domain_error("chi: mean SNR must be positive");
  return -std::expm1(x * std::numbers::ln2) / y;
}

}  // namespace aircomp
