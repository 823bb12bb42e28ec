#pragma once

// Task-split block of the alternating solver: with slots, power and local
// budget fixed, maximize ln P_sus over the shares phi on the unit simplex by
// minorize-maximize iterations. Each surrogate separates per index once a
// multiplier mu prices the sum constraint; mu is found by bisection.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "aircomp/quartic.hpp"
#include "aircomp/surrogates.hpp"
#include "aircomp/system_model.hpp"

namespace aircomp {

struct waterfill_bracket_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kMaxBisections = 200;
inline constexpr double kBracketTol = 1e-12;

namespace detail {

inline double log_or_neg_inf(double v) { return v > 0.0 ? std::log(v) : -std::numeric_limits<double>::infinity(); }

// ln r(phi) + ln l(phi) + mu phi and its derivative.
inline double split_objective(const Quadratic& r, const Quadratic& l, double mu, double phi) {
  return log_or_neg_inf(r(phi)) + log_or_neg_inf(l(phi)) + mu * phi;
}

inline double split_derivative(const Quadratic& r, const Quadratic& l, double mu, double phi) {
  return r.derivative(phi) / r(phi) + l.derivative(phi) / l(phi) + mu;
}

// Stationarity (rl)' + mu rl = 0 as a polynomial, highest degree first.
inline std::array<double, 5> stationarity_polynomial(const Quadratic& r, const Quadratic& l, double mu) {
  const std::array<double, 5> prod{r.c1 * l.c1, r.c1 * l.c2 + r.c2 * l.c1, r.c1 * l.c3 + r.c2 * l.c2 + r.c3 * l.c1,
                                   r.c2 * l.c3 + r.c3 * l.c2, r.c3 * l.c3};
  return {mu * prod[0], mu * prod[1] + 4.0 * prod[0], mu * prod[2] + 3.0 * prod[1], mu * prod[3] + 2.0 * prod[2],
          mu * prod[4] + prod[3]};
}

inline double bisect_decreasing(const std::function<double(double)>& d, double lo, double hi) {
  for (int i = 0; i < kMaxBisections && hi - lo > kBracketTol * std::max(1.0, std::abs(hi)); ++i) {
    const double mid = 0.5 * (lo + hi);
    if (d(mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Maximizer of the concave per-index surrogate problem on [lo, hi] via the
// real roots of its stationarity polynomial.
inline double solve_split_index(const Quadratic& r, const Quadratic& l, double mu, Interval bounds, int* fallbacks) {
  const auto poly = stationarity_polynomial(r, l, mu);
  std::vector<double> roots;
  try {
    roots = solve_polynomial_real(poly);
  } catch (const degenerate_polynomial_error&) {
    roots.clear();
  }
  double best = std::numeric_limits<double>::quiet_NaN();
  double best_val = -std::numeric_limits<double>::infinity();
  for (double x : roots) {
    if (x < bounds.lo || x > bounds.hi || !(r(x) > 0.0) || !(l(x) > 0.0)) continue;
    const double v = split_objective(r, l, mu, x);
    if (std::isnan(best) || v > best_val) {
      best = x;
      best_val = v;
    }
  }
  if (!std::isnan(best)) return best;

  auto d = [&](double x) { return split_derivative(r, l, mu, x); };
  const double d_lo = d(bounds.lo), d_hi = d(bounds.hi);
  if (d_lo > 0.0 && d_hi < 0.0) {
    if (fallbacks) ++*fallbacks;
    return bisect_decreasing(d, bounds.lo, bounds.hi);
  }
  const double v_lo = split_objective(r, l, mu, bounds.lo);
  const double v_hi = split_objective(r, l, mu, bounds.hi);
  return v_hi > v_lo ? bounds.hi : bounds.lo;
}

}  // namespace detail

// Local index: maximize ln l(phi) + mu phi on bounds.
inline double solve_p32a(const Quadratic& l0, double mu, Interval bounds, int* fallbacks = nullptr) {
  return detail::solve_split_index(Quadratic{0.0, 0.0, 1.0}, l0, mu, bounds, fallbacks);
}

// Server index: maximize ln r(phi) + ln l(phi) + mu phi on bounds.
inline double solve_p32b(const Quadratic& r, const Quadratic& l, double mu, Interval bounds,
                         int* fallbacks = nullptr) {
  return detail::solve_split_index(r, l, mu, bounds, fallbacks);
}

struct WaterfillResult {
  double mu{0.0};
  std::vector<double> phi;
  double sum{0.0};
  int bisections{0};
};

// Each solver maps mu to that index's share, non-decreasing in mu.
inline WaterfillResult waterfill_mu(const std::vector<std::function<double(double)>>& solvers, double target = 1.0) {
  auto eval = [&](double mu, std::vector<double>& phi) {
    phi.resize(solvers.size());
    double s = 0.0;
    for (std::size_t i = 0; i < solvers.size(); ++i) s += (phi[i] = solvers[i](mu));
    return s;
  };
  WaterfillResult res;
  std::vector<double> phi_lo, phi_hi;
  const double s0 = eval(0.0, phi_lo);
  if (std::abs(s0 - target) <= 1e-12) {
    res.phi = phi_lo;
    res.sum = s0;
    return res;
  }
  // The shares sum to exactly one, so the multiplier may be negative.
  double lo = 0.0, hi = 0.0;
  double s_lo = s0, s_hi = s0;
  int doublings = 0;
  if (s0 < target) {
    phi_hi = phi_lo;
    for (double mu = 1.0; s_hi < target; mu *= 2.0) {
      if (++doublings > 1000) throw waterfill_bracket_error("waterfill_mu: no multiplier reaches the target");
      lo = hi;
      s_lo = s_hi;
      phi_lo = phi_hi;
      hi = mu;
      s_hi = eval(hi, phi_hi);
    }
  } else {
    phi_hi = phi_lo;
    for (double mu = -1.0; s_lo > target; mu *= 2.0) {
      if (++doublings > 1000) throw waterfill_bracket_error("waterfill_mu: no multiplier brings the shares down to the target");
      hi = lo;
      s_hi = s_lo;
      phi_hi = phi_lo;
      lo = mu;
      s_lo = eval(lo, phi_lo);
    }
  }
  std::vector<double> phi_mid;
  for (int i = 0; i < kMaxBisections; ++i) {
    if (std::abs(s_hi - target) <= 1e-12) break;
    if (hi - lo <= kBracketTol * std::max({1.0, std::abs(lo), std::abs(hi)})) break;
    const double mid = 0.5 * (lo + hi);
    const double s_mid = eval(mid, phi_mid);
    ++res.bisections;
    if (s_mid < target) {
      lo = mid;
      s_lo = s_mid;
      phi_lo = phi_mid;
    } else {
      hi = mid;
      s_hi = s_mid;
      phi_hi = phi_mid;
    }
  }
  if (std::abs(s_lo - target) < std::abs(s_hi - target)) {
    res.mu = lo;
    res.phi = phi_lo;
    res.sum = s_lo;
  } else {
    res.mu = hi;
    res.phi = phi_hi;
    res.sum = s_hi;
  }
  return res;
}

struct P3Problem {
  std::vector<double> T;
  double P_S{0.0};
  double rho{0.0};
  bool offload_only{false};  // keep the local share at zero
};

struct P3Result {
  std::vector<double> phi;
  std::vector<double> objective;  // ln P_sus at the start and after each iteration
  int iterations{0};
  int bisections{0};
  int fallbacks{0};
  bool converged{false};
};

namespace detail {

inline bool index_frozen(const SystemParams& p, const P3Problem& prob, int m) {
  if (m == 0) return prob.offload_only || !(local_psi(p, prob.rho) > 0.0);
  return !(prob.T[m - 1] > 0.0) || !(prob.P_S > 0.0);
}

inline void normalize(std::vector<double>& phi) {
  double s = 0.0;
  for (double f : phi) s += f;
  for (double& f : phi) f /= s;
}

// Lift non-frozen shares to the solver floor and zero the frozen ones.
inline std::vector<double> prepare_start(const SystemParams& p, const P3Problem& prob, std::vector<double> phi) {
  for (int m = 0; m <= p.M; ++m) phi[m] = index_frozen(p, prob, m) ? 0.0 : std::max(phi[m], kMinShare);
  normalize(phi);
  return phi;
}

using SplitBuilder =
    std::function<std::vector<std::function<double(double)>>(const std::vector<double>& phi_hat, bool& ok)>;

inline P3Result run_split_mm(const SystemParams& p, const P3Problem& prob, const std::vector<double>& phi_init,
                             double tol, int max_iter, const SplitBuilder& build) {
  P3Result res;
  std::vector<double> phi = prepare_start(p, prob, phi_init);
  double obj = log_success(p, phi, prob.T, prob.P_S, prob.rho);
  res.objective.push_back(obj);
  for (int it = 0; it < max_iter; ++it) {
    bool ok = true;
    const auto solvers = build(phi, ok);
    ++res.iterations;
    if (!ok) break;
    WaterfillResult wf;
    try {
      wf = waterfill_mu(solvers);
    } catch (const waterfill_bracket_error&) {
      break;
    }
    res.bisections += wf.bisections;
    std::vector<double> next = wf.phi;
    normalize(next);
    double next_obj = log_success(p, next, prob.T, prob.P_S, prob.rho);
    // Rounding can push the surrogate maximizer marginally below the current
    // value; damp toward the current iterate before giving up.
    int halvings = 0;
    while (!(next_obj >= obj) && halvings < 30) {
      for (int m = 0; m <= p.M; ++m) next[m] = 0.5 * (next[m] + phi[m]);
      normalize(next);
      next_obj = log_success(p, next, prob.T, prob.P_S, prob.rho);
      ++halvings;
    }
    if (!(next_obj >= obj)) {
      res.converged = true;
      break;
    }
    double step = 0.0;
    for (int m = 0; m <= p.M; ++m) step = std::max(step, std::abs(next[m] - phi[m]));
    phi = next;
    obj = next_obj;
    res.objective.push_back(obj);
    if (step < tol) {
      res.converged = true;
      break;
    }
  }
  res.phi = phi;
  return res;
}

inline Interval clamp_bounds(Interval iv, double phi_hat) {
  iv.lo = std::max(iv.lo, kMinShare);
  iv.hi = std::min(iv.hi, 1.0);
  // The expansion point is feasible by construction; absorb rounding.
  iv.lo = std::min(iv.lo, phi_hat);
  iv.hi = std::max(iv.hi, phi_hat);
  return iv;
}

inline std::function<double(double)> frozen_index() {
  return [](double) { return 0.0; };
}

}  // namespace detail

// Second-order surrogates with closed-form per-index maximizers.
inline P3Result solve_p3_mm2(const SystemParams& p, const P3Problem& prob, const std::vector<double>& phi_init,
                             double tol = 1e-6, int max_iter = 100) {
  int fallbacks = 0;
  auto build = [&](const std::vector<double>& phi_hat, bool& ok) {
    std::vector<std::function<double(double)>> solvers(p.M + 1);
    double t = 0.0;
    for (int m = 0; m <= p.M; ++m) {
      if (m >= 1) t += prob.T[m - 1];
      if (detail::index_frozen(p, prob, m)) {
        solvers[m] = detail::frozen_index();
        continue;
      }
      Quadratic r{0.0, 0.0, 1.0};
      Quadratic l;
      if (m == 0) {
        l = surrogate_local(p, prob.rho, phi_hat[0]);
      } else {
        r = surrogate_transmission(p, m, prob.T[m - 1], prob.P_S, phi_hat[m]);
        l = surrogate_computation(p, m, t, phi_hat[m]);
      }
      const auto iv = phi_interval(r, l);
      if (!iv) {
        ok = false;
        return solvers;
      }
      const Interval bounds = detail::clamp_bounds(*iv, phi_hat[m]);
      if (m == 0) {
        solvers[m] = [l, bounds, &fallbacks](double mu) { return solve_p32a(l, mu, bounds, &fallbacks); };
      } else {
        solvers[m] = [r, l, bounds, &fallbacks](double mu) { return solve_p32b(r, l, mu, bounds, &fallbacks); };
      }
    }
    return solvers;
  };
  auto res = detail::run_split_mm(p, prob, phi_init, tol, max_iter, build);
  res.fallbacks = fallbacks;
  return res;
}

namespace detail {

// First-order surrogate of one index: the success factors depend on phi
// through 1/phi, which is replaced by its tangent (2 phi_hat - phi) / phi_hat^2.
// Both factors are concave increasing in that argument, so this minorizes.
struct FirstOrderIndex {
  double phi_hat;
  bool has_link;
  double demand;  // bits per unit share per slot, L / (B_w T)
  double eta;
  double psi;
  double alpha;

  double tangent(double phi) const { return (2.0 * phi_hat - phi) / (phi_hat * phi_hat); }

  double value(double phi) const {
    const double t = tangent(phi);
    double v = log_regularized_lower_gamma(alpha, psi * t);
    if (has_link) v += log_chi(demand / t, eta);
    return v;
  }

  // d/dphi and d^2/dphi^2
  std::pair<double, double> derivatives(double phi) const {
    const double t = tangent(phi);
    const double dt = -1.0 / (phi_hat * phi_hat);
    const auto u = log_regularized_lower_gamma_derivatives(alpha, psi * t);
    double d1 = u.first * psi * dt;
    double d2 = u.second * psi * psi * dt * dt;
    if (has_link) {
      const double z = demand / t;
      const double g = std::exp2(z) * std::numbers::ln2 * demand / eta;
      d1 += g / (t * t) * dt;
      d2 += -g * (std::numbers::ln2 * demand / (t * t * t * t) + 2.0 / (t * t * t)) * dt * dt;
    }
    return {d1, d2};
  }

  double argmax(double mu, Interval b) const {
    auto d = [&](double phi) { return derivatives(phi).first + mu; };
    if (!(d(b.lo) > 0.0)) return b.lo;
    if (!(d(b.hi) < 0.0)) return b.hi;
    double lo = b.lo, hi = b.hi;
    double x = std::clamp(phi_hat, lo, hi);
    for (int i = 0; i < kMaxBisections; ++i) {
      const auto [g1, g2] = derivatives(x);
      const double g = g1 + mu;
      if (g > 0.0) {
        lo = x;
      } else {
        hi = x;
      }
      if (hi - lo <= kBracketTol * std::max(1.0, hi) || std::abs(g) <= 1e-13 * (1.0 + std::abs(mu))) break;
      double next = x - g / g2;
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      x = next;
    }
    return x;
  }
};

}  // namespace detail

// First-order surrogates; per-index maximizers by safeguarded Newton.
inline P3Result solve_p3_mm1(const SystemParams& p, const P3Problem& prob, const std::vector<double>& phi_init,
                             double tol = 1e-6, int max_iter = 100) {
  auto build = [&](const std::vector<double>& phi_hat, bool& ok) {
    (void)ok;
    std::vector<std::function<double(double)>> solvers(p.M + 1);
    double t = 0.0;
    for (int m = 0; m <= p.M; ++m) {
      if (m >= 1) t += prob.T[m - 1];
      if (detail::index_frozen(p, prob, m)) {
        solvers[m] = detail::frozen_index();
        continue;
      }
      detail::FirstOrderIndex idx{phi_hat[m], m >= 1, 0.0, 1.0, 0.0, p.workload.alpha};
      if (m == 0) {
        idx.psi = local_psi(p, prob.rho);
      } else {
        idx.demand = p.L / (p.B_w * prob.T[m - 1]);
        idx.eta = mean_snr(p, m, prob.P_S);
        idx.psi = computation_psi(p, m, t);
      }
      // The tangent of 1/phi stays positive below 2 phi_hat.
      const Interval bounds{std::min(kMinShare, phi_hat[m]), std::min(1.0, 2.0 * phi_hat[m] * (1.0 - 1e-9))};
      solvers[m] = [idx, bounds](double mu) { return idx.argmax(mu, bounds); };
    }
    return solvers;
  };
  return detail::run_split_mm(p, prob, phi_init, tol, max_iter, build);
}

}  // namespace aircomp
