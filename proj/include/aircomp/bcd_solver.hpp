#pragma once

// Alternating maximization of ln P_sus over three blocks: transmit power with
// the local budget, the TDMA slot lengths, and the task split.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "aircomp/system_model.hpp"
#include "aircomp/task_split.hpp"

namespace aircomp {

struct PowerBudget {
  double P_S{0.0};
  double rho{0.0};
};

// Transmit power above which the energy budget, not the deadline, limits local cycles.
inline double energy_power_threshold(const SystemParams& p, const std::vector<double>& T) {
  const double sum_T = total_time(T);
  const double spare = p.gamma_E - p.epsilon * p.s0 * p.s0 * p.s0 * p.gamma_T;
  if (sum_T == 0.0) return spare >= 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
  return spare / sum_T;
}

inline double energy_limited_rho(const SystemParams& p, double P_S, const std::vector<double>& T) {
  return std::min(p.s0 * p.gamma_T, (p.gamma_E - P_S * total_time(T)) / (p.epsilon * p.s0 * p.s0));
}

// Power block. Below the threshold ln P_sus increases in P_S; above it the
// objective is concave and its stationary point is found by safeguarded Newton.
inline PowerBudget solve_p1(const SystemParams& p, const std::vector<double>& phi, const std::vector<double>& T) {
  if (static_cast<int>(phi.size()) != p.M + 1 || static_cast<int>(T.size()) != p.M) {
    throw invalid_allocation_error("solve_p1: phi needs M+1 entries and T needs M entries");
  }
  if (!(p.gamma_T - total_time(T) > 0.0)) throw invalid_allocation_error("solve_p1: slots exceed the deadline");
  const double threshold = energy_power_threshold(p, T);
  if (p.P_max <= threshold) return {p.P_max, p.s0 * p.gamma_T};

  const double sum_T = total_time(T);
  const double hi = std::min(p.P_max, p.gamma_E / sum_T);
  const double lo = std::clamp(threshold, 0.0, hi);
  // ln P_T,m = -c_m / P_S
  double c = 0.0;
  for (int m = 1; m <= p.M; ++m) {
    if (phi[m] == 0.0) continue;
    if (!(T[m - 1] > 0.0)) throw invalid_allocation_error("solve_p1: empty slot carries work");
    c += std::expm1(std::numbers::ln2 * p.L * phi[m] / (p.B_w * T[m - 1])) * p.sigma2 / p.lambda[m - 1];
  }
  auto finish = [&](double P) { return PowerBudget{P, energy_limited_rho(p, P, T)}; };
  if (phi[0] == 0.0) return finish(hi);

  const double scale = p.epsilon * p.s0 * p.s0 * p.L * phi[0] * p.workload.beta;
  const double slope = sum_T / scale;  // d(argument)/dP_S, negated
  auto grad = [&](double P, double* curv) {
    const double arg = (p.gamma_E - P * sum_T) / scale;
    if (!(arg > 0.0)) {
      if (curv) *curv = -std::numeric_limits<double>::infinity();
      return -std::numeric_limits<double>::infinity();
    }
    const auto u = log_regularized_lower_gamma_derivatives(p.workload.alpha, arg);
    if (curv) *curv = -2.0 * c / (P * P * P) + u.second * slope * slope;
    return c / (P * P) - u.first * slope;
  };
  const double g_lo = lo > 0.0 ? grad(lo, nullptr) : (c > 0.0 ? std::numeric_limits<double>::infinity() : -slope);
  if (!(g_lo > 0.0)) return finish(lo);
  if (hi == p.P_max && grad(hi, nullptr) >= 0.0) return finish(hi);
  double a = lo, b = hi;
  double x = lo > 0.0 ? 0.5 * (lo + hi) : 0.5 * hi;
  for (int i = 0; i < kMaxBisections; ++i) {
    double curv = 0.0;
    const double g = grad(x, &curv);
    if (std::abs(g) <= 1e-8) break;
    if (g > 0.0) {
      a = x;
    } else {
      b = x;
    }
    if (b - a <= 1e-15 * p.P_max) break;
    double next = x - g / curv;
    if (!(next > a && next < b)) next = 0.5 * (a + b);
    x = next;
  }
  return finish(x);
}

namespace detail {

// Euclidean projection onto {x >= 0, sum x <= cap}.
inline std::vector<double> project_capped_simplex(std::vector<double> x, double cap) {
  for (double& v : x) v = std::max(v, 0.0);
  double s = 0.0;
  for (double v : x) s += v;
  if (s <= cap) return x;
  std::vector<double> u = x;
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cum += u[j];
    const double t = (cum - cap) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  for (double& v : x) v = std::max(v - theta, 0.0);
  return x;
}

}  // namespace detail

struct SlotResult {
  std::vector<double> T;
  int iterations{0};
  double gradient_norm{0.0};
};

enum class SlotBudget {
  fixed,  // rho held at the given value; sum T limited by the energy left after it
  tight,  // rho follows local_budget_rho(P_S, T), so slots and local cycles trade off
};

// Slot block: projected gradient ascent with Barzilai-Borwein trial steps and
// Armijo backtracking. Slots of idle servers are set to zero.
inline SlotResult solve_p2_detailed(const SystemParams& p, const std::vector<double>& phi, double P_S, double rho,
                                    const std::vector<double>& T_init, SlotBudget budget = SlotBudget::tight,
                                    double grad_tol = 1e-6, int max_iter = 5000) {
  const int M = p.M;
  std::vector<int> active;
  for (int m = 1; m <= M; ++m) {
    if (phi[m] > 0.0) active.push_back(m);
  }
  const bool tight = budget == SlotBudget::tight;
  double cap = p.gamma_T;
  if (P_S > 0.0) {
    cap = std::min(cap, (p.gamma_E - (tight ? 0.0 : p.epsilon * p.s0 * p.s0 * rho)) / P_S);
  }
  cap = std::max(cap, 0.0);

  auto expand = [&](const std::vector<double>& x) {
    std::vector<double> T(M, 0.0);
    for (std::size_t i = 0; i < active.size(); ++i) T[active[i] - 1] = x[i];
    return T;
  };
  auto budget_of = [&](const std::vector<double>& T) { return tight ? local_budget_rho(p, P_S, T) : rho; };
  auto objective = [&](const std::vector<double>& x) {
    const auto T = expand(x);
    return log_success(p, phi, T, P_S, budget_of(T));
  };
  auto gradient = [&](const std::vector<double>& x) {
    const auto T = expand(x);
    std::vector<double> g(active.size(), 0.0);
    double t = 0.0;
    std::vector<double> elapsed(M + 1, 0.0);
    for (int m = 1; m <= M; ++m) elapsed[m] = (t += T[m - 1]);
    for (std::size_t i = 0; i < active.size(); ++i) {
      const int m = active[i];
      const double demand = p.L * phi[m] / p.B_w;
      const double z = demand / T[m - 1];
      g[i] += std::exp2(z) * std::numbers::ln2 * demand / (mean_snr(p, m, P_S) * T[m - 1] * T[m - 1]);
      // A later slot end shrinks the compute window of this and every later server.
      const double rate = p.s[m - 1] / (p.L * phi[m] * p.workload.beta);
      const double du = log_regularized_lower_gamma_derivatives(p.workload.alpha,
                                                                rate * (p.gamma_T - elapsed[m])).first * rate;
      for (std::size_t j = 0; j <= i; ++j) g[j] -= du;
    }
    if (tight && phi[0] > 0.0 && P_S > 0.0) {
      const double energy_rho = (p.gamma_E - P_S * t) / (p.epsilon * p.s0 * p.s0);
      if (energy_rho <= p.s0 * p.gamma_T && energy_rho > 0.0) {
        const double rate = 1.0 / (p.L * phi[0] * p.workload.beta);
        const double du = log_regularized_lower_gamma_derivatives(p.workload.alpha, energy_rho * rate).first * rate *
                          P_S / (p.epsilon * p.s0 * p.s0);
        for (double& gi : g) gi -= du;
      }
    }
    return g;
  };

  SlotResult res;
  if (active.empty()) {
    res.T.assign(M, 0.0);
    return res;
  }
  std::vector<double> x(active.size());
  for (std::size_t i = 0; i < active.size(); ++i) x[i] = T_init[active[i] - 1];
  x = detail::project_capped_simplex(x, cap);
  double f = objective(x);
  if (!std::isfinite(f)) {
    std::fill(x.begin(), x.end(), 0.5 * cap / static_cast<double>(active.size()));
    f = objective(x);
  }
  if (!std::isfinite(f)) {
    res.T = expand(x);
    return res;
  }
  auto g = gradient(x);
  double step = 1e-4;
  for (int it = 0; it < max_iter; ++it) {
    auto probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) probe[i] += g[i];
    probe = detail::project_capped_simplex(probe, cap);
    double pg = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) pg = std::max(pg, std::abs(probe[i] - x[i]));
    res.gradient_norm = pg;
    if (pg <= grad_tol) break;
    ++res.iterations;

    bool accepted = false;
    std::vector<double> cand;
    double f_cand = f;
    for (int k = 0; k < 60; ++k) {
      cand = x;
      for (std::size_t i = 0; i < x.size(); ++i) cand[i] += step * g[i];
      cand = detail::project_capped_simplex(cand, cap);
      double lin = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) lin += g[i] * (cand[i] - x[i]);
      f_cand = objective(cand);
      if (std::isfinite(f_cand) && f_cand >= f + 1e-4 * lin) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const auto g_new = gradient(cand);
    double ss = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double s = cand[i] - x[i];
      const double y = g_new[i] - g[i];
      ss += s * s;
      sy += s * y;
    }
    const bool stalled = f_cand == f;
    x = cand;
    f = f_cand;
    g = g_new;
    step = sy < 0.0 ? std::clamp(ss / -sy, 1e-12, 1e3) : std::min(step * 4.0, 1e3);
    if (stalled && ss == 0.0) break;
  }
  res.T = expand(x);
  return res;
}

inline std::vector<double> solve_p2(const SystemParams& p, const std::vector<double>& phi, double P_S, double rho,
                                    const std::vector<double>& T_init, SlotBudget budget = SlotBudget::tight) {
  return solve_p2_detailed(p, phi, P_S, rho, T_init, budget).T;
}

enum class MmVariant { MM1, MM2 };

inline const char* variant_name(MmVariant v) { return v == MmVariant::MM1 ? "bcd_mm1" : "bcd_mm2"; }

struct BcdOptions {
  double outer_tol{1e-6};
  int max_outer{100};
  double inner_tol{1e-6};
  int max_inner{100};
  bool offload_only{false};
  SlotBudget slot_budget{SlotBudget::tight};
};

struct BcdIterate {
  Allocation allocation;
  double log_p_sus{0.0};
  int inner_iterations{0};
  int bisections{0};
};

struct BcdTrace {
  MmVariant variant{MmVariant::MM2};
  std::vector<BcdIterate> iterates;  // iterates[0] is the initial point
  int outer_iterations{0};
  int inner_iterations{0};
  int bisections{0};
  int fallbacks{0};
  bool converged{false};
  Allocation final_allocation;
  SuccessBreakdown breakdown;
};

// Uniform split, half the deadline spread evenly over the slots, full power
// when the energy budget allows it, and the tightest local budget.
inline Allocation default_initial_allocation(const SystemParams& p) {
  Allocation a;
  a.phi.assign(p.M + 1, 1.0 / (p.M + 1));
  a.T.assign(p.M, p.gamma_T / (2.0 * p.M));
  a.P_S = std::min(p.P_max, 0.5 * p.gamma_E / total_time(a.T));
  a.rho = local_budget_rho(p, a.P_S, a.T);
  return a;
}

inline void check_initial_allocation(const SystemParams& p, const Allocation& a) {
  validate_allocation(p, a);
  if (a.rho < 0.0) throw invalid_allocation_error("bcd_solve: initial rho is negative");
  const double energy = a.P_S * total_time(a.T) + p.epsilon * p.s0 * p.s0 * a.rho;
  if (energy > p.gamma_E * (1.0 + 1e-12)) {
    throw invalid_allocation_error("bcd_solve: initial allocation exceeds the energy budget (P_S sum T + eps s0^2 rho = " +
                                   std::to_string(energy) + " J > gamma_E)");
  }
  for (int m = 1; m <= p.M; ++m) {
    if (a.phi[m] > 0.0 && !(a.T[m - 1] > 0.0)) {
      throw invalid_allocation_error("bcd_solve: server " + std::to_string(m) + " has work but no slot");
    }
  }
}

inline BcdTrace bcd_solve(const SystemParams& p, const Allocation& init, MmVariant variant,
                          const BcdOptions& opt = {}) {
  p.validate();
  check_initial_allocation(p, init);
  BcdTrace trace;
  trace.variant = variant;
  Allocation cur = init;
  if (opt.offload_only && cur.phi[0] > 0.0) {
    const double rest = 1.0 - cur.phi[0];
    cur.phi[0] = 0.0;
    for (int m = 1; m <= p.M; ++m) cur.phi[m] = rest > 0.0 ? cur.phi[m] / rest : 1.0 / p.M;
  }
  double obj = log_success(p, cur);
  trace.iterates.push_back({cur, obj, 0, 0});
  for (int n = 1; n <= opt.max_outer; ++n) {
    const auto pb = solve_p1(p, cur.phi, cur.T);
    cur.P_S = pb.P_S;
    cur.rho = pb.rho;
    cur.T = solve_p2(p, cur.phi, cur.P_S, cur.rho, cur.T, opt.slot_budget);
    if (opt.slot_budget == SlotBudget::tight) cur.rho = local_budget_rho(p, cur.P_S, cur.T);
    const P3Problem prob{cur.T, cur.P_S, cur.rho, opt.offload_only};
    const P3Result split = variant == MmVariant::MM2 ? solve_p3_mm2(p, prob, cur.phi, opt.inner_tol, opt.max_inner)
                                                     : solve_p3_mm1(p, prob, cur.phi, opt.inner_tol, opt.max_inner);
    cur.phi = split.phi;
    const double next = log_success(p, cur);
    trace.outer_iterations = n;
    trace.inner_iterations += split.iterations;
    trace.bisections += split.bisections;
    trace.fallbacks += split.fallbacks;
    trace.iterates.push_back({cur, next, split.iterations, split.bisections});
    const bool done = std::isfinite(next) && std::isfinite(obj) && std::abs(next - obj) < opt.outer_tol;
    obj = next;
    if (done) {
      trace.converged = true;
      break;
    }
  }
  trace.final_allocation = cur;
  trace.breakdown = success_breakdown(p, cur);
  return trace;
}

}  // namespace aircomp
