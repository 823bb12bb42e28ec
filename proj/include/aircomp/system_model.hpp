#pragma once

// Single-user outage model: a mobile user splits an L-bit task into a local
// share phi[0] and shares phi[m] offloaded over TDMA slots T[m-1] to M edge
// servers. Offloaded shares succeed when the Rayleigh link carries the bits
// in the slot and the server finishes before the deadline; the local share
// succeeds when it meets both the deadline and the energy budget.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "aircomp/special_functions.hpp"

namespace aircomp {

struct infeasible_latency_error : std::domain_error {
  using std::domain_error::domain_error;
};

struct invalid_allocation_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct SystemParams {
  int M{2};
  double L{1e7};           // bits
  double B_w{1e8};         // Hz
  double sigma2{1e-9};     // W
  double P_max{1.0};       // W
  double gamma_T{1.0};     // s
  double gamma_E{1.0};     // J
  double s0{1e9};          // cycles/s
  std::vector<double> s;   // server speeds, cycles/s
  std::vector<double> lambda;  // mean channel gains
  double epsilon{1e-27};
  GammaWorkload workload{};

  // Simulation defaults: servers at 5 GHz, lambda_m = (11 - m) * 1e-7.
  static SystemParams defaults(int servers, double task_bits) {
    SystemParams p;
    p.M = servers;
    p.L = task_bits;
    p.s.assign(servers, 5e9);
    p.lambda.resize(servers);
    for (int m = 1; m <= servers; ++m) p.lambda[m - 1] = (11 - m) * 1e-7;
    return p;
  }

  void validate() const {
    if (M < 1) throw std::invalid_argument("SystemParams: M must be at least 1");
    if (static_cast<int>(s.size()) != M || static_cast<int>(lambda.size()) != M) {
      throw std::invalid_argument("SystemParams: s and lambda must have M entries");
    }
    auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
    if (!positive(L) || !positive(B_w) || !positive(sigma2) || !positive(P_max) || !positive(gamma_T) ||
        !positive(gamma_E) || !positive(s0) || !positive(epsilon)) {
      throw std::invalid_argument("SystemParams: scalar parameters must be positive and finite");
    }
    for (int m = 0; m < M; ++m) {
      if (!positive(s[m]) || !positive(lambda[m])) {
        throw std::invalid_argument("SystemParams: server speeds and channel gains must be positive");
      }
    }
    workload.validate();
  }
};

// phi has M + 1 entries (phi[0] local), T has M entries (slot of server m is T[m-1]).
struct Allocation {
  std::vector<double> phi;
  std::vector<double> T;
  double P_S{0.0};
  double rho{0.0};
};

struct SuccessBreakdown {
  std::vector<double> p_trans;
  std::vector<double> p_comp;
  double p_local{1.0};
  double p_sus{1.0};
  double p_out{0.0};
};

inline double total_time(const std::vector<double>& T) { return std::accumulate(T.begin(), T.end(), 0.0); }

// Time elapsed when the slot of server m (1-based) ends.
inline double elapsed_time(const std::vector<double>& T, int m) {
  return std::accumulate(T.begin(), T.begin() + m, 0.0);
}

inline double mean_snr(const SystemParams& p, int m, double P_S) { return P_S * p.lambda[m - 1] / p.sigma2; }

inline double transmission_success(const SystemParams& p, int m, double phi_m, double T_m, double P_S) {
  if (phi_m == 0.0) return 1.0;
  if (!(T_m > 0.0)) throw std::domain_error("transmission_success: T_m must be positive when phi_m > 0");
  if (!(P_S > 0.0)) return 0.0;
  return chi(p.L * phi_m / (p.B_w * T_m), mean_snr(p, m, P_S));
}

inline double log_transmission_success(const SystemParams& p, int m, double phi_m, double T_m, double P_S) {
  if (phi_m == 0.0) return 0.0;
  if (!(T_m > 0.0)) throw std::domain_error("log_transmission_success: T_m must be positive when phi_m > 0");
  if (!(P_S > 0.0)) return -std::numeric_limits<double>::infinity();
  return log_chi(p.L * phi_m / (p.B_w * T_m), mean_snr(p, m, P_S));
}

inline double computation_argument(const SystemParams& p, int m, double phi_m, double t_elapsed) {
  return p.s[m - 1] * (p.gamma_T - t_elapsed) / (p.L * phi_m * p.workload.beta);
}

inline double computation_success(const SystemParams& p, int m, double phi_m, double t_elapsed) {
  if (phi_m == 0.0) return 1.0;
  if (!(p.gamma_T - t_elapsed > 0.0)) {
    throw infeasible_latency_error("computation_success: no time left after transmission");
  }
  return regularized_lower_gamma(p.workload.alpha, computation_argument(p, m, phi_m, t_elapsed));
}

inline double log_computation_success(const SystemParams& p, int m, double phi_m, double t_elapsed) {
  if (phi_m == 0.0) return 0.0;
  if (!(p.gamma_T - t_elapsed > 0.0)) {
    throw infeasible_latency_error("log_computation_success: no time left after transmission");
  }
  return log_regularized_lower_gamma(p.workload.alpha, computation_argument(p, m, phi_m, t_elapsed));
}

// min(s0 gamma_T, (gamma_E - P_S sum T) / (eps s0^2)); negative when transmission alone exhausts the budget.
inline double local_budget_rho(const SystemParams& p, double P_S, const std::vector<double>& T) {
  const double energy_term = (p.gamma_E - P_S * total_time(T)) / (p.epsilon * p.s0 * p.s0);
  return std::min(p.s0 * p.gamma_T, energy_term);
}

inline double local_success(const SystemParams& p, double phi_0, double rho) {
  if (phi_0 == 0.0) return rho >= 0.0 ? 1.0 : 0.0;
  if (!(rho > 0.0)) return 0.0;
  return regularized_lower_gamma(p.workload.alpha, rho / (p.L * phi_0 * p.workload.beta));
}

inline double log_local_success(const SystemParams& p, double phi_0, double rho) {
  if (phi_0 == 0.0) return rho >= 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
  if (!(rho > 0.0)) return -std::numeric_limits<double>::infinity();
  return log_regularized_lower_gamma(p.workload.alpha, rho / (p.L * phi_0 * p.workload.beta));
}

inline void validate_allocation(const SystemParams& p, const Allocation& a) {
  if (static_cast<int>(a.phi.size()) != p.M + 1 || static_cast<int>(a.T.size()) != p.M) {
    throw invalid_allocation_error("Allocation: phi needs M+1 entries and T needs M entries");
  }
  double sum = 0.0;
  for (double f : a.phi) {
    if (!(f >= 0.0 && f <= 1.0)) throw invalid_allocation_error("Allocation: phi entries must lie in [0,1]");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw invalid_allocation_error("Allocation: phi must sum to 1");
  double t = 0.0;
  for (double Tm : a.T) {
    if (!(Tm >= 0.0)) throw invalid_allocation_error("Allocation: T entries must be non-negative");
    t += Tm;
  }
  if (!(p.gamma_T - t > 0.0)) throw invalid_allocation_error("Allocation: transmission must end before the deadline");
  if (!(a.P_S >= 0.0 && a.P_S <= p.P_max)) throw invalid_allocation_error("Allocation: P_S outside [0, P_max]");
  if (!(a.rho <= p.s0 * p.gamma_T)) throw invalid_allocation_error("Allocation: rho above s0 * gamma_T");
}

inline SuccessBreakdown success_breakdown(const SystemParams& p, const Allocation& a) {
  validate_allocation(p, a);
  SuccessBreakdown out;
  out.p_trans.resize(p.M);
  out.p_comp.resize(p.M);
  out.p_local = local_success(p, a.phi[0], a.rho);
  double prod = out.p_local;
  double t = 0.0;
  for (int m = 1; m <= p.M; ++m) {
    t += a.T[m - 1];
    out.p_trans[m - 1] = transmission_success(p, m, a.phi[m], a.T[m - 1], a.P_S);
    out.p_comp[m - 1] = computation_success(p, m, a.phi[m], t);
    prod *= out.p_trans[m - 1] * out.p_comp[m - 1];
  }
  out.p_sus = prod;
  out.p_out = 1.0 - prod;
  return out;
}

// ln P_sus without validation; -inf when any factor is zero or a slot is empty with work on it.
inline double log_success(const SystemParams& p, const std::vector<double>& phi, const std::vector<double>& T,
                          double P_S, double rho) {
  const double neg_inf = -std::numeric_limits<double>::infinity();
  double acc = log_local_success(p, phi[0], rho);
  double t = 0.0;
  for (int m = 1; m <= p.M; ++m) {
    t += T[m - 1];
    if (phi[m] == 0.0) continue;
    if (!(T[m - 1] > 0.0) || !(p.gamma_T - t > 0.0)) return neg_inf;
    acc += log_transmission_success(p, m, phi[m], T[m - 1], P_S);
    acc += log_computation_success(p, m, phi[m], t);
  }
  return acc;
}

inline double log_success(const SystemParams& p, const Allocation& a) { return log_success(p, a.phi, a.T, a.P_S, a.rho); }

struct MonteCarloOptions {
  // Server speeds are scaled per trial by U[1 - jitter, 1 + jitter].
  double speed_jitter{0.0};
};

struct MonteCarloEstimate {
  double p_out{0.0};
  double std_error{0.0};
  std::size_t trials{0};
};

// Samples channel gains and workloads and evaluates the physical success
// event: every link carries its bits within its slot, every server finishes
// by the deadline, and the local share meets deadline and energy budget.
// The local event uses P_S and T; it matches the analytic P0 when
// rho = local_budget_rho(P_S, T).
inline MonteCarloEstimate monte_carlo_outage(const SystemParams& p, const Allocation& a, std::size_t trials,
                                             std::uint64_t seed, const MonteCarloOptions& opt = {}) {
  if (trials < 1) throw std::invalid_argument("monte_carlo_outage: trials must be at least 1");
  validate_allocation(p, a);
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> kappa(p.workload.alpha, p.workload.beta);
  std::exponential_distribution<double> unit_exp(1.0);
  std::uniform_real_distribution<double> jitter(1.0 - opt.speed_jitter, 1.0 + opt.speed_jitter);
  const double sum_T = total_time(a.T);
  const double tx_energy = a.P_S * sum_T;

  std::size_t failures = 0;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    bool ok = true;
    // Draw every variate each trial so the stream layout is independent of outcomes.
    const double k0 = kappa(rng);
    if (a.phi[0] > 0.0) {
      const double bits = p.L * a.phi[0];
      const bool on_time = bits * k0 / p.s0 <= p.gamma_T;
      const bool in_budget = tx_energy + p.epsilon * p.s0 * p.s0 * k0 * bits <= p.gamma_E;
      ok = on_time && in_budget;
    } else if (tx_energy > p.gamma_E) {
      ok = false;
    }
    double t = 0.0;
    for (int m = 1; m <= p.M; ++m) {
      const double gain = p.lambda[m - 1] * unit_exp(rng);
      const double km = kappa(rng);
      const double speed = opt.speed_jitter > 0.0 ? p.s[m - 1] * jitter(rng) : p.s[m - 1];
      t += a.T[m - 1];
      if (a.phi[m] == 0.0) continue;
      const double bits = p.L * a.phi[m];
      const double snr = a.P_S * gain / p.sigma2;
      if (a.T[m - 1] * p.B_w * std::log1p(snr) / std::numbers::ln2 < bits) ok = false;
      if (bits * km / speed + t > p.gamma_T) ok = false;
    }
    if (!ok) ++failures;
  }
  MonteCarloEstimate est;
  est.trials = trials;
  est.p_out = static_cast<double>(failures) / static_cast<double>(trials);
  est.std_error = std::sqrt(est.p_out * (1.0 - est.p_out) / static_cast<double>(trials));
  return est;
}

}  // namespace aircomp
