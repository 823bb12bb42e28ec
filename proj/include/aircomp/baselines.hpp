#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "aircomp/bcd_solver.hpp"

namespace aircomp {

struct SolveResult {
  Allocation allocation;
  SuccessBreakdown breakdown;
  double log_p_sus{-std::numeric_limits<double>::infinity()};
  std::string start;  // which starting point produced the result
  int outer_iterations{0};
  bool converged{false};
};

inline SolveResult from_trace(const SystemParams& p, const BcdTrace& tr, std::string start) {
  SolveResult r;
  r.allocation = tr.final_allocation;
  r.breakdown = tr.breakdown;
  r.log_p_sus = log_success(p, r.allocation);
  r.start = std::move(start);
  r.outer_iterations = tr.outer_iterations;
  r.converged = tr.converged;
  return r;
}

inline SolveResult from_allocation(const SystemParams& p, const Allocation& a, std::string start) {
  SolveResult r;
  r.allocation = a;
  r.breakdown = success_breakdown(p, a);
  r.log_p_sus = log_success(p, a);
  r.start = std::move(start);
  r.converged = true;
  return r;
}

// Everything offloaded, shares spread evenly.
inline Allocation offload_initial_allocation(const SystemParams& p) {
  Allocation a = default_initial_allocation(p);
  a.phi.assign(p.M + 1, 1.0 / p.M);
  a.phi[0] = 0.0;
  a.rho = local_budget_rho(p, a.P_S, a.T);
  return a;
}

// Same block machinery with the local share pinned at zero.
inline SolveResult baseline_full_offload(const SystemParams& p, MmVariant variant = MmVariant::MM2,
                                         BcdOptions opt = {}) {
  opt.offload_only = true;
  return from_trace(p, bcd_solve(p, offload_initial_allocation(p), variant, opt), "full_offload");
}

inline SystemParams drop_last_server(const SystemParams& p) {
  SystemParams q = p;
  q.M = p.M - 1;
  q.s.pop_back();
  q.lambda.pop_back();
  return q;
}

// Best of: the default start, a start from the full-offload optimum, and for
// M >= 2 a start from the (M-1)-server optimum with the last server idle.
// Each start point is itself a candidate, so the result is never worse than any of them.
inline SolveResult proposed_solve(const SystemParams& p, MmVariant variant = MmVariant::MM2, const BcdOptions& opt = {}) {
  p.validate();
  std::vector<SolveResult> cands;
  cands.push_back(from_trace(p, bcd_solve(p, default_initial_allocation(p), variant, opt), "default"));

  BcdOptions off = opt;
  off.offload_only = true;
  const SolveResult offload = from_trace(p, bcd_solve(p, offload_initial_allocation(p), variant, off), "full_offload");
  cands.push_back(offload);
  cands.push_back(from_trace(p, bcd_solve(p, offload.allocation, variant, opt), "from_full_offload"));

  if (p.M >= 2) {
    const SolveResult fewer = proposed_solve(drop_last_server(p), variant, opt);
    Allocation padded = fewer.allocation;
    padded.phi.push_back(0.0);
    padded.T.push_back(0.0);
    padded.rho = local_budget_rho(p, padded.P_S, padded.T);
    cands.push_back(from_allocation(p, padded, "fewer_servers"));
    cands.push_back(from_trace(p, bcd_solve(p, padded, variant, opt), "from_fewer_servers"));
  }
  return *std::max_element(cands.begin(), cands.end(),
                           [](const SolveResult& a, const SolveResult& b) { return a.log_p_sus < b.log_p_sus; });
}

// Euclidean projection onto {x >= 0, sum x = 1}.
inline std::vector<double> project_simplex(std::vector<double> x) {
  std::vector<double> u = x;
  std::sort(u.begin(), u.end(), std::greater<>());
  double acc = 0.0, shift = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    acc += u[k];
    const double t = (acc - 1.0) / static_cast<double>(k + 1);
    if (u[k] - t > 0.0) shift = t;
  }
  for (double& v : x) v = std::max(0.0, v - shift);
  return x;
}

struct GradientOptions {
  double grad_tol{1e-6};  // on the projected-gradient mapping
  int max_iter{5000};
  double fd_step{1e-7};
};

struct GradientResult {
  Allocation allocation;
  SuccessBreakdown breakdown;
  double log_p_sus{0.0};
  int iterations{0};
  bool converged{false};
};

namespace detail {

// Shares, slots and power packed as one vector; rho follows from the energy budget.
struct PackedAllocation {
  int M;
  std::vector<double> phi(const std::vector<double>& x) const { return {x.begin(), x.begin() + M + 1}; }
  std::vector<double> T(const std::vector<double>& x) const { return {x.begin() + M + 1, x.begin() + 2 * M + 1}; }
  double P(const std::vector<double>& x) const { return x[2 * M + 1]; }

  Allocation unpack(const SystemParams& p, const std::vector<double>& x) const {
    Allocation a{phi(x), T(x), P(x), 0.0};
    a.rho = std::max(0.0, local_budget_rho(p, a.P_S, a.T));
    return a;
  }

  std::vector<double> pack(const Allocation& a) const {
    std::vector<double> x = a.phi;
    x.insert(x.end(), a.T.begin(), a.T.end());
    x.push_back(a.P_S);
    return x;
  }

  std::vector<double> project(const SystemParams& p, const std::vector<double>& x) const {
    std::vector<double> out = project_simplex(phi(x));
    const std::vector<double> T = detail::project_capped_simplex(this->T(x), (1.0 - 1e-9) * p.gamma_T);
    out.insert(out.end(), T.begin(), T.end());
    const double slots = total_time(T);
    const double cap = slots > 0.0 ? std::min(p.P_max, p.gamma_E / slots) : p.P_max;
    out.push_back(std::clamp(P(x), 0.0, cap));
    return out;
  }

  // -inf outside the box, so probes past a boundary read as infeasible.
  double value(const SystemParams& p, const std::vector<double>& x) const {
    for (double v : x) {
      if (!(v >= 0.0)) return -std::numeric_limits<double>::infinity();
    }
    const Allocation a = unpack(p, x);
    return log_success(p, a.phi, a.T, a.P_S, local_budget_rho(p, a.P_S, a.T));
  }
};

}  // namespace detail

// Projected gradient ascent on ln P_sus over (phi, T, P_S) jointly, with
// finite-difference gradients and Armijo backtracking.
inline GradientResult gradient_descent_solve(const SystemParams& p, const GradientOptions& opt = {}) {
  p.validate();
  const detail::PackedAllocation pk{p.M};
  std::vector<double> x = pk.project(p, pk.pack(default_initial_allocation(p)));
  double f = pk.value(p, x);
  double step = 1e-2;
  GradientResult out;
  const std::size_t n = x.size();
  for (int it = 1; it <= opt.max_iter; ++it) {
    std::vector<double> g(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double h = opt.fd_step * std::max(1.0, std::abs(x[i]));
      std::vector<double> up = x, down = x;
      up[i] += h;
      down[i] -= h;
      const double fu = pk.value(p, up), fd = pk.value(p, down);
      if (std::isfinite(fu) && std::isfinite(fd)) {
        g[i] = (fu - fd) / (2.0 * h);
      } else if (std::isfinite(fu)) {
        g[i] = (fu - f) / h;
      } else if (std::isfinite(fd)) {
        g[i] = (f - fd) / h;
      }
    }
    bool accepted = false;
    std::vector<double> nx;
    double nf = f;
    for (step = std::min(1.0, 2.0 * step); step > 1e-16; step *= 0.5) {
      std::vector<double> trial(n);
      for (std::size_t i = 0; i < n; ++i) trial[i] = x[i] + step * g[i];
      nx = pk.project(p, trial);
      nf = pk.value(p, nx);
      double gain = 0.0;
      for (std::size_t i = 0; i < n; ++i) gain += g[i] * (nx[i] - x[i]);
      if (std::isfinite(nf) && nf >= f + 1e-4 * gain) {
        accepted = true;
        break;
      }
    }
    out.iterations = it;
    if (!accepted) {
      out.converged = true;  // no ascent step left at machine resolution
      break;
    }
    double mapping = 0.0;
    for (std::size_t i = 0; i < n; ++i) mapping += (nx[i] - x[i]) * (nx[i] - x[i]);
    mapping = std::sqrt(mapping) / step;
    x = std::move(nx);
    f = nf;
    if (mapping < opt.grad_tol) {
      out.converged = true;
      break;
    }
  }
  out.allocation = pk.unpack(p, x);
  out.allocation.rho = local_budget_rho(p, out.allocation.P_S, out.allocation.T);
  out.breakdown = success_breakdown(p, out.allocation);
  out.log_p_sus = f;
  return out;
}

}  // namespace aircomp
