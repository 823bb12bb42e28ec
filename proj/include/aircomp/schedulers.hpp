#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "aircomp/dqn_agent.hpp"
#include "aircomp/multiuser_env.hpp"

namespace aircomp {

inline double jain_index(const std::vector<double>& x) {
  if (x.empty()) throw std::invalid_argument("jain_index: empty vector");
  double sum = 0.0, sq = 0.0;
  for (double v : x) {
    if (!(v >= 0.0)) throw std::invalid_argument("jain_index: values must be non-negative");
    sum += v;
    sq += v * v;
  }
  if (sq == 0.0) throw std::invalid_argument("jain_index: all values are zero");
  return sum * sum / (static_cast<double>(x.size()) * sq);
}

inline double energy_efficiency(double bits, double joules) {
  if (!(joules > 0.0)) throw std::invalid_argument("energy_efficiency: energy must be positive");
  return bits / joules;
}

enum class SchedulerKind { round_robin, weighted, max_min, proportional };

inline const char* scheduler_name(SchedulerKind k) {
  switch (k) {
    case SchedulerKind::round_robin: return "round_robin";
    case SchedulerKind::weighted: return "weighted";
    case SchedulerKind::max_min: return "max_min";
    case SchedulerKind::proportional: return "proportional";
  }
  return "?";
}

inline SchedulerKind scheduler_from_name(const std::string& s) {
  for (auto k : {SchedulerKind::round_robin, SchedulerKind::weighted, SchedulerKind::max_min, SchedulerKind::proportional}) {
    if (s == scheduler_name(k)) return k;
  }
  throw std::invalid_argument("unknown scheduler '" + s + "'");
}

struct SchedulerOptions {
  double local_share{-1.0};   // fraction kept on the device; negative means s0 / (s0 + sum s)
  double uplink_window{0.5};  // fraction of the slot each server spends receiving
  int max_min_rounds{30};
};

inline double scheduler_local_share(const MultiUserParams& mp, const SchedulerOptions& opt) {
  if (opt.local_share >= 0.0) {
    if (opt.local_share > 1.0) throw std::invalid_argument("SchedulerOptions: local share above 1");
    return opt.local_share;
  }
  return mp.s0 / (mp.s0 + std::accumulate(mp.s.begin(), mp.s.end(), 0.0));
}

// Builds an action from server-time shares: share(n, m) of the uplink window on
// server m. Offloaded work is split evenly over the servers a user has time on.
// Loads above a server's capacity are pulled back to the device, and power is
// lowered if the battery or energy budget cannot cover the uplink.
inline MultiUserAction action_from_shares(const MultiUserParams& mp, const MultiUserState& st,
                                          const Eigen::MatrixXd& share, const SchedulerOptions& opt) {
  MultiUserAction a;
  a.phi = Eigen::MatrixXd::Zero(mp.N, mp.M + 1);
  a.T = Eigen::MatrixXd::Zero(mp.N, mp.M);
  a.P = mp.P_max;
  const double local = scheduler_local_share(mp, opt);
  for (int n = 0; n < mp.N; ++n) {
    int active = 0;
    for (int m = 0; m < mp.M; ++m) active += share(n, m) > 0.0;
    a.phi(n, 0) = active > 0 ? local : 1.0;
    for (int m = 0; m < mp.M; ++m) {
      if (share(n, m) <= 0.0) continue;
      a.phi(n, m + 1) = (1.0 - local) / active;
      a.T(n, m) = share(n, m) * opt.uplink_window * mp.T_max;
    }
  }
  for (int m = 0; m < mp.M; ++m) {
    double load = 0.0;
    for (int n = 0; n < mp.N; ++n) load += st.L[n] * a.phi(n, m + 1) / mp.s[m];
    if (load <= mp.C[m]) continue;
    const double keep = mp.C[m] / load * (1.0 - 1e-12);
    for (int n = 0; n < mp.N; ++n) {
      const double moved = a.phi(n, m + 1) * (1.0 - keep);
      a.phi(n, m + 1) -= moved;
      a.phi(n, 0) += moved;
    }
  }
  for (int n = 0; n < mp.N; ++n) {
    const double slots = a.T.row(n).sum();
    const double budget = std::min(mp.gamma_E[n], st.E[n]);
    if (slots > 0.0 && a.P[n] * slots > budget) a.P[n] = budget / slots * (1.0 - 1e-12);
  }
  return a;
}

inline Eigen::MatrixXd rule_shares(SchedulerKind kind, const MultiUserParams& mp, const MultiUserState& st) {
  Eigen::MatrixXd share = Eigen::MatrixXd::Zero(mp.N, mp.M);
  auto column_normalize = [&](const std::vector<double>& raw) {
    const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
    for (int m = 0; m < mp.M; ++m) {
      for (int n = 0; n < mp.N; ++n) share(n, m) = raw[n] / total;
    }
  };
  switch (kind) {
    case SchedulerKind::round_robin: {
      // user n transmits to server (n + t) mod M; co-assigned users split its window
      std::vector<int> count(mp.M, 0);
      for (int n = 0; n < mp.N; ++n) ++count[(n + st.t) % mp.M];
      for (int n = 0; n < mp.N; ++n) {
        const int m = (n + st.t) % mp.M;
        share(n, m) = 1.0 / count[m];
      }
      break;
    }
    case SchedulerKind::weighted:
      column_normalize(mp.weight);
      break;
    case SchedulerKind::proportional: {
      std::vector<double> raw(mp.N);
      for (int n = 0; n < mp.N; ++n) raw[n] = mp.weight[n] * st.L[n];
      column_normalize(raw);
      break;
    }
    case SchedulerKind::max_min:
      column_normalize(std::vector<double>(mp.N, 1.0));
      break;
  }
  return share;
}

// Starts from equal shares and repeatedly moves time from the most to the least
// successful user, halving the transfer whenever the minimum does not improve.
inline Eigen::MatrixXd max_min_shares(const MultiUserParams& mp, const MultiUserState& st, const SchedulerOptions& opt) {
  Eigen::MatrixXd share = rule_shares(SchedulerKind::max_min, mp, st);
  auto min_success = [&](const Eigen::MatrixXd& s, int* lo, int* hi) {
    const auto ev = evaluate_slot(mp, st, action_from_shares(mp, st, s, opt));
    const auto [mn, mx] = std::minmax_element(ev.p_sus.begin(), ev.p_sus.end());
    if (lo) *lo = static_cast<int>(mn - ev.p_sus.begin());
    if (hi) *hi = static_cast<int>(mx - ev.p_sus.begin());
    return *mn;
  };
  int lo = 0, hi = 0;
  double best = min_success(share, &lo, &hi);
  double frac = 0.5;
  for (int r = 0; r < opt.max_min_rounds && lo != hi; ++r) {
    Eigen::MatrixXd trial = share;
    for (int m = 0; m < mp.M; ++m) {
      const double moved = frac * trial(hi, m);
      trial(hi, m) -= moved;
      trial(lo, m) += moved;
    }
    int tlo = 0, thi = 0;
    const double v = min_success(trial, &tlo, &thi);
    if (v > best) {
      share = trial;
      best = v;
      lo = tlo;
      hi = thi;
    } else {
      frac *= 0.5;
    }
  }
  return share;
}

inline MultiUserAction scheduler_action(SchedulerKind kind, const MultiUserParams& mp, const MultiUserState& st,
                                        const SchedulerOptions& opt = {}) {
  const Eigen::MatrixXd share = kind == SchedulerKind::max_min ? max_min_shares(mp, st, opt) : rule_shares(kind, mp, st);
  return action_from_shares(mp, st, share, opt);
}

using Policy = std::function<MultiUserAction(const MultiUserState&)>;

inline Policy scheduler_policy(SchedulerKind kind, const MultiUserParams& mp, const SchedulerOptions& opt = {}) {
  return [kind, mp, opt](const MultiUserState& st) { return scheduler_action(kind, mp, st, opt); };
}

// Uniform over the grid, from its own stream.
inline Policy random_policy(const ActionSpace& as, std::uint64_t seed) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  return [&as, rng](const MultiUserState&) {
    if (as.mode() == ActionSpace::Mode::joint) {
      std::uniform_int_distribution<std::int64_t> pick(0, as.size() - 1);
      return as.decode(pick(*rng));
    }
    std::uniform_int_distribution<int> pick(0, as.per_user() - 1);
    std::vector<int> idx(as.users());
    for (int& i : idx) i = pick(*rng);
    return as.decode(idx);
  };
}

inline Policy greedy_policy(const QNetwork& net, const ActionSpace& as, const MultiUserParams& mp) {
  const ActionLayout layout = action_layout(as);
  return [&net, &as, mp, layout](const MultiUserState& st) {
    return to_env_action(as, greedy_action(q_forward(net, state_vector(mp, st)), layout));
  };
}

struct PolicyEvaluation {
  int episodes{0};
  double mean_return{0.0};
  double return_se{0.0};
  double mean_success{0.0};  // over users, slots and episodes
  double success_se{0.0};    // across episode means
  std::vector<double> user_success;
  double violation_rate{0.0};  // violations per slot
  double energy_efficiency{0.0};  // expected completed bits per joule, mean over episodes that spent energy
};

// Episode e starts from reset(mix_seed(seed, e)), so policies evaluated with the
// same seed face the same task sizes and fading.
inline PolicyEvaluation evaluate_policy(const MultiUserParams& mp, const Policy& policy, int episodes, std::uint64_t seed) {
  if (episodes < 2) throw std::invalid_argument("evaluate_policy: need at least two episodes");
  MultiUserEnv env(mp);
  PolicyEvaluation out;
  out.episodes = episodes;
  out.user_success.assign(mp.N, 0.0);
  std::vector<double> returns, success;
  double efficiency = 0.0;
  int efficient_episodes = 0;
  long slots = 0, violations = 0;
  for (int e = 0; e < episodes; ++e) {
    MultiUserState st = env.reset(mix_seed(seed, static_cast<std::uint64_t>(e)));
    double ret = 0.0, succ = 0.0, bits = 0.0, joules = 0.0;
    int steps = 0;
    for (;;) {
      const StepResult r = env.step(policy(st));
      ret += r.reward;
      for (int n = 0; n < mp.N; ++n) {
        succ += r.p_sus[n] / mp.N;
        out.user_success[n] += r.p_sus[n];
        bits += st.L[n] * r.p_sus[n];
        joules += r.energy[n];
      }
      violations += r.violations;
      ++steps;
      st = r.next;
      if (r.terminal) break;
    }
    slots += steps;
    returns.push_back(ret);
    success.push_back(succ / steps);
    if (joules > 0.0) {
      efficiency += energy_efficiency(bits, joules);
      ++efficient_episodes;
    }
  }
  auto mean_se = [](const std::vector<double>& v, double& mean, double& se) {
    mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    se = std::sqrt(var / (v.size() - 1) / v.size());
  };
  mean_se(returns, out.mean_return, out.return_se);
  mean_se(success, out.mean_success, out.success_se);
  for (double& u : out.user_success) u /= static_cast<double>(slots);
  out.violation_rate = static_cast<double>(violations) / slots;
  out.energy_efficiency = efficient_episodes > 0 ? efficiency / efficient_episodes : 0.0;
  return out;
}

}  // namespace aircomp
