#pragma once

// N users sharing M edge servers: interference-aware links, shared server
// capacity, and a seeded slot-by-slot environment with a discretized action grid.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "aircomp/special_functions.hpp"
#include "aircomp/system_model.hpp"

namespace aircomp {

struct action_space_error : std::length_error {
  using std::length_error::length_error;
};

inline constexpr double kViolationPenalty = -10.0;
inline constexpr double kLogSuccessFloor = -27.631021115928547;  // ln 1e-12

struct MultiUserParams {
  int N{2};
  int M{1};
  double L_min{2e6};  // task sizes are drawn uniformly from [L_min, L_max] bits each slot
  double L_max{6e6};
  std::vector<double> gamma_T;  // per user, s
  std::vector<double> gamma_E;  // per-slot energy budget, J
  std::vector<double> P_max;    // W
  std::vector<double> weight;
  std::vector<double> E_max;        // battery capacity, J
  Eigen::MatrixXd lambda;           // N x M mean channel gains
  double B_w{1e8};
  double sigma2{1e-9};
  std::vector<double> s;  // server speeds, cycles/s
  std::vector<double> C;  // per-server limit on sum_n L_n phi_nm / s_m
  double T_max{1.0};      // slot length, s
  double lambda_E{0.1};
  double s0{1e9};
  double epsilon{1e-27};
  GammaWorkload workload{};
  int horizon{20};

  // Users further down the index see weaker channels: lambda_nm = (11 - m) 1e-7 / (1 + 0.2 (n - 1)).
  static MultiUserParams defaults(int users, int servers) {
    MultiUserParams mp;
    mp.N = users;
    mp.M = servers;
    mp.gamma_T.assign(users, 1.0);
    mp.gamma_E.assign(users, 1.0);
    mp.P_max.assign(users, 1.0);
    mp.weight.assign(users, 1.0);
    mp.E_max.assign(users, 20.0);
    mp.lambda.resize(users, servers);
    for (int n = 0; n < users; ++n) {
      for (int m = 0; m < servers; ++m) mp.lambda(n, m) = (10 - m) * 1e-7 / (1.0 + 0.2 * n);
    }
    mp.s.assign(servers, 5e9);
    mp.C.assign(servers, 2e-3);
    return mp;
  }

  void validate() const {
    if (N < 1 || M < 1) throw std::invalid_argument("MultiUserParams: N and M must be at least 1");
    auto sized = [](const std::vector<double>& v, int n) { return static_cast<int>(v.size()) == n; };
    if (!sized(gamma_T, N) || !sized(gamma_E, N) || !sized(P_max, N) || !sized(weight, N) || !sized(E_max, N)) {
      throw std::invalid_argument("MultiUserParams: per-user vectors must have N entries");
    }
    if (!sized(s, M) || !sized(C, M)) throw std::invalid_argument("MultiUserParams: s and C must have M entries");
    if (lambda.rows() != N || lambda.cols() != M) throw std::invalid_argument("MultiUserParams: lambda must be N x M");
    auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
    for (int n = 0; n < N; ++n) {
      if (!positive(gamma_T[n]) || !positive(gamma_E[n]) || !positive(P_max[n]) || !positive(weight[n]) ||
          !positive(E_max[n])) {
        throw std::invalid_argument("MultiUserParams: per-user parameters must be positive");
      }
      for (int m = 0; m < M; ++m) {
        if (!positive(lambda(n, m))) throw std::invalid_argument("MultiUserParams: channel gains must be positive");
      }
    }
    for (int m = 0; m < M; ++m) {
      if (!positive(s[m]) || !positive(C[m])) throw std::invalid_argument("MultiUserParams: s and C must be positive");
    }
    if (!positive(L_min) || !(L_max >= L_min) || !positive(B_w) || !positive(sigma2) || !positive(T_max) ||
        !positive(s0) || !positive(epsilon) || !(lambda_E >= 0.0) || horizon < 1) {
      throw std::invalid_argument("MultiUserParams: scalar parameters out of range");
    }
    workload.validate();
  }

  // Single-user view of user n with the current task size.
  SystemParams user_view(int n, double task_bits) const {
    SystemParams p;
    p.M = M;
    p.L = task_bits;
    p.B_w = B_w;
    p.sigma2 = sigma2;
    p.P_max = P_max[n];
    p.gamma_T = gamma_T[n];
    p.gamma_E = gamma_E[n];
    p.s0 = s0;
    p.s = s;
    p.lambda.resize(M);
    for (int m = 0; m < M; ++m) p.lambda[m] = lambda(n, m);
    p.epsilon = epsilon;
    p.workload = workload;
    return p;
  }
};

struct MultiUserState {
  std::vector<double> L;  // task bits per user
  Eigen::MatrixXd H;      // N x M channel power gains of the current slot
  std::vector<double> Q;  // pending cycles per server
  std::vector<double> E;  // battery level per user, J
  int t{0};
};

struct MultiUserAction {
  Eigen::MatrixXd phi;  // N x (M+1), column 0 local
  Eigen::MatrixXd T;    // N x M
  std::vector<double> P;
};

// P_T for user n at server m given the interference power at that server.
inline double multi_transmission_success(const MultiUserParams& mp, int n, int m, double task_bits, double phi,
                                         double T, double P_S, double interference) {
  if (interference < 0.0) throw std::domain_error("multi_transmission_success: negative interference");
  if (phi == 0.0) return 1.0;
  if (!(T > 0.0) || !(P_S > 0.0)) return 0.0;
  const double sinr = P_S * mp.lambda(n, m - 1) / (mp.sigma2 + interference);
  if (!(sinr > 0.0)) return 0.0;
  return chi(task_bits * phi / (mp.B_w * T), sinr);
}

// Transmissions to one server are time-separated by the slot schedule, so a
// user's signal interferes at server m only while it is sending to another server.
inline Eigen::MatrixXd interference(const MultiUserParams& mp, const MultiUserState& st, const MultiUserAction& a) {
  Eigen::MatrixXd I = Eigen::MatrixXd::Zero(mp.N, mp.M);
  for (int m = 0; m < mp.M; ++m) {
    for (int j = 0; j < mp.N; ++j) {
      const double elsewhere = a.T.row(j).sum() - a.T(j, m);
      const double power = a.P[j] * st.H(j, m) * std::min(1.0, elsewhere / mp.T_max);
      for (int n = 0; n < mp.N; ++n) {
        if (n != j) I(n, m) += power;
      }
    }
  }
  return I;
}

// P_C for user n at server m with other users' cycles at their mean and the
// existing backlog ahead of it. Zero when the slack is used up.
inline double multi_computation_success(const MultiUserParams& mp, int n, int m, const std::vector<double>& L,
                                        const Eigen::MatrixXd& phi, const Eigen::MatrixXd& T, double backlog = 0.0) {
  const double own = phi(n, m);
  if (own == 0.0) return 1.0;
  const double elapsed = T.row(n).head(m).sum();
  double slack = mp.s[m - 1] * (mp.gamma_T[n] - elapsed) - backlog;
  for (int j = 0; j < mp.N; ++j) {
    if (j != n) slack -= L[j] * phi(j, m) * mp.workload.mean();
  }
  if (!(slack > 0.0)) return 0.0;
  return regularized_lower_gamma(mp.workload.alpha, slack / (L[n] * own * mp.workload.beta));
}

// Local cycle budget of user n: deadline-limited, or whatever energy is left after transmitting.
inline double multi_local_budget(const MultiUserParams& mp, int n, const MultiUserState& st, const MultiUserAction& a) {
  const double energy = std::min(mp.gamma_E[n], st.E[n]);
  return std::min(mp.s0 * mp.gamma_T[n], (energy - a.P[n] * a.T.row(n).sum()) / (mp.epsilon * mp.s0 * mp.s0));
}

struct SlotEvaluation {
  std::vector<double> p_sus;
  std::vector<double> rho;
  int violations{0};
};

inline int count_violations(const MultiUserParams& mp, const MultiUserState& st, const MultiUserAction& a) {
  int v = 0;
  for (int m = 0; m < mp.M; ++m) {
    if (a.T.col(m).sum() > mp.T_max * (1.0 + 1e-12)) ++v;
    double load = 0.0;
    for (int n = 0; n < mp.N; ++n) load += st.L[n] * a.phi(n, m + 1) / mp.s[m];
    if (load > mp.C[m] * (1.0 + 1e-12)) ++v;
  }
  for (int n = 0; n < mp.N; ++n) {
    if (a.P[n] < 0.0 || a.P[n] > mp.P_max[n] * (1.0 + 1e-12)) ++v;
    if (a.P[n] * a.T.row(n).sum() > std::min(mp.gamma_E[n], st.E[n]) * (1.0 + 1e-12)) ++v;
  }
  return v;
}

inline void check_action_shape(const MultiUserParams& mp, const MultiUserAction& a) {
  if (a.phi.rows() != mp.N || a.phi.cols() != mp.M + 1 || a.T.rows() != mp.N || a.T.cols() != mp.M ||
      static_cast<int>(a.P.size()) != mp.N) {
    throw std::invalid_argument("MultiUserAction: dimensions do not match N and M");
  }
  for (int n = 0; n < mp.N; ++n) {
    if (std::abs(a.phi.row(n).sum() - 1.0) > 1e-9 || a.phi.row(n).minCoeff() < 0.0) {
      throw std::invalid_argument("MultiUserAction: row " + std::to_string(n) + " of phi is not a split");
    }
    if (a.T.row(n).minCoeff() < 0.0) throw std::invalid_argument("MultiUserAction: negative slot");
  }
}

inline SlotEvaluation evaluate_slot(const MultiUserParams& mp, const MultiUserState& st, const MultiUserAction& a) {
  check_action_shape(mp, a);
  SlotEvaluation ev;
  ev.violations = count_violations(mp, st, a);
  const Eigen::MatrixXd I = interference(mp, st, a);
  ev.p_sus.resize(mp.N);
  ev.rho.resize(mp.N);
  for (int n = 0; n < mp.N; ++n) {
    const double rho = std::max(0.0, multi_local_budget(mp, n, st, a));
    ev.rho[n] = rho;
    const SystemParams view = mp.user_view(n, st.L[n]);
    double p = a.phi(n, 0) == 0.0 ? 1.0 : local_success(view, a.phi(n, 0), rho);
    for (int m = 1; m <= mp.M && p > 0.0; ++m) {
      p *= multi_transmission_success(mp, n, m, st.L[n], a.phi(n, m), a.T(n, m - 1), a.P[n], I(n, m - 1));
      p *= multi_computation_success(mp, n, m, st.L, a.phi, a.T, st.Q[m - 1]);
    }
    ev.p_sus[n] = p;
  }
  return ev;
}

// Weighted log-success minus the energy cost, or the penalty for infeasible actions.
inline double reward(const MultiUserParams& mp, const std::vector<double>& p_sus, const std::vector<double>& energy,
                     int violations) {
  if (violations > 0) return kViolationPenalty * violations;
  double r = 0.0;
  for (int n = 0; n < mp.N; ++n) {
    r += mp.weight[n] * (p_sus[n] > 0.0 ? std::max(std::log(p_sus[n]), kLogSuccessFloor) : kLogSuccessFloor);
    r -= mp.lambda_E * energy[n] / mp.E_max[n];
  }
  return r;
}

struct StepResult {
  MultiUserState next;
  double reward{0.0};
  bool terminal{false};
  std::vector<double> p_sus;
  std::vector<double> energy;  // J spent this slot per user
  int violations{0};
};

class MultiUserEnv {
 public:
  explicit MultiUserEnv(MultiUserParams mp, std::uint64_t seed = 0) : mp_(std::move(mp)), rng_(seed) {
    mp_.validate();
  }

  const MultiUserParams& params() const { return mp_; }
  const MultiUserState& state() const { return state_; }

  MultiUserState reset(std::uint64_t seed) {
    rng_.seed(seed);
    state_.t = 0;
    state_.Q.assign(mp_.M, 0.0);
    state_.E = mp_.E_max;
    draw_slot(state_);
    return state_;
  }

  StepResult step(const MultiUserAction& a) {
    const SlotEvaluation ev = evaluate_slot(mp_, state_, a);
    StepResult out;
    out.p_sus = ev.p_sus;
    out.violations = ev.violations;
    out.energy.assign(mp_.N, 0.0);
    std::gamma_distribution<double> kappa(mp_.workload.alpha, mp_.workload.beta);
    MultiUserState next = state_;
    std::vector<double> arrived(mp_.M, 0.0);
    for (int n = 0; n < mp_.N; ++n) {
      // Every variate is drawn whether or not it is used, so streams stay aligned across actions.
      const double k0 = kappa(rng_);
      double spent = a.P[n] * a.T.row(n).sum();
      if (a.phi(n, 0) > 0.0) spent += mp_.epsilon * mp_.s0 * mp_.s0 * std::min(ev.rho[n], state_.L[n] * a.phi(n, 0) * k0);
      for (int m = 0; m < mp_.M; ++m) {
        const double cycles = state_.L[n] * a.phi(n, m + 1) * kappa(rng_);
        if (a.T(n, m) > 0.0 && a.P[n] > 0.0) arrived[m] += cycles;  // nothing reaches a server without a slot
      }
      out.energy[n] = spent;
      next.E[n] = std::max(0.0, state_.E[n] - spent);
      if (next.E[n] == 0.0) out.terminal = true;
    }
    for (int m = 0; m < mp_.M; ++m) next.Q[m] = std::max(0.0, state_.Q[m] + arrived[m] - mp_.s[m] * mp_.T_max);
    out.reward = reward(mp_, ev.p_sus, out.energy, ev.violations);
    next.t = state_.t + 1;
    if (next.t >= mp_.horizon) out.terminal = true;
    draw_slot(next);
    state_ = next;
    out.next = next;
    return out;
  }

 private:
  void draw_slot(MultiUserState& st) {
    std::uniform_real_distribution<double> size(mp_.L_min, mp_.L_max);
    st.L.resize(mp_.N);
    for (double& l : st.L) l = size(rng_);
    st.H.resize(mp_.N, mp_.M);
    std::exponential_distribution<double> fade(1.0);
    for (int n = 0; n < mp_.N; ++n) {
      for (int m = 0; m < mp_.M; ++m) st.H(n, m) = mp_.lambda(n, m) * fade(rng_);
    }
  }

  MultiUserParams mp_;
  std::mt19937_64 rng_;
  MultiUserState state_;
};

// Features: task sizes over L_max, faded gains over their means, backlog over
// one slot of service, battery over capacity, slot index over the horizon.
inline std::vector<double> encode_state(const MultiUserParams& mp, const MultiUserState& st) {
  std::vector<double> x;
  x.reserve(2 * mp.N + mp.N * mp.M + mp.M + 1);
  for (int n = 0; n < mp.N; ++n) x.push_back(st.L[n] / mp.L_max);
  for (int n = 0; n < mp.N; ++n) {
    for (int m = 0; m < mp.M; ++m) x.push_back(st.H(n, m) / mp.lambda(n, m));
  }
  for (int m = 0; m < mp.M; ++m) x.push_back(st.Q[m] / (mp.s[m] * mp.T_max));
  for (int n = 0; n < mp.N; ++n) x.push_back(st.E[n] / mp.E_max[n]);
  x.push_back(static_cast<double>(st.t) / mp.horizon);
  return x;
}

inline int state_dimension(const MultiUserParams& mp) { return 2 * mp.N + mp.N * mp.M + mp.M + 1; }

// All ways to write `units` as an ordered sum of `parts` non-negative integers, lexicographic.
inline std::vector<std::vector<int>> compositions(int units, int parts) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(parts, 0);
  auto rec = [&](auto&& self, int i, int left) -> void {
    if (i == parts - 1) {
      cur[i] = left;
      out.push_back(cur);
      return;
    }
    for (int k = 0; k <= left; ++k) {
      cur[i] = k;
      self(self, i + 1, left - k);
    }
  };
  rec(rec, 0, units);
  return out;
}

struct ActionGrid {
  double share_step{0.1};
  std::vector<double> time_levels{0.5, 1.0};   // fraction of T_max / N per active server
  std::vector<double> power_levels{0.5, 1.0};  // fraction of P_max
  std::int64_t max_joint{100000};
};

// Index space over per-user (split row, slot level, power level) choices.
// A fully local row sends nothing, so it carries a single option. Joint mode
// numbers every combination across users; factored mode keeps one index per user.
class ActionSpace {
 public:
  enum class Mode { joint, factored };

  struct Option {
    int row;
    int time_level;   // -1 for a fully local row
    int power_level;  // -1 for a fully local row
  };

  ActionSpace(const MultiUserParams& mp, ActionGrid grid, Mode mode = Mode::joint)
      : N_(mp.N), M_(mp.M), T_max_(mp.T_max), P_max_(mp.P_max), grid_(std::move(grid)), mode_(mode) {
    const double units = 1.0 / grid_.share_step;
    units_ = static_cast<int>(std::lround(units));
    if (units_ < 1 || std::abs(units - units_) > 1e-9) {
      throw std::invalid_argument("ActionSpace: share step must divide 1");
    }
    if (grid_.time_levels.empty() || grid_.power_levels.empty()) {
      throw std::invalid_argument("ActionSpace: time and power levels must be non-empty");
    }
    rows_ = compositions(units_, M_ + 1);
    for (int r = 0; r < static_cast<int>(rows_.size()); ++r) {
      if (rows_[r][0] == units_) {
        options_.push_back({r, -1, -1});
        continue;
      }
      for (int it = 0; it < static_cast<int>(grid_.time_levels.size()); ++it) {
        for (int ip = 0; ip < static_cast<int>(grid_.power_levels.size()); ++ip) options_.push_back({r, it, ip});
      }
    }
    per_user_ = static_cast<int>(options_.size());
    if (mode_ == Mode::joint) {
      double joint = 1.0;
      for (int n = 0; n < N_; ++n) joint *= per_user_;
      if (joint > static_cast<double>(grid_.max_joint)) {
        throw action_space_error("ActionSpace: joint grid has " + std::to_string(joint) + " actions (cap " +
                                 std::to_string(grid_.max_joint) + "); use the factored per-user action mode");
      }
      joint_ = static_cast<std::int64_t>(joint);
    }
  }

  Mode mode() const { return mode_; }
  int users() const { return N_; }
  int split_rows() const { return static_cast<int>(rows_.size()); }
  int per_user() const { return per_user_; }
  const Option& option(int k) const { return options_.at(k); }
  // Joint: number of joint actions. Factored: options per user.
  std::int64_t size() const { return mode_ == Mode::joint ? joint_ : per_user_; }
  const ActionGrid& grid() const { return grid_; }

  std::vector<int> split_index(std::int64_t joint) const {
    if (mode_ != Mode::joint) throw std::logic_error("ActionSpace: split_index needs joint mode");
    if (joint < 0 || joint >= joint_) throw std::out_of_range("ActionSpace: joint index out of range");
    std::vector<int> idx(N_);
    for (int n = 0; n < N_; ++n) {
      idx[n] = static_cast<int>(joint % per_user_);
      joint /= per_user_;
    }
    return idx;
  }

  std::int64_t join_index(const std::vector<int>& idx) const {
    std::int64_t j = 0;
    for (int n = N_ - 1; n >= 0; --n) j = j * per_user_ + idx[n];
    return j;
  }

  MultiUserAction decode(const std::vector<int>& per_user) const {
    if (static_cast<int>(per_user.size()) != N_) throw std::invalid_argument("ActionSpace: need one index per user");
    MultiUserAction a;
    a.phi.resize(N_, M_ + 1);
    a.T = Eigen::MatrixXd::Zero(N_, M_);
    a.P.assign(N_, 0.0);
    for (int n = 0; n < N_; ++n) {
      const int k = per_user[n];
      if (k < 0 || k >= per_user_) throw std::out_of_range("ActionSpace: per-user index out of range");
      const Option& o = options_[k];
      for (int m = 0; m <= M_; ++m) a.phi(n, m) = rows_[o.row][m] / static_cast<double>(units_);
      if (o.time_level < 0) continue;
      for (int m = 0; m < M_; ++m) {
        if (rows_[o.row][m + 1] > 0) a.T(n, m) = grid_.time_levels[o.time_level] * T_max_ / N_;
      }
      a.P[n] = grid_.power_levels[o.power_level] * P_max_[n];
    }
    return a;
  }

  MultiUserAction decode(std::int64_t joint) const { return decode(split_index(joint)); }

  // Inverse of decode for actions on the grid; throws otherwise.
  std::vector<int> encode(const MultiUserAction& a) const {
    std::vector<int> idx(N_);
    for (int n = 0; n < N_; ++n) {
      std::vector<int> row(M_ + 1);
      for (int m = 0; m <= M_; ++m) row[m] = static_cast<int>(std::lround(a.phi(n, m) * units_));
      const auto r = std::find(rows_.begin(), rows_.end(), row);
      if (r == rows_.end()) throw std::invalid_argument("ActionSpace: split row is off the grid");
      Option want{static_cast<int>(r - rows_.begin()), -1, -1};
      if (row[0] != units_) {
        double slot = 0.0;
        for (int m = 0; m < M_; ++m) slot = std::max(slot, a.T(n, m));
        want.time_level = level_index(grid_.time_levels, slot * N_ / T_max_);
        want.power_level = level_index(grid_.power_levels, a.P[n] / P_max_[n]);
      }
      const auto o = std::find_if(options_.begin(), options_.end(), [&](const Option& x) {
        return x.row == want.row && x.time_level == want.time_level && x.power_level == want.power_level;
      });
      idx[n] = static_cast<int>(o - options_.begin());
    }
    return idx;
  }

 private:
  static int level_index(const std::vector<double>& levels, double v) {
    for (std::size_t i = 0; i < levels.size(); ++i) {
      if (std::abs(levels[i] - v) <= 1e-9 * std::max(1.0, std::abs(v))) return static_cast<int>(i);
    }
    throw std::invalid_argument("ActionSpace: level is off the grid");
  }

  int N_, M_;
  double T_max_;
  std::vector<double> P_max_;
  ActionGrid grid_;
  Mode mode_;
  int units_{10};
  std::vector<std::vector<int>> rows_;
  std::vector<Option> options_;
  int per_user_{0};
  std::int64_t joint_{0};
};

}  // namespace aircomp
