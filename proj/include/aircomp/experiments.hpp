#pragma once

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "aircomp/baselines.hpp"
#include "aircomp/dqn_agent.hpp"
#include "aircomp/schedulers.hpp"

namespace aircomp {

struct config_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// ---- CSV ----------------------------------------------------------------

struct MetricRow {
  double x{0.0};
  std::string metric;
  double value{0.0};
  double std_error{0.0};
  std::string tag;
};

// The header names the axis with its unit, e.g. "L_bits".
struct CsvTable {
  std::string axis;
  std::vector<MetricRow> rows;
};

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv(std::ostream& os, const CsvTable& t) {
  os << t.axis << ",metric,value,std_error,tag\n";
  for (const MetricRow& r : t.rows) {
    if (!std::isfinite(r.x) || !std::isfinite(r.value) || !std::isfinite(r.std_error)) {
      throw std::runtime_error("write_csv: non-finite value in metric '" + r.metric + "'");
    }
    if (r.metric.find(',') != std::string::npos || r.tag.find(',') != std::string::npos) {
      throw std::runtime_error("write_csv: metric and tag must not contain commas");
    }
    os << format_real(r.x) << ',' << r.metric << ',' << format_real(r.value) << ',' << format_real(r.std_error) << ','
       << r.tag << '\n';
  }
}

inline CsvTable read_csv(std::istream& is) {
  CsvTable t;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("read_csv: empty input");
  const std::string suffix = ",metric,value,std_error,tag";
  if (line.size() <= suffix.size() || line.compare(line.size() - suffix.size(), suffix.size(), suffix) != 0) {
    throw std::runtime_error("read_csv: unexpected header '" + line + "'");
  }
  t.axis = line.substr(0, line.size() - suffix.size());
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 5) throw std::runtime_error("read_csv: line " + std::to_string(lineno) + " needs 5 fields");
    try {
      t.rows.push_back({std::stod(f[0]), f[1], std::stod(f[2]), std::stod(f[3]), f[4]});
    } catch (const std::logic_error&) {
      throw std::runtime_error("read_csv: line " + std::to_string(lineno) + " has a malformed number");
    }
  }
  return t;
}

inline void write_csv_file(const std::filesystem::path& path, const CsvTable& t) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_csv(os, t);
}

// ---- Latency ------------------------------------------------------------

struct LatencyRow {
  std::string method;
  int M{0};
  int repetitions{0};
  double median_s{0.0};
};

struct LatencyOptions {
  std::vector<std::string> methods{"bcd_mm1", "bcd_mm2", "gradient_descent", "dqn_inference"};
  std::vector<int> servers{1, 2, 3};
  double task_bits{1e7};
  int repetitions{5};
  int users{2};  // for the learned policy's state and action space
  ActionGrid grid{0.25, {0.1, 0.2, 0.5}, {0.5, 1.0}, 100000};
  std::uint64_t seed{0};
};

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median: empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size() / 2;
  return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

// One decision per method per repetition, after one untimed warmup. The learned
// policy is timed from state to decoded action with an untrained network of the
// configured shape; inference cost does not depend on the weights.
inline std::vector<LatencyRow> latency_benchmark(const LatencyOptions& opt) {
  if (opt.repetitions < 1) throw std::invalid_argument("latency_benchmark: repetitions must be at least 1");
  std::vector<LatencyRow> rows;
  using clock = std::chrono::steady_clock;
  for (int M : opt.servers) {
    const SystemParams p = SystemParams::defaults(M, opt.task_bits);
    const MultiUserParams mp = MultiUserParams::defaults(opt.users, M);
    const ActionSpace as(mp, opt.grid, ActionSpace::Mode::factored);
    TrainConfig tc;
    tc.seed = opt.seed;
    const QNetwork net = initial_network(mp, as, tc);
    MultiUserEnv env(mp);
    const MultiUserState st = env.reset(opt.seed);
    for (const std::string& method : opt.methods) {
      std::function<double()> decide;
      if (method == "bcd_mm1" || method == "bcd_mm2") {
        const MmVariant v = method == "bcd_mm1" ? MmVariant::MM1 : MmVariant::MM2;
        decide = [&p, v] { return bcd_solve(p, default_initial_allocation(p), v).breakdown.p_out; };
      } else if (method == "gradient_descent") {
        decide = [&p] { return gradient_descent_solve(p).breakdown.p_out; };
      } else if (method == "dqn_inference") {
        const ActionLayout layout = action_layout(as);
        decide = [&, layout] {
          return to_env_action(as, greedy_action(q_forward(net, state_vector(mp, st)), layout)).P[0];
        };
      } else {
        throw std::invalid_argument("latency_benchmark: unknown method '" + method + "'");
      }
      volatile double sink = decide();
      std::vector<double> times;
      for (int r = 0; r < opt.repetitions; ++r) {
        const auto t0 = clock::now();
        sink = decide();
        times.push_back(std::chrono::duration<double>(clock::now() - t0).count());
      }
      (void)sink;
      rows.push_back({method, M, opt.repetitions, median(times)});
    }
  }
  return rows;
}

// ---- Configuration ------------------------------------------------------

namespace detail {

template <class T>
T get_field(const nlohmann::json& v, const std::string& path) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw config_error(path + ": " + e.what());
  }
}

inline void require_object(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw config_error(path + ": expected an object");
}

}  // namespace detail

inline SystemParams system_params_from_json(const nlohmann::json& j, const std::string& path = "system") {
  detail::require_object(j, path);
  const int M = j.contains("M") ? detail::get_field<int>(j["M"], path + ".M") : 2;
  const double L = j.contains("L") ? detail::get_field<double>(j["L"], path + ".L") : 1e7;
  if (M < 1) throw config_error(path + ".M: must be at least 1");
  SystemParams p = SystemParams::defaults(M, L);
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string k = it.key(), f = path + "." + k;
    const auto& v = it.value();
    if (k == "M" || k == "L") continue;
    if (k == "B_w") p.B_w = detail::get_field<double>(v, f);
    else if (k == "sigma2") p.sigma2 = detail::get_field<double>(v, f);
    else if (k == "P_max") p.P_max = detail::get_field<double>(v, f);
    else if (k == "gamma_T") p.gamma_T = detail::get_field<double>(v, f);
    else if (k == "gamma_E") p.gamma_E = detail::get_field<double>(v, f);
    else if (k == "s0") p.s0 = detail::get_field<double>(v, f);
    else if (k == "s") p.s = detail::get_field<std::vector<double>>(v, f);
    else if (k == "lambda") p.lambda = detail::get_field<std::vector<double>>(v, f);
    else if (k == "epsilon") p.epsilon = detail::get_field<double>(v, f);
    else if (k == "alpha") p.workload.alpha = detail::get_field<double>(v, f);
    else if (k == "beta") p.workload.beta = detail::get_field<double>(v, f);
    else throw config_error(f + ": unknown key");
  }
  try {
    p.validate();
  } catch (const std::exception& e) {
    throw config_error(path + ": " + e.what());
  }
  return p;
}

inline MultiUserParams multi_user_params_from_json(const nlohmann::json& j, const std::string& path = "multi_user") {
  detail::require_object(j, path);
  const int N = j.contains("N") ? detail::get_field<int>(j["N"], path + ".N") : 2;
  const int M = j.contains("M") ? detail::get_field<int>(j["M"], path + ".M") : 1;
  if (N < 1 || M < 1) throw config_error(path + ": N and M must be at least 1");
  MultiUserParams mp = MultiUserParams::defaults(N, M);
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string k = it.key(), f = path + "." + k;
    const auto& v = it.value();
    if (k == "N" || k == "M") continue;
    if (k == "L_min") mp.L_min = detail::get_field<double>(v, f);
    else if (k == "L_max") mp.L_max = detail::get_field<double>(v, f);
    else if (k == "gamma_T") mp.gamma_T = detail::get_field<std::vector<double>>(v, f);
    else if (k == "gamma_E") mp.gamma_E = detail::get_field<std::vector<double>>(v, f);
    else if (k == "P_max") mp.P_max = detail::get_field<std::vector<double>>(v, f);
    else if (k == "weight") mp.weight = detail::get_field<std::vector<double>>(v, f);
    else if (k == "E_max") mp.E_max = detail::get_field<std::vector<double>>(v, f);
    else if (k == "s") mp.s = detail::get_field<std::vector<double>>(v, f);
    else if (k == "C") mp.C = detail::get_field<std::vector<double>>(v, f);
    else if (k == "T_max") mp.T_max = detail::get_field<double>(v, f);
    else if (k == "lambda_E") mp.lambda_E = detail::get_field<double>(v, f);
    else if (k == "horizon") mp.horizon = detail::get_field<int>(v, f);
    else if (k == "B_w") mp.B_w = detail::get_field<double>(v, f);
    else if (k == "sigma2") mp.sigma2 = detail::get_field<double>(v, f);
    else if (k == "lambda") {
      const auto rows = detail::get_field<std::vector<std::vector<double>>>(v, f);
      if (static_cast<int>(rows.size()) != N) throw config_error(f + ": need N rows");
      for (int n = 0; n < N; ++n) {
        if (static_cast<int>(rows[n].size()) != M) throw config_error(f + ": need M columns");
        for (int m = 0; m < M; ++m) mp.lambda(n, m) = rows[n][m];
      }
    } else {
      throw config_error(f + ": unknown key");
    }
  }
  try {
    mp.validate();
  } catch (const std::exception& e) {
    throw config_error(path + ": " + e.what());
  }
  return mp;
}

struct GridConfig {
  ActionGrid grid{0.25, {0.1, 0.2, 0.5}, {0.5, 1.0}, 100000};
  ActionSpace::Mode mode{ActionSpace::Mode::factored};
};

inline GridConfig grid_from_json(const nlohmann::json& j, const std::string& path = "grid") {
  detail::require_object(j, path);
  GridConfig g;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string k = it.key(), f = path + "." + k;
    const auto& v = it.value();
    if (k == "share_step") g.grid.share_step = detail::get_field<double>(v, f);
    else if (k == "time_levels") g.grid.time_levels = detail::get_field<std::vector<double>>(v, f);
    else if (k == "power_levels") g.grid.power_levels = detail::get_field<std::vector<double>>(v, f);
    else if (k == "max_joint") g.grid.max_joint = detail::get_field<std::int64_t>(v, f);
    else if (k == "mode") {
      const auto m = detail::get_field<std::string>(v, f);
      if (m == "joint") g.mode = ActionSpace::Mode::joint;
      else if (m == "factored") g.mode = ActionSpace::Mode::factored;
      else throw config_error(f + ": expected 'joint' or 'factored'");
    } else {
      throw config_error(f + ": unknown key");
    }
  }
  return g;
}

inline SchedulerOptions scheduler_options_from_json(const nlohmann::json& j, const std::string& path = "scheduler") {
  detail::require_object(j, path);
  SchedulerOptions o;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string k = it.key(), f = path + "." + k;
    const auto& v = it.value();
    if (k == "local_share") o.local_share = detail::get_field<double>(v, f);
    else if (k == "uplink_window") o.uplink_window = detail::get_field<double>(v, f);
    else if (k == "max_min_rounds") o.max_min_rounds = detail::get_field<int>(v, f);
    else throw config_error(f + ": unknown key");
  }
  return o;
}

// Environment, action grid and training settings shared by train and eval.
struct PolicySetup {
  MultiUserParams multi_user = MultiUserParams::defaults(2, 1);
  GridConfig grid;
  TrainConfig train;
  SchedulerOptions scheduler;
  int episodes{200};  // evaluation episodes
  std::uint64_t seed{1};
};

inline PolicySetup policy_setup_from_json(const nlohmann::json& j) {
  detail::require_object(j, "config");
  PolicySetup s;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string k = it.key(), f = "config." + k;
    const auto& v = it.value();
    if (k == "multi_user") s.multi_user = multi_user_params_from_json(v, f);
    else if (k == "grid") s.grid = grid_from_json(v, f);
    else if (k == "scheduler") s.scheduler = scheduler_options_from_json(v, f);
    else if (k == "episodes") s.episodes = detail::get_field<int>(v, f);
    else if (k == "seed") s.seed = detail::get_field<std::uint64_t>(v, f);
    else if (k == "train") {
      try {
        s.train = train_config_from_json(v);
      } catch (const std::exception& e) {
        throw config_error(f + ": " + e.what());
      }
    } else {
      throw config_error(f + ": unknown key");
    }
  }
  if (s.episodes < 2) throw config_error("config.episodes: need at least 2");
  return s;
}

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds{"convergence", "sweep_L",   "sweep_M",  "speed_uncertainty", "learning_rate",
                                              "users",       "fairness",  "latency",  "efficiency"};
  return kinds;
}

struct ExperimentConfig {
  std::string kind;
  std::uint64_t seed{1};
  std::string output{"results"};
  SystemParams system = SystemParams::defaults(2, 1e7);
  MultiUserParams multi_user = MultiUserParams::defaults(2, 1);
  GridConfig grid;
  TrainConfig train;
  SchedulerOptions scheduler;
  std::vector<double> values;  // sweep axis values
  std::string variant{"bcd_mm2"};  // or "both"
  std::size_t trials{100000};
  int episodes{200};  // evaluation episodes
  LatencyOptions latency;
};

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  detail::require_object(j, "config");
  ExperimentConfig c;
  if (!j.contains("kind")) throw config_error("config.kind: required");
  c.kind = detail::get_field<std::string>(j["kind"], "config.kind");
  const auto& kinds = experiment_kinds();
  if (std::find(kinds.begin(), kinds.end(), c.kind) == kinds.end()) {
    throw config_error("config.kind: unknown experiment '" + c.kind + "'");
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string k = it.key(), f = "config." + k;
    const auto& v = it.value();
    if (k == "kind") continue;
    if (k == "seed") c.seed = detail::get_field<std::uint64_t>(v, f);
    else if (k == "output") c.output = detail::get_field<std::string>(v, f);
    else if (k == "system") c.system = system_params_from_json(v, f);
    else if (k == "multi_user") c.multi_user = multi_user_params_from_json(v, f);
    else if (k == "grid") c.grid = grid_from_json(v, f);
    else if (k == "scheduler") c.scheduler = scheduler_options_from_json(v, f);
    else if (k == "train") {
      try {
        c.train = train_config_from_json(v);
      } catch (const std::exception& e) {
        throw config_error(f + ": " + e.what());
      }
    } else if (k == "values") c.values = detail::get_field<std::vector<double>>(v, f);
    else if (k == "variant") c.variant = detail::get_field<std::string>(v, f);
    else if (k == "trials") c.trials = detail::get_field<std::size_t>(v, f);
    else if (k == "episodes") c.episodes = detail::get_field<int>(v, f);
    else if (k == "latency") {
      detail::require_object(v, f);
      for (auto lt = v.begin(); lt != v.end(); ++lt) {
        const std::string lk = lt.key(), lf = f + "." + lk;
        if (lk == "methods") c.latency.methods = detail::get_field<std::vector<std::string>>(lt.value(), lf);
        else if (lk == "servers") c.latency.servers = detail::get_field<std::vector<int>>(lt.value(), lf);
        else if (lk == "task_bits") c.latency.task_bits = detail::get_field<double>(lt.value(), lf);
        else if (lk == "repetitions") c.latency.repetitions = detail::get_field<int>(lt.value(), lf);
        else if (lk == "users") c.latency.users = detail::get_field<int>(lt.value(), lf);
        else throw config_error(lf + ": unknown key");
      }
    } else {
      throw config_error(f + ": unknown key");
    }
  }
  if (c.variant != "bcd_mm1" && c.variant != "bcd_mm2" && c.variant != "both") {
    throw config_error("config.variant: expected bcd_mm1, bcd_mm2 or both");
  }
  const bool sweeps = c.kind == "sweep_L" || c.kind == "sweep_M" || c.kind == "speed_uncertainty" ||
                      c.kind == "learning_rate" || c.kind == "users" || c.kind == "fairness" || c.kind == "efficiency";
  if (sweeps && c.values.empty()) throw config_error("config.values: sweep values must be non-empty");
  if (c.episodes < 2) throw config_error("config.episodes: need at least 2");
  c.latency.seed = c.seed;
  c.latency.grid = c.grid.grid;
  return c;
}

template <class Parse>
auto load_config(const std::string& path, Parse parse) {
  std::ifstream is(path);
  if (!is) throw config_error(path + ": cannot open");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw config_error(path + ": " + e.what());
  }
  try {
    return parse(j);
  } catch (const config_error& e) {
    throw config_error(path + ": " + e.what());
  }
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  return load_config(path, [](const nlohmann::json& j) { return experiment_config_from_json(j); });
}

inline PolicySetup load_policy_setup(const std::string& path) {
  return load_config(path, [](const nlohmann::json& j) { return policy_setup_from_json(j); });
}

// ---- Experiments --------------------------------------------------------

inline std::vector<MmVariant> variants_of(const ExperimentConfig& c) {
  if (c.variant == "both") return {MmVariant::MM1, MmVariant::MM2};
  return {c.variant == "bcd_mm1" ? MmVariant::MM1 : MmVariant::MM2};
}

// Single-user solver applied per user, each confined to an equal 1/N of every
// server's slot and to its own task size.
inline Policy per_user_bcd_policy(const MultiUserParams& mp) {
  return [mp](const MultiUserState& st) {
    MultiUserAction a;
    a.phi = Eigen::MatrixXd::Zero(mp.N, mp.M + 1);
    a.T = Eigen::MatrixXd::Zero(mp.N, mp.M);
    a.P.assign(mp.N, 0.0);
    for (int n = 0; n < mp.N; ++n) {
      SystemParams p = mp.user_view(n, st.L[n]);
      p.gamma_E = std::max(1e-12, std::min(p.gamma_E, st.E[n]));
      const auto tr = bcd_solve(p, default_initial_allocation(p), MmVariant::MM2);
      const Allocation& al = tr.final_allocation;
      for (int m = 0; m <= mp.M; ++m) a.phi(n, m) = al.phi[m];
      for (int m = 0; m < mp.M; ++m) a.T(n, m) = std::min(al.T[m], mp.T_max / mp.N);
      a.P[n] = al.P_S;
    }
    return a;
  };
}

// Keeps the server side and scalars of base; every user takes user 0's budgets
// and the default channel profile for its index.
inline MultiUserParams with_users(const MultiUserParams& base, int users) {
  const MultiUserParams shape = MultiUserParams::defaults(users, base.M);
  MultiUserParams mp = base;
  mp.N = users;
  mp.gamma_T.assign(users, base.gamma_T[0]);
  mp.gamma_E.assign(users, base.gamma_E[0]);
  mp.P_max.assign(users, base.P_max[0]);
  mp.weight.assign(users, base.weight[0]);
  mp.E_max.assign(users, base.E_max[0]);
  mp.lambda = shape.lambda;
  mp.validate();
  return mp;
}

// Files written by run_experiment, keyed by name.
using ExperimentOutput = std::map<std::string, CsvTable>;

inline void add_policy_rows(CsvTable& t, double x, const std::string& tag, const PolicyEvaluation& e) {
  t.rows.push_back({x, "success_prob", e.mean_success, e.success_se, tag});
  t.rows.push_back({x, "reward", e.mean_return, e.return_se, tag});
  t.rows.push_back({x, "jain", jain_index(e.user_success), 0.0, tag});
  t.rows.push_back({x, "bits_per_joule", e.energy_efficiency, 0.0, tag});
  t.rows.push_back({x, "violations_per_slot", e.violation_rate, 0.0, tag});
}

inline void compare_policies(CsvTable& t, double x, const MultiUserParams& mp, const ExperimentConfig& c,
                             bool include_bcd) {
  const ActionSpace as(mp, c.grid.grid, c.grid.mode);
  TrainConfig tc = c.train;
  tc.seed = mix_seed(c.seed, static_cast<std::uint64_t>(std::llround(x * 1000.0)));
  const TrainResult tr = train(mp, as, tc);
  const std::uint64_t eval_seed = mix_seed(c.seed, 0xE7A1);
  add_policy_rows(t, x, "dqn", evaluate_policy(mp, greedy_policy(tr.network, as, mp), c.episodes, eval_seed));
  for (auto k : {SchedulerKind::round_robin, SchedulerKind::weighted, SchedulerKind::max_min, SchedulerKind::proportional}) {
    add_policy_rows(t, x, scheduler_name(k), evaluate_policy(mp, scheduler_policy(k, mp, c.scheduler), c.episodes, eval_seed));
  }
  add_policy_rows(t, x, "random", evaluate_policy(mp, random_policy(as, mix_seed(c.seed, 0x5EED)), c.episodes, eval_seed));
  if (include_bcd) add_policy_rows(t, x, "bcd_per_user", evaluate_policy(mp, per_user_bcd_policy(mp), c.episodes, eval_seed));
}

inline ExperimentOutput run_experiment(const ExperimentConfig& c) {
  ExperimentOutput out;
  if (c.kind == "convergence") {
    CsvTable t{"iteration", {}};
    for (MmVariant v : variants_of(c)) {
      const BcdTrace tr = bcd_solve(c.system, default_initial_allocation(c.system), v);
      const std::string tag = std::string(variant_name(v)) + "_M" + std::to_string(c.system.M) + "_L" +
                              format_real(c.system.L);
      for (std::size_t i = 0; i < tr.iterates.size(); ++i) {
        t.rows.push_back({static_cast<double>(i), "ln_p_sus", tr.iterates[i].log_p_sus, 0.0, tag});
        t.rows.push_back({static_cast<double>(i), "inner_iterations", static_cast<double>(tr.iterates[i].inner_iterations), 0.0, tag});
      }
    }
    out["convergence.csv"] = t;
  } else if (c.kind == "sweep_L" || c.kind == "sweep_M") {
    const bool by_L = c.kind == "sweep_L";
    CsvTable t{by_L ? "L_bits" : "M_servers", {}};
    for (double x : c.values) {
      SystemParams p = c.system;
      if (by_L) {
        p.L = x;
      } else {
        p = SystemParams::defaults(static_cast<int>(std::lround(x)), c.system.L);
      }
      for (MmVariant v : variants_of(c)) {
        const std::string suffix = std::string("_") + variant_name(v);
        t.rows.push_back({x, "p_out", proposed_solve(p, v).breakdown.p_out, 0.0, "proposed" + suffix});
        t.rows.push_back({x, "p_out", bcd_solve(p, default_initial_allocation(p), v).breakdown.p_out, 0.0, "default_start" + suffix});
        t.rows.push_back({x, "p_out", baseline_full_offload(p, v).breakdown.p_out, 0.0, "full_offload" + suffix});
      }
    }
    out[c.kind + ".csv"] = t;
  } else if (c.kind == "speed_uncertainty") {
    CsvTable t{"speed_jitter_fraction", {}};
    const SolveResult sol = proposed_solve(c.system, variants_of(c).back());
    const SolveResult off = baseline_full_offload(c.system, variants_of(c).back());
    for (std::size_t i = 0; i < c.values.size(); ++i) {
      MonteCarloOptions mc;
      mc.speed_jitter = c.values[i];
      const auto a = monte_carlo_outage(c.system, sol.allocation, c.trials, mix_seed(c.seed, i), mc);
      const auto b = monte_carlo_outage(c.system, off.allocation, c.trials, mix_seed(c.seed, i), mc);
      t.rows.push_back({c.values[i], "p_out", a.p_out, a.std_error, "proposed"});
      t.rows.push_back({c.values[i], "p_out", b.p_out, b.std_error, "full_offload"});
    }
    out["speed_uncertainty.csv"] = t;
  } else if (c.kind == "learning_rate") {
    CsvTable t{"episode", {}};
    const ActionSpace as(c.multi_user, c.grid.grid, c.grid.mode);
    for (double lr : c.values) {
      TrainConfig tc = c.train;
      tc.learning_rate = lr;
      tc.seed = c.seed;
      const TrainResult tr = train(c.multi_user, as, tc);
      for (std::size_t e = 0; e < tr.episode_rewards.size(); ++e) {
        t.rows.push_back({static_cast<double>(e), "reward", tr.episode_rewards[e], 0.0, "lr_" + format_real(lr)});
      }
    }
    out["learning_rate.csv"] = t;
  } else if (c.kind == "users" || c.kind == "efficiency") {
    CsvTable t{"N_users", {}};
    for (double x : c.values) {
      const int N = static_cast<int>(std::lround(x));
      compare_policies(t, x, with_users(c.multi_user, N), c, c.kind == "users");
    }
    out[c.kind + ".csv"] = t;
  } else if (c.kind == "fairness") {
    // Two-tier priorities: the first half of the users keep weight 1, the rest get the ratio.
    CsvTable t{"weight_ratio", {}};
    for (double x : c.values) {
      MultiUserParams mp = c.multi_user;
      for (int n = 0; n < mp.N; ++n) mp.weight[n] = n < (mp.N + 1) / 2 ? 1.0 : x;
      compare_policies(t, x, mp, c, false);
    }
    out["fairness.csv"] = t;
  } else if (c.kind == "latency") {
    CsvTable t{"M_servers", {}};
    for (const LatencyRow& r : latency_benchmark(c.latency)) {
      t.rows.push_back({static_cast<double>(r.M), "latency_s", r.median_s, 0.0, r.method});
    }
    out["latency.csv"] = t;
  } else {
    throw config_error("config.kind: unknown experiment '" + c.kind + "'");
  }
  return out;
}

inline void write_experiment(const ExperimentOutput& out, const std::filesystem::path& dir) {
  for (const auto& [name, table] : out) write_csv_file(dir / name, table);
}

}  // namespace aircomp
