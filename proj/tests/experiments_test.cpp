#include "aircomp/experiments.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

namespace aircomp {
namespace {

using nlohmann::json;

std::string to_text(const CsvTable& t) {
  std::ostringstream os;
  write_csv(os, t);
  return os.str();
}

std::string config_error_text(const json& j) {
  try {
    experiment_config_from_json(j);
  } catch (const config_error& e) {
    return e.what();
  }
  return "";
}

std::vector<const MetricRow*> rows_of(const CsvTable& t, const std::string& metric, const std::string& tag) {
  std::vector<const MetricRow*> out;
  for (const MetricRow& r : t.rows) {
    if (r.metric == metric && r.tag == tag) out.push_back(&r);
  }
  return out;
}

TEST(Csv, RoundTripIsExact) {
  CsvTable t{"L_bits", {}};
  t.rows.push_back({5e6, "p_out", 1.0 / 3.0, 0.0, "proposed"});
  t.rows.push_back({1e-300, "reward", -153.97123456789012, 3.4299999999999997, "random"});
  t.rows.push_back({7.0, "latency_s", 4.357e-06, 0.0, ""});
  const std::string text = to_text(t);
  EXPECT_EQ(text.substr(0, text.find('\n')), "L_bits,metric,value,std_error,tag");
  std::istringstream is(text);
  const CsvTable back = read_csv(is);
  EXPECT_EQ(back.axis, t.axis);
  ASSERT_EQ(back.rows.size(), t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    EXPECT_EQ(back.rows[i].x, t.rows[i].x);
    EXPECT_EQ(back.rows[i].metric, t.rows[i].metric);
    EXPECT_EQ(back.rows[i].value, t.rows[i].value);
    EXPECT_EQ(back.rows[i].std_error, t.rows[i].std_error);
    EXPECT_EQ(back.rows[i].tag, t.rows[i].tag);
  }
  EXPECT_EQ(to_text(back), text);
}

TEST(Csv, RejectsNonFiniteAndCommas) {
  CsvTable t{"x", {{1.0, "m", std::nan(""), 0.0, "a"}}};
  EXPECT_THROW(to_text(t), std::runtime_error);
  t.rows[0] = {1.0, "m", 1.0, INFINITY, "a"};
  EXPECT_THROW(to_text(t), std::runtime_error);
  t.rows[0] = {1.0, "m,n", 1.0, 0.0, "a"};
  EXPECT_THROW(to_text(t), std::runtime_error);
}

TEST(Csv, RejectsMalformedInput) {
  std::istringstream empty("");
  EXPECT_THROW(read_csv(empty), std::runtime_error);
  std::istringstream header("x,value\n");
  EXPECT_THROW(read_csv(header), std::runtime_error);
  std::istringstream fields("x,metric,value,std_error,tag\n1,m,2\n");
  EXPECT_THROW(read_csv(fields), std::runtime_error);
  std::istringstream number("x,metric,value,std_error,tag\n1,m,abc,0,t\n");
  EXPECT_THROW(read_csv(number), std::runtime_error);
}

TEST(Median, OddAndEven) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
  EXPECT_EQ(median({7.0}), 7.0);
  EXPECT_THROW(median({}), std::invalid_argument);
}

TEST(Config, ParsesAllBlocks) {
  const json j = json::parse(R"({
    "kind": "fairness", "seed": 7, "output": "out/fair", "values": [1, 2, 4],
    "system": {"M": 3, "L": 1.5e7, "gamma_T": 0.8},
    "multi_user": {"N": 3, "M": 1, "weight": [1, 1, 1], "horizon": 10},
    "grid": {"share_step": 0.5, "time_levels": [0.5, 1.0], "power_levels": [1.0], "mode": "joint"},
    "train": {"episodes": 5, "learning_rate": 0.01},
    "scheduler": {"uplink_window": 0.25},
    "episodes": 20, "trials": 5000, "variant": "both",
    "latency": {"methods": ["bcd_mm1"], "servers": [2], "repetitions": 3}
  })");
  const ExperimentConfig c = experiment_config_from_json(j);
  EXPECT_EQ(c.kind, "fairness");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.output, "out/fair");
  EXPECT_EQ(c.values, (std::vector<double>{1, 2, 4}));
  EXPECT_EQ(c.system.M, 3);
  EXPECT_EQ(c.system.s.size(), 3u);
  EXPECT_EQ(c.system.gamma_T, 0.8);
  EXPECT_EQ(c.multi_user.N, 3);
  EXPECT_EQ(c.multi_user.horizon, 10);
  EXPECT_EQ(c.grid.mode, ActionSpace::Mode::joint);
  EXPECT_EQ(c.grid.grid.share_step, 0.5);
  EXPECT_EQ(c.train.episodes, 5);
  EXPECT_EQ(c.train.learning_rate, 0.01);
  EXPECT_EQ(c.scheduler.uplink_window, 0.25);
  EXPECT_EQ(c.episodes, 20);
  EXPECT_EQ(c.trials, 5000u);
  EXPECT_EQ(variants_of(c).size(), 2u);
  EXPECT_EQ(c.latency.methods, std::vector<std::string>{"bcd_mm1"});
  EXPECT_EQ(c.latency.repetitions, 3);
  EXPECT_EQ(c.latency.seed, 7u);
}

TEST(Config, ErrorsNameTheField) {
  EXPECT_NE(config_error_text(json::parse(R"({"seed": 1})")), "");
  EXPECT_NE(config_error_text(json::parse(R"({"kind": "plot"})")).find("config.kind"), std::string::npos);
  EXPECT_NE(config_error_text(json::parse(R"({"kind": "latency", "colour": 1})")).find("config.colour"),
            std::string::npos);
  EXPECT_NE(config_error_text(json::parse(R"({"kind": "convergence", "system": {"Lbits": 1}})")).find("config.system.Lbits"),
            std::string::npos);
  EXPECT_NE(config_error_text(json::parse(R"({"kind": "convergence", "system": {"L": "big"}})")).find("config.system.L"),
            std::string::npos);
  EXPECT_NE(config_error_text(json::parse(R"({"kind": "convergence", "system": {"M": 2, "s": [1e9]}})")).find("config.system"),
            std::string::npos);
  EXPECT_NE(config_error_text(json::parse(R"({"kind": "users", "multi_user": {"lambda": [[1e-7]]}})")).find("config.multi_user.lambda"),
            std::string::npos);
  EXPECT_NE(config_error_text(json::parse(R"({"kind": "users", "grid": {"mode": "tree"}})")).find("config.grid.mode"),
            std::string::npos);
  EXPECT_NE(config_error_text(json::parse(R"({"kind": "users", "train": {"epochs": 3}, "values": [2]})")).find("config.train"),
            std::string::npos);
  EXPECT_NE(config_error_text(json::parse(R"({"kind": "latency", "latency": {"reps": 3}})")).find("config.latency.reps"),
            std::string::npos);
  EXPECT_NE(config_error_text(json::parse(R"({"kind": "sweep_L"})")).find("config.values"), std::string::npos);
  EXPECT_NE(config_error_text(json::parse(R"({"kind": "convergence", "variant": "mm3"})")).find("config.variant"),
            std::string::npos);
}

TEST(Config, FileErrorsCarryPathAndLine) {
  const auto dir = std::filesystem::temp_directory_path() / "aircomp_config_test";
  std::filesystem::create_directories(dir);
  const auto bad = dir / "bad.json";
  {
    std::ofstream os(bad);
    os << "{\n  \"kind\": \"latency\",\n  \"seed\": ,\n}\n";
  }
  try {
    load_experiment_config(bad.string());
    FAIL() << "expected a config error";
  } catch (const config_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(bad.string()), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
  }
  EXPECT_THROW(load_experiment_config((dir / "missing.json").string()), config_error);
  const auto good = dir / "good.json";
  {
    std::ofstream os(good);
    os << R"({"kind": "convergence", "system": {"M": 2}})";
  }
  EXPECT_EQ(load_experiment_config(good.string()).system.M, 2);
  std::filesystem::remove_all(dir);
}

TEST(Latency, OneRowPerCell) {
  LatencyOptions opt;
  opt.servers = {1, 2};
  opt.repetitions = 1;
  const auto rows = latency_benchmark(opt);
  ASSERT_EQ(rows.size(), opt.servers.size() * opt.methods.size());
  std::set<std::pair<std::string, int>> cells;
  for (const LatencyRow& r : rows) {
    EXPECT_EQ(r.repetitions, 1);
    EXPECT_GT(r.median_s, 0.0);
    cells.insert({r.method, r.M});
  }
  EXPECT_EQ(cells.size(), rows.size());
  opt.methods = {"simplex"};
  EXPECT_THROW(latency_benchmark(opt), std::invalid_argument);
  opt.methods = {"bcd_mm1"};
  opt.repetitions = 0;
  EXPECT_THROW(latency_benchmark(opt), std::invalid_argument);
}

double latency_of(const std::vector<LatencyRow>& rows, const std::string& method, int M) {
  for (const LatencyRow& r : rows) {
    if (r.method == method && r.M == M) return r.median_s;
  }
  return NAN;
}

TEST(Latency, LearnedPolicyDecidesFasterThanTheSolver) {
  LatencyOptions opt;
  opt.methods = {"bcd_mm1", "dqn_inference"};
  opt.repetitions = 5;
  const auto rows = latency_benchmark(opt);
  for (int M : opt.servers) {
    EXPECT_LT(latency_of(rows, "dqn_inference", M), latency_of(rows, "bcd_mm1", M)) << "M=" << M;
  }
}

TEST(Latency, SecondOrderSurrogateIsNotSlowerFromTwoServers) {
  LatencyOptions opt;
  opt.methods = {"bcd_mm1", "bcd_mm2"};
  opt.servers = {2, 3};
  opt.repetitions = 3;
  const auto rows = latency_benchmark(opt);
  for (int M : opt.servers) {
    const double mm1 = latency_of(rows, "bcd_mm1", M), mm2 = latency_of(rows, "bcd_mm2", M);
    RecordProperty("mm1_s_M" + std::to_string(M), std::to_string(mm1));
    RecordProperty("mm2_s_M" + std::to_string(M), std::to_string(mm2));
    EXPECT_LE(mm2, mm1) << "M=" << M;
  }
}

TEST(RunExperiment, ConvergenceTraceIsMonotone) {
  ExperimentConfig c = experiment_config_from_json(json::parse(R"({"kind": "convergence", "system": {"M": 2, "L": 1e7}, "variant": "both"})"));
  const ExperimentOutput out = run_experiment(c);
  ASSERT_EQ(out.count("convergence.csv"), 1u);
  const CsvTable& t = out.at("convergence.csv");
  EXPECT_EQ(t.axis, "iteration");
  for (const std::string tag : {"bcd_mm1_M2_L10000000", "bcd_mm2_M2_L10000000"}) {
    const auto rows = rows_of(t, "ln_p_sus", tag);
    ASSERT_GE(rows.size(), 2u) << tag;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      EXPECT_GE(rows[i]->value, rows[i - 1]->value - 1e-9) << tag << " iteration " << i;
      EXPECT_EQ(rows[i]->x, static_cast<double>(i));
    }
  }
}

TEST(RunExperiment, ServerSweepOutageNonIncreasing) {
  ExperimentConfig c =
      experiment_config_from_json(json::parse(R"({"kind": "sweep_M", "system": {"L": 1e7}, "values": [1, 2, 3]})"));
  const CsvTable t = run_experiment(c).at("sweep_M.csv");
  EXPECT_EQ(t.axis, "M_servers");
  const auto proposed = rows_of(t, "p_out", "proposed_bcd_mm2");
  const auto offload = rows_of(t, "p_out", "full_offload_bcd_mm2");
  ASSERT_EQ(proposed.size(), 3u);
  ASSERT_EQ(offload.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_LE(proposed[i]->value, offload[i]->value);
    if (i > 0) {
      EXPECT_LE(proposed[i]->value, proposed[i - 1]->value);
    }
  }
}

TEST(RunExperiment, TaskSizeSweepHasEveryPoint) {
  ExperimentConfig c = experiment_config_from_json(
      json::parse(R"({"kind": "sweep_L", "system": {"M": 1}, "values": [5e6, 1e7, 2e7]})"));
  const CsvTable t = run_experiment(c).at("sweep_L.csv");
  EXPECT_EQ(t.axis, "L_bits");
  const auto proposed = rows_of(t, "p_out", "proposed_bcd_mm2");
  ASSERT_EQ(proposed.size(), 3u);
  for (std::size_t i = 1; i < 3; ++i) EXPECT_GE(proposed[i]->value, proposed[i - 1]->value);
  EXPECT_EQ(rows_of(t, "p_out", "default_start_bcd_mm2").size(), 3u);
}

TEST(RunExperiment, SpeedUncertaintyWithoutJitterMatchesTheModel) {
  ExperimentConfig c = experiment_config_from_json(json::parse(
      R"({"kind": "speed_uncertainty", "system": {"M": 1, "L": 1e7}, "values": [0, 0.2], "trials": 20000, "seed": 3})"));
  const CsvTable t = run_experiment(c).at("speed_uncertainty.csv");
  const auto mc = rows_of(t, "p_out", "proposed");
  ASSERT_EQ(mc.size(), 2u);
  const SolveResult sol = proposed_solve(c.system);
  EXPECT_NEAR(mc[0]->value, sol.breakdown.p_out, 3.0 * mc[0]->std_error + 1e-12);
  EXPECT_GT(mc[1]->std_error, 0.0);
}

TEST(RunExperiment, LearningCurvesHaveOneRowPerEpisode) {
  ExperimentConfig c = experiment_config_from_json(json::parse(
      R"({"kind": "learning_rate", "values": [0.001, 0.01], "train": {"episodes": 3}, "multi_user": {"horizon": 5}})"));
  const CsvTable t = run_experiment(c).at("learning_rate.csv");
  EXPECT_EQ(rows_of(t, "reward", "lr_0.001").size(), 3u);
  EXPECT_EQ(rows_of(t, "reward", "lr_0.01").size(), 3u);
}

TEST(RunExperiment, PolicyComparisonsCoverEveryBaseline) {
  const ExperimentConfig c = experiment_config_from_json(json::parse(
      R"({"kind": "users", "values": [2], "train": {"episodes": 2}, "episodes": 2, "multi_user": {"horizon": 3}})"));
  const CsvTable t = run_experiment(c).at("users.csv");
  for (const std::string tag : {"dqn", "round_robin", "weighted", "max_min", "proportional", "random", "bcd_per_user"}) {
    EXPECT_EQ(rows_of(t, "success_prob", tag).size(), 1u) << tag;
    EXPECT_EQ(rows_of(t, "jain", tag).size(), 1u) << tag;
  }
}

TEST(RunExperiment, FairnessSweepEmitsPolicyRows) {
  ExperimentConfig c = experiment_config_from_json(json::parse(
      R"({"kind": "fairness", "values": [4], "train": {"episodes": 2}, "episodes": 4,
          "multi_user": {"N": 2, "horizon": 4}})"));
  const CsvTable t = run_experiment(c).at("fairness.csv");
  EXPECT_EQ(rows_of(t, "success_prob", "weighted").size(), 1u);
  EXPECT_EQ(rows_of(t, "bits_per_joule", "dqn").size(), 1u);
}

TEST(RunExperiment, SameSeedGivesIdenticalFiles) {
  const json j = json::parse(
      R"({"kind": "efficiency", "values": [2], "seed": 5, "train": {"episodes": 3}, "episodes": 3,
          "multi_user": {"horizon": 4}})");
  const ExperimentConfig c = experiment_config_from_json(j);
  const std::string a = to_text(run_experiment(c).at("efficiency.csv"));
  const std::string b = to_text(run_experiment(c).at("efficiency.csv"));
  EXPECT_EQ(a, b);

  const auto dir = std::filesystem::temp_directory_path() / "aircomp_experiment_test";
  const ExperimentConfig s = experiment_config_from_json(json::parse(
      R"({"kind": "speed_uncertainty", "system": {"M": 1}, "values": [0.2], "trials": 1000, "seed": 9})"));
  write_experiment(run_experiment(s), dir / "a");
  write_experiment(run_experiment(s), dir / "b");
  std::ifstream fa(dir / "a" / "speed_uncertainty.csv"), fb(dir / "b" / "speed_uncertainty.csv");
  const std::string ta((std::istreambuf_iterator<char>(fa)), {}), tb((std::istreambuf_iterator<char>(fb)), {});
  EXPECT_FALSE(ta.empty());
  EXPECT_EQ(ta, tb);
  std::filesystem::remove_all(dir);
}

TEST(ShippedConfigs, AllParse) {
  int experiments = 0;
  for (const auto& entry : std::filesystem::directory_iterator(AIRCOMP_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    if (entry.path().stem() == "dqn") {
      const PolicySetup s = load_policy_setup(entry.path().string());
      EXPECT_EQ(s.grid.mode, ActionSpace::Mode::factored);
      continue;
    }
    EXPECT_NO_THROW(load_experiment_config(entry.path().string())) << entry.path();
    ++experiments;
  }
  EXPECT_EQ(experiments, static_cast<int>(experiment_kinds().size()));
}

TEST(PolicySetup, StrictKeys) {
  EXPECT_THROW(policy_setup_from_json(json::parse(R"({"kind": "users"})")), config_error);
  EXPECT_THROW(policy_setup_from_json(json::parse(R"({"episodes": 1})")), config_error);
  const PolicySetup s = policy_setup_from_json(json::parse(R"({"seed": 4, "train": {"episodes": 9}})"));
  EXPECT_EQ(s.seed, 4u);
  EXPECT_EQ(s.train.episodes, 9);
}

TEST(PerUserSolver, ProducesFeasibleShapes) {
  const MultiUserParams mp = MultiUserParams::defaults(2, 2);
  MultiUserEnv env(mp);
  const MultiUserState st = env.reset(4);
  const MultiUserAction a = per_user_bcd_policy(mp)(st);
  EXPECT_NO_THROW(check_action_shape(mp, a));
  for (int m = 0; m < mp.M; ++m) EXPECT_LE(a.T.col(m).sum(), mp.T_max);
  for (int n = 0; n < mp.N; ++n) {
    EXPECT_LE(a.P[n], mp.P_max[n]);
    EXPECT_LE(a.P[n] * a.T.row(n).sum(), mp.gamma_E[n] * (1.0 + 1e-12));
  }
}

}  // namespace
}  // namespace aircomp
