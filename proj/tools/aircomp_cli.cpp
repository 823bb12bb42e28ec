#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>

#include "aircomp/experiments.hpp"

namespace {

using namespace aircomp;

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 1;

nlohmann::json allocation_json(const Allocation& a, const SuccessBreakdown& b) {
  return {{"phi", a.phi}, {"T_s", a.T}, {"P_S_W", a.P_S}, {"rho_cycles", a.rho},
          {"p_trans", b.p_trans}, {"p_comp", b.p_comp}, {"p_local", b.p_local},
          {"p_sus", b.p_sus}, {"p_out", b.p_out}};
}

SystemParams load_system(const std::string& path) {
  return load_config(path, [](const nlohmann::json& j) { return system_params_from_json(j, "system"); });
}

int solve(const std::string& config, int servers, double bits, const std::string& method) {
  SystemParams p = config.empty() ? SystemParams::defaults(servers, bits) : load_system(config);
  nlohmann::json out{{"method", method}, {"M", p.M}, {"L_bits", p.L}};
  if (method == "proposed") {
    const SolveResult r = proposed_solve(p);
    out["allocation"] = allocation_json(r.allocation, r.breakdown);
    out["start"] = r.start;
  } else if (method == "bcd_mm1" || method == "bcd_mm2") {
    const BcdTrace tr = bcd_solve(p, default_initial_allocation(p), method == "bcd_mm1" ? MmVariant::MM1 : MmVariant::MM2);
    out["allocation"] = allocation_json(tr.final_allocation, tr.breakdown);
    out["outer_iterations"] = tr.outer_iterations;
    out["converged"] = tr.converged;
  } else if (method == "full_offload") {
    const SolveResult r = baseline_full_offload(p);
    out["allocation"] = allocation_json(r.allocation, r.breakdown);
  } else {
    const GradientResult g = gradient_descent_solve(p);
    out["allocation"] = allocation_json(g.allocation, g.breakdown);
    out["iterations"] = g.iterations;
    out["converged"] = g.converged;
  }
  std::cout << out.dump(2) << '\n';
  return 0;
}

int sweep(const std::string& config, const std::string& out_dir, const std::uint64_t* seed, std::size_t trials) {
  ExperimentConfig c = load_experiment_config(config);
  if (seed) c.seed = c.latency.seed = *seed;
  if (trials > 0) c.trials = trials;
  const std::filesystem::path dir = out_dir.empty() ? std::filesystem::path(c.output) : std::filesystem::path(out_dir);
  const ExperimentOutput out = run_experiment(c);
  write_experiment(out, dir);
  for (const auto& [name, table] : out) std::cout << (dir / name).string() << " (" << table.rows.size() << " rows)\n";
  return 0;
}

PolicySetup load_setup(const std::string& config) { return config.empty() ? PolicySetup{} : load_policy_setup(config); }

int train_cmd(const std::string& config, const std::string& checkpoint, const std::uint64_t* seed, int episodes,
              bool quiet) {
  PolicySetup s = load_setup(config);
  if (seed) s.train.seed = *seed;
  if (episodes > 0) s.train.episodes = episodes;
  try {
    s.train.validate();
  } catch (const std::exception& e) {
    throw config_error(std::string("config.train: ") + e.what());
  }
  const ActionSpace as(s.multi_user, s.grid.grid, s.grid.mode);
  const TrainResult r = train(s.multi_user, as, s.train, [&](int e, double ret) {
    if (!quiet && (e + 1) % 100 == 0) std::fprintf(stderr, "episode %d return %.3f\n", e + 1, ret);
  });
  const std::filesystem::path path(checkpoint);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  save_checkpoint(checkpoint, r.network, s.train);
  CsvTable curve{"episode", {}};
  for (std::size_t e = 0; e < r.episode_rewards.size(); ++e) {
    curve.rows.push_back({static_cast<double>(e), "reward", r.episode_rewards[e], 0.0, "dqn"});
  }
  write_csv_file(path.string() + ".rewards.csv", curve);
  std::cout << "checkpoint " << checkpoint << " after " << r.steps << " steps, " << r.updates << " updates\n";
  return 0;
}

int eval_cmd(const std::string& config, const std::string& checkpoint, const std::uint64_t* seed, int episodes,
             const std::string& csv) {
  PolicySetup s = load_setup(config);
  if (seed) s.seed = *seed;
  if (episodes > 0) s.episodes = episodes;
  const Checkpoint ck = load_checkpoint(checkpoint);
  const ActionSpace as(s.multi_user, s.grid.grid, s.grid.mode);
  if (ck.network.inputs() != state_dimension(s.multi_user) || ck.network.outputs() != action_layout(as).outputs()) {
    throw config_error("checkpoint " + checkpoint + ": network shape does not match the configured environment and grid");
  }
  CsvTable t{"episodes", {}};
  const double x = s.episodes;
  add_policy_rows(t, x, "dqn", evaluate_policy(s.multi_user, greedy_policy(ck.network, as, s.multi_user), s.episodes, s.seed));
  for (auto k : {SchedulerKind::round_robin, SchedulerKind::weighted, SchedulerKind::max_min, SchedulerKind::proportional}) {
    add_policy_rows(t, x, scheduler_name(k),
                    evaluate_policy(s.multi_user, scheduler_policy(k, s.multi_user, s.scheduler), s.episodes, s.seed));
  }
  add_policy_rows(t, x, "random", evaluate_policy(s.multi_user, random_policy(as, mix_seed(s.seed, 0x5EED)), s.episodes, s.seed));
  if (csv.empty()) {
    write_csv(std::cout, t);
  } else {
    write_csv_file(csv, t);
    std::cout << csv << " (" << t.rows.size() << " rows)\n";
  }
  return 0;
}

int bench(const std::vector<int>& servers, int repetitions, const std::vector<std::string>& methods,
          const std::string& csv) {
  LatencyOptions opt;
  opt.servers = servers;
  opt.repetitions = repetitions;
  if (!methods.empty()) opt.methods = methods;
  CsvTable t{"M_servers", {}};
  for (const LatencyRow& r : latency_benchmark(opt)) {
    t.rows.push_back({static_cast<double>(r.M), "latency_s", r.median_s, 0.0, r.method});
  }
  if (csv.empty()) {
    write_csv(std::cout, t);
  } else {
    write_csv_file(csv, t);
    std::cout << csv << " (" << t.rows.size() << " rows)\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offloading allocation under execution uncertainty: solvers, learned policies, experiments"};
  app.require_subcommand(1);

  std::string config, out, checkpoint = "results/dqn.ckpt", csv, method = "proposed";
  int servers = 2, episodes = 0, repetitions = 5;
  double bits = 1e7;
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  bool quiet = false;
  std::vector<int> bench_servers{1, 2, 3};
  std::vector<std::string> methods;

  auto* solve_cmd = app.add_subcommand("solve", "Single-user allocation");
  solve_cmd->add_option("-c,--config", config, "JSON system block")->check(CLI::ExistingFile);
  solve_cmd->add_option("-M,--servers", servers, "Server count when no config is given")->check(CLI::PositiveNumber);
  solve_cmd->add_option("-L,--bits", bits, "Task size in bits when no config is given")->check(CLI::PositiveNumber);
  solve_cmd->add_option("-m,--method", method, "Solver")
      ->check(CLI::IsMember({"proposed", "bcd_mm1", "bcd_mm2", "full_offload", "gradient_descent"}));

  auto* sweep_cmd = app.add_subcommand("sweep", "Run an experiment config and write its CSV files");
  sweep_cmd->add_option("-c,--config", config, "JSON experiment config")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("-o,--out", out, "Output directory (default from config)");
  auto* sweep_seed = sweep_cmd->add_option("-s,--seed", seed, "Override the config seed");
  sweep_cmd->add_option("-n,--trials", trials, "Override Monte-Carlo trial count");

  auto* train_sub = app.add_subcommand("train", "Train the multi-user DQN policy");
  train_sub->add_option("-c,--config", config, "JSON policy setup")->check(CLI::ExistingFile);
  train_sub->add_option("-k,--checkpoint", checkpoint, "Checkpoint path to write");
  auto* train_seed = train_sub->add_option("-s,--seed", seed, "Training seed");
  train_sub->add_option("-e,--episodes", episodes, "Training episodes")->check(CLI::PositiveNumber);
  train_sub->add_flag("-q,--quiet", quiet, "No progress lines");

  auto* eval_sub = app.add_subcommand("eval", "Evaluate a checkpoint against the scheduler baselines");
  eval_sub->add_option("-c,--config", config, "JSON policy setup")->check(CLI::ExistingFile);
  eval_sub->add_option("-k,--checkpoint", checkpoint, "Checkpoint to load")->required()->check(CLI::ExistingFile);
  auto* eval_seed = eval_sub->add_option("-s,--seed", seed, "Evaluation seed");
  eval_sub->add_option("-e,--episodes", episodes, "Evaluation episodes")->check(CLI::Range(2, 1000000));
  eval_sub->add_option("-o,--out", csv, "CSV path (default stdout)");

  auto* bench_sub = app.add_subcommand("bench", "Median decision latency per method and server count");
  bench_sub->add_option("-M,--servers", bench_servers, "Server counts");
  bench_sub->add_option("-r,--repetitions", repetitions, "Timed decisions per cell")->check(CLI::PositiveNumber);
  bench_sub->add_option("-m,--methods", methods, "Methods")
      ->check(CLI::IsMember({"bcd_mm1", "bcd_mm2", "gradient_descent", "dqn_inference"}));
  bench_sub->add_option("-o,--out", csv, "CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*solve_cmd) return solve(config, servers, bits, method);
    if (*sweep_cmd) return sweep(config, out, *sweep_seed ? &seed : nullptr, trials);
    if (*train_sub) return train_cmd(config, checkpoint, *train_seed ? &seed : nullptr, episodes, quiet);
    if (*eval_sub) return eval_cmd(config, checkpoint, *eval_seed ? &seed : nullptr, episodes, csv);
    if (*bench_sub) return bench(bench_servers, repetitions, methods, csv);
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kRuntimeError;
}
