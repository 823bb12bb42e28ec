#include "aircomp/dqn_agent.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

namespace aircomp {
namespace {

QNetwork random_net(const std::vector<int>& sizes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  QNetwork net = QNetwork::glorot(sizes, rng);
  std::normal_distribution<double> n(0.0, 0.3);
  for (auto& b : net.biases) {
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = n(rng);
  }
  return net;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

// Central differences of f over every flat parameter of net.
template <class F>
Eigen::VectorXd numeric_gradient(QNetwork net, F f, double h = 1e-6) {
  const Eigen::VectorXd base = net.flatten();
  Eigen::VectorXd g(base.size());
  for (Eigen::Index i = 0; i < base.size(); ++i) {
    Eigen::VectorXd v = base;
    v[i] = base[i] + h;
    net.assign(v);
    const double up = f(net);
    v[i] = base[i] - h;
    net.assign(v);
    const double down = f(net);
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

TEST(QForward, ZeroWeightsGiveFinalBias) {
  QNetwork net = QNetwork::zeros({4, 8, 5, 3});
  net.biases.back() << 0.5, -1.0, 2.0;
  EXPECT_EQ(q_forward(net, Eigen::VectorXd::Random(4)), net.biases.back());
}

TEST(QForward, FinalLayerScalesDeviationFromBias) {
  const QNetwork net = random_net({5, 7, 6, 4}, 3);
  QNetwork scaled = net;
  scaled.weights.back() *= 2.5;
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(5, -1.0, 1.0);
  const Eigen::VectorXd d0 = q_forward(net, x) - net.biases.back();
  const Eigen::VectorXd d1 = q_forward(scaled, x) - net.biases.back();
  for (Eigen::Index i = 0; i < d0.size(); ++i) EXPECT_NEAR(d1[i], 2.5 * d0[i], 1e-14);
}

TEST(QForward, RejectsWrongStateSize) {
  const QNetwork net = random_net({5, 7, 4}, 3);
  EXPECT_THROW(q_forward(net, Eigen::VectorXd::Zero(4)), std::invalid_argument);
}

TEST(QForward, BatchMatchesColumnByColumn) {
  const QNetwork net = random_net({3, 16, 8, 5}, 4);
  const Eigen::MatrixXd X = Eigen::MatrixXd::Random(3, 6);
  const Eigen::MatrixXd Q = q_forward_batch(net, X);
  for (int j = 0; j < 6; ++j) EXPECT_TRUE(Q.col(j).isApprox(q_forward(net, X.col(j)), 1e-14));
}

TEST(QBackward, MeanOutputGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const QNetwork net = random_net({4, 9, 7, 5, 3}, seed);
    std::mt19937_64 rng(seed + 100);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd X(4, 5);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = n(rng);
    auto mean_output = [&](const QNetwork& q) { return q_forward_batch(q, X).mean(); };
    ForwardCache cache;
    const Eigen::MatrixXd out = q_forward_batch(net, X, &cache);
    const Eigen::MatrixXd dout = Eigen::MatrixXd::Constant(out.rows(), out.cols(), 1.0 / out.size());
    const Eigen::VectorXd analytic = q_backward(net, cache, dout).flatten();
    const Eigen::VectorXd numeric = numeric_gradient(net, mean_output);
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
      ASSERT_LT(rel_err(analytic[i], numeric[i]), 1e-5) << "seed " << seed << " parameter " << i;
    }
  }
}

TEST(ActionSelection, UniformWhenFullyExploring) {
  const QNetwork net = random_net({3, 8, 10}, 1);
  const ActionLayout layout{1, 10};
  std::mt19937_64 rng(2);
  std::vector<int> counts(10, 0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ++counts[select_action(net, layout, Eigen::VectorXd::Ones(3), 1.0, rng)[0]];
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - draws / 10.0) * (c - draws / 10.0) / (draws / 10.0);
  EXPECT_LT(chi2, 27.88);  // chi-square, 9 dof, p = 0.001
}

TEST(ActionSelection, GreedyIsArgmaxWithLowestTie) {
  QNetwork net = QNetwork::zeros({2, 3, 4});
  net.biases.back() << 1.0, 3.0, 3.0, -2.0;
  std::mt19937_64 rng(0);
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(select_action(net, {1, 4}, Eigen::VectorXd::Random(2), 0.0, rng), std::vector<int>{1});
  }
  EXPECT_EQ(greedy_action(net.biases.back(), {2, 2}), (std::vector<int>{1, 0}));
  EXPECT_THROW(select_action(net, {1, 4}, Eigen::VectorXd::Zero(2), 1.5, rng), std::invalid_argument);
}

TEST(ActionSelection, HalfExplorationMixesWithUniform) {
  QNetwork net = QNetwork::zeros({2, 3, 8});
  net.biases.back()[5] = 1.0;
  std::mt19937_64 rng(9);
  const int draws = 100000;
  int greedy = 0;
  for (int i = 0; i < draws; ++i) greedy += select_action(net, {1, 8}, Eigen::VectorXd::Zero(2), 0.5, rng)[0] == 5;
  const double p = 0.5 + 0.5 / 8.0;
  EXPECT_NEAR(static_cast<double>(greedy) / draws, p, 3.0 * std::sqrt(p * (1 - p) / draws));
}

Transition toy(double s, int a, double r, bool terminal = false) {
  return {Eigen::VectorXd::Constant(2, s), {a}, r, Eigen::VectorXd::Constant(2, -s), terminal};
}

TEST(Replay, EqualPrioritiesSampleUniformly) {
  ReplayBuffer buf(8, 0.6);
  for (int i = 0; i < 8; ++i) buf.push(toy(i, 0, 0.0));
  std::mt19937_64 rng(4);
  std::vector<int> counts(8, 0);
  for (int k = 0; k < 8000; ++k) {
    const auto b = buf.sample(8, 0.4, rng);
    for (std::size_t i : b.indices) ++counts[i];
    for (double w : b.weights) EXPECT_DOUBLE_EQ(w, 1.0);
  }
  const double expect = 8000.0;
  for (int c : counts) EXPECT_NEAR(c, expect, 4.0 * std::sqrt(expect));
}

TEST(Replay, DominantPriorityDominatesSamples) {
  ReplayBuffer buf(16, 0.6);
  for (int i = 0; i < 16; ++i) buf.push(toy(i, 0, 0.0));
  for (std::size_t i = 0; i < 16; ++i) buf.update_priority(i, 1e-6);
  buf.update_priority(11, 1e6);
  std::mt19937_64 rng(5);
  int hits = 0;
  for (int k = 0; k < 4; ++k) {
    for (std::size_t i : buf.sample(16, 0.4, rng).indices) hits += i == 11;
  }
  EXPECT_GE(hits, 63);
  EXPECT_NEAR(buf.probability(11), 1.0, 1e-6);
}

TEST(Replay, ZeroExponentIgnoresPriorities) {
  ReplayBuffer buf(4, 0.0);
  for (int i = 0; i < 4; ++i) buf.push(toy(i, 0, 0.0));
  buf.update_priority(2, 1e3);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(buf.probability(i), 0.25);
}

TEST(Replay, ImportanceWeightsFollowProbabilities) {
  ReplayBuffer buf(5, 0.6);
  for (int i = 0; i < 5; ++i) buf.push(toy(i, 0, 0.0));
  const std::vector<double> pr{0.5, 1.0, 2.0, 4.0, 8.0};
  for (std::size_t i = 0; i < 5; ++i) buf.update_priority(i, pr[i]);
  double total = 0.0;
  for (double p : pr) total += std::pow(p, 0.6);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(buf.probability(i), std::pow(pr[i], 0.6) / total, 1e-15);
  std::mt19937_64 rng(6);
  const auto b = buf.sample(5, 0.4, rng);
  double largest = 0.0;
  for (std::size_t i : b.indices) largest = std::max(largest, std::pow(5.0 * buf.probability(i), -0.4));
  for (std::size_t j = 0; j < b.indices.size(); ++j) {
    EXPECT_NEAR(b.weights[j], std::pow(5.0 * buf.probability(b.indices[j]), -0.4) / largest, 1e-14);
  }
  EXPECT_EQ(*std::max_element(b.weights.begin(), b.weights.end()), 1.0);
}

TEST(Replay, RingKeepsCapacityAndTreeTotal) {
  ReplayBuffer buf(10, 0.6);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.01, 5.0);
  for (int i = 0; i < 35; ++i) {
    const std::size_t slot = buf.push(toy(i, 0, i));
    EXPECT_EQ(slot, static_cast<std::size_t>(i % 10));
    buf.update_priority(slot, u(rng));
  }
  EXPECT_EQ(buf.size(), 10u);
  EXPECT_EQ(buf.at(4).reward, 34.0);
  double total = 0.0;
  for (std::size_t i = 0; i < 10; ++i) total += std::pow(buf.priority(i), 0.6);
  EXPECT_NEAR(buf.total(), total, 1e-12 * total);
}

TEST(Replay, NewEntriesTakeTheLargestPriority) {
  ReplayBuffer buf(4, 1.0);
  buf.push(toy(0, 0, 0.0));
  buf.update_priority(0, 7.0);
  buf.push(toy(1, 0, 0.0));
  EXPECT_EQ(buf.priority(1), 7.0);
}

TEST(Replay, RejectsUnderfilledAndBadPriorities) {
  ReplayBuffer buf(10, 0.6);
  for (int i = 0; i < 3; ++i) buf.push(toy(i, 0, 0.0));
  std::mt19937_64 rng(0);
  EXPECT_THROW(buf.sample(4, 0.4, rng), std::length_error);
  EXPECT_THROW(buf.update_priority(0, 0.0), std::invalid_argument);
  EXPECT_THROW(buf.update_priority(5, 1.0), std::out_of_range);
  EXPECT_THROW(buf.push(toy(0, 0, std::nan(""))), std::invalid_argument);
}

struct ToyBatch {
  ReplayBuffer buf{8, 0.6};
  ReplayBatch batch;
  ToyBatch() {
    buf.push(toy(0.3, 0, 1.0));
    buf.push(toy(-0.7, 1, -0.5));
    buf.push(toy(1.1, 1, 0.25, true));
    buf.push(toy(0.2, 0, 2.0));
    batch.indices = {0, 1, 2, 3, 1};
    batch.weights = {1.0, 0.5, 0.8, 0.3, 0.5};
  }
};

TEST(TdLoss, ZeroDiscountTargetsAreRewards) {
  ToyBatch t;
  const QNetwork main = random_net({2, 6, 2}, 1);
  TrainConfig cfg;
  cfg.discount = 0.0;
  const auto l = td_loss(main, random_net({2, 6, 2}, 2), t.buf, t.batch, {1, 2}, cfg);
  for (std::size_t j = 0; j < t.batch.indices.size(); ++j) {
    const Transition& tr = t.buf.at(t.batch.indices[j]);
    EXPECT_EQ(l.td_errors[j], tr.reward - q_forward(main, tr.state)[tr.action[0]]);
  }
}

TEST(TdLoss, DoubleTargetUsesMainForSelection) {
  ReplayBuffer buf(2, 0.6);
  buf.push(toy(0.5, 0, 1.0));
  QNetwork main = QNetwork::zeros({2, 3, 2});
  QNetwork target = QNetwork::zeros({2, 3, 2});
  main.biases.back() << 0.0, 1.0;
  target.biases.back() << 5.0, 2.0;
  TrainConfig cfg;
  cfg.discount = 0.5;
  ReplayBatch b{{0}, {1.0}};
  EXPECT_DOUBLE_EQ(td_loss(main, target, buf, b, {1, 2}, cfg).td_errors[0], 1.0 + 0.5 * 2.0 - 0.0);
  cfg.double_q = false;
  EXPECT_DOUBLE_EQ(td_loss(main, target, buf, b, {1, 2}, cfg).td_errors[0], 1.0 + 0.5 * 5.0 - 0.0);
}

TEST(TdLoss, GradientMatchesFiniteDifferencesOnToyProblem) {
  ToyBatch t;
  const QNetwork target = random_net({2, 6, 5, 2}, 8);
  for (bool dbl : {false, true}) {
    TrainConfig cfg;
    cfg.double_q = dbl;
    const QNetwork main = random_net({2, 6, 5, 2}, 7);
    const auto l = td_loss(main, target, t.buf, t.batch, {1, 2}, cfg);
    const Eigen::VectorXd analytic = l.gradient.flatten();
    const Eigen::VectorXd numeric =
        numeric_gradient(main, [&](const QNetwork& q) { return td_loss(q, target, t.buf, t.batch, {1, 2}, cfg).loss; });
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
      ASSERT_LT(rel_err(analytic[i], numeric[i]), 1e-5) << "double " << dbl << " parameter " << i;
    }
  }
}

TEST(TdLoss, FactoredHeadsGradientMatchesFiniteDifferences) {
  ReplayBuffer buf(4, 0.6);
  buf.push({Eigen::Vector3d(0.1, 0.5, -0.2), {2, 0}, 1.0, Eigen::Vector3d(0.3, -0.1, 0.4), false});
  buf.push({Eigen::Vector3d(-0.4, 0.2, 0.9), {1, 1}, -2.0, Eigen::Vector3d(0.0, 0.6, 0.1), false});
  buf.push({Eigen::Vector3d(0.7, -0.3, 0.2), {0, 2}, 0.5, Eigen::Vector3d(0.2, 0.2, 0.2), true});
  const ReplayBatch b{{0, 1, 2}, {1.0, 0.7, 0.4}};
  const ActionLayout layout{2, 3};
  const QNetwork main = random_net({3, 8, 6}, 11);
  const QNetwork target = random_net({3, 8, 6}, 12);
  TrainConfig cfg;
  const auto l = td_loss(main, target, buf, b, layout, cfg);
  const Eigen::VectorXd analytic = l.gradient.flatten();
  const Eigen::VectorXd numeric =
      numeric_gradient(main, [&](const QNetwork& q) { return td_loss(q, target, buf, b, layout, cfg).loss; });
  for (Eigen::Index i = 0; i < analytic.size(); ++i) ASSERT_LT(rel_err(analytic[i], numeric[i]), 1e-5) << i;
}

TEST(TrainStep, RepeatedStepsReduceLossOnAFixedBatch) {
  ToyBatch t;
  QNetwork main = random_net({2, 6, 5, 2}, 3);
  const QNetwork target = main;
  TrainConfig cfg;
  cfg.discount = 0.0;
  cfg.learning_rate = 1e-2;
  double prev = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 50; ++i) {
    const double loss = train_step(main, target, t.buf, t.batch, {1, 2}, cfg).loss;
    EXPECT_LT(loss, prev);
    prev = loss;
  }
}

TEST(TrainStep, NonFiniteLossAborts) {
  ToyBatch t;
  QNetwork main = random_net({2, 6, 2}, 3);
  main.biases.back()[0] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(train_step(main, main, t.buf, t.batch, {1, 2}, TrainConfig{}), std::runtime_error);
}

TEST(SoftUpdate, EndpointsAndHalfSteps) {
  const QNetwork src = random_net({3, 4, 2}, 1);
  QNetwork tgt = QNetwork::zeros({3, 4, 2});
  QNetwork copy = tgt;
  soft_update(copy, src, 1.0);
  EXPECT_EQ(copy.flatten(), src.flatten());
  copy = tgt;
  soft_update(copy, src, 0.0);
  EXPECT_EQ(copy.flatten(), tgt.flatten());
  soft_update(tgt, src, 0.5);
  soft_update(tgt, src, 0.5);
  EXPECT_TRUE(tgt.flatten().isApprox(0.75 * src.flatten(), 1e-15));
  QNetwork other = QNetwork::zeros({3, 5, 2});
  EXPECT_THROW(soft_update(other, src, 0.5), std::invalid_argument);
  EXPECT_THROW(soft_update(tgt, src, 1.5), std::invalid_argument);
}

TEST(SoftUpdate, LagContractsGeometricallyWhenSourceIsFrozen) {
  const QNetwork src = random_net({3, 6, 2}, 2);
  QNetwork tgt = random_net({3, 6, 2}, 3);
  const double d0 = (tgt.flatten() - src.flatten()).norm();
  const double tau = 0.05;
  for (int k = 1; k <= 60; ++k) {
    soft_update(tgt, src, tau);
    const double d = (tgt.flatten() - src.flatten()).norm();
    EXPECT_NEAR(d, std::pow(1.0 - tau, k) * d0, 1e-12 * d0);
  }
}

TEST(Exploration, ScheduleMatchesClosedForm) {
  TrainConfig cfg;
  double eps = cfg.epsilon_start;
  for (int t = 1; t <= 2000; ++t) {
    eps = std::max(cfg.epsilon_min, eps * cfg.epsilon_decay);
    EXPECT_NEAR(epsilon_after(cfg, t), eps, 1e-12);
    EXPECT_EQ(epsilon_after(cfg, t), std::max(cfg.epsilon_min, cfg.epsilon_start * std::pow(cfg.epsilon_decay, t)));
  }
  // ln(0.01) / ln(0.995) = 918.7
  EXPECT_GT(epsilon_after(cfg, 918), cfg.epsilon_min);
  EXPECT_EQ(epsilon_after(cfg, 919), cfg.epsilon_min);
}

TEST(TrainConfig, ValidatesAndParsesStrictly) {
  TrainConfig c;
  c.discount = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.batch = 20000;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.epsilon_min = 0.5;
  c.epsilon_start = 0.1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  const auto parsed = train_config_from_json(nlohmann::json::parse(R"({"learning_rate": 5e-4, "seed": 3, "hidden": [16, 8]})"));
  EXPECT_EQ(parsed.learning_rate, 5e-4);
  EXPECT_EQ(parsed.seed, 3u);
  EXPECT_EQ(parsed.hidden, (std::vector<int>{16, 8}));
  EXPECT_THROW(train_config_from_json(nlohmann::json::parse(R"({"learning_rat": 1})")), std::invalid_argument);
}

struct SmallEnv {
  MultiUserParams mp = MultiUserParams::defaults(2, 1);
  ActionSpace as{mp, ActionGrid{0.5, {0.5, 1.0}, {0.5, 1.0}, 1000}};
};

TEST(Train, ZeroEpisodesReturnInitialization) {
  SmallEnv e;
  TrainConfig cfg;
  cfg.episodes = 0;
  cfg.seed = 4;
  const auto r = train(e.mp, e.as, cfg);
  EXPECT_EQ(r.network.flatten(), initial_network(e.mp, e.as, cfg).flatten());
  EXPECT_EQ(r.target.flatten(), r.network.flatten());
  EXPECT_TRUE(r.episode_rewards.empty());
  EXPECT_EQ(r.steps, 0);
  EXPECT_EQ(r.network.sizes(), (std::vector<int>{state_dimension(e.mp), 128, 64, 32, 81}));
}

TEST(Train, FixedSeedIsBitReproducible) {
  SmallEnv e;
  TrainConfig cfg;
  cfg.episodes = 12;
  cfg.seed = 21;
  const auto a = train(e.mp, e.as, cfg);
  const auto b = train(e.mp, e.as, cfg);
  EXPECT_EQ(a.episode_rewards, b.episode_rewards);
  EXPECT_EQ(a.network.flatten(), b.network.flatten());
  EXPECT_EQ(a.target.flatten(), b.target.flatten());
  EXPECT_GT(a.updates, 0);
  EXPECT_EQ(a.epsilon, epsilon_after(cfg, a.steps));
  cfg.seed = 22;
  EXPECT_NE(train(e.mp, e.as, cfg).episode_rewards, a.episode_rewards);
}

TEST(Train, FactoredModeRuns) {
  SmallEnv e;
  ActionSpace factored(e.mp, e.as.grid(), ActionSpace::Mode::factored);
  TrainConfig cfg;
  cfg.episodes = 6;
  const auto r = train(e.mp, factored, cfg);
  EXPECT_EQ(r.network.outputs(), 2 * 9);
  EXPECT_TRUE(r.network.finite());
}

double mean_greedy_return(const SmallEnv& e, const QNetwork* net, int episodes, std::uint64_t seed) {
  MultiUserEnv env(e.mp);
  std::mt19937_64 pick(seed);
  const ActionLayout layout = action_layout(e.as);
  double total = 0.0;
  for (int ep = 0; ep < episodes; ++ep) {
    MultiUserState st = env.reset(mix_seed(seed, ep));
    for (;;) {
      const std::vector<int> a = net ? greedy_action(q_forward(*net, state_vector(e.mp, st)), layout)
                                     : std::vector<int>{static_cast<int>(pick() % e.as.size())};
      const auto r = env.step(to_env_action(e.as, a));
      total += r.reward;
      st = r.next;
      if (r.terminal) break;
    }
  }
  return total / episodes;
}

TEST(Train, ShortRunBeatsRandomPolicy) {
  SmallEnv e;
  TrainConfig cfg;
  cfg.episodes = 200;
  cfg.seed = 1;
  const auto r = train(e.mp, e.as, cfg);
  EXPECT_GT(mean_greedy_return(e, &r.network, 50, 990), mean_greedy_return(e, nullptr, 50, 990) + 30.0);
}

TEST(Checkpoint, RoundTripsBitExactly) {
  const QNetwork net = random_net({6, 5, 4, 3}, 17);
  TrainConfig cfg;
  cfg.seed = 0xDEADBEEFull;
  cfg.tau = 0.02;
  cfg.hidden = {5, 4};
  std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
  write_checkpoint(ss, net, cfg);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 8), "AQNETCK1");
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 0xEF);  // seed, low byte first
  EXPECT_EQ(static_cast<unsigned char>(bytes[11]), 0xDE);
  const Checkpoint ck = read_checkpoint(ss);
  EXPECT_EQ(ck.seed, cfg.seed);
  EXPECT_EQ(ck.config.tau, 0.02);
  EXPECT_EQ(ck.config.hidden, cfg.hidden);
  EXPECT_EQ(ck.network.sizes(), net.sizes());
  EXPECT_EQ(ck.network.flatten(), net.flatten());
  EXPECT_EQ(bytes.size(), 8 + 8 + 8 + to_json(cfg).dump().size() + 8 + 4 * 8 + 8 + 8 * net.parameter_count());
}

TEST(Checkpoint, RejectsCorruptInput) {
  std::stringstream bad("NOTACKPT");
  EXPECT_THROW(read_checkpoint(bad), std::runtime_error);
  std::stringstream ss;
  write_checkpoint(ss, random_net({2, 3, 2}, 1), TrainConfig{});
  std::stringstream truncated(ss.str().substr(0, ss.str().size() - 5));
  EXPECT_THROW(read_checkpoint(truncated), std::runtime_error);
}

}  // namespace
}  // namespace aircomp
