#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "aircomp/multiuser_env.hpp"

namespace aircomp {

// Dense rectifier network. weights[k] maps layer k (columns) to layer k+1 (rows);
// every layer but the last applies max(0, .).
struct QNetwork {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  static QNetwork zeros(const std::vector<int>& sizes) {
    if (sizes.size() < 2) throw std::invalid_argument("QNetwork: need at least input and output sizes");
    QNetwork net;
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
      if (sizes[k] < 1 || sizes[k + 1] < 1) throw std::invalid_argument("QNetwork: layer sizes must be positive");
      net.weights.push_back(Eigen::MatrixXd::Zero(sizes[k + 1], sizes[k]));
      net.biases.push_back(Eigen::VectorXd::Zero(sizes[k + 1]));
    }
    return net;
  }

  // Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
  static QNetwork glorot(const std::vector<int>& sizes, std::mt19937_64& rng) {
    QNetwork net = zeros(sizes);
    for (auto& W : net.weights) {
      const double limit = std::sqrt(6.0 / static_cast<double>(W.rows() + W.cols()));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (Eigen::Index j = 0; j < W.cols(); ++j) {
        for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = u(rng);
      }
    }
    return net;
  }

  std::vector<int> sizes() const {
    std::vector<int> s;
    if (weights.empty()) return s;
    s.push_back(static_cast<int>(weights.front().cols()));
    for (const auto& W : weights) s.push_back(static_cast<int>(W.rows()));
    return s;
  }
  int inputs() const { return static_cast<int>(weights.front().cols()); }
  int outputs() const { return static_cast<int>(weights.back().rows()); }

  std::size_t parameter_count() const {
    std::size_t c = 0;
    for (std::size_t k = 0; k < weights.size(); ++k) c += weights[k].size() + biases[k].size();
    return c;
  }

  // Layer by layer: weights column-major, then biases.
  Eigen::VectorXd flatten() const {
    Eigen::VectorXd v(parameter_count());
    Eigen::Index at = 0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
      v.segment(at, weights[k].size()) = Eigen::Map<const Eigen::VectorXd>(weights[k].data(), weights[k].size());
      at += weights[k].size();
      v.segment(at, biases[k].size()) = biases[k];
      at += biases[k].size();
    }
    return v;
  }

  void assign(const Eigen::VectorXd& v) {
    if (static_cast<std::size_t>(v.size()) != parameter_count()) {
      throw std::invalid_argument("QNetwork: flat parameter length does not match the layer shapes");
    }
    Eigen::Index at = 0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
      Eigen::Map<Eigen::VectorXd>(weights[k].data(), weights[k].size()) = v.segment(at, weights[k].size());
      at += weights[k].size();
      biases[k] = v.segment(at, biases[k].size());
      at += biases[k].size();
    }
  }

  bool finite() const {
    for (std::size_t k = 0; k < weights.size(); ++k) {
      if (!weights[k].allFinite() || !biases[k].allFinite()) return false;
    }
    return true;
  }
};

inline bool same_shape(const QNetwork& a, const QNetwork& b) { return a.sizes() == b.sizes(); }

inline std::vector<int> q_layer_sizes(int inputs, int outputs, const std::vector<int>& hidden = {128, 64, 32}) {
  std::vector<int> s{inputs};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(outputs);
  return s;
}

// activations[0] is the input batch; activations[k] the output of layer k.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;
};

// Columns of X are samples.
inline Eigen::MatrixXd q_forward_batch(const QNetwork& net, const Eigen::MatrixXd& X, ForwardCache* cache = nullptr) {
  if (net.weights.empty()) throw std::invalid_argument("q_forward: empty network");
  if (X.rows() != net.inputs()) {
    throw std::invalid_argument("q_forward: state has " + std::to_string(X.rows()) + " features, network expects " +
                                std::to_string(net.inputs()));
  }
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(X);
  }
  Eigen::MatrixXd h = X;
  const std::size_t last = net.weights.size() - 1;
  for (std::size_t k = 0; k <= last; ++k) {
    Eigen::MatrixXd z = net.weights[k] * h;
    z.colwise() += net.biases[k];
    if (k < last) z = z.cwiseMax(0.0);
    h = std::move(z);
    if (cache) cache->activations.push_back(h);
  }
  return h;
}

inline Eigen::VectorXd q_forward(const QNetwork& net, const Eigen::VectorXd& x) { return q_forward_batch(net, x); }

// Gradient of sum(dout .* output) with respect to every parameter, in network shape.
inline QNetwork q_backward(const QNetwork& net, const ForwardCache& cache, const Eigen::MatrixXd& dout) {
  const std::size_t layers = net.weights.size();
  if (cache.activations.size() != layers + 1) throw std::invalid_argument("q_backward: cache does not match network");
  QNetwork grad = QNetwork::zeros(net.sizes());
  Eigen::MatrixXd delta = dout;
  for (std::size_t k = layers; k-- > 0;) {
    if (k + 1 < layers) delta = delta.cwiseProduct((cache.activations[k + 1].array() > 0.0).cast<double>().matrix());
    grad.weights[k] = delta * cache.activations[k].transpose();
    grad.biases[k] = delta.rowwise().sum();
    if (k > 0) delta = net.weights[k].transpose() * delta;
  }
  return grad;
}

inline void soft_update(QNetwork& target, const QNetwork& source, double tau) {
  if (!same_shape(target, source)) throw std::invalid_argument("soft_update: network shapes differ");
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("soft_update: tau must lie in [0, 1]");
  for (std::size_t k = 0; k < target.weights.size(); ++k) {
    target.weights[k] = tau * source.weights[k] + (1.0 - tau) * target.weights[k];
    target.biases[k] = tau * source.biases[k] + (1.0 - tau) * target.biases[k];
  }
}

// Output layout: `heads` blocks of `per_head` values; an action picks one entry per
// block and its value is the sum. A joint action space is a single head.
struct ActionLayout {
  int heads{1};
  int per_head{1};
  int outputs() const { return heads * per_head; }
};

inline ActionLayout action_layout(const ActionSpace& as) {
  if (as.mode() == ActionSpace::Mode::joint) {
    if (as.size() > std::numeric_limits<int>::max()) throw action_space_error("action_layout: joint grid too large");
    return {1, static_cast<int>(as.size())};
  }
  return {as.users(), as.per_user()};
}

inline MultiUserAction to_env_action(const ActionSpace& as, const std::vector<int>& idx) {
  if (as.mode() == ActionSpace::Mode::joint) return as.decode(static_cast<std::int64_t>(idx.at(0)));
  return as.decode(idx);
}

inline double action_value(const Eigen::VectorXd& q, const ActionLayout& layout, const std::vector<int>& idx) {
  double v = 0.0;
  for (int h = 0; h < layout.heads; ++h) v += q[h * layout.per_head + idx[h]];
  return v;
}

// Per-head argmax; ties go to the lowest index.
inline std::vector<int> greedy_action(const Eigen::VectorXd& q, const ActionLayout& layout) {
  if (q.size() != layout.outputs()) throw std::invalid_argument("greedy_action: output size does not match layout");
  std::vector<int> idx(layout.heads, 0);
  for (int h = 0; h < layout.heads; ++h) {
    const int base = h * layout.per_head;
    for (int k = 1; k < layout.per_head; ++k) {
      if (q[base + k] > q[base + idx[h]]) idx[h] = k;
    }
  }
  return idx;
}

inline std::vector<int> select_action(const QNetwork& net, const ActionLayout& layout, const Eigen::VectorXd& state,
                                      double epsilon, std::mt19937_64& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("select_action: epsilon must lie in [0, 1]");
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < epsilon) {
    std::uniform_int_distribution<int> pick(0, layout.per_head - 1);
    std::vector<int> idx(layout.heads);
    for (int& i : idx) i = pick(rng);
    return idx;
  }
  return greedy_action(q_forward(net, state), layout);
}

struct Transition {
  Eigen::VectorXd state;
  std::vector<int> action;
  double reward{0.0};
  Eigen::VectorXd next_state;
  bool terminal{false};
};

struct ReplayBatch {
  std::vector<std::size_t> indices;
  std::vector<double> weights;  // importance weights, largest is 1
};

// Ring buffer with a sum tree over priority^exponent. New entries get the
// largest priority seen so far.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, double priority_exponent) : capacity_(capacity), alpha_(priority_exponent) {
    if (capacity_ == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
    if (!(alpha_ >= 0.0)) throw std::invalid_argument("ReplayBuffer: priority exponent must be non-negative");
    leaves_ = 1;
    while (leaves_ < capacity_) leaves_ *= 2;
    tree_.assign(2 * leaves_, 0.0);
    priority_.assign(capacity_, 0.0);
    data_.reserve(capacity_);
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return data_.at(i); }
  double priority(std::size_t i) const { return priority_.at(i); }
  double total() const { return tree_[1]; }
  double probability(std::size_t i) const { return tree_[leaves_ + i] / tree_[1]; }

  std::size_t push(Transition t) {
    if (!std::isfinite(t.reward)) throw std::invalid_argument("ReplayBuffer: reward must be finite");
    std::size_t slot = next_;
    if (data_.size() < capacity_) {
      data_.push_back(std::move(t));
    } else {
      data_[slot] = std::move(t);
    }
    next_ = (next_ + 1) % capacity_;
    set(slot, max_priority_);
    return slot;
  }

  void update_priority(std::size_t i, double p) {
    if (i >= data_.size()) throw std::out_of_range("ReplayBuffer: index out of range");
    if (!(p > 0.0) || !std::isfinite(p)) throw std::invalid_argument("ReplayBuffer: priority must be positive and finite");
    max_priority_ = std::max(max_priority_, p);
    set(i, p);
  }

  // Independent draws with probability proportional to priority^exponent.
  ReplayBatch sample(std::size_t batch, double importance_exponent, std::mt19937_64& rng) const {
    if (batch == 0 || data_.size() < batch) {
      throw std::length_error("ReplayBuffer: need " + std::to_string(batch) + " transitions, have " +
                              std::to_string(data_.size()));
    }
    ReplayBatch out;
    out.indices.resize(batch);
    out.weights.resize(batch);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double n = static_cast<double>(data_.size());
    double largest = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t i = find(u(rng) * tree_[1]);
      out.indices[b] = i;
      out.weights[b] = std::pow(n * probability(i), -importance_exponent);
      largest = std::max(largest, out.weights[b]);
    }
    for (double& w : out.weights) w /= largest;
    return out;
  }

 private:
  void set(std::size_t i, double p) {
    priority_[i] = p;
    std::size_t node = leaves_ + i;
    tree_[node] = std::pow(p, alpha_);
    for (node /= 2; node >= 1; node /= 2) tree_[node] = tree_[2 * node] + tree_[2 * node + 1];
  }

  std::size_t find(double mass) const {
    std::size_t node = 1;
    while (node < leaves_) {
      if (mass < tree_[2 * node] || tree_[2 * node + 1] <= 0.0) {
        node = 2 * node;
      } else {
        mass -= tree_[2 * node];
        node = 2 * node + 1;
      }
    }
    return std::min(node - leaves_, data_.size() - 1);
  }

  std::size_t capacity_;
  double alpha_;
  std::size_t leaves_{1};
  std::vector<double> tree_;
  std::vector<double> priority_;
  std::vector<Transition> data_;
  std::size_t next_{0};
  double max_priority_{1.0};
};

struct TrainConfig {
  double learning_rate{1e-3};
  double discount{0.95};
  double epsilon_start{1.0};
  double epsilon_min{0.01};
  double epsilon_decay{0.995};
  double tau{0.01};
  std::size_t batch{64};
  std::size_t capacity{10000};
  int episodes{1000};
  int steps_per_episode{0};  // 0 runs to the environment horizon
  double priority_exponent{0.6};
  double importance_exponent{0.4};
  bool double_q{true};
  std::vector<int> hidden{128, 64, 32};
  std::uint64_t seed{0};

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be positive");
    if (!(discount >= 0.0 && discount < 1.0)) throw std::invalid_argument("TrainConfig: discount must lie in [0, 1)");
    if (!(epsilon_min >= 0.0 && epsilon_min <= epsilon_start && epsilon_start <= 1.0)) {
      throw std::invalid_argument("TrainConfig: need 0 <= epsilon_min <= epsilon_start <= 1");
    }
    if (!(epsilon_decay > 0.0 && epsilon_decay <= 1.0)) throw std::invalid_argument("TrainConfig: decay must lie in (0, 1]");
    if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("TrainConfig: tau must lie in [0, 1]");
    if (batch == 0 || batch > capacity) throw std::invalid_argument("TrainConfig: need 0 < batch <= capacity");
    if (episodes < 0 || steps_per_episode < 0) throw std::invalid_argument("TrainConfig: counts must be non-negative");
    if (!(priority_exponent >= 0.0) || !(importance_exponent >= 0.0)) {
      throw std::invalid_argument("TrainConfig: replay exponents must be non-negative");
    }
    for (int h : hidden) {
      if (h < 1) throw std::invalid_argument("TrainConfig: hidden sizes must be positive");
    }
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"discount", c.discount},
          {"epsilon_start", c.epsilon_start},
          {"epsilon_min", c.epsilon_min},
          {"epsilon_decay", c.epsilon_decay},
          {"tau", c.tau},
          {"batch", c.batch},
          {"capacity", c.capacity},
          {"episodes", c.episodes},
          {"steps_per_episode", c.steps_per_episode},
          {"priority_exponent", c.priority_exponent},
          {"importance_exponent", c.importance_exponent},
          {"double_q", c.double_q},
          {"hidden", c.hidden},
          {"seed", c.seed}};
}

// Exploration rate after `decays` multiplicative steps.
inline double epsilon_after(const TrainConfig& c, std::int64_t decays) {
  return std::max(c.epsilon_min, c.epsilon_start * std::pow(c.epsilon_decay, static_cast<double>(decays)));
}

struct TdLoss {
  double loss{0.0};
  std::vector<double> td_errors;
  QNetwork gradient;
};

// Importance-weighted mean squared TD error and its gradient with respect to `main`.
// Targets come from `target`, with actions chosen by `main` when double_q is set.
inline TdLoss td_loss(const QNetwork& main, const QNetwork& target, const ReplayBuffer& buffer, const ReplayBatch& batch,
                      const ActionLayout& layout, const TrainConfig& cfg) {
  const auto B = static_cast<Eigen::Index>(batch.indices.size());
  if (B == 0 || batch.weights.size() != batch.indices.size()) throw std::invalid_argument("td_loss: malformed batch");
  if (main.outputs() != layout.outputs() || !same_shape(main, target)) {
    throw std::invalid_argument("td_loss: networks do not match the action layout");
  }
  const int in = main.inputs();
  Eigen::MatrixXd X(in, B), Xn(in, B);
  for (Eigen::Index j = 0; j < B; ++j) {
    const Transition& t = buffer.at(batch.indices[j]);
    if (t.state.size() != in || t.next_state.size() != in || static_cast<int>(t.action.size()) != layout.heads) {
      throw std::invalid_argument("td_loss: transition shape does not match the network");
    }
    X.col(j) = t.state;
    Xn.col(j) = t.next_state;
  }
  const Eigen::MatrixXd next_target = q_forward_batch(target, Xn);
  const Eigen::MatrixXd next_main = cfg.double_q ? q_forward_batch(main, Xn) : next_target;
  ForwardCache cache;
  const Eigen::MatrixXd q = q_forward_batch(main, X, &cache);

  TdLoss out;
  out.td_errors.resize(B);
  Eigen::MatrixXd dout = Eigen::MatrixXd::Zero(q.rows(), B);
  for (Eigen::Index j = 0; j < B; ++j) {
    const Transition& t = buffer.at(batch.indices[j]);
    double y = t.reward;
    if (!t.terminal && cfg.discount > 0.0) {
      const std::vector<int> best = greedy_action(next_main.col(j), layout);
      y += cfg.discount * action_value(next_target.col(j), layout, best);
    }
    const double delta = y - action_value(q.col(j), layout, t.action);
    out.td_errors[j] = delta;
    out.loss += batch.weights[j] * delta * delta / static_cast<double>(B);
    const double g = -2.0 * batch.weights[j] * delta / static_cast<double>(B);
    for (int h = 0; h < layout.heads; ++h) dout(h * layout.per_head + t.action[h], j) += g;
  }
  out.gradient = q_backward(main, cache, dout);
  return out;
}

struct TrainStepResult {
  double loss{0.0};
  std::vector<double> td_errors;
};

// One gradient step on `main`; the caller owns priority updates.
inline TrainStepResult train_step(QNetwork& main, const QNetwork& target, const ReplayBuffer& buffer,
                                  const ReplayBatch& batch, const ActionLayout& layout, const TrainConfig& cfg) {
  TdLoss l = td_loss(main, target, buffer, batch, layout, cfg);
  if (!std::isfinite(l.loss)) {
    throw std::runtime_error("train_step: non-finite loss (" + std::to_string(l.loss) + ") on a batch of " +
                             std::to_string(batch.indices.size()));
  }
  for (std::size_t k = 0; k < main.weights.size(); ++k) {
    main.weights[k] -= cfg.learning_rate * l.gradient.weights[k];
    main.biases[k] -= cfg.learning_rate * l.gradient.biases[k];
  }
  return {l.loss, std::move(l.td_errors)};
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline Eigen::VectorXd state_vector(const MultiUserParams& mp, const MultiUserState& st) {
  const std::vector<double> x = encode_state(mp, st);
  return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

struct TrainResult {
  QNetwork network;
  QNetwork target;
  std::vector<double> episode_rewards;  // undiscounted return per episode
  std::int64_t steps{0};
  std::int64_t updates{0};
  double epsilon{1.0};
};

inline constexpr std::uint64_t kAgentStream = 0xA11CE;

// Network the training loop starts from, drawn first from the agent stream.
inline QNetwork initial_network(const MultiUserParams& mp, const ActionSpace& as, const TrainConfig& cfg) {
  std::mt19937_64 rng(mix_seed(cfg.seed, kAgentStream));
  return QNetwork::glorot(q_layer_sizes(state_dimension(mp), action_layout(as).outputs(), cfg.hidden), rng);
}

// Episode e resets the environment with mix_seed(seed, e); exploration and replay
// draw from the agent stream after initialization.
inline TrainResult train(const MultiUserParams& mp, const ActionSpace& as, const TrainConfig& cfg,
                         const std::function<void(int, double)>& on_episode = {}) {
  cfg.validate();
  const ActionLayout layout = action_layout(as);
  std::mt19937_64 rng(mix_seed(cfg.seed, kAgentStream));
  TrainResult out;
  out.network = QNetwork::glorot(q_layer_sizes(state_dimension(mp), layout.outputs(), cfg.hidden), rng);
  out.target = out.network;
  out.epsilon = cfg.epsilon_start;
  ReplayBuffer buffer(cfg.capacity, cfg.priority_exponent);
  MultiUserEnv env(mp);
  const int steps = cfg.steps_per_episode > 0 ? cfg.steps_per_episode : mp.horizon;
  std::int64_t decays = 0;
  for (int e = 0; e < cfg.episodes; ++e) {
    double total = 0.0;
    try {
      Eigen::VectorXd s = state_vector(mp, env.reset(mix_seed(cfg.seed, static_cast<std::uint64_t>(e))));
      for (int t = 0; t < steps; ++t) {
        const std::vector<int> a = select_action(out.network, layout, s, out.epsilon, rng);
        const StepResult r = env.step(to_env_action(as, a));
        Eigen::VectorXd next = state_vector(mp, r.next);
        total += r.reward;
        buffer.push({s, a, r.reward, next, r.terminal});
        if (buffer.size() > cfg.batch) {
          const ReplayBatch batch = buffer.sample(cfg.batch, cfg.importance_exponent, rng);
          const TrainStepResult step = train_step(out.network, out.target, buffer, batch, layout, cfg);
          for (std::size_t j = 0; j < batch.indices.size(); ++j) {
            buffer.update_priority(batch.indices[j], std::abs(step.td_errors[j]) + 1e-6);
          }
          ++out.updates;
        }
        soft_update(out.target, out.network, cfg.tau);
        out.epsilon = epsilon_after(cfg, ++decays);
        ++out.steps;
        s = std::move(next);
        if (r.terminal) break;
      }
    } catch (const std::exception& ex) {
      throw std::runtime_error("train: episode " + std::to_string(e) + ": " + ex.what());
    }
    out.episode_rewards.push_back(total);
    if (on_episode) on_episode(e, total);
  }
  return out;
}

// Checkpoint layout, all integers and reals little-endian:
//   8 bytes  magic "AQNETCK1"
//   u64      seed
//   u64      n, then n bytes of the training config as JSON
//   u64      layer count k, then k+1 u64 layer sizes
//   u64      parameter count p, then p f64 values in QNetwork::flatten order
namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void put_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(os, v);
}

inline double get_f64(std::istream& is) {
  const std::uint64_t v = get_u64(is);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

inline constexpr char kCheckpointMagic[9] = "AQNETCK1";

}  // namespace detail

struct Checkpoint {
  QNetwork network;
  TrainConfig config;
  std::uint64_t seed{0};
};

inline void write_checkpoint(std::ostream& os, const QNetwork& net, const TrainConfig& cfg) {
  os.write(detail::kCheckpointMagic, 8);
  detail::put_u64(os, cfg.seed);
  const std::string config = to_json(cfg).dump();
  detail::put_u64(os, config.size());
  os.write(config.data(), static_cast<std::streamsize>(config.size()));
  const std::vector<int> sizes = net.sizes();
  detail::put_u64(os, sizes.size() - 1);
  for (int s : sizes) detail::put_u64(os, static_cast<std::uint64_t>(s));
  const Eigen::VectorXd flat = net.flatten();
  detail::put_u64(os, static_cast<std::uint64_t>(flat.size()));
  for (Eigen::Index i = 0; i < flat.size(); ++i) detail::put_f64(os, flat[i]);
  if (!os) throw std::runtime_error("checkpoint: write failed");
}

inline TrainConfig train_config_from_json(const nlohmann::json& j);

inline Checkpoint read_checkpoint(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0) {
    throw std::runtime_error("checkpoint: bad magic");
  }
  Checkpoint ck;
  ck.seed = detail::get_u64(is);
  const std::uint64_t n = detail::get_u64(is);
  if (n > (1u << 20)) throw std::runtime_error("checkpoint: config record too large");
  std::string config(n, '\0');
  if (!is.read(config.data(), static_cast<std::streamsize>(n))) throw std::runtime_error("checkpoint: truncated file");
  ck.config = train_config_from_json(nlohmann::json::parse(config));
  const std::uint64_t layers = detail::get_u64(is);
  if (layers < 1 || layers > 64) throw std::runtime_error("checkpoint: implausible layer count");
  std::vector<int> sizes;
  for (std::uint64_t k = 0; k <= layers; ++k) {
    const std::uint64_t s = detail::get_u64(is);
    if (s < 1 || s > (1u << 24)) throw std::runtime_error("checkpoint: implausible layer size");
    sizes.push_back(static_cast<int>(s));
  }
  ck.network = QNetwork::zeros(sizes);
  const std::uint64_t p = detail::get_u64(is);
  if (p != ck.network.parameter_count()) throw std::runtime_error("checkpoint: parameter count does not match shapes");
  Eigen::VectorXd flat(static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] = detail::get_f64(is);
  ck.network.assign(flat);
  return ck;
}

inline void save_checkpoint(const std::string& path, const QNetwork& net, const TrainConfig& cfg) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path);
  write_checkpoint(os, net, cfg);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  return read_checkpoint(is);
}

// Strict: unknown keys are rejected, missing keys keep their defaults.
inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("train config: expected an object");
  TrainConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const nlohmann::json& v = it.value();
    if (k == "learning_rate") c.learning_rate = v.get<double>();
    else if (k == "discount") c.discount = v.get<double>();
    else if (k == "epsilon_start") c.epsilon_start = v.get<double>();
    else if (k == "epsilon_min") c.epsilon_min = v.get<double>();
    else if (k == "epsilon_decay") c.epsilon_decay = v.get<double>();
    else if (k == "tau") c.tau = v.get<double>();
    else if (k == "batch") c.batch = v.get<std::size_t>();
    else if (k == "capacity") c.capacity = v.get<std::size_t>();
    else if (k == "episodes") c.episodes = v.get<int>();
    else if (k == "steps_per_episode") c.steps_per_episode = v.get<int>();
    else if (k == "priority_exponent") c.priority_exponent = v.get<double>();
    else if (k == "importance_exponent") c.importance_exponent = v.get<double>();
    else if (k == "double_q") c.double_q = v.get<bool>();
    else if (k == "hidden") c.hidden = v.get<std::vector<int>>();
    else if (k == "seed") c.seed = v.get<std::uint64_t>();
    else throw std::invalid_argument("train config: unknown key '" + k + "'");
  }
  c.validate();
  return c;
}

}  // namespace aircomp
