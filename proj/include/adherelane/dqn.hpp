#pragma once

// Adherence-aware deep Q network: a one-hidden-layer ReLU MLP with
// hand-written backpropagation, uniform experience replay, and the
// adherence-mixed bootstrap target.

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "adherelane/adherence.hpp"
#include "adherelane/mdp_env.hpp"

namespace adherelane::dqn {

using QValues = std::array<double, kNumActions>;

struct MlpParams {
  Eigen::MatrixXd w1;  // hidden x inputs
  Eigen::VectorXd b1;  // hidden
  Eigen::MatrixXd w2;  // actions x hidden
  Eigen::VectorXd b2;  // actions

  static MlpParams zeros(int hidden, int inputs = kObservationSize,
                         int outputs = kNumActions);
  // Each layer uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static MlpParams uniform_init(int hidden, Rng& rng,
                                int inputs = kObservationSize,
                                int outputs = kNumActions);

  int hidden() const { return static_cast<int>(b1.size()); }
  int inputs() const { return static_cast<int>(w1.cols()); }
  int outputs() const { return static_cast<int>(b2.size()); }
  std::size_t size() const;
  bool same_shape(const MlpParams& o) const;
  bool all_finite() const;

  // Flat view in the order w1 (column-major), b1, w2 (column-major), b2.
  double& flat(std::size_t i);
  double flat(std::size_t i) const;
};

// q = W2 * relu(W1 * x + b1) + b2. Throws std::invalid_argument for
// non-finite input.
QValues forward(const MlpParams& params, const Features& x);

// Lowest index among the maxima.
int greedy_action(const QValues& q);

struct Transition {
  Features obs{};
  Action executed = Action::kKeep;
  Action recommended = Action::kKeep;
  // Baseline action drawn at next_obs when the transition was stored.
  Action baseline_next = Action::kKeep;
  bool complied = false;
  double reward = 0.0;
  Features next_obs{};
  // Terminal (arrival or collision). Time-limit truncation keeps
  // bootstrapping.
  bool done = false;
};

// theta * [r + gamma * max_u' Q(x', u')] + (1 - theta) * [r + gamma * Q(x', u'_b)],
// or r at a terminal transition.
double target_value(const Transition& t, const MlpParams& params,
                    double theta_hat, double gamma);

struct LossAndGradients {
  double loss = 0.0;
  MlpParams grads;
};

// Mean squared error between the executed-action Q value and the (constant)
// target over the batch, plus its gradient. Targets are evaluated with
// `target_params` when given, else with `params`. Throws
// std::invalid_argument on an empty batch.
LossAndGradients loss_and_gradients(const MlpParams& params,
                                    std::span<const Transition> batch,
                                    double theta_hat, double gamma,
                                    const MlpParams* target_params = nullptr);

// Loss against precomputed targets (no gradient); used by gradient checks.
double batch_loss(const MlpParams& params, std::span<const Transition> batch,
                  std::span<const double> targets);

// params - lr * grads. Throws std::invalid_argument on shape mismatch.
MlpParams sgd_step(const MlpParams& params, const MlpParams& grads, double lr);

enum class OptimizerKind : std::uint8_t { kSgd, kMomentum, kAdam };
std::string_view to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(std::string_view s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgd;
  double learning_rate = 1e-6;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Optimizer {
 public:
  Optimizer(OptimizerConfig cfg, const MlpParams& shape);
  void step(MlpParams& params, const MlpParams& grads);
  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  MlpParams m_;
  MlpParams v_;
  std::uint64_t t_ = 0;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(const Transition& t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& operator[](std::size_t i) const { return items_[i]; }

  // `batch` distinct indices drawn uniformly. Throws std::invalid_argument if
  // the buffer holds fewer than `batch` items.
  std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const;
  void sample(std::size_t batch, Rng& rng, std::vector<Transition>& out) const;

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> items_;
};

// epsilon_k = max(eps_min, eps_max * decay^k) after k decays.
class EpsilonSchedule {
 public:
  EpsilonSchedule(double eps_max, double eps_min, double decay,
                  std::uint64_t k = 0);
  double value() const { return value_; }
  std::uint64_t decays() const { return k_; }
  void decay();

 private:
  double eps_max_;
  double eps_min_;
  double decay_;
  std::uint64_t k_;
  double value_;
};

Action select_recommendation(const MlpParams& params, const Features& x,
                             double epsilon, Rng& rng);

// Which bootstrap the learner uses. kRegular is the same learner with the
// target's mixing weight pinned to 1.
enum class TargetKind : std::uint8_t { kAdherence, kRegular };
std::string_view to_string(TargetKind k);
TargetKind target_from_string(std::string_view s);

struct TrainConfig {
  OptimizerConfig optimizer;
  double gamma = 0.95;
  double eps_min = 0.001;
  double eps_max = 1.0;
  double eps_decay = 0.995;
  int hidden = 128;
  int batch = 32;
  int episodes = 3000;
  std::size_t buffer_capacity = 50'000;
  double theta_true = 0.5;
  double theta_init = 0.5;
  // 0 = one gradient step per decision step of the finished episode.
  int updates_per_episode = 0;
  // Refresh period (episodes) of a frozen target network; 0 disables it.
  int target_sync_episodes = 0;
  TargetKind target = TargetKind::kAdherence;
  std::uint64_t seed = 1;

  void validate() const;
};

struct CurvePoint {
  int episode = 0;
  // NaN when the episode ended before the buffer could fill a batch.
  double loss = 0.0;
  double reward = 0.0;
  double theta_hat = 0.0;
  double epsilon = 0.0;
  int steps = 0;
};

// Everything needed to continue training.
struct TrainState {
  MlpParams params;
  AdherenceEstimator estimator;
  int episodes_done = 0;
  TargetKind target = TargetKind::kAdherence;
};

struct TrainResult {
  TrainState state;
  std::vector<CurvePoint> curves;
};

// Independent per-episode stream seeds.
std::uint64_t episode_seed(std::uint64_t base, std::uint64_t episode,
                           std::uint64_t stream);

using EpisodeCallback = std::function<void(const CurvePoint&)>;

// Runs cfg.episodes episodes online. Per decision step: epsilon-greedy
// recommendation, Bernoulli execution, environment step, replay store,
// estimator update. After each episode: mini-batch updates, epsilon decay.
// Continues from `resume` when given (replay buffer and optimizer moments
// start empty).
TrainResult train(const EnvConfig& env_cfg, const BaselineConfig& baseline,
                  const TrainConfig& cfg, const TrainState* resume = nullptr,
                  const EpisodeCallback& on_episode = {});

}  // namespace adherelane::dqn
