#include "adherelane/dqn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace adherelane::dqn {

MlpParams MlpParams::zeros(int hidden, int inputs, int outputs) {
  if (hidden <= 0 || inputs <= 0 || outputs <= 0) {
    throw std::invalid_argument("MlpParams: dimensions must be positive");
  }
  return {Eigen::MatrixXd::Zero(hidden, inputs), Eigen::VectorXd::Zero(hidden),
          Eigen::MatrixXd::Zero(outputs, hidden), Eigen::VectorXd::Zero(outputs)};
}

MlpParams MlpParams::uniform_init(int hidden, Rng& rng, int inputs, int outputs) {
  MlpParams p = zeros(hidden, inputs, outputs);
  const double r1 = 1.0 / std::sqrt(static_cast<double>(inputs));
  const double r2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::uniform_real_distribution<double> u1(-r1, r1);
  std::uniform_real_distribution<double> u2(-r2, r2);
  for (Eigen::Index i = 0; i < p.w1.size(); ++i) p.w1.data()[i] = u1(rng);
  for (Eigen::Index i = 0; i < p.b1.size(); ++i) p.b1[i] = u1(rng);
  for (Eigen::Index i = 0; i < p.w2.size(); ++i) p.w2.data()[i] = u2(rng);
  for (Eigen::Index i = 0; i < p.b2.size(); ++i) p.b2[i] = u2(rng);
  return p;
}

std::size_t MlpParams::size() const {
  return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size());
}

bool MlpParams::same_shape(const MlpParams& o) const {
  return w1.rows() == o.w1.rows() && w1.cols() == o.w1.cols() &&
         b1.size() == o.b1.size() && w2.rows() == o.w2.rows() &&
         w2.cols() == o.w2.cols() && b2.size() == o.b2.size();
}

bool MlpParams::all_finite() const {
  return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
}

double& MlpParams::flat(std::size_t i) {
  auto n = static_cast<std::size_t>(w1.size());
  if (i < n) return w1.data()[i];
  i -= n;
  n = static_cast<std::size_t>(b1.size());
  if (i < n) return b1.data()[i];
  i -= n;
  n = static_cast<std::size_t>(w2.size());
  if (i < n) return w2.data()[i];
  i -= n;
  if (i < static_cast<std::size_t>(b2.size())) return b2.data()[i];
  throw std::out_of_range("MlpParams::flat index out of range");
}

double MlpParams::flat(std::size_t i) const {
  return const_cast<MlpParams&>(*this).flat(i);
}

namespace {

Eigen::Map<const Eigen::VectorXd> as_vector(const Features& x) {
  return Eigen::Map<const Eigen::VectorXd>(x.data(),
                                           static_cast<Eigen::Index>(x.size()));
}

struct Activations {
  Eigen::VectorXd pre;
  Eigen::VectorXd hidden;
  QValues q{};
};

Activations forward_cached(const MlpParams& p, const Features& x) {
  Activations a;
  a.pre = p.w1 * as_vector(x) + p.b1;
  a.hidden = a.pre.cwiseMax(0.0);
  const Eigen::VectorXd out = p.w2 * a.hidden + p.b2;
  for (int i = 0; i < kNumActions; ++i) a.q[i] = out[i];
  return a;
}

}  // namespace

QValues forward(const MlpParams& params, const Features& x) {
  for (double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument("forward: non-finite input");
  }
  if (params.inputs() != static_cast<int>(kObservationSize) ||
      params.outputs() != kNumActions) {
    throw std::invalid_argument("forward: parameter shape does not match the observation");
  }
  return forward_cached(params, x).q;
}

int greedy_action(const QValues& q) {
  int best = 0;
  for (int i = 1; i < kNumActions; ++i) {
    if (q[i] > q[best]) best = i;
  }
  return best;
}

double target_value(const Transition& t, const MlpParams& params,
                    double theta_hat, double gamma) {
  if (t.done) return t.reward;
  const QValues qn = forward(params, t.next_obs);
  const double q_max = *std::max_element(qn.begin(), qn.end());
  const double comply = t.reward + gamma * q_max;
  const double defy = t.reward + gamma * qn[index(t.baseline_next)];
  return theta_hat * comply + (1.0 - theta_hat) * defy;
}

LossAndGradients loss_and_gradients(const MlpParams& params,
                                    std::span<const Transition> batch,
                                    double theta_hat, double gamma,
                                    const MlpParams* target_params) {
  if (batch.empty()) throw std::invalid_argument("loss_and_gradients: empty batch");
  const MlpParams& tp = target_params != nullptr ? *target_params : params;
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  LossAndGradients out{0.0, MlpParams::zeros(params.hidden(), params.inputs(),
                                             params.outputs())};
  for (const Transition& t : batch) {
    const double y = target_value(t, tp, theta_hat, gamma);
    const Activations a = forward_cached(params, t.obs);
    const int u = index(t.executed);
    const double err = a.q[u] - y;
    out.loss += err * err * inv_n;

    // d(loss)/d(q_u); the other heads receive no gradient from this item.
    const double g = 2.0 * err * inv_n;
    out.grads.b2[u] += g;
    out.grads.w2.row(u) += g * a.hidden.transpose();
    const Eigen::VectorXd d_pre =
        (g * params.w2.row(u).transpose()).cwiseProduct(
            (a.pre.array() > 0.0).cast<double>().matrix());
    out.grads.b1 += d_pre;
    out.grads.w1 += d_pre * as_vector(t.obs).transpose();
  }
  return out;
}

double batch_loss(const MlpParams& params, std::span<const Transition> batch,
                  std::span<const double> targets) {
  if (batch.empty() || batch.size() != targets.size()) {
    throw std::invalid_argument("batch_loss: batch/target size mismatch");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const QValues q = forward_cached(params, batch[i].obs).q;
    const double err = q[index(batch[i].executed)] - targets[i];
    loss += err * err;
  }
  return loss / static_cast<double>(batch.size());
}

MlpParams sgd_step(const MlpParams& params, const MlpParams& grads, double lr) {
  if (!params.same_shape(grads)) throw std::invalid_argument("sgd_step: shape mismatch");
  MlpParams out = params;
  out.w1 -= lr * grads.w1;
  out.b1 -= lr * grads.b1;
  out.w2 -= lr * grads.w2;
  out.b2 -= lr * grads.b2;
  return out;
}

std::string_view to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::kSgd:
      return "sgd";
    case OptimizerKind::kMomentum:
      return "momentum";
    case OptimizerKind::kAdam:
      return "adam";
  }
  return "?";
}

OptimizerKind optimizer_from_string(std::string_view s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "momentum") return OptimizerKind::kMomentum;
  if (s == "adam") return OptimizerKind::kAdam;
  throw std::invalid_argument("unknown optimizer '" + std::string(s) + "'");
}

Optimizer::Optimizer(OptimizerConfig cfg, const MlpParams& shape)
    : cfg_(cfg),
      m_(MlpParams::zeros(shape.hidden(), shape.inputs(), shape.outputs())),
      v_(m_) {
  if (!(cfg_.learning_rate >= 0.0)) {
    throw std::invalid_argument("optimizer: learning_rate must be >= 0");
  }
}

void Optimizer::step(MlpParams& params, const MlpParams& grads) {
  if (!params.same_shape(grads) || !params.same_shape(m_)) {
    throw std::invalid_argument("optimizer: shape mismatch");
  }
  const double lr = cfg_.learning_rate;
  switch (cfg_.kind) {
    case OptimizerKind::kSgd:
      params = sgd_step(params, grads, lr);
      return;
    case OptimizerKind::kMomentum:
      for (std::size_t i = 0; i < params.size(); ++i) {
        double& m = m_.flat(i);
        m = cfg_.momentum * m + grads.flat(i);
        params.flat(i) -= lr * m;
      }
      return;
    case OptimizerKind::kAdam: {
      ++t_;
      const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
      const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
      for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads.flat(i);
        double& m = m_.flat(i);
        double& v = v_.flat(i);
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
        params.flat(i) -= lr * (m / c1) / (std::sqrt(v / c2) + cfg_.epsilon);
      }
      return;
    }
  }
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be > 0");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(const Transition& t) {
  if (items_.size() < capacity_) {
    items_.push_back(t);
  } else {
    items_[next_] = t;
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch,
                                                      Rng& rng) const {
  const std::size_t n = items_.size();
  if (batch > n) throw std::invalid_argument("ReplayBuffer: not enough transitions");
  // Floyd's algorithm: a uniform size-`batch` subset in O(batch).
  std::vector<std::size_t> out;
  out.reserve(batch);
  std::unordered_set<std::size_t> chosen;
  for (std::size_t j = n - batch; j < n; ++j) {
    std::uniform_int_distribution<std::size_t> pick(0, j);
    const std::size_t t = pick(rng);
    const std::size_t v = chosen.count(t) != 0 ? j : t;
    chosen.insert(v);
    out.push_back(v);
  }
  return out;
}

void ReplayBuffer::sample(std::size_t batch, Rng& rng,
                          std::vector<Transition>& out) const {
  out.clear();
  for (std::size_t i : sample_indices(batch, rng)) out.push_back(items_[i]);
}

EpsilonSchedule::EpsilonSchedule(double eps_max, double eps_min, double decay,
                                 std::uint64_t k)
    : eps_max_(eps_max), eps_min_(eps_min), decay_(decay), k_(k) {
  if (!(eps_min >= 0.0 && eps_min <= eps_max && eps_max <= 1.0)) {
    throw std::invalid_argument("epsilon: need 0 <= eps_min <= eps_max <= 1");
  }
  if (!(decay > 0.0 && decay < 1.0)) {
    throw std::invalid_argument("epsilon: decay must be in (0, 1)");
  }
  value_ = std::max(eps_min_, eps_max_ * std::pow(decay_, static_cast<double>(k_)));
}

void EpsilonSchedule::decay() {
  ++k_;
  value_ = std::max(eps_min_, eps_max_ * std::pow(decay_, static_cast<double>(k_)));
}

Action select_recommendation(const MlpParams& params, const Features& x,
                             double epsilon, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) < epsilon) {
    std::uniform_int_distribution<int> pick(0, kNumActions - 1);
    return action_from_index(pick(rng));
  }
  return action_from_index(greedy_action(forward(params, x)));
}

std::string_view to_string(TargetKind k) {
  return k == TargetKind::kAdherence ? "adherence" : "regular";
}

TargetKind target_from_string(std::string_view s) {
  if (s == "adherence") return TargetKind::kAdherence;
  if (s == "regular") return TargetKind::kRegular;
  throw std::invalid_argument("unknown target kind '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (!(optimizer.learning_rate > 0.0)) {
    throw std::invalid_argument("train: learning_rate must be > 0");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("train: gamma must be in (0, 1)");
  if (!(eps_min >= 0.0 && eps_min <= eps_max && eps_max <= 1.0)) {
    throw std::invalid_argument("train: need 0 <= eps_min <= eps_max <= 1");
  }
  if (!(eps_decay > 0.0 && eps_decay < 1.0)) {
    throw std::invalid_argument("train: eps_decay must be in (0, 1)");
  }
  if (hidden <= 0) throw std::invalid_argument("train: hidden must be > 0");
  if (batch <= 0) throw std::invalid_argument("train: batch must be > 0");
  if (episodes < 0) throw std::invalid_argument("train: episodes must be >= 0");
  if (buffer_capacity < static_cast<std::size_t>(batch)) {
    throw std::invalid_argument("train: buffer_capacity must hold at least one batch");
  }
  if (!(theta_true >= 0.0 && theta_true <= 1.0)) {
    throw std::invalid_argument("train: theta_true must be in [0, 1]");
  }
  if (!(theta_init >= 0.0 && theta_init <= 1.0)) {
    throw std::invalid_argument("train: theta_init must be in [0, 1]");
  }
  if (updates_per_episode < 0 || target_sync_episodes < 0) {
    throw std::invalid_argument("train: update counts must be >= 0");
  }
}

std::uint64_t episode_seed(std::uint64_t base, std::uint64_t episode,
                           std::uint64_t stream) {
  // splitmix64 finalizer over a combined key.
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (episode + 1) +
                    0xBF58476D1CE4E5B9ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

enum Stream : std::uint64_t {
  kTraffic = 0,
  kCompliance = 1,
  kBaseline = 2,
  kExplore = 3,
  kReplay = 4,
  kInit = 5,
};

}  // namespace

TrainResult train(const EnvConfig& env_cfg, const BaselineConfig& baseline,
                  const TrainConfig& cfg, const TrainState* resume,
                  const EpisodeCallback& on_episode) {
  cfg.validate();
  baseline.validate();

  TrainResult result;
  if (resume != nullptr) {
    if (resume->params.hidden() != cfg.hidden) {
      throw std::invalid_argument("train: checkpoint hidden width differs from config");
    }
    result.state = *resume;
  } else {
    Rng init(episode_seed(cfg.seed, 0, kInit));
    result.state = {MlpParams::uniform_init(cfg.hidden, init),
                    AdherenceEstimator(cfg.theta_init), 0, cfg.target};
  }
  result.state.target = cfg.target;
  MlpParams& params = result.state.params;
  AdherenceEstimator& estimator = result.state.estimator;

  LaneChangeEnv env(env_cfg);
  ReplayBuffer buffer(cfg.buffer_capacity);
  Optimizer optimizer(cfg.optimizer, params);
  EpsilonSchedule eps(cfg.eps_max, cfg.eps_min, cfg.eps_decay,
                      static_cast<std::uint64_t>(result.state.episodes_done));
  MlpParams frozen = params;
  std::vector<Transition> batch;

  for (int e = 0; e < cfg.episodes; ++e) {
    const auto k = static_cast<std::uint64_t>(result.state.episodes_done);
    ComplianceModel compliance(cfg.theta_true, episode_seed(cfg.seed, k, kCompliance));
    Rng baseline_rng(episode_seed(cfg.seed, k, kBaseline));
    Rng explore_rng(episode_seed(cfg.seed, k, kExplore));
    Rng replay_rng(episode_seed(cfg.seed, k, kReplay));

    Observation obs = env.reset(episode_seed(cfg.seed, k, kTraffic));
    Action b = baseline_action(obs, baseline, baseline_rng);
    CurvePoint point;
    point.episode = static_cast<int>(k);
    point.epsilon = eps.value();
    while (!env.done()) {
      const Action rec = select_recommendation(params, obs.features, eps.value(), explore_rng);
      const Execution exe = sample_execution(compliance, rec, b);
      estimator.update(exe.complied);
      const StepResult res = env.step(exe.executed);
      const Action b_next =
          res.done ? Action::kKeep : baseline_action(res.next_observation, baseline, baseline_rng);

      Transition t;
      t.obs = obs.features;
      t.executed = exe.executed;
      t.recommended = rec;
      t.baseline_next = b_next;
      t.complied = exe.complied;
      t.reward = res.total_reward();
      t.next_obs = res.next_observation.features;
      t.done = res.done && res.done_reason != DoneReason::kMaxSteps;
      buffer.push(t);

      point.reward += t.reward;
      ++point.steps;
      obs = res.next_observation;
      b = b_next;
    }

    point.loss = std::numeric_limits<double>::quiet_NaN();
    if (buffer.size() >= static_cast<std::size_t>(cfg.batch)) {
      const int updates =
          cfg.updates_per_episode > 0 ? cfg.updates_per_episode : point.steps;
      const double theta =
          cfg.target == TargetKind::kRegular ? 1.0 : estimator.theta_hat();
      double loss_sum = 0.0;
      for (int i = 0; i < updates; ++i) {
        buffer.sample(static_cast<std::size_t>(cfg.batch), replay_rng, batch);
        const LossAndGradients lg = loss_and_gradients(
            params, batch, theta, cfg.gamma,
            cfg.target_sync_episodes > 0 ? &frozen : nullptr);
        optimizer.step(params, lg.grads);
        loss_sum += lg.loss;
      }
      point.loss = loss_sum / updates;
    }
    point.theta_hat = estimator.theta_hat();

    ++result.state.episodes_done;
    eps.decay();
    if (cfg.target_sync_episodes > 0 &&
        result.state.episodes_done % cfg.target_sync_episodes == 0) {
      frozen = params;
    }
    result.curves.push_back(point);
    if (on_episode) on_episode(point);
  }
  return result;
}

}  // namespace adherelane::dqn
