#pragma once

// Adherence-aware Q-learning on small finite MDPs, with value-iteration
// fixed points to check it against.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "adherelane/adherence.hpp"

namespace adherelane::qcore {

struct FiniteMDP {
  int num_states = 0;
  int num_actions = 0;
  // P[(x * A + u) * S + x'].
  std::vector<double> transitions;
  // R[x * A + u].
  std::vector<double> rewards;
  // Deterministic baseline action per state.
  std::vector<int> baseline;
  double gamma = 0.9;

  double p(int x, int u, int xn) const {
    return transitions[(static_cast<std::size_t>(x) * num_actions + u) * num_states + xn];
  }
  double r(int x, int u) const {
    return rewards[static_cast<std::size_t>(x) * num_actions + u];
  }

  // Throws std::invalid_argument on shape errors, rows not summing to 1
  // within 1e-12, or gamma outside (0, 1).
  void validate() const;
};

class QTable {
 public:
  QTable() = default;
  QTable(int num_states, int num_actions, double fill = 0.0);

  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }
  double& operator()(int x, int u) { return values_[index(x, u)]; }
  double operator()(int x, int u) const { return values_[index(x, u)]; }
  const std::vector<double>& values() const { return values_; }

  double max(int x) const;
  // Ties go to the lowest action index.
  int argmax(int x) const;

 private:
  std::size_t index(int x, int u) const {
    return static_cast<std::size_t>(x) * num_actions_ + u;
  }
  int num_states_ = 0;
  int num_actions_ = 0;
  std::vector<double> values_;
};

double sup_norm_distance(const QTable& a, const QTable& b);

struct Sample {
  int x = 0;
  int u = 0;
  double r = 0.0;
  int x_next = 0;
};

// theta * [r + gamma * max Q(x', .)] + (1 - theta) * [r + gamma * Q(x', g_b(x'))]
double adherence_target(const QTable& q, const Sample& s, double theta_hat,
                        const FiniteMDP& mdp);

// Moves Q(x, u) a step `alpha` toward the adherence-aware target; no other
// entry changes. Throws std::out_of_range for invalid indices.
void adherence_q_update(QTable& q, const Sample& s, double theta_hat,
                        double alpha, const FiniteMDP& mdp);

// One application of the adherence-aware Bellman operator.
QTable adherence_bellman(const FiniteMDP& mdp, const QTable& q, double theta);

struct IterationResult {
  QTable q;
  int sweeps = 0;
};

IterationResult adherence_value_iteration(const FiniteMDP& mdp, double theta,
                                          double tol = 1e-10,
                                          int max_sweeps = 1'000'000);

// Plain Bellman-optimality iteration, kept separate from the adherence
// operator so the theta = 1 reduction can be checked against it.
IterationResult value_iteration(const FiniteMDP& mdp, double tol = 1e-10,
                                int max_sweeps = 1'000'000);

struct TabularTrainConfig {
  int episodes = 4000;
  int episode_length = 50;
  double alpha0 = 0.5;
  double alpha_tau = 1e4;
  double epsilon = 0.5;
  double theta_init = 0.5;
  std::uint64_t seed = 1;
};

struct TabularResult {
  QTable q;
  AdherenceEstimator estimator;
  std::uint64_t steps = 0;
};

// Episodes start in a uniformly drawn state. Each step: epsilon-greedy
// recommendation, Bernoulli(theta_true) execution against the baseline,
// estimator update, then the adherence-aware Q update with the current
// estimate and alpha_t = alpha0 / (1 + t / tau).
TabularResult train_tabular(const FiniteMDP& mdp, double theta_true,
                            const TabularTrainConfig& cfg);

// Plain-text matrix format:
//   states S / actions A / gamma g / baseline b_0 .. b_{S-1}
//   rewards      followed by S rows of A values
//   transitions  followed by S*A rows of S values, row (x, u) at x*A + u
// Lines starting with '#' are comments.
FiniteMDP read_finite_mdp(std::istream& in);
FiniteMDP load_finite_mdp(const std::filesystem::path& path);
void write_finite_mdp(std::ostream& out, const FiniteMDP& mdp);

}  // namespace adherelane::qcore
