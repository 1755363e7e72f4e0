#pragma once

// Human compliance with recommendations: the Bernoulli execution model, the
// running adherence estimate, and the driver's own baseline policy.

#include <cstdint>
#include <random>

#include "adherelane/mdp_env.hpp"

namespace adherelane {

using Rng = std::mt19937_64;

// Running compliance frequency. theta_hat is kept equal to successes / n
// (theta_init before the first observation).
class AdherenceEstimator {
 public:
  explicit AdherenceEstimator(double theta_init = 0.5);
  AdherenceEstimator(double theta_init, std::uint64_t n, std::uint64_t successes);

  void update(bool complied);

  double theta_hat() const { return theta_hat_; }
  std::uint64_t n() const { return n_; }
  std::uint64_t successes() const { return successes_; }
  double theta_init() const { return theta_init_; }

 private:
  double theta_init_;
  std::uint64_t n_ = 0;
  std::uint64_t successes_ = 0;
  double theta_hat_;
};

// The running-mean recursion (theta * n + 1{complied}) / (n + 1) on a bare
// (theta, n) pair. The estimator computes the same quantity as an exact ratio.
double running_mean_step(double theta, std::uint64_t n, bool complied);

// Functional form of AdherenceEstimator::update.
AdherenceEstimator update_theta(AdherenceEstimator est, bool complied);

class ComplianceModel {
 public:
  ComplianceModel(double theta_true, std::uint64_t seed);

  double theta_true() const { return theta_true_; }
  // One Bernoulli(theta_true) draw.
  bool draw();

 private:
  double theta_true_;
  Rng rng_;
};

struct Execution {
  Action executed = Action::kKeep;
  bool complied = false;
};

// `complied` reports the Bernoulli draw, not whether the two actions agree.
Execution sample_execution(ComplianceModel& model, Action recommended,
                           Action baseline);

struct BaselineConfig {
  double v_baseline_th = 5.0;

  void validate() const;
};

// Keep lane unless slower than the threshold; then move to an available
// adjacent lane, picking uniformly when both sides are available.
Action baseline_action(const Observation& obs, bool available_left,
                       bool available_right, const BaselineConfig& cfg, Rng& rng);

inline Action baseline_action(const Observation& obs, const BaselineConfig& cfg,
                              Rng& rng) {
  return baseline_action(obs, obs.change_available_left,
                         obs.change_available_right, cfg, rng);
}

}  // namespace adherelane
