#include "adherelane/adherence.hpp"

#include <stdexcept>

namespace adherelane {

AdherenceEstimator::AdherenceEstimator(double theta_init)
    : theta_init_(theta_init), theta_hat_(theta_init) {
  if (!(theta_init >= 0.0 && theta_init <= 1.0)) {
    throw std::invalid_argument("theta_init must be in [0, 1]");
  }
}

AdherenceEstimator::AdherenceEstimator(double theta_init, std::uint64_t n,
                                       std::uint64_t successes)
    : AdherenceEstimator(theta_init) {
  if (successes > n) throw std::invalid_argument("successes must be <= n");
  n_ = n;
  successes_ = successes;
  if (n_ > 0) {
    theta_hat_ = static_cast<double>(successes_) / static_cast<double>(n_);
  }
}

void AdherenceEstimator::update(bool complied) {
  // (theta * n + 1{complied}) / (n + 1), carried as the exact ratio so no
  // rounding accumulates across updates.
  ++n_;
  if (complied) ++successes_;
  theta_hat_ = static_cast<double>(successes_) / static_cast<double>(n_);
}

double running_mean_step(double theta, std::uint64_t n, bool complied) {
  const double count = static_cast<double>(n);
  return (theta * count + (complied ? 1.0 : 0.0)) / (count + 1.0);
}

AdherenceEstimator update_theta(AdherenceEstimator est, bool complied) {
  est.update(complied);
  return est;
}

ComplianceModel::ComplianceModel(double theta_true, std::uint64_t seed)
    : theta_true_(theta_true), rng_(seed) {
  if (!(theta_true >= 0.0 && theta_true <= 1.0)) {
    throw std::invalid_argument("theta_true must be in [0, 1]");
  }
}

bool ComplianceModel::draw() {
  std::bernoulli_distribution d(theta_true_);
  return d(rng_);
}

Execution sample_execution(ComplianceModel& model, Action recommended,
                           Action baseline) {
  const bool complied = model.draw();
  return {complied ? recommended : baseline, complied};
}

void BaselineConfig::validate() const {
  if (!(v_baseline_th > 0.0)) {
    throw std::invalid_argument("baseline: v_baseline_th must be > 0");
  }
}

Action baseline_action(const Observation& obs, bool available_left,
                       bool available_right, const BaselineConfig& cfg, Rng& rng) {
  if (obs.ego.v >= cfg.v_baseline_th) return Action::kKeep;
  if (available_left && available_right) {
    std::bernoulli_distribution coin(0.5);
    return coin(rng) ? Action::kLeft : Action::kRight;
  }
  if (available_left) return Action::kLeft;
  if (available_right) return Action::kRight;
  return Action::kKeep;
}

}  // namespace adherelane
