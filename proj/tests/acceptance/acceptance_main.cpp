// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.
//
//   acceptance [output_dir]
//
// The end-to-end criteria train both learners from scratch with
// configs/default.ini and write everything under output_dir.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "adherelane/adherence.hpp"
#include "adherelane/dqn.hpp"
#include "adherelane/harness.hpp"
#include "adherelane/mdp_env.hpp"
#include "adherelane/qcore.hpp"
#include "adherelane/run_config.hpp"
#include "adherelane/stats.hpp"
#include "adherelane/traffic_sim.hpp"

namespace {

namespace fs = std::filesystem;
using namespace adherelane;
using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

Verdict estimator_convergence() {
  const auto t0 = Clock::now();
  int within = 0;
  bool exact = true;
  for (int run = 0; run < 100; ++run) {
    ComplianceModel model(0.5, 1000 + run);
    AdherenceEstimator est;
    for (int i = 0; i < 10000; ++i) {
      est.update(model.draw());
      exact = exact && est.theta_hat() == static_cast<double>(est.successes()) /
                                              static_cast<double>(est.n());
    }
    if (std::abs(est.theta_hat() - 0.5) <= 0.02) ++within;
  }
  const double secs = seconds_since(t0);
  return {within >= 99 && exact && secs < 1.0,
          fmt("%.0f/100 runs within 0.02, exact=%.0f, %.3f s", within, exact, secs)};
}

Verdict tabular_oracle() {
  const auto t0 = Clock::now();
  const qcore::FiniteMDP m = qcore::load_finite_mdp(ADHERELANE_FIXTURE_DIR "/mdp_5x3.txt");
  qcore::TabularTrainConfig cfg;
  const qcore::TabularResult res = qcore::train_tabular(m, 0.5, cfg);
  const double gap =
      qcore::sup_norm_distance(res.q, qcore::adherence_value_iteration(m, 0.5).q);
  const double full = qcore::sup_norm_distance(qcore::adherence_value_iteration(m, 1.0).q,
                                               qcore::value_iteration(m).q);
  const double secs = seconds_since(t0);
  return {res.steps == 200000 && gap <= 5e-2 && full <= 1e-8 && secs < 30.0,
          fmt("%.0f steps, sup gap %.4f (<= 0.05), theta=1 gap %.2e (<= 1e-8), %.2f s",
              static_cast<double>(res.steps), gap, full, secs)};
}

dqn::Transition random_transition(Rng& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  dqn::Transition t;
  for (double& v : t.obs) v = d(rng);
  for (double& v : t.next_obs) v = d(rng);
  t.executed = action_from_index(static_cast<int>(rng() % kNumActions));
  t.baseline_next = action_from_index(static_cast<int>(rng() % kNumActions));
  t.reward = -20.0 * std::abs(d(rng));
  return t;
}

Verdict target_reductions() {
  Rng rng(31);
  const dqn::MlpParams p = dqn::MlpParams::uniform_init(128, rng);
  const double gamma = 0.95;
  int standard_ok = 0;
  int baseline_ok = 0;
  double affine_err = 0.0;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const dqn::Transition t = random_transition(rng);
    const dqn::QValues q = dqn::forward(p, t.next_obs);
    const double standard = t.reward + gamma * *std::max_element(q.begin(), q.end());
    const double baseline = t.reward + gamma * q[index(t.baseline_next)];
    standard_ok += dqn::target_value(t, p, 1.0, gamma) == standard;
    baseline_ok += dqn::target_value(t, p, 0.0, gamma) == baseline;
    const double th = u01(rng);
    affine_err = std::max(affine_err, std::abs(dqn::target_value(t, p, th, gamma) -
                                               (th * standard + (1.0 - th) * baseline)));
  }
  return {standard_ok == 1000 && baseline_ok == 1000 && affine_err <= 1e-12,
          fmt("theta=1 exact %.0f/1000, theta=0 exact %.0f/1000, affine err %.1e", standard_ok,
              baseline_ok, affine_err)};
}

// True when nudging parameter `i` by +-h moves some hidden pre-activation
// across zero; central differences are not defined across a ReLU kink.
bool crosses_kink(const dqn::MlpParams& p, std::size_t i, double h,
                  const std::vector<dqn::Transition>& batch) {
  const auto hidden = static_cast<std::size_t>(p.hidden());
  const std::size_t w1_size = hidden * static_cast<std::size_t>(p.inputs());
  if (i >= w1_size + hidden) return false;
  const std::size_t j = i < w1_size ? i % hidden : i - w1_size;
  for (const auto& t : batch) {
    const Eigen::Map<const Eigen::VectorXd> x(t.obs.data(), p.inputs());
    const double pre = p.w1.row(static_cast<Eigen::Index>(j)).dot(x) + p.b1(j);
    const double step = i < w1_size ? h * std::abs(x(static_cast<Eigen::Index>(i / hidden))) : h;
    if (std::abs(pre) <= step) return true;
  }
  return false;
}

// Relative error of the gradient vector per batch, ||a - f|| / max(||a||, ||f||).
// Coordinates whose perturbation crosses a ReLU kink are left out; the worst
// single-coordinate ratio is reported alongside since it is roundoff-bound
// for near-zero components.
Verdict gradient_check() {
  Rng rng(41);
  const double h = 1e-5;
  double worst_batch = 0.0;
  double worst_coord = 0.0;
  int skipped = 0;
  for (int b = 0; b < 20; ++b) {
    const dqn::MlpParams p = dqn::MlpParams::uniform_init(128, rng);
    std::vector<dqn::Transition> batch;
    for (int i = 0; i < 32; ++i) {
      batch.push_back(random_transition(rng));
      batch.back().done = i % 5 == 0;
    }
    const double theta = 0.5;
    const auto lg = dqn::loss_and_gradients(p, batch, theta, 0.95);
    std::vector<double> targets;
    for (const auto& t : batch) targets.push_back(dqn::target_value(t, p, theta, 0.95));
    double diff2 = 0.0;
    double an2 = 0.0;
    double fd2 = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (crosses_kink(p, i, h, batch)) {
        ++skipped;
        continue;
      }
      dqn::MlpParams up = p;
      dqn::MlpParams down = p;
      up.flat(i) += h;
      down.flat(i) -= h;
      const double fd =
          (dqn::batch_loss(up, batch, targets) - dqn::batch_loss(down, batch, targets)) / (2 * h);
      const double an = lg.grads.flat(i);
      diff2 += (an - fd) * (an - fd);
      an2 += an * an;
      fd2 += fd * fd;
      const double scale = std::max(std::abs(an), std::abs(fd));
      if (scale > 0.0) worst_coord = std::max(worst_coord, std::abs(an - fd) / scale);
    }
    worst_batch = std::max(worst_batch, std::sqrt(diff2 / std::max(an2, fd2)));
  }
  return {worst_batch <= 1e-4,
          fmt("max gradient relative error %.2e over 20 batches of 32 (worst coordinate %.1e, "
              "%.0f coordinates skipped at ReLU kinks)",
              worst_batch, worst_coord, skipped)};
}

std::optional<sim::VehicleId> brute_nearest(const sim::SimWorld& w, const sim::VehicleState& ego,
                                            int lane, bool ahead) {
  if (!w.road().lane_exists(lane)) return std::nullopt;
  std::optional<sim::VehicleId> best;
  double best_s = 0.0;
  for (const auto& o : w.vehicles()) {
    if (o.id == ego.id) continue;
    const auto p = w.pending_lane_changes().find(o.id);
    const int ql = p == w.pending_lane_changes().end() ? o.lane : p->second.target_lane;
    if (ql != lane) continue;
    if (ahead ? !(o.s > ego.s) : !(o.s <= ego.s)) continue;
    if (!best || (ahead ? o.s < best_s : o.s > best_s) || (o.s == best_s && o.id < *best)) {
      best = o.id;
      best_s = o.s;
    }
  }
  return best;
}

std::optional<sim::VehicleId> id_of(const std::optional<sim::VehicleState>& v) {
  return v ? std::optional<sim::VehicleId>(v->id) : std::nullopt;
}

std::string log_text(const RunConfig& cfg, const Policy& policy, int episode) {
  std::ostringstream out;
  write_episode_log(out, run_episode(cfg, policy, episode));
  return out.str();
}

Verdict simulator_sanity() {
  sim::TrafficConfig empty;
  empty.entrance_rate = 0.0;
  empty.random_spawns = 0;
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> pos(0.0, 300.0);
  std::uniform_int_distribution<int> lane(1, 4);
  std::uniform_int_distribution<int> count(0, 50);
  std::bernoulli_distribution coin(0.2);
  const double limit = 55.0 / 3.6;
  int neighbor_ok = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    sim::SimWorld w(sim::RoadConfig{}, sim::IdmParams{}, empty, trial);
    const auto ego = w.add_vehicle({lane(rng), pos(rng), 10.0, limit}, true);
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
      const double s = coin(rng) ? std::round(pos(rng) / 10.0) * 10.0 : pos(rng);
      const auto id = w.add_vehicle({lane(rng), s, 8.0, limit});
      if (coin(rng)) {
        w.request_lane_change(id, coin(rng) ? sim::Direction::kLeft : sim::Direction::kRight);
      }
    }
    const sim::VehicleState& e = *w.find(ego);
    const int l = w.query_lane(e);
    const sim::NeighborSet nb = sim::find_neighbors(w, ego);
    neighbor_ok += id_of(nb.ego_leader) == brute_nearest(w, e, l, true) &&
                   id_of(nb.left_leader) == brute_nearest(w, e, l - 1, true) &&
                   id_of(nb.left_follower) == brute_nearest(w, e, l - 1, false) &&
                   id_of(nb.right_leader) == brute_nearest(w, e, l + 1, true) &&
                   id_of(nb.right_follower) == brute_nearest(w, e, l + 1, false);
  }

  RunConfig cfg = default_run_config();
  cfg.train.theta_true = 0.5;
  Rng init(5);
  Policy learned{PolicyKind::kAdherence, dqn::MlpParams::uniform_init(128, init),
                 AdherenceEstimator()};
  Policy baseline;
  int identical = 0;
  for (int ep = 0; ep < 5; ++ep) {
    identical += log_text(cfg, learned, ep) == log_text(cfg, learned, ep);
    identical += log_text(cfg, baseline, ep) == log_text(cfg, baseline, ep);
  }

  const sim::IdmParams idm;
  const bool idm_ok =
      std::abs(sim::idm_accel(limit, limit, 1e9, 0.0, idm).accel) <= 1e-12 &&
      std::abs(sim::idm_accel(10.0, limit, 20.0, 5.0, idm).accel - -2.0679926727156177) <= 1e-12 &&
      std::abs(sim::idm_accel(5.0, limit, 10.0, 0.0, idm).accel - -2.287956719593611) <= 1e-12 &&
      sim::idm_accel(8.0, limit, -0.5, 8.0, idm).accel == -idm.b_max;
  return {neighbor_ok == 1000 && identical == 10 && idm_ok,
          fmt("neighbors %.0f/1000 exact, byte-equal logs %.0f/10, IDM values ", neighbor_ok,
              identical) + (idm_ok ? "ok" : "off")};
}

Verdict reward_semantics() {
  std::mt19937_64 rng(99);
  const RewardWeights w;
  const double limit = 55.0 / 3.6;
  std::uniform_real_distribution<double> speed(0.0, limit);
  std::uniform_real_distribution<double> offset(-60.0, 60.0);
  std::bernoulli_distribution coin(0.5);
  int violations = 0;
  for (int trial = 0; trial < 20000; ++trial) {
    Observation obs;
    obs.ego = {150.0, speed(rng), 2, true};
    for (auto& s : obs.slots) {
      s = coin(rng) ? SlotState{150.0 + offset(rng), speed(rng), 2, true}
                    : SlotState{150.0, obs.ego.v, 2, false};
    }
    obs.lane_speed_left = speed(rng);
    obs.lane_speed_keep = speed(rng);
    obs.lane_speed_right = speed(rng);
    obs.change_available_left = coin(rng);
    obs.change_available_right = coin(rng);
    const double v_th2 =
        std::min({obs.lane_speed_left, obs.lane_speed_keep, obs.lane_speed_right});
    for (int a = 0; a < kNumActions; ++a) {
      const Action act = action_from_index(a);
      const RewardBreakdown r = reward(obs, act, w);
      const bool keep = act == Action::kKeep;
      const bool may_miss =
          keep && obs.ego.v < v_th2 && (obs.change_available_left || obs.change_available_right);
      violations += keep && r.lane_cost != 0.0;
      violations += !may_miss && r.missing_cost != 0.0;
      violations += r.total != -w.alpha1 * r.speed_term - w.alpha2 * r.lane_cost -
                                   w.alpha3 * r.safety_cost - w.alpha4 * r.missing_cost;
    }
    int safe = cost_safe(obs, w);
    violations += safe < 0 || safe > 5;
    for (auto& s : obs.slots) {
      if (!s.real) continue;
      s = {150.0, obs.ego.v, 2, false};
      const int after = cost_safe(obs, w);
      violations += after > safe;
      safe = after;
    }
  }
  return {violations == 0, fmt("%.0f violations over 20000 random observations", violations)};
}

struct EndToEnd {
  Verdict reproduction;
  Verdict stability;
};

double tail_slope(const std::vector<double>& xs, std::size_t tail) {
  const std::vector<double> ma = stats::moving_average(xs, 50);
  if (ma.size() < tail || tail < 2) return std::nan("");
  return stats::ols_slope(std::span<const double>(ma).last(tail));
}

EndToEnd end_to_end(const fs::path& out) {
  const auto t0 = Clock::now();
  RunConfig cfg = load_run_config(ADHERELANE_SOURCE_DIR "/configs/default.ini");
  cfg.output_dir = out;
  fs::remove_all(out);
  const CompareResult res = run_compare(cfg, true, &std::cerr);
  const double minutes = seconds_since(t0) / 60.0;

  EndToEnd e;
  const double base = res.rows[0].reward;
  const double regular = res.rows[1].reward;
  const double adherence = res.rows[2].reward;
  const double p_ar = res.tests[0].result.p_value;
  const double p_rb = res.tests[1].result.p_value;
  const double reduction = res.travel_time_reduction;
  e.reproduction.pass = adherence > regular && regular > base && p_ar < 0.05 && p_rb < 0.05 &&
                        reduction >= 0.05 && minutes <= 30.0;
  e.reproduction.detail =
      fmt("reward adherence %.2f > regular %.2f > baseline %.2f", adherence, regular, base) +
      fmt(", p(adh>reg) %.4f, p(reg>base) %.2g, travel time -%.1f%%, %.1f min", p_ar, p_rb,
          100.0 * reduction, minutes);

  e.stability.pass = true;
  for (PolicyKind k : {PolicyKind::kRegular, PolicyKind::kAdherence}) {
    std::ifstream in(curves_path(cfg, k));
    std::string line;
    std::getline(in, line);
    std::vector<double> loss;
    std::vector<double> reward;
    while (std::getline(in, line)) {
      std::istringstream row(line);
      std::string cell;
      std::vector<double> cells;
      while (std::getline(row, cell, ',')) cells.push_back(std::stod(cell));
      if (cells.size() < 3) continue;
      if (!std::isnan(cells[1])) loss.push_back(cells[1]);
      reward.push_back(cells[2]);
    }
    const std::size_t tail = reward.size() / 10;
    const double ls = tail_slope(loss, tail);
    const double rs = tail_slope(reward, tail);
    const bool ok = ls <= 0.0 && rs >= 0.0;
    e.stability.pass = e.stability.pass && ok;
    if (!e.stability.detail.empty()) e.stability.detail += "; ";
    e.stability.detail += std::string(to_string(k)) +
                          fmt(" loss slope %+.5f, reward slope %+.5f", ls, rs);
  }
  return e;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path out = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");
  int failures = 0;
  auto report = [&](int n, const char* name, const Verdict& v) {
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << n << " " << name << ": "
              << v.detail << std::endl;
    failures += !v.pass;
  };
  auto guarded = [](const std::function<Verdict()>& f) {
    try {
      return f();
    } catch (const std::exception& e) {
      return Verdict{false, std::string("exception: ") + e.what()};
    }
  };
  report(1, "estimator convergence", guarded(estimator_convergence));
  report(2, "tabular oracle equivalence", guarded(tabular_oracle));
  report(3, "target reductions", guarded(target_reductions));
  report(4, "gradient correctness", guarded(gradient_check));
  report(5, "simulator sanity", guarded(simulator_sanity));
  report(6, "reward semantics", guarded(reward_semantics));
  EndToEnd e;
  try {
    e = end_to_end(out);
  } catch (const std::exception& ex) {
    e.reproduction = {false, std::string("exception: ") + ex.what()};
    e.stability = {false, "not run"};
  }
  report(7, "end-to-end reproduction", e.reproduction);
  report(8, "training stability", e.stability);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
