#include "adherelane/mdp_env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace adherelane {

std::string_view to_string(Action a) {
  switch (a) {
    case Action::kLeft:
      return "L";
    case Action::kRight:
      return "R";
    case Action::kKeep:
      return "K";
  }
  return "?";
}

Action action_from_string(std::string_view s) {
  if (s == "L") return Action::kLeft;
  if (s == "R") return Action::kRight;
  if (s == "K") return Action::kKeep;
  throw std::invalid_argument("unknown action '" + std::string(s) + "'");
}

Action action_from_index(int i) {
  if (i < 0 || i >= kNumActions) throw std::out_of_range("action index out of range");
  return static_cast<Action>(i);
}

std::string_view to_string(DoneReason r) {
  switch (r) {
    case DoneReason::kArrived:
      return "arrived";
    case DoneReason::kCollision:
      return "collision";
    case DoneReason::kMaxSteps:
      return "max_steps";
  }
  return "?";
}

void RewardWeights::validate(double speed_limit) const {
  for (double a : {alpha1, alpha2, alpha3, alpha4}) {
    if (!(a >= 0.0)) throw std::invalid_argument("reward: weights must be >= 0");
  }
  if (!(v_des > 0.0)) throw std::invalid_argument("reward: v_des must be > 0");
  if (!(v_th1 < speed_limit)) {
    throw std::invalid_argument("reward: v_th1 must be below the speed limit");
  }
  if (!(t_th > 0.0)) throw std::invalid_argument("reward: t_th must be > 0");
  if (!(eps_v > 0.0)) throw std::invalid_argument("reward: eps_v must be > 0");
}

void EnvConfig::validate() const {
  road.validate();
  traffic.validate(road);
  weights.validate(road.speed_limit);
  if (!(decision_period >= traffic.dt)) {
    throw std::invalid_argument("env: decision_period must be >= dt");
  }
  if (max_steps <= 0) throw std::invalid_argument("env: max_steps must be > 0");
  if (!(collision_penalty >= 0.0)) {
    throw std::invalid_argument("env: collision_penalty must be >= 0");
  }
  if (!(d_virtual > 0.0)) throw std::invalid_argument("env: d_virtual must be > 0");
}

Features encode_features(const Observation& obs, const EnvConfig& cfg) {
  const double len = cfg.road.road_length;
  const double vmax = cfg.road.speed_limit;
  const double lanes = cfg.road.num_lanes;
  Features f{};
  f[0] = obs.ego.s / len;
  f[1] = obs.ego.v / vmax;
  f[2] = obs.ego.lane / lanes;
  for (std::size_t i = 0; i < kNumSlots; ++i) {
    const SlotState& n = obs.slots[i];
    f[3 + 3 * i] = (n.s - obs.ego.s) / cfg.d_virtual;
    f[4 + 3 * i] = n.v / vmax;
    f[5 + 3 * i] = n.lane / lanes;
  }
  return f;
}

bool lane_change_available(const sim::SimWorld& world, sim::VehicleId ego_id,
                           sim::Direction dir, const sim::GapAcceptance& gaps) {
  const sim::VehicleState* ego = world.find(ego_id);
  if (ego == nullptr || world.is_changing_lane(ego_id)) return false;
  const int target = dir == sim::Direction::kLeft ? ego->lane - 1 : ego->lane + 1;
  if (!world.road().lane_exists(target)) return false;
  if (world.road().crosses_solid_line(ego->lane, target, ego->s)) return false;
  return world.gap_acceptable(*ego, target, gaps);
}

Observation build_observation(const sim::SimWorld& world, sim::VehicleId ego_id,
                              const EnvConfig& cfg) {
  const sim::VehicleState* ego = world.find(ego_id);
  if (ego == nullptr) throw std::out_of_range("build_observation: ego not on road");
  const int lane = world.query_lane(*ego);
  const int num_lanes = world.road().num_lanes;
  const sim::NeighborSet nb = find_neighbors(world, ego_id);

  Observation obs;
  obs.ego = {ego->s, ego->v, lane, true};

  auto fill = [&](Slot slot, const std::optional<sim::VehicleState>& v,
                  int queried_lane, bool leader) {
    SlotState& out = obs.slots[static_cast<int>(slot)];
    if (v) {
      out = {v->s, v->v, world.query_lane(*v), true};
    } else {
      out = {leader ? ego->s + cfg.d_virtual : ego->s - cfg.d_virtual, ego->v,
             std::clamp(queried_lane, 1, num_lanes), false};
    }
  };
  fill(Slot::kEgoLeader, nb.ego_leader, lane, true);
  fill(Slot::kLeftLeader, nb.left_leader, lane - 1, true);
  fill(Slot::kLeftFollower, nb.left_follower, lane - 1, false);
  fill(Slot::kRightLeader, nb.right_leader, lane + 1, true);
  fill(Slot::kRightFollower, nb.right_follower, lane + 1, false);

  obs.lane_speed_left = sim::lane_mean_speed(world, ego_id, lane - 1, nb);
  obs.lane_speed_keep = sim::lane_mean_speed(world, ego_id, lane, nb);
  obs.lane_speed_right = sim::lane_mean_speed(world, ego_id, lane + 1, nb);
  obs.change_available_left =
      lane_change_available(world, ego_id, sim::Direction::kLeft, cfg.ego_gaps);
  obs.change_available_right =
      lane_change_available(world, ego_id, sim::Direction::kRight, cfg.ego_gaps);
  obs.maneuvering = world.is_changing_lane(ego_id);
  obs.features = encode_features(obs, cfg);
  return obs;
}

double time_headway(const SlotState& ego, const SlotState& other, double eps_v) {
  const double dv = ego.v - other.v;
  if (std::abs(dv) < eps_v) return std::numeric_limits<double>::infinity();
  return std::abs((ego.s - other.s) / dv);
}

int cost_lane(const Observation& obs, Action action, const RewardWeights& w) {
  if (action == Action::kKeep) return 0;
  const double leader_v = obs.slot(Slot::kEgoLeader).v;
  return (obs.ego.v > w.v_th1 || obs.ego.v - leader_v < w.delta_v_min) ? 1 : 0;
}

int cost_safe(const Observation& obs, const RewardWeights& w) {
  int count = 0;
  for (const SlotState& n : obs.slots) {
    if (n.real && time_headway(obs.ego, n, w.eps_v) < w.t_th) ++count;
  }
  return count;
}

int cost_missing(const Observation& obs, Action action, const RewardWeights&,
                 bool available_left, bool available_right) {
  if (action != Action::kKeep) return 0;
  if (!available_left && !available_right) return 0;
  const double v_th2 =
      std::min({obs.lane_speed_left, obs.lane_speed_right, obs.lane_speed_keep});
  return obs.ego.v < v_th2 ? 1 : 0;
}

RewardBreakdown reward(const Observation& obs, Action action,
                       const RewardWeights& w) {
  RewardBreakdown r;
  r.speed_term = std::abs(obs.ego.v - w.v_des);
  r.lane_cost = cost_lane(obs, action, w);
  r.safety_cost = cost_safe(obs, w);
  r.missing_cost = cost_missing(obs, action, w, obs.change_available_left,
                                obs.change_available_right);
  r.total = -w.alpha1 * r.speed_term - w.alpha2 * r.lane_cost -
            w.alpha3 * r.safety_cost - w.alpha4 * r.missing_cost;
  return r;
}

LaneChangeEnv::LaneChangeEnv(EnvConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
}

const Observation& LaneChangeEnv::reset(std::uint64_t seed) {
  world_.emplace(cfg_.road, cfg_.idm, cfg_.traffic, seed);
  ego_id_ = world_->populate();
  ego_start_ = world_->find(ego_id_)->s;
  obs_ = build_observation(*world_, ego_id_, cfg_);
  done_ = false;
  steps_ = 0;
  if (trace_ != nullptr) world_->write_trace(*trace_);
  return obs_;
}

const sim::SimWorld& LaneChangeEnv::world() const {
  if (!world_) throw std::logic_error("env: reset() has not been called");
  return *world_;
}

double LaneChangeEnv::elapsed() const { return world_ ? world_->time() : 0.0; }

double LaneChangeEnv::ego_position() const {
  const sim::SimWorld& w = world();
  if (const sim::VehicleState* ego = w.find(ego_id_)) return ego->s;
  for (const auto& a : w.arrivals()) {
    if (a.id == ego_id_) return a.s;
  }
  return obs_.ego.s;
}

StepResult LaneChangeEnv::step(Action executed) {
  if (!world_) throw std::logic_error("env: step() before reset()");
  if (done_) throw std::logic_error("env: step() on a finished episode");

  StepResult res;
  res.reward = reward(obs_, executed, cfg_.weights);
  if (executed != Action::kKeep) {
    const auto dir =
        executed == Action::kLeft ? sim::Direction::kLeft : sim::Direction::kRight;
    res.vetoed = cfg_.safety_veto &&
                 !(executed == Action::kLeft ? obs_.change_available_left
                                             : obs_.change_available_right);
    if (!res.vetoed) res.lane_change = world_->request_lane_change(ego_id_, dir);
  }

  const int sim_steps = std::max(
      1, static_cast<int>(std::lround(cfg_.decision_period / cfg_.traffic.dt)));
  for (int k = 0; k < sim_steps; ++k) {
    world_->step();
    if (trace_ != nullptr) world_->write_trace(*trace_);
    if (world_->has_arrived(ego_id_)) {
      res.done_reason = DoneReason::kArrived;
      break;
    }
    if (sim::detect_collision_with(*world_, ego_id_)) {
      res.done_reason = DoneReason::kCollision;
      res.terminal_penalty = cfg_.collision_penalty;
      break;
    }
  }
  ++steps_;
  if (!res.done_reason && steps_ >= cfg_.max_steps) {
    res.done_reason = DoneReason::kMaxSteps;
  }
  res.done = res.done_reason.has_value();

  if (res.done_reason == DoneReason::kArrived) {
    Observation terminal = obs_;
    for (const auto& a : world_->arrivals()) {
      if (a.id == ego_id_) {
        terminal.ego.s = a.s;
        terminal.ego.v = a.v;
      }
    }
    terminal.features = encode_features(terminal, cfg_);
    obs_ = terminal;
  } else {
    obs_ = build_observation(*world_, ego_id_, cfg_);
  }
  res.next_observation = obs_;
  done_ = res.done;
  return res;
}

}  // namespace adherelane
