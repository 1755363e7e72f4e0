#include "adherelane/mdp_env.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace adherelane {
namespace {

using sim::Direction;
using sim::SimWorld;

const double kLimit = 55.0 / 3.6;

EnvConfig quiet_env() {
  EnvConfig cfg;
  cfg.traffic.entrance_rate = 0.0;
  cfg.traffic.random_spawns = 0;
  return cfg;
}

SimWorld world_for(const EnvConfig& cfg) {
  return SimWorld(cfg.road, cfg.idm, cfg.traffic, 1);
}

TEST(Action, IndexAndNames) {
  EXPECT_EQ(index(Action::kLeft), 0);
  EXPECT_EQ(index(Action::kRight), 1);
  EXPECT_EQ(index(Action::kKeep), 2);
  for (int i = 0; i < kNumActions; ++i) {
    const Action a = action_from_index(i);
    EXPECT_EQ(action_from_string(to_string(a)), a);
  }
  EXPECT_THROW(action_from_string("X"), std::invalid_argument);
}

TEST(Observation, VirtualVehiclesForLeftmostLoneEgo) {
  const EnvConfig cfg = quiet_env();
  SimWorld w = world_for(cfg);
  const auto ego = w.add_vehicle({1, 50.0, 9.0, kLimit}, true);
  const Observation obs = build_observation(w, ego, cfg);
  for (Slot s : {Slot::kLeftLeader, Slot::kRightLeader, Slot::kEgoLeader}) {
    EXPECT_FALSE(obs.slot(s).real);
    EXPECT_EQ(obs.slot(s).s, 50.0 + cfg.d_virtual);
    EXPECT_EQ(obs.slot(s).v, 9.0);
  }
  EXPECT_EQ(obs.slot(Slot::kLeftFollower).s, 50.0 - cfg.d_virtual);
  EXPECT_EQ(obs.slot(Slot::kLeftLeader).lane, 1);
  EXPECT_EQ(obs.slot(Slot::kRightFollower).lane, 2);
  EXPECT_EQ(obs.features[6], 1.0);   // left leader, relative position
  EXPECT_EQ(obs.features[9], -1.0);  // left follower
  for (double f : obs.features) EXPECT_TRUE(std::isfinite(f));
}

TEST(Observation, RealNeighborsPassThrough) {
  const EnvConfig cfg = quiet_env();
  SimWorld w = world_for(cfg);
  const auto ego = w.add_vehicle({2, 100.0, 10.0, kLimit}, true);
  w.add_vehicle({2, 130.0, 11.0, kLimit});
  w.add_vehicle({2, 120.0, 12.0, kLimit});
  w.add_vehicle({1, 110.0, 13.0, kLimit});
  w.add_vehicle({1, 90.0, 14.0, kLimit});
  w.add_vehicle({3, 105.0, 8.0, kLimit});
  w.add_vehicle({3, 70.0, 7.0, kLimit});
  const Observation obs = build_observation(w, ego, cfg);
  for (const auto& s : obs.slots) EXPECT_TRUE(s.real);
  EXPECT_EQ(obs.slot(Slot::kEgoLeader).s, 120.0);
  EXPECT_EQ(obs.slot(Slot::kLeftLeader).v, 13.0);
  EXPECT_EQ(obs.slot(Slot::kLeftFollower).s, 90.0);
  EXPECT_EQ(obs.slot(Slot::kRightLeader).lane, 3);
  EXPECT_EQ(obs.slot(Slot::kRightFollower).v, 7.0);
  EXPECT_DOUBLE_EQ(obs.features[3], 0.2);
}

TEST(TimeHeadway, Examples) {
  EXPECT_DOUBLE_EQ(time_headway({100.0, 20.0, 1, true}, {110.0, 15.0, 1, true}), 2.0);
  EXPECT_TRUE(std::isinf(time_headway({100.0, 20.0, 1, true}, {110.0, 20.0, 1, true})));
  EXPECT_EQ(time_headway({100.0, 20.0, 1, true}, {100.0, 15.0, 1, true}), 0.0);
}

Observation lone_obs(double v) {
  Observation obs;
  obs.ego = {100.0, v, 2, true};
  for (auto& s : obs.slots) s = {0.0, v, 2, false};
  obs.lane_speed_left = obs.lane_speed_keep = obs.lane_speed_right = kLimit;
  return obs;
}

TEST(CostLane, Examples) {
  const RewardWeights w;
  Observation obs = lone_obs(14.0);
  EXPECT_EQ(cost_lane(obs, Action::kKeep, w), 0);
  EXPECT_EQ(cost_lane(obs, Action::kLeft, w), 1);
  obs = lone_obs(5.0);
  obs.slots[0] = {110.0, 2.0, 2, true};
  EXPECT_EQ(cost_lane(obs, Action::kRight, w), 0);
  // Virtual leader at ego speed: changing with a free road is unnecessary.
  EXPECT_EQ(cost_lane(lone_obs(5.0), Action::kRight, w), 1);
}

TEST(CostSafe, Examples) {
  const RewardWeights w;
  Observation obs = lone_obs(10.0);
  EXPECT_EQ(cost_safe(obs, w), 0);
  obs.slots[0] = {105.0, 0.0, 2, true};  // 0.5 s
  EXPECT_EQ(cost_safe(obs, w), 1);
  for (auto& s : obs.slots) s = {101.0, 0.0, 2, true};
  EXPECT_EQ(cost_safe(obs, w), 5);
}

TEST(CostMissing, Examples) {
  const RewardWeights w;
  Observation obs = lone_obs(3.0);
  obs.lane_speed_left = obs.lane_speed_right = obs.lane_speed_keep = 5.0;
  EXPECT_EQ(cost_missing(obs, Action::kLeft, w, true, false), 0);
  EXPECT_EQ(cost_missing(obs, Action::kKeep, w, true, false), 1);
  EXPECT_EQ(cost_missing(obs, Action::kKeep, w, false, false), 0);
  obs.ego.v = 6.0;
  EXPECT_EQ(cost_missing(obs, Action::kKeep, w, true, true), 0);
}

TEST(Reward, Examples) {
  RewardWeights w;
  EXPECT_EQ(reward(lone_obs(w.v_des), Action::kKeep, w).total, 0.0);
  EXPECT_DOUBLE_EQ(reward(lone_obs(w.v_des - 2.0), Action::kKeep, w).total, -2.0);

  w.alpha1 = w.alpha2 = w.alpha3 = w.alpha4 = 1.0;
  Observation obs = lone_obs(w.v_des - 2.0);
  obs.slots[0] = {101.0, 0.0, 2, true};  // unsafe and a slow leader
  const RewardBreakdown r = reward(obs, Action::kLeft, w);
  EXPECT_EQ(r.lane_cost, 1.0);
  EXPECT_EQ(r.safety_cost, 1.0);
  EXPECT_EQ(r.missing_cost, 0.0);
  EXPECT_DOUBLE_EQ(r.total, -4.0);
}

Observation random_obs(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> speed(0.0, kLimit);
  std::uniform_real_distribution<double> offset(-60.0, 60.0);
  std::bernoulli_distribution coin(0.5);
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
  return obs;
}

TEST(RewardProperties, RandomObservations) {
  std::mt19937_64 rng(99);
  const RewardWeights w;
  for (int trial = 0; trial < 5000; ++trial) {
    Observation obs = random_obs(rng);
    for (int a = 0; a < kNumActions; ++a) {
      const Action act = action_from_index(a);
      const RewardBreakdown r = reward(obs, act, w);
      EXPECT_EQ(r.total, -w.alpha1 * r.speed_term - w.alpha2 * r.lane_cost -
                             w.alpha3 * r.safety_cost - w.alpha4 * r.missing_cost);
      EXPECT_LE(r.total, 0.0);
      EXPECT_EQ(r.speed_term, std::abs(obs.ego.v - w.v_des));
      if (act == Action::kKeep) EXPECT_EQ(r.lane_cost, 0.0);
      if (act != Action::kKeep) EXPECT_EQ(r.missing_cost, 0.0);
      if (!obs.change_available_left && !obs.change_available_right) {
        EXPECT_EQ(r.missing_cost, 0.0);
      }
    }
    const int safe = cost_safe(obs, w);
    ASSERT_GE(safe, 0);
    ASSERT_LE(safe, 5);
    for (auto& s : obs.slots) {
      if (!s.real) continue;
      s = {150.0, obs.ego.v, 2, false};
      ASSERT_LE(cost_safe(obs, w), safe);
    }
  }
}

TEST(LaneChangeAvailable, Examples) {
  const EnvConfig cfg = quiet_env();
  SimWorld w = world_for(cfg);
  const auto ego = w.add_vehicle({1, 100.0, 10.0, kLimit}, true);
  EXPECT_FALSE(lane_change_available(w, ego, Direction::kLeft, cfg.ego_gaps));
  EXPECT_TRUE(lane_change_available(w, ego, Direction::kRight, cfg.ego_gaps));
  w.add_vehicle({2, 100.0 - 4.5 - 1.0, 10.0, kLimit});
  EXPECT_FALSE(lane_change_available(w, ego, Direction::kRight, cfg.ego_gaps));

  SimWorld z = world_for(cfg);
  const auto in_zone = z.add_vehicle({2, 230.0, 10.0, kLimit}, true);
  EXPECT_FALSE(lane_change_available(z, in_zone, Direction::kRight, cfg.ego_gaps));
  EXPECT_TRUE(lane_change_available(z, in_zone, Direction::kLeft, cfg.ego_gaps));
}

TEST(Env, ResetPutsEgoOnLeftmostLaneDeterministically) {
  LaneChangeEnv a(EnvConfig{});
  LaneChangeEnv b(EnvConfig{});
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Observation oa = a.reset(seed);
    const Observation ob = b.reset(seed);
    EXPECT_EQ(oa.ego.lane, 1);
    EXPECT_EQ(oa.features, ob.features);
  }
  a.reset(1);
  b.reset(2);
  for (int i = 0; i < 300 && !a.done() && !b.done(); ++i) {
    a.step(Action::kKeep);
    b.step(Action::kKeep);
  }
  EXPECT_NE(a.observation().features, b.observation().features);
}

TEST(Env, StepErrorsOutsideEpisode) {
  LaneChangeEnv env(EnvConfig{});
  EXPECT_THROW(env.step(Action::kKeep), std::logic_error);
  env.reset(1);
  while (!env.done()) env.step(Action::kKeep);
  EXPECT_THROW(env.step(Action::kKeep), std::logic_error);
}

TEST(Env, FreeFlowKeepAndArrival) {
  EnvConfig cfg = quiet_env();
  LaneChangeEnv env(cfg);
  env.reset(1);
  const StepResult first = env.step(Action::kKeep);
  EXPECT_FALSE(first.done);
  EXPECT_EQ(first.reward.lane_cost, 0.0);
  EXPECT_EQ(first.reward.safety_cost, 0.0);
  // Empty lanes run at the limit, so keeping below it counts as a missed change.
  EXPECT_EQ(first.reward.missing_cost, 1);
  EXPECT_EQ(first.reward.total,
            -std::abs(10.0 - cfg.weights.v_des) - cfg.weights.alpha4);
  StepResult last = first;
  while (!env.done()) last = env.step(Action::kKeep);
  EXPECT_EQ(last.done_reason, DoneReason::kArrived);
  EXPECT_GT(env.ego_position(), cfg.road.road_length);
}

TEST(Env, MaxStepsTruncates) {
  EnvConfig cfg = quiet_env();
  cfg.max_steps = 3;
  LaneChangeEnv env(cfg);
  env.reset(1);
  env.step(Action::kKeep);
  env.step(Action::kKeep);
  const StepResult r = env.step(Action::kKeep);
  EXPECT_TRUE(r.done);
  EXPECT_EQ(r.done_reason, DoneReason::kMaxSteps);
}

TEST(Env, CollisionTerminatesWithPenaltyWhenUnvetoed) {
  EnvConfig cfg = quiet_env();
  cfg.traffic.fixed_vehicles = {{2, cfg.traffic.ego_start_s + 1.0, 10.0, 10.0}};
  cfg.safety_veto = false;
  LaneChangeEnv env(cfg);
  env.reset(1);
  const StepResult r = env.step(Action::kRight);
  EXPECT_TRUE(r.done);
  EXPECT_EQ(r.done_reason, DoneReason::kCollision);
  EXPECT_EQ(r.terminal_penalty, cfg.collision_penalty);
  EXPECT_EQ(r.total_reward(), r.reward.total - cfg.collision_penalty);

  cfg.safety_veto = true;
  LaneChangeEnv safe(cfg);
  safe.reset(1);
  const StepResult v = safe.step(Action::kRight);
  EXPECT_TRUE(v.vetoed);
  EXPECT_FALSE(v.done);
  EXPECT_EQ(v.reward.lane_cost, 1.0);
}

TEST(Env, StepDeterminism) {
  auto run = [] {
    LaneChangeEnv env(EnvConfig{});
    env.reset(17);
    std::vector<double> trace;
    const Action plan[] = {Action::kRight, Action::kKeep, Action::kRight, Action::kLeft};
    for (int k = 0; !env.done(); ++k) {
      const StepResult r = env.step(plan[k % 4]);
      trace.push_back(r.total_reward());
      trace.insert(trace.end(), r.next_observation.features.begin(),
                   r.next_observation.features.end());
    }
    return trace;
  };
  EXPECT_EQ(run(), run());
}

TEST(EnvConfig, RejectsNegativeWeight) {
  EnvConfig cfg;
  cfg.weights.alpha2 = -1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_THROW(LaneChangeEnv{cfg}, std::invalid_argument);
}

}  // namespace
}  // namespace adherelane
