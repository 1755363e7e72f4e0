#pragma once

// Lane-change recommendation MDP on top of the traffic simulator.

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string_view>

#include "adherelane/traffic_sim.hpp"

namespace adherelane {

// Index order is the network output order.
enum class Action : int { kLeft = 0, kRight = 1, kKeep = 2 };
inline constexpr int kNumActions = 3;
inline constexpr std::size_t kObservationSize = 18;
inline constexpr std::size_t kNumSlots = 5;

using Features = std::array<double, kObservationSize>;

std::string_view to_string(Action a);
// Accepts "L"/"R"/"K". Throws std::invalid_argument otherwise.
Action action_from_string(std::string_view s);
inline int index(Action a) { return static_cast<int>(a); }
Action action_from_index(int i);

struct SlotState {
  double s = 0.0;
  double v = 0.0;
  int lane = 1;
  // False for the virtual stand-ins filling empty or nonexistent slots.
  bool real = false;
};

// Slot order: ego leader, left leader, left follower, right leader,
// right follower.
enum class Slot : int {
  kEgoLeader = 0,
  kLeftLeader = 1,
  kLeftFollower = 2,
  kRightLeader = 3,
  kRightFollower = 4,
};

struct Observation {
  SlotState ego;
  std::array<SlotState, kNumSlots> slots{};
  // Lane mean speeds (left, current, right) for the missed-change cost.
  double lane_speed_left = 0.0;
  double lane_speed_keep = 0.0;
  double lane_speed_right = 0.0;
  bool change_available_left = false;
  bool change_available_right = false;
  bool maneuvering = false;
  Features features{};

  const SlotState& slot(Slot s) const { return slots[static_cast<int>(s)]; }
};

struct RewardWeights {
  double alpha1 = 1.0;
  double alpha2 = 5.0;
  double alpha3 = 5.0;
  double alpha4 = 5.0;
  double v_des = 55.0 / 3.6;
  double v_th1 = 8.0;
  double delta_v_min = 1.0;
  double t_th = 1.5;
  // Relative speeds below this give an infinite headway.
  double eps_v = 0.1;

  void validate(double speed_limit) const;
};

struct RewardBreakdown {
  double speed_term = 0.0;
  double lane_cost = 0.0;
  double safety_cost = 0.0;
  double missing_cost = 0.0;
  double total = 0.0;
};

enum class DoneReason : std::uint8_t { kArrived, kCollision, kMaxSteps };
std::string_view to_string(DoneReason r);

struct EnvConfig {
  sim::RoadConfig road;
  sim::IdmParams idm;
  sim::TrafficConfig traffic;
  RewardWeights weights;
  sim::GapAcceptance ego_gaps;
  double decision_period = 1.0;
  int max_steps = 120;
  double collision_penalty = 50.0;
  double d_virtual = 100.0;
  // Drop executed lane changes that fail lane_change_available (the driver
  // assistance safety check); the reward still sees the chosen action.
  bool safety_veto = true;

  void validate() const;
};

struct StepResult {
  Observation next_observation;
  RewardBreakdown reward;
  // Extra penalty on a terminal collision step, outside the breakdown.
  double terminal_penalty = 0.0;
  bool done = false;
  std::optional<DoneReason> done_reason;
  sim::LaneChangeRequest lane_change = sim::LaneChangeRequest::kAccepted;
  bool vetoed = false;

  double total_reward() const { return reward.total - terminal_penalty; }
};

// Throws std::out_of_range when the ego is not on the road.
Observation build_observation(const sim::SimWorld& world, sim::VehicleId ego_id,
                              const EnvConfig& cfg);

// Fills the normalized network input from the raw observation fields.
Features encode_features(const Observation& obs, const EnvConfig& cfg);

bool lane_change_available(const sim::SimWorld& world, sim::VehicleId ego_id,
                           sim::Direction dir, const sim::GapAcceptance& gaps);

double time_headway(const SlotState& ego, const SlotState& other,
                    double eps_v = 0.1);

int cost_lane(const Observation& obs, Action action, const RewardWeights& w);
int cost_safe(const Observation& obs, const RewardWeights& w);
int cost_missing(const Observation& obs, Action action, const RewardWeights& w,
                 bool available_left, bool available_right);

RewardBreakdown reward(const Observation& obs, Action action,
                       const RewardWeights& w);

class LaneChangeEnv {
 public:
  explicit LaneChangeEnv(EnvConfig cfg);

  const Observation& reset(std::uint64_t seed);
  // Throws std::logic_error when called before reset or after the episode
  // finished.
  StepResult step(Action executed);

  const EnvConfig& config() const { return cfg_; }
  const Observation& observation() const { return obs_; }
  const sim::SimWorld& world() const;
  sim::VehicleId ego_id() const { return ego_id_; }
  bool done() const { return done_; }
  int steps() const { return steps_; }
  double elapsed() const;
  // Ego position now, or at arrival once it left the road.
  double ego_position() const;
  double ego_start() const { return ego_start_; }

  // Receives one line per vehicle per simulation step while set.
  void set_trace(std::ostream* out) { trace_ = out; }

 private:
  EnvConfig cfg_;
  std::optional<sim::SimWorld> world_;
  sim::VehicleId ego_id_ = -1;
  Observation obs_;
  bool done_ = true;
  int steps_ = 0;
  double ego_start_ = 0.0;
  std::ostream* trace_ = nullptr;
};

}  // namespace adherelane
