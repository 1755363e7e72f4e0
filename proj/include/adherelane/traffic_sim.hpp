#pragma once

// Discrete-time multi-lane highway micro-simulator.
//
// Lanes are numbered 1..num_lanes from left to right. "Left" of lane l is
// l - 1. Longitudinal positions are front-bumper coordinates along the road;
// a vehicle occupies [s - vehicle_length, s].

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <utility>
#include <vector>

namespace adherelane::sim {

using VehicleId = int;

enum class Direction : std::uint8_t { kLeft, kRight };

// Where a surrounding vehicle has to be when it reaches the intersection.
enum class Route : std::uint8_t { kAny, kStraight, kRight };

struct RoadConfig {
  int num_lanes = 4;
  double lane_width = 3.5;
  double road_length = 300.0;
  double speed_limit = 55.0 / 3.6;
  // Start of the solid-line area; lane changes across the boundary between
  // through lanes and right-turn-only lanes are prohibited from here on.
  double mandatory_zone_start = 220.0;
  int entrance_lane = 1;
  std::vector<int> right_turn_only_lanes{3, 4};
  // Speed at which traffic in the right-turn-only lanes takes the turn. It
  // applies from mandatory_zone_start on; vehicles brake towards it at the
  // comfortable IDM deceleration beforehand.
  double turn_speed = 5.0;

  // Throws std::invalid_argument describing the first violated invariant.
  void validate() const;

  bool lane_exists(int lane) const { return lane >= 1 && lane <= num_lanes; }
  bool is_right_turn_only(int lane) const;
  // True when a move from `from` to `to` at position `s` would cross the
  // solid line separating through lanes from right-turn-only lanes.
  bool crosses_solid_line(int from, int to, double s) const;
  // Desired-speed cap for a vehicle in `lane` at `s` (speed_limit when no cap
  // applies).
  double speed_cap(int lane, double s, double comfortable_decel) const;
};

struct IdmParams {
  double a_max = 2.0;
  double b = 3.0;
  double s0 = 2.0;
  double time_headway = 1.5;
  double vehicle_length = 4.5;
  // Emergency deceleration; also the floor applied to the IDM output.
  double b_max = 9.0;
};

struct GapAcceptance {
  double lead_min = 5.0;
  double follow_min = 5.0;
};

struct VehicleState {
  VehicleId id = 0;
  double s = 0.0;
  double v = 0.0;
  int lane = 1;
  double v_desired = 0.0;
  bool is_ego = false;
  Route route = Route::kAny;
  // Behavior bookkeeping for surrounding traffic.
  double cooldown = 0.0;
  double wait_time = 0.0;
};

struct SpawnSpec {
  int lane = 1;
  double s = 0.0;
  double v = 0.0;
  double v_desired = 0.0;
  Route route = Route::kAny;
};

// Spawn schedule plus the behavior parameters of surrounding traffic.
struct TrafficConfig {
  double dt = 0.1;
  double lane_change_duration = 2.0;

  double ego_start_s = 5.0;
  double ego_start_v = 10.0;

  std::vector<SpawnSpec> fixed_vehicles;

  // Poisson arrivals at s = 0 on the entrance lane, vehicles per second.
  double entrance_rate = 0.2;
  double entrance_speed = 8.0;
  double arrival_horizon = 150.0;
  // Uniform mid-road spawns per episode.
  int random_spawns = 8;
  double random_spawn_min_s = 20.0;
  double random_spawn_max_s = 280.0;
  double desired_speed_min = 6.0;
  double desired_speed_max = 55.0 / 3.6;
  double right_route_fraction = 0.5;

  // Surrounding-vehicle behavior.
  double mandatory_change_start = 60.0;
  double congestion_speed_fraction = 0.6;
  double congestion_gap = 30.0;
  double lane_speed_advantage = 1.0;
  double lane_change_cooldown = 3.0;
  double max_wait = 8.0;
  GapAcceptance gaps;

  void validate(const RoadConfig& road) const;
};

struct PendingLaneChange {
  int target_lane = 1;
  int steps_remaining = 0;
};

enum class LaneChangeRequest : std::uint8_t {
  kAccepted,
  kIgnoredPending,
  kNoSuchLane,
  kSolidLine,
};

struct IdmResult {
  double accel = 0.0;
  bool collision_imminent = false;
};

struct NeighborSet {
  std::optional<VehicleState> ego_leader;
  std::optional<VehicleState> left_leader;
  std::optional<VehicleState> left_follower;
  std::optional<VehicleState> right_leader;
  std::optional<VehicleState> right_follower;
};

class SimWorld {
 public:
  SimWorld(RoadConfig road, IdmParams idm, TrafficConfig traffic,
           std::uint64_t seed);

  // Spawns the ego on the entrance lane plus the fixed, random and scheduled
  // traffic. Returns the ego id.
  VehicleId populate();

  VehicleId add_vehicle(const SpawnSpec& spec, bool is_ego = false);

  double time() const { return time_; }
  double dt() const { return traffic_.dt; }
  std::uint64_t seed() const { return seed_; }
  const RoadConfig& road() const { return road_; }
  const IdmParams& idm() const { return idm_; }
  const TrafficConfig& traffic() const { return traffic_; }
  const std::vector<VehicleState>& vehicles() const { return vehicles_; }
  const std::map<VehicleId, PendingLaneChange>& pending_lane_changes() const {
    return pending_;
  }
  // Vehicles that left the road past road_length, in removal order, with
  // their state at removal.
  const std::vector<VehicleState>& arrivals() const { return arrivals_; }
  std::size_t spawned() const { return spawned_; }

  const VehicleState* find(VehicleId id) const;
  bool has_arrived(VehicleId id) const;

  // Lane used for neighbor queries: the target lane while a maneuver is
  // pending, else the current lane.
  int query_lane(const VehicleState& v) const;
  bool occupies(const VehicleState& v, int lane) const;
  bool is_changing_lane(VehicleId id) const { return pending_.count(id) != 0; }

  LaneChangeRequest request_lane_change(VehicleId id, Direction dir);

  // Nearest vehicle ahead of `s` (strictly) / at-or-behind `s` whose query
  // lane is `lane`, excluding `self`. Ties in s go to the lower id.
  std::optional<VehicleState> leader_in_lane(int lane, double s,
                                             VehicleId self) const;
  std::optional<VehicleState> follower_in_lane(int lane, double s,
                                               VehicleId self) const;

  bool gap_acceptable(const VehicleState& v, int target_lane,
                      const GapAcceptance& gaps) const;

  void step();

  // One JSON line per vehicle: time, id, s, v, l.
  void write_trace(std::ostream& out) const;

 private:
  VehicleState* find_mutable(VehicleId id);
  double entry_gap() const;
  void spawn_entrance_arrivals();
  void plan_surrounding_lane_changes();
  std::optional<Direction> choose_surrounding_change(const VehicleState& v) const;
  IdmResult acceleration_for(const VehicleState& v) const;
  bool route_allows(const VehicleState& v, int lane) const;

  RoadConfig road_;
  IdmParams idm_;
  TrafficConfig traffic_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;

  double time_ = 0.0;
  VehicleId next_id_ = 0;
  std::vector<VehicleState> vehicles_;
  std::map<VehicleId, PendingLaneChange> pending_;
  std::vector<VehicleState> arrivals_;
  std::vector<std::pair<double, SpawnSpec>> entrance_queue_;
  std::size_t spawned_ = 0;
};

// Intelligent Driver Model acceleration. Without a leader the interaction
// term is dropped. A non-positive bumper gap returns -b_max and flags an
// imminent collision.
IdmResult car_following_accel(const VehicleState& follower,
                              const std::optional<VehicleState>& leader,
                              const IdmParams& idm);

// Same law against an explicit bumper gap and leader speed.
IdmResult idm_accel(double v, double v_desired, double gap, double leader_v,
                    const IdmParams& idm);

// Throws std::out_of_range for an unknown ego id.
NeighborSet find_neighbors(const SimWorld& world, VehicleId ego_id);

std::optional<std::pair<VehicleId, VehicleId>> detect_collision(
    const SimWorld& world);

// First vehicle (lowest id) overlapping `id` in a shared lane.
std::optional<VehicleId> detect_collision_with(const SimWorld& world,
                                               VehicleId id);

// Mean of the leader and follower speeds in `lane` around the ego; a missing
// vehicle counts as driving at the speed limit, as does a nonexistent lane.
double lane_mean_speed(const SimWorld& world, VehicleId ego_id, int lane,
                       const NeighborSet& neighbors);

}  // namespace adherelane::sim
