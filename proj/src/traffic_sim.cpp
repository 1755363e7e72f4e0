#include "adherelane/traffic_sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace adherelane::sim {

namespace {

int adjacent(int lane, Direction dir) {
  return dir == Direction::kLeft ? lane - 1 : lane + 1;
}

bool better_leader(const VehicleState& cand, const VehicleState& best) {
  return cand.s < best.s || (cand.s == best.s && cand.id < best.id);
}

bool better_follower(const VehicleState& cand, const VehicleState& best) {
  return cand.s > best.s || (cand.s == best.s && cand.id < best.id);
}

}  // namespace

void RoadConfig::validate() const {
  if (num_lanes < 2) throw std::invalid_argument("road: num_lanes must be >= 2");
  if (!(lane_width > 0.0)) throw std::invalid_argument("road: lane_width must be > 0");
  if (!(road_length > 0.0)) throw std::invalid_argument("road: road_length must be > 0");
  if (!(speed_limit > 0.0)) throw std::invalid_argument("road: speed_limit must be > 0");
  if (!(turn_speed > 0.0 && turn_speed <= speed_limit)) {
    throw std::invalid_argument("road: turn_speed must be in (0, speed_limit]");
  }
  if (!(mandatory_zone_start > 0.0 && mandatory_zone_start < road_length)) {
    throw std::invalid_argument(
        "road: mandatory_zone_start must lie strictly inside (0, road_length)");
  }
  if (!lane_exists(entrance_lane)) {
    throw std::invalid_argument("road: entrance_lane out of range");
  }
  for (int l : right_turn_only_lanes) {
    if (!lane_exists(l)) {
      throw std::invalid_argument("road: right_turn_only lane " +
                                  std::to_string(l) + " out of range");
    }
  }
}

bool RoadConfig::is_right_turn_only(int lane) const {
  return std::find(right_turn_only_lanes.begin(), right_turn_only_lanes.end(),
                   lane) != right_turn_only_lanes.end();
}

bool RoadConfig::crosses_solid_line(int from, int to, double s) const {
  return s >= mandatory_zone_start &&
         is_right_turn_only(from) != is_right_turn_only(to);
}

double RoadConfig::speed_cap(int lane, double s, double comfortable_decel) const {
  if (!is_right_turn_only(lane)) return speed_limit;
  const double to_zone = mandatory_zone_start - s;
  if (to_zone <= 0.0) return turn_speed;
  return std::min(speed_limit,
                  std::sqrt(turn_speed * turn_speed + 2.0 * comfortable_decel * to_zone));
}

void TrafficConfig::validate(const RoadConfig& road) const {
  if (!(dt > 0.0)) throw std::invalid_argument("traffic: dt must be > 0");
  if (!(lane_change_duration >= dt)) {
    throw std::invalid_argument("traffic: lane_change_duration must be >= dt");
  }
  if (entrance_rate < 0.0) throw std::invalid_argument("traffic: entrance_rate must be >= 0");
  if (random_spawns < 0) throw std::invalid_argument("traffic: random_spawns must be >= 0");
  if (!(desired_speed_min > 0.0 && desired_speed_min <= desired_speed_max &&
        desired_speed_max <= road.speed_limit)) {
    throw std::invalid_argument(
        "traffic: need 0 < desired_speed_min <= desired_speed_max <= speed_limit");
  }
  if (right_route_fraction < 0.0 || right_route_fraction > 1.0) {
    throw std::invalid_argument("traffic: right_route_fraction must be in [0, 1]");
  }
  if (!(ego_start_s >= 0.0 && ego_start_s < road.road_length)) {
    throw std::invalid_argument("traffic: ego_start_s must be on the road");
  }
  for (const auto& f : fixed_vehicles) {
    if (!road.lane_exists(f.lane)) throw std::invalid_argument("traffic: fixed vehicle lane out of range");
    if (!(f.v_desired > 0.0 && f.v_desired <= road.speed_limit)) {
      throw std::invalid_argument("traffic: fixed vehicle v_desired must be in (0, speed_limit]");
    }
    if (f.s < 0.0 || f.s > road.road_length) throw std::invalid_argument("traffic: fixed vehicle off road");
  }
}

SimWorld::SimWorld(RoadConfig road, IdmParams idm, TrafficConfig traffic,
                   std::uint64_t seed)
    : road_(std::move(road)),
      idm_(idm),
      traffic_(std::move(traffic)),
      seed_(seed),
      rng_(seed) {
  road_.validate();
  traffic_.validate(road_);
}

VehicleId SimWorld::add_vehicle(const SpawnSpec& spec, bool is_ego) {
  if (!road_.lane_exists(spec.lane)) {
    throw std::invalid_argument("add_vehicle: lane out of range");
  }
  VehicleState v;
  v.id = next_id_++;
  v.s = spec.s;
  v.v = std::clamp(spec.v, 0.0, spec.v_desired);
  v.lane = spec.lane;
  v.v_desired = spec.v_desired;
  v.is_ego = is_ego;
  v.route = spec.route;
  vehicles_.push_back(v);
  ++spawned_;
  return v.id;
}

VehicleId SimWorld::populate() {
  const double len = idm_.vehicle_length;
  SpawnSpec ego{1, traffic_.ego_start_s, traffic_.ego_start_v, road_.speed_limit,
                Route::kAny};
  const VehicleId ego_id = add_vehicle(ego, true);

  for (const auto& f : traffic_.fixed_vehicles) add_vehicle(f);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw_desired = [&] {
    return traffic_.desired_speed_min +
           (traffic_.desired_speed_max - traffic_.desired_speed_min) * unit(rng_);
  };
  auto draw_route = [&] {
    return unit(rng_) < traffic_.right_route_fraction ? Route::kRight
                                                      : Route::kStraight;
  };

  const double min_sep = len + idm_.s0 + 5.0;
  for (int k = 0; k < traffic_.random_spawns; ++k) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      const double s = traffic_.random_spawn_min_s +
                       (traffic_.random_spawn_max_s - traffic_.random_spawn_min_s) *
                           unit(rng_);
      const int lane =
          1 + std::min(road_.num_lanes - 1,
                       static_cast<int>(unit(rng_) * road_.num_lanes));
      const double vd = draw_desired();
      const Route route = draw_route();
      const bool clear = std::none_of(
          vehicles_.begin(), vehicles_.end(), [&](const VehicleState& o) {
            return o.lane == lane && std::abs(o.s - s) < min_sep;
          });
      if (clear) {
        add_vehicle({lane, s, vd, vd, route});
        break;
      }
    }
  }

  if (traffic_.entrance_rate > 0.0) {
    std::exponential_distribution<double> inter(traffic_.entrance_rate);
    double t = 0.0;
    while (true) {
      t += inter(rng_);
      if (t > traffic_.arrival_horizon) break;
      const double vd = draw_desired();
      const Route route = draw_route();
      entrance_queue_.emplace_back(
          t, SpawnSpec{road_.entrance_lane, 0.0,
                       std::min(traffic_.entrance_speed, vd), vd, route});
    }
  }
  return ego_id;
}

const VehicleState* SimWorld::find(VehicleId id) const {
  for (const auto& v : vehicles_) {
    if (v.id == id) return &v;
  }
  return nullptr;
}

VehicleState* SimWorld::find_mutable(VehicleId id) {
  for (auto& v : vehicles_) {
    if (v.id == id) return &v;
  }
  return nullptr;
}

bool SimWorld::has_arrived(VehicleId id) const {
  return std::any_of(arrivals_.begin(), arrivals_.end(),
                     [id](const VehicleState& v) { return v.id == id; });
}

int SimWorld::query_lane(const VehicleState& v) const {
  auto it = pending_.find(v.id);
  return it == pending_.end() ? v.lane : it->second.target_lane;
}

bool SimWorld::occupies(const VehicleState& v, int lane) const {
  if (v.lane == lane) return true;
  auto it = pending_.find(v.id);
  return it != pending_.end() && it->second.target_lane == lane;
}

LaneChangeRequest SimWorld::request_lane_change(VehicleId id, Direction dir) {
  const VehicleState* v = find(id);
  if (v == nullptr) throw std::out_of_range("request_lane_change: unknown vehicle");
  if (pending_.count(id) != 0) return LaneChangeRequest::kIgnoredPending;
  const int target = adjacent(v->lane, dir);
  if (!road_.lane_exists(target)) return LaneChangeRequest::kNoSuchLane;
  if (road_.crosses_solid_line(v->lane, target, v->s)) {
    return LaneChangeRequest::kSolidLine;
  }
  const int steps = static_cast<int>(
      std::lround(traffic_.lane_change_duration / traffic_.dt));
  pending_[id] = PendingLaneChange{target, std::max(1, steps)};
  return LaneChangeRequest::kAccepted;
}

std::optional<VehicleState> SimWorld::leader_in_lane(int lane, double s,
                                                     VehicleId self) const {
  std::optional<VehicleState> best;
  for (const auto& o : vehicles_) {
    if (o.id == self || query_lane(o) != lane || !(o.s > s)) continue;
    if (!best || better_leader(o, *best)) best = o;
  }
  return best;
}

std::optional<VehicleState> SimWorld::follower_in_lane(int lane, double s,
                                                       VehicleId self) const {
  std::optional<VehicleState> best;
  for (const auto& o : vehicles_) {
    if (o.id == self || query_lane(o) != lane || o.s > s) continue;
    if (!best || better_follower(o, *best)) best = o;
  }
  return best;
}

bool SimWorld::gap_acceptable(const VehicleState& v, int target_lane,
                              const GapAcceptance& gaps) const {
  const double len = idm_.vehicle_length;
  for (const auto& o : vehicles_) {
    if (o.id == v.id || !occupies(o, target_lane)) continue;
    if (o.s > v.s) {
      if (o.s - v.s - len < gaps.lead_min) return false;
    } else if (v.s - o.s - len < gaps.follow_min) {
      return false;
    }
  }
  return true;
}

bool SimWorld::route_allows(const VehicleState& v, int lane) const {
  switch (v.route) {
    case Route::kAny:
      return true;
    case Route::kStraight:
      return !road_.is_right_turn_only(lane);
    case Route::kRight:
      return road_.is_right_turn_only(lane);
  }
  return true;
}

double SimWorld::entry_gap() const {
  double gap = road_.road_length;
  for (const auto& o : vehicles_) {
    if (occupies(o, road_.entrance_lane)) {
      gap = std::min(gap, o.s - idm_.vehicle_length);
    }
  }
  return gap;
}

void SimWorld::spawn_entrance_arrivals() {
  while (!entrance_queue_.empty() && entrance_queue_.front().first <= time_) {
    if (entry_gap() < idm_.s0 + 3.0) return;
    SpawnSpec spec = entrance_queue_.front().second;
    if (auto lead = leader_in_lane(spec.lane, spec.s, -1)) {
      const double gap = lead->s - spec.s - idm_.vehicle_length;
      if (gap < idm_.s0 + spec.v * idm_.time_headway) {
        spec.v = std::min(spec.v, lead->v);
      }
    }
    add_vehicle(spec);
    entrance_queue_.erase(entrance_queue_.begin());
  }
}

std::optional<Direction> SimWorld::choose_surrounding_change(
    const VehicleState& v) const {
  const bool in_zone = v.s >= road_.mandatory_zone_start;
  const bool committed = v.s >= traffic_.mandatory_change_start;

  if (v.route != Route::kAny && !route_allows(v, v.lane)) {
    if (!committed || in_zone) return std::nullopt;
    const Direction dir =
        v.route == Route::kRight ? Direction::kRight : Direction::kLeft;
    const int target = adjacent(v.lane, dir);
    if (road_.lane_exists(target) && gap_acceptable(v, target, traffic_.gaps)) {
      return dir;
    }
    return std::nullopt;
  }

  const auto lead = leader_in_lane(v.lane, v.s, v.id);
  if (!lead) return std::nullopt;
  const double gap = lead->s - v.s - idm_.vehicle_length;
  if (v.v >= traffic_.congestion_speed_fraction * v.v_desired ||
      gap > traffic_.congestion_gap) {
    return std::nullopt;
  }

  std::optional<Direction> best;
  double best_speed = lead->v + traffic_.lane_speed_advantage;
  for (Direction dir : {Direction::kLeft, Direction::kRight}) {
    const int target = adjacent(v.lane, dir);
    if (!road_.lane_exists(target) ||
        road_.crosses_solid_line(v.lane, target, v.s)) {
      continue;
    }
    if (committed && !route_allows(v, target)) continue;
    const auto tl = leader_in_lane(target, v.s, v.id);
    double speed = v.v_desired;
    if (tl && tl->s - v.s - idm_.vehicle_length <= 2.0 * traffic_.congestion_gap) {
      speed = tl->v;
    }
    if (speed > best_speed && gap_acceptable(v, target, traffic_.gaps)) {
      best = dir;
      best_speed = speed;
    }
  }
  return best;
}

void SimWorld::plan_surrounding_lane_changes() {
  for (auto& v : vehicles_) {
    v.cooldown = std::max(0.0, v.cooldown - traffic_.dt);
  }
  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    const VehicleState& v = vehicles_[i];
    if (v.is_ego || v.cooldown > 0.0 || pending_.count(v.id) != 0) continue;
    if (auto dir = choose_surrounding_change(v)) {
      if (request_lane_change(v.id, *dir) == LaneChangeRequest::kAccepted) {
        vehicles_[i].cooldown =
            traffic_.lane_change_cooldown + traffic_.lane_change_duration;
      }
    }
  }
}

IdmResult SimWorld::acceleration_for(const VehicleState& v) const {
  const auto pend = pending_.find(v.id);
  const int other_lane =
      pend == pending_.end() ? v.lane : pend->second.target_lane;

  std::optional<VehicleState> lead;
  for (const auto& o : vehicles_) {
    if (o.id == v.id || !(o.s > v.s)) continue;
    if (!occupies(o, v.lane) && !occupies(o, other_lane)) continue;
    if (!lead || better_leader(o, *lead)) lead = o;
  }
  VehicleState capped = v;
  capped.v_desired = std::min(v.v_desired, road_.speed_cap(v.lane, v.s, idm_.b));
  IdmResult res = car_following_accel(capped, lead, idm_);

  // Vehicles still in a lane that does not serve their route stop at the
  // solid line and wait for a gap.
  if (!v.is_ego && v.route != Route::kAny && !route_allows(v, v.lane) &&
      pend == pending_.end() && v.s < road_.mandatory_zone_start) {
    const double gap = road_.mandatory_zone_start - v.s;
    const IdmResult stop = idm_accel(v.v, v.v_desired, gap, 0.0, idm_);
    if (stop.accel < res.accel) res.accel = stop.accel;
  }
  return res;
}

void SimWorld::step() {
  const double dt = traffic_.dt;
  spawn_entrance_arrivals();
  plan_surrounding_lane_changes();

  std::vector<double> accel(vehicles_.size());
  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    accel[i] = acceleration_for(vehicles_[i]).accel;
  }

  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    VehicleState& v = vehicles_[i];
    const double v_new = std::clamp(v.v + accel[i] * dt, 0.0, v.v_desired);
    v.s += 0.5 * (v.v + v_new) * dt;
    v.v = v_new;

    const bool blocked = !v.is_ego && v.route != Route::kAny &&
                         !route_allows(v, v.lane) && pending_.count(v.id) == 0 &&
                         v.s < road_.mandatory_zone_start;
    if (blocked && v.v < 0.5) {
      v.wait_time += dt;
      if (v.wait_time > traffic_.max_wait) v.route = Route::kAny;
    } else {
      v.wait_time = 0.0;
    }
  }

  for (auto it = pending_.begin(); it != pending_.end();) {
    if (--it->second.steps_remaining <= 0) {
      if (VehicleState* v = find_mutable(it->first)) v->lane = it->second.target_lane;
      it = pending_.erase(it);
    } else {
      ++it;
    }
  }

  for (auto it = vehicles_.begin(); it != vehicles_.end();) {
    if (it->s > road_.road_length) {
      arrivals_.push_back(*it);
      pending_.erase(it->id);
      it = vehicles_.erase(it);
    } else {
      ++it;
    }
  }

  time_ += dt;
}

void SimWorld::write_trace(std::ostream& out) const {
  for (const auto& v : vehicles_) {
    nlohmann::json rec{{"t", time_}, {"id", v.id}, {"s", v.s}, {"v", v.v},
                       {"l", v.lane}};
    out << rec.dump() << '\n';
  }
}

IdmResult idm_accel(double v, double v_desired, double gap, double leader_v,
                    const IdmParams& idm) {
  if (gap <= 0.0) return {-idm.b_max, true};
  const double dv = v - leader_v;
  const double dynamic =
      v * idm.time_headway + v * dv / (2.0 * std::sqrt(idm.a_max * idm.b));
  const double s_star = idm.s0 + std::max(0.0, dynamic);
  const double ratio = s_star / gap;
  const double a =
      idm.a_max * (1.0 - std::pow(v / v_desired, 4) - ratio * ratio);
  return {std::max(a, -idm.b_max), false};
}

IdmResult car_following_accel(const VehicleState& follower,
                              const std::optional<VehicleState>& leader,
                              const IdmParams& idm) {
  if (!leader) {
    return {idm.a_max * (1.0 - std::pow(follower.v / follower.v_desired, 4)),
            false};
  }
  const double gap = leader->s - follower.s - idm.vehicle_length;
  return idm_accel(follower.v, follower.v_desired, gap, leader->v, idm);
}

NeighborSet find_neighbors(const SimWorld& world, VehicleId ego_id) {
  const VehicleState* ego = world.find(ego_id);
  if (ego == nullptr) throw std::out_of_range("find_neighbors: unknown ego id");
  const int lane = world.query_lane(*ego);
  const RoadConfig& road = world.road();

  NeighborSet n;
  n.ego_leader = world.leader_in_lane(lane, ego->s, ego_id);
  if (road.lane_exists(lane - 1)) {
    n.left_leader = world.leader_in_lane(lane - 1, ego->s, ego_id);
    n.left_follower = world.follower_in_lane(lane - 1, ego->s, ego_id);
  }
  if (road.lane_exists(lane + 1)) {
    n.right_leader = world.leader_in_lane(lane + 1, ego->s, ego_id);
    n.right_follower = world.follower_in_lane(lane + 1, ego->s, ego_id);
  }
  return n;
}

std::optional<std::pair<VehicleId, VehicleId>> detect_collision(
    const SimWorld& world) {
  const auto& vs = world.vehicles();
  const double len = world.idm().vehicle_length;
  for (std::size_t i = 0; i < vs.size(); ++i) {
    for (std::size_t j = i + 1; j < vs.size(); ++j) {
      if (std::abs(vs[i].s - vs[j].s) >= len) continue;
      const int lj = world.query_lane(vs[j]);
      if (world.occupies(vs[i], vs[j].lane) || world.occupies(vs[i], lj)) {
        return std::make_pair(vs[i].id, vs[j].id);
      }
    }
  }
  return std::nullopt;
}

std::optional<VehicleId> detect_collision_with(const SimWorld& world,
                                               VehicleId id) {
  const VehicleState* self = world.find(id);
  if (self == nullptr) return std::nullopt;
  const double len = world.idm().vehicle_length;
  for (const auto& o : world.vehicles()) {
    if (o.id == id || std::abs(o.s - self->s) >= len) continue;
    if (world.occupies(*self, o.lane) || world.occupies(*self, world.query_lane(o))) {
      return o.id;
    }
  }
  return std::nullopt;
}

double lane_mean_speed(const SimWorld& world, VehicleId ego_id, int lane,
                       const NeighborSet& neighbors) {
  const double limit = world.road().speed_limit;
  if (!world.road().lane_exists(lane)) return limit;
  const VehicleState* ego = world.find(ego_id);
  if (ego == nullptr) throw std::out_of_range("lane_mean_speed: unknown ego id");
  const int ego_lane = world.query_lane(*ego);

  std::optional<VehicleState> lead;
  std::optional<VehicleState> follow;
  if (lane == ego_lane) {
    lead = neighbors.ego_leader;
    follow = world.follower_in_lane(lane, ego->s, ego_id);
  } else if (lane == ego_lane - 1) {
    lead = neighbors.left_leader;
    follow = neighbors.left_follower;
  } else if (lane == ego_lane + 1) {
    lead = neighbors.right_leader;
    follow = neighbors.right_follower;
  } else {
    throw std::invalid_argument("lane_mean_speed: lane not adjacent to ego");
  }
  const double vl = lead ? lead->v : limit;
  const double vf = follow ? follow->v : limit;
  return 0.5 * (vl + vf);
}

}  // namespace adherelane::sim
