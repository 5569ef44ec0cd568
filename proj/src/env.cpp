#include "hrl/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "hrl/errors.hpp"

namespace hrl {

namespace {

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

// Ego is index 0, traffic vehicle i is index i + 1.
const VehicleState& vehicle_at(const VehicleState& ego, std::span<const VehicleState> traffic,
                               std::size_t index) {
  return index == 0 ? ego : traffic[index - 1];
}

}  // namespace

std::string_view to_string(Scenario s) {
  return s == Scenario::Highway ? "highway" : "merge";
}

void RoadConfig::validate() const {
  if (lane_count < 2) throw ConfigError("env.lane_count must be >= 2");
  if (!(lane_width > 0.0)) throw ConfigError("env.lane_width must be > 0");
  if (!(road_length > 0.0)) throw ConfigError("env.road_length must be > 0");
  if (scenario == Scenario::Merge && !(merge_ramp_end_x > 0.0 && merge_ramp_end_x < road_length))
    throw ConfigError("env.merge_ramp_end_x must lie in (0, road_length)");
}

int RoadConfig::lane_of(double y) const {
  const auto lane = static_cast<int>(std::lround(y / lane_width));
  return std::clamp(lane, 0, lane_count - 1);
}

void GhrParams::validate() const {
  if (!(c > 0.0)) throw ConfigError("env.ghr_c must be > 0");
  if (!(l >= 0.0)) throw ConfigError("env.ghr_l must be >= 0");
  if (!(tau >= 0.0)) throw ConfigError("env.ghr_tau must be >= 0");
  if (!std::isfinite(m)) throw ConfigError("env.ghr_m must be finite");
}

EgoAction action_from_index(std::size_t index) {
  if (index >= kActionCount) throw ContractViolation("action index out of range: " + std::to_string(index));
  return static_cast<EgoAction>(index);
}

std::string_view to_string(EgoAction a) {
  switch (a) {
    case EgoAction::LaneLeft: return "lane_left";
    case EgoAction::Idle: return "idle";
    case EgoAction::LaneRight: return "lane_right";
    case EgoAction::Faster: return "faster";
    case EgoAction::Slower: return "slower";
  }
  return "unknown";
}

void EnvConfig::validate() const {
  road.validate();
  ghr.validate();
  weights.validate();
  reward.validate();
  if (traffic_count < 0) throw ConfigError("env.traffic_count must be >= 0");
  if (horizon < 1) throw ConfigError("env.horizon must be >= 1");
  if (substeps < 1) throw ConfigError("env.substeps must be >= 1");
  if (!(dt > 0.0)) throw ConfigError("env.dt must be > 0");
  if (!(kp > 0.0)) throw ConfigError("env.kp must be > 0");
  if (!(a_max > 0.0)) throw ConfigError("env.a_max must be > 0");
  if (!(lateral_rate > 0.0)) throw ConfigError("env.lateral_rate must be > 0");
  if (!(target_speed_min >= 0.0 && target_speed_max > target_speed_min))
    throw ConfigError("env target speed band is empty");
  if (!(max_speed >= target_speed_max)) throw ConfigError("env.max_speed must be >= target_speed_max");
  if (!(ego_initial_speed >= 0.0 && ego_initial_speed <= max_speed))
    throw ConfigError("env.ego_initial_speed must be in [0, max_speed]");
  if (!(traffic_speed_min >= 0.0 && traffic_speed_max >= traffic_speed_min &&
        traffic_speed_max <= max_speed))
    throw ConfigError("env traffic speed band must lie in [0, max_speed]");
  if (!(traffic_spawn_behind >= 0.0 && traffic_spawn_ahead > 0.0))
    throw ConfigError("env traffic spawn window is empty");
  if (traffic_spawn_ahead > road.road_length)
    throw ConfigError("env.traffic_spawn_ahead must not exceed road_length");
  if (!(spawn_spacing > 0.0)) throw ConfigError("env.spawn_spacing must be > 0");
  if (!(ghr_lookahead > 0.0)) throw ConfigError("env.ghr_lookahead must be > 0");
  if (!(scale.x_range > 0.0 && scale.y_range > 0.0 && scale.v_range > 0.0))
    throw ConfigError("observation ranges must be > 0");
}

double ghr_acceleration(const VehicleState& follower, const VehicleState& leader,
                        const GhrParams& p, double a_max) {
  const double gap = leader.x - follower.x - 0.5 * (leader.length + follower.length);
  if (gap <= 0.0) return -a_max;
  const double dv = leader.v - follower.v;
  const double a = p.c * std::pow(follower.v, p.m) * dv / std::pow(gap, p.l);
  return std::clamp(a, -a_max, a_max);
}

double speed_tracking_acceleration(const VehicleState& vehicle, double kp, double a_max) {
  return std::clamp(kp * (vehicle.v_target - vehicle.v), -a_max, a_max);
}

bool boxes_overlap(const VehicleState& a, const VehicleState& b) {
  return std::abs(a.x - b.x) <= 0.5 * (a.length + b.length) &&
         std::abs(a.y - b.y) <= 0.5 * (a.width + b.width);
}

std::vector<bool> collision_check(std::span<VehicleState> vehicles) {
  std::vector<bool> hit(vehicles.size(), false);
  for (std::size_t i = 0; i < vehicles.size(); ++i) {
    for (std::size_t j = i + 1; j < vehicles.size(); ++j) {
      if (boxes_overlap(vehicles[i], vehicles[j])) hit[i] = hit[j] = true;
    }
  }
  for (std::size_t i = 0; i < vehicles.size(); ++i) {
    if (hit[i]) vehicles[i].crashed = true;
  }
  return hit;
}

bool in_path(const VehicleState& vehicle, const VehicleState& other, double lane_width) {
  return std::abs(other.y - vehicle.y) < 0.75 * lane_width;
}

Observation encode_observation(const VehicleState& ego, std::span<const VehicleState> traffic,
                               const RoadConfig& road, const ObservationScale& scale) {
  Observation obs;
  auto* out = obs.values.data();
  out[0] = 1.0;
  out[1] = clamp_unit(2.0 * ego.x / road.road_length - 1.0);
  out[2] = clamp_unit(ego.y / scale.y_range);
  out[3] = clamp_unit(ego.v / scale.v_range);
  out[4] = clamp_unit(ego.vy / scale.v_range);

  std::vector<std::size_t> order(traffic.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(traffic[a].x - ego.x) < std::abs(traffic[b].x - ego.x);
  });

  const std::size_t shown = std::min(order.size(), Observation::kNeighbors);
  for (std::size_t r = 0; r < shown; ++r) {
    const VehicleState& other = traffic[order[r]];
    double* row = out + (r + 1) * Observation::kFeatures;
    row[0] = 1.0;
    row[1] = clamp_unit((other.x - ego.x) / scale.x_range);
    row[2] = clamp_unit((other.y - ego.y) / scale.y_range);
    row[3] = clamp_unit((other.v - ego.v) / scale.v_range);
    row[4] = clamp_unit((other.vy - ego.vy) / scale.v_range);
  }
  return obs;
}

HighwayEnv::HighwayEnv(EnvConfig config) : config_(std::move(config)) {
  config_.validate();
}

std::size_t HighwayEnv::delay_steps() const {
  return static_cast<std::size_t>(std::lround(config_.ghr.tau / config_.dt));
}

Observation HighwayEnv::reset(std::uint64_t seed, const RoadConfig& road) {
  road.validate();
  EnvConfig next = config_;
  next.road = road;
  next.validate();
  config_ = std::move(next);
  return reset(seed);
}

Observation HighwayEnv::reset(std::uint64_t seed) {
  Rng rng(seed);
  const RoadConfig& road = config_.road;

  ego_ = VehicleState{};
  const int ego_lane = road.scenario == Scenario::Merge
                           ? road.ramp_lane()
                           : static_cast<int>(rng.index(static_cast<std::uint64_t>(road.lane_count)));
  ego_.lane_target = ego_lane;
  ego_.y = road.lane_center(ego_lane);
  ego_.v = config_.ego_initial_speed;
  ego_.v_target = std::clamp(config_.ego_initial_speed, config_.target_speed_min, config_.target_speed_max);

  // Traffic never enters the ramp, which would dead-end it.
  const int traffic_lanes = road.scenario == Scenario::Merge ? road.lane_count - 1 : road.lane_count;

  traffic_.clear();
  constexpr int kMaxAttempts = 1000;
  for (int i = 0; i < config_.traffic_count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      const int lane = static_cast<int>(rng.index(static_cast<std::uint64_t>(traffic_lanes)));
      const double x = rng.uniform(-config_.traffic_spawn_behind, config_.traffic_spawn_ahead);
      const double v = rng.uniform(config_.traffic_speed_min, config_.traffic_speed_max);
      auto too_close = [&](const VehicleState& other) {
        return other.lane_target == lane && std::abs(other.x - x) < config_.spawn_spacing;
      };
      if (too_close(ego_) || std::any_of(traffic_.begin(), traffic_.end(), too_close)) continue;
      VehicleState car;
      car.x = x;
      car.y = road.lane_center(lane);
      car.v = v;
      car.v_target = v;
      car.lane_target = lane;
      traffic_.push_back(car);
      placed = true;
    }
    if (!placed) throw ConfigError("cannot place " + std::to_string(config_.traffic_count) +
                                   " traffic vehicles; spawn window too dense");
  }

  pending_accel_.assign(traffic_.size(), std::deque<double>(delay_steps(), 0.0));
  steps_ = 0;
  substeps_done_ = 0;
  sim_time_ = 0.0;
  started_ = true;
  finished_ = false;
  off_road_ = false;
  return observe();
}

void HighwayEnv::set_vehicles(const VehicleState& ego, std::vector<VehicleState> traffic) {
  if (!started_) throw ContractViolation("set_vehicles before reset");
  ego_ = ego;
  traffic_ = std::move(traffic);
  pending_accel_.assign(traffic_.size(), std::deque<double>(delay_steps(), 0.0));
}

Observation HighwayEnv::observe() const {
  return encode_observation(ego_, traffic_, config_.road, config_.scale);
}

void HighwayEnv::apply_action(EgoAction action, bool& lane_change_initiated) {
  const RoadConfig& road = config_.road;
  lane_change_initiated = false;
  switch (action) {
    case EgoAction::Faster:
      ego_.v_target = std::min(ego_.v_target + config_.target_speed_step, config_.target_speed_max);
      break;
    case EgoAction::Slower:
      ego_.v_target = std::max(ego_.v_target - config_.target_speed_step, config_.target_speed_min);
      break;
    case EgoAction::LaneLeft:
      if (ego_.lane_target > 0) {
        --ego_.lane_target;
        lane_change_initiated = true;
      }
      break;
    case EgoAction::LaneRight: {
      const int next = ego_.lane_target + 1;
      const bool ramp_closed = next == road.ramp_lane() && ego_.x >= road.merge_ramp_end_x;
      if (next < road.lane_count && !ramp_closed) {
        ego_.lane_target = next;
        lane_change_initiated = true;
      }
      break;
    }
    case EgoAction::Idle:
      break;
  }
}

double HighwayEnv::ego_acceleration() const {
  if (ego_.crashed) return -config_.a_max;
  const RoadConfig& road = config_.road;
  if (ego_.lane_target == road.ramp_lane() && ego_.x >= road.merge_ramp_end_x) return -config_.a_max;
  return speed_tracking_acceleration(ego_, config_.kp, config_.a_max);
}

const VehicleState* HighwayEnv::find_leader(const VehicleState& vehicle, std::size_t self_index,
                                            double max_distance) const {
  const VehicleState* leader = nullptr;
  double best = max_distance;
  const std::size_t total = traffic_.size() + 1;
  for (std::size_t i = 0; i < total; ++i) {
    if (i == self_index) continue;
    const VehicleState& other = vehicle_at(ego_, traffic_, i);
    const double dx = other.x - vehicle.x;
    if (dx < 0.0 || (dx == 0.0 && i < self_index)) continue;
    if (!in_path(vehicle, other, config_.road.lane_width)) continue;
    if (dx < best || (leader == nullptr && dx <= best)) {
      best = dx;
      leader = &other;
    }
  }
  return leader;
}

void HighwayEnv::substep(double& abs_accel_sum) {
  const double dt = config_.dt;
  const RoadConfig& road = config_.road;

  // Accelerations from the state at the start of the sub-step.
  std::vector<double> accel(traffic_.size());
  for (std::size_t i = 0; i < traffic_.size(); ++i) {
    const VehicleState& car = traffic_[i];
    double a;
    if (car.crashed) {
      a = -config_.a_max;
    } else if (const VehicleState* leader = find_leader(car, i + 1, config_.ghr_lookahead)) {
      a = ghr_acceleration(car, *leader, config_.ghr, config_.a_max);
    } else {
      a = speed_tracking_acceleration(car, config_.kp, config_.a_max);
    }
    auto& line = pending_accel_[i];
    if (!line.empty()) {
      line.push_back(a);
      a = line.front();
      line.pop_front();
    }
    accel[i] = a;
  }
  const double ego_accel = ego_acceleration();

  auto integrate = [&](VehicleState& car, double a) {
    car.x += car.v * dt;
    const double v_next = std::clamp(car.v + a * dt, 0.0, config_.max_speed);
    car.a = (v_next - car.v) / dt;
    car.v = v_next;
    const double dy = std::clamp(road.lane_center(car.lane_target) - car.y,
                                 -config_.lateral_rate * dt, config_.lateral_rate * dt);
    car.y += dy;
    car.vy = dy / dt;
  };
  integrate(ego_, ego_accel);
  for (std::size_t i = 0; i < traffic_.size(); ++i) integrate(traffic_[i], accel[i]);
  abs_accel_sum += std::abs(ego_.a);

  std::vector<VehicleState> all;
  all.reserve(traffic_.size() + 1);
  all.push_back(ego_);
  all.insert(all.end(), traffic_.begin(), traffic_.end());
  collision_check(all);
  ego_.crashed = all[0].crashed;
  for (std::size_t i = 0; i < traffic_.size(); ++i) traffic_[i].crashed = all[i + 1].crashed;

  if (ego_.y < road.y_min() || ego_.y > road.y_max()) off_road_ = true;
  sim_time_ = static_cast<double>(++substeps_done_) * dt;
}

StepOutcome HighwayEnv::step(EgoAction action) {
  if (!started_) throw ContractViolation("step called before reset");
  if (finished_) throw ContractViolation("step called on a finished episode; call reset first");

  bool lane_change = false;
  apply_action(action, lane_change);

  double abs_accel_sum = 0.0;
  double fault_time = 0.0;
  for (int k = 0; k < config_.substeps; ++k) {
    substep(abs_accel_sum);
    if (ego_.crashed || off_road_) fault_time += config_.dt;
  }
  ++steps_;

  PeriodSummary period;
  period.crashed = ego_.crashed;
  if (const VehicleState* leader = find_leader(ego_, 0, std::numeric_limits<double>::infinity())) {
    period.leader_gap = std::max(leader->x - ego_.x - 0.5 * (leader->length + ego_.length), 0.0);
  }
  period.ego_speed = ego_.v;
  period.mean_abs_accel = abs_accel_sum / config_.substeps;
  period.lane_change_initiated = lane_change;

  StepOutcome out;
  out.reward = compute_reward(period, config_.weights, config_.reward);
  out.terminated = ego_.crashed || off_road_;
  out.truncated = !out.terminated && steps_ >= config_.horizon;
  finished_ = out.terminated || out.truncated;
  out.observation = observe();
  out.info.ego_speed = ego_.v;
  out.info.ego_lane = config_.road.lane_of(ego_.y);
  out.info.crashed = ego_.crashed;
  out.info.off_road = off_road_;
  out.info.lane_change_initiated = lane_change;
  out.info.sim_time = sim_time_;
  out.info.fault_time = fault_time;
  return out;
}

}  // namespace hrl
