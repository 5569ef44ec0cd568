#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <span>
#include <string_view>
#include <vector>

#include "hrl/reward.hpp"
#include "hrl/rng.hpp"

namespace hrl {

enum class Scenario { Highway, Merge };

std::string_view to_string(Scenario s);

/// Straight multi-lane road. Lane 0 is the leftmost lane and its center is
/// y = 0; lane i is centered at y = i * lane_width. In the Merge scenario the
/// rightmost lane is an on-ramp that ends at `merge_ramp_end_x`.
struct RoadConfig {
  int lane_count = 3;
  double lane_width = 4.0;
  /// Extent of the modelled road. Traffic spawns inside it and the ego x
  /// feature is normalized by it; vehicles may drive past it.
  double road_length = 1000.0;
  Scenario scenario = Scenario::Highway;
  double merge_ramp_end_x = 300.0;

  void validate() const;
  double lane_center(int lane) const { return lane * lane_width; }
  /// Index of the ramp lane in Merge, -1 on Highway.
  int ramp_lane() const { return scenario == Scenario::Merge ? lane_count - 1 : -1; }
  /// Nearest lane to lateral coordinate y, clamped to the road.
  int lane_of(double y) const;
  double y_min() const { return -0.5 * lane_width; }
  double y_max() const { return (lane_count - 0.5) * lane_width; }
};

struct VehicleState {
  double x = 0.0;  ///< longitudinal position of the box center, m
  double y = 0.0;  ///< lateral position of the box center, m
  double v = 0.0;  ///< longitudinal speed, m/s
  double a = 0.0;  ///< longitudinal acceleration over the last sub-step, m/s^2
  double vy = 0.0; ///< lateral speed over the last sub-step, m/s
  double v_target = 0.0;
  int lane_target = 0;
  double length = 5.0;
  double width = 2.0;
  bool crashed = false;
};

/// Gazis-Herman-Rothery car following: a = c * v_f^m * dv / dx^l.
struct GhrParams {
  double c = 15.0;
  double m = 0.0;
  double l = 2.0;
  double tau = 0.0;  ///< reaction delay, s

  void validate() const;
};

enum class EgoAction : int { LaneLeft = 0, Idle = 1, LaneRight = 2, Faster = 3, Slower = 4 };

inline constexpr std::size_t kActionCount = 5;

EgoAction action_from_index(std::size_t index);
std::string_view to_string(EgoAction a);

/// Ego row followed by the K nearest vehicles, each row
/// [presence, x, y, vx, vy] normalized to [-1, 1].
///
/// Neighbor rows are relative to the ego. The ego row carries absolute
/// values: x as progress along the road (2x/road_length - 1), y, v and vy
/// scaled by the same ranges as the neighbor rows.
struct Observation {
  static constexpr std::size_t kNeighbors = 4;
  static constexpr std::size_t kFeatures = 5;
  static constexpr std::size_t kRows = kNeighbors + 1;
  static constexpr std::size_t kSize = kRows * kFeatures;

  std::array<double, kSize> values{};

  std::span<const double, kFeatures> row(std::size_t i) const {
    return std::span<const double, kFeatures>(values.data() + i * kFeatures, kFeatures);
  }
  std::vector<double> to_vector() const { return {values.begin(), values.end()}; }
  bool operator==(const Observation&) const = default;
};

struct ObservationScale {
  double x_range = 100.0;
  double y_range = 12.0;
  double v_range = 30.0;
};

struct StepInfo {
  double ego_speed = 0.0;
  int ego_lane = 0;
  bool crashed = false;
  bool off_road = false;
  bool lane_change_initiated = false;
  double sim_time = 0.0;
  /// Seconds of this decision period spent with the ego crashed or off-road.
  double fault_time = 0.0;
};

struct StepOutcome {
  Observation observation;
  RewardBreakdown reward;
  bool terminated = false;
  bool truncated = false;
  StepInfo info;
};

struct EnvConfig {
  RoadConfig road;
  GhrParams ghr;
  RewardWeights weights;
  RewardParams reward;

  int traffic_count = 6;
  int horizon = 40;  ///< decision steps per episode
  int substeps = 10;
  double dt = 0.1;
  double kp = 1.0;          ///< speed tracking gain, 1/s
  double a_max = 5.0;
  double lateral_rate = 4.0;
  double max_speed = 40.0;

  double ego_initial_speed = 25.0;
  double target_speed_step = 5.0;
  double target_speed_min = 10.0;
  double target_speed_max = 30.0;

  double traffic_speed_min = 20.0;
  double traffic_speed_max = 28.0;
  double traffic_spawn_behind = 30.0;  ///< traffic spawns in [-behind, ahead] around x = 0
  double traffic_spawn_ahead = 250.0;
  double spawn_spacing = 25.0;         ///< min center distance between same-lane spawns
  double ghr_lookahead = 100.0;        ///< leaders farther than this are ignored

  ObservationScale scale;

  void validate() const;
};

/// GHR response of `follower` to `leader`, clamped to [-a_max, a_max].
/// A non-positive bumper gap means the boxes overlap and yields -a_max.
double ghr_acceleration(const VehicleState& follower, const VehicleState& leader,
                        const GhrParams& p, double a_max = 5.0);

/// Proportional tracking of the vehicle's own target speed.
double speed_tracking_acceleration(const VehicleState& vehicle, double kp, double a_max);

/// Closed axis-aligned box overlap; touching boxes collide.
bool boxes_overlap(const VehicleState& a, const VehicleState& b);

/// Pairwise overlap test. Marks every colliding vehicle as crashed (sticky)
/// and returns which vehicles collided in this call.
std::vector<bool> collision_check(std::span<VehicleState> vehicles);

/// Whether `other` is in the lateral path of `vehicle`.
bool in_path(const VehicleState& vehicle, const VehicleState& other, double lane_width);

Observation encode_observation(const VehicleState& ego, std::span<const VehicleState> traffic,
                               const RoadConfig& road, const ObservationScale& scale = {});

/// Seedable highway / merge micro-simulator with discrete ego meta-actions.
/// Not thread-safe; separate instances are independent.
class HighwayEnv {
 public:
  explicit HighwayEnv(EnvConfig config);

  Observation reset(std::uint64_t seed);
  Observation reset(std::uint64_t seed, const RoadConfig& road);
  StepOutcome step(EgoAction action);

  /// Replace the vehicle set of a running episode. Used to build scenarios.
  void set_vehicles(const VehicleState& ego, std::vector<VehicleState> traffic);

  Observation observe() const;
  const VehicleState& ego() const { return ego_; }
  std::span<const VehicleState> traffic() const { return traffic_; }
  const EnvConfig& config() const { return config_; }
  bool finished() const { return finished_; }
  bool started() const { return started_; }
  int steps_taken() const { return steps_; }
  double sim_time() const { return sim_time_; }
  bool off_road() const { return off_road_; }

 private:
  void apply_action(EgoAction action, bool& lane_change_initiated);
  void substep(double& abs_accel_sum);
  double ego_acceleration() const;
  const VehicleState* find_leader(const VehicleState& vehicle, std::size_t self_index,
                                  double max_distance) const;
  std::size_t delay_steps() const;

  EnvConfig config_;
  VehicleState ego_;
  std::vector<VehicleState> traffic_;
  std::vector<std::deque<double>> pending_accel_;  // GHR reaction delay lines
  int steps_ = 0;
  std::uint64_t substeps_done_ = 0;
  double sim_time_ = 0.0;  ///< substeps_done_ * dt, not a running sum
  bool started_ = false;
  bool finished_ = false;
  bool off_road_ = false;
};

}  // namespace hrl
