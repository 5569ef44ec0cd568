#pragma once

#include <optional>
#include <string_view>
#include <utility>

#include "hrl/env.hpp"

namespace hrl {

enum class FsmState { CruiseFollow, PrepareLaneChange, ExecuteLaneChange };

std::string_view to_string(FsmState s);

struct RuleParams {
  double headway_change_trigger = 2.0;  ///< s; consider a lane change below this leader headway
  double gap_accept_front = 15.0;       ///< m; min bumper gap to the target-lane leader
  double gap_accept_rear = 10.0;        ///< m; min bumper gap to the target-lane follower
  double speed_advantage_min = 2.0;     ///< m/s; target-lane leader must be this much faster, or absent

  void validate() const;
};

/// Whether the FSM may move from `from` to `to` in one decision.
bool is_valid_transition(FsmState from, FsmState to);

/// Driving situation recovered from an observation.
struct TrafficPicture {
  double ego_x = 0.0;
  double ego_speed = 0.0;
  double ego_y = 0.0;
  int ego_lane = 0;
  /// Bumper gap and speed of the nearest vehicle ahead in a lane.
  struct Neighbor {
    double gap = 0.0;
    double speed = 0.0;
  };
  std::optional<Neighbor> leader(int lane) const;
  std::optional<Neighbor> follower(int lane) const;

  std::vector<std::pair<int, Neighbor>> ahead;   ///< (lane, neighbor) for each vehicle ahead
  std::vector<std::pair<int, Neighbor>> behind;  ///< (lane, neighbor), gap measured rear bumper to front bumper
};

/// On a merge road the ramp end is listed as a stopped vehicle ahead in the ramp lane.
TrafficPicture read_observation(const Observation& obs, const RoadConfig& road,
                                const ObservationScale& scale = {}, double vehicle_length = 5.0);

struct RuleDecision {
  EgoAction action = EgoAction::Idle;
  FsmState next = FsmState::CruiseFollow;
};

/// Deterministic lane-keeping / lane-change state machine.
///
/// CruiseFollow speeds up without a leader inside the trigger headway, slows
/// down below half of it, and arms PrepareLaneChange when the leader is
/// inside the trigger and an adjacent lane exists. PrepareLaneChange commits
/// (left first) only when both gaps and the speed advantage hold, otherwise
/// falls back to CruiseFollow braking. ExecuteLaneChange idles until the ego
/// settles within 0.2 m of a lane center.
RuleDecision decide(const Observation& obs, FsmState state, const RuleParams& params,
                    const RoadConfig& road, const ObservationScale& scale = {});

/// Per-episode wrapper holding the FSM state.
class RuleAgent {
 public:
  RuleAgent(RuleParams params, RoadConfig road, ObservationScale scale = {})
      : params_(params), road_(road), scale_(scale) {
    params_.validate();
  }

  void reset() { state_ = FsmState::CruiseFollow; }
  EgoAction act(const Observation& obs) {
    const auto d = decide(obs, state_, params_, road_, scale_);
    state_ = d.next;
    return d.action;
  }
  FsmState state() const { return state_; }

 private:
  RuleParams params_;
  RoadConfig road_;
  ObservationScale scale_;
  FsmState state_ = FsmState::CruiseFollow;
};

}  // namespace hrl
