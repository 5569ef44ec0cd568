#include "hrl/rules.hpp"

#include <algorithm>
#include <cmath>

#include "hrl/errors.hpp"

namespace hrl {

namespace {

constexpr double kSettleTolerance = 0.2;

bool lane_exists(int lane, const RoadConfig& road) { return lane >= 0 && lane < road.lane_count; }

// A closed ramp is not a lane-change candidate.
bool lane_open(int lane, double ego_x, const RoadConfig& road) {
  return lane_exists(lane, road) && !(lane == road.ramp_lane() && ego_x >= road.merge_ramp_end_x);
}

double headway(const TrafficPicture::Neighbor& leader, double ego_speed) {
  return leader.gap / std::max(ego_speed, 0.1);
}

}  // namespace

std::string_view to_string(FsmState s) {
  switch (s) {
    case FsmState::CruiseFollow: return "cruise_follow";
    case FsmState::PrepareLaneChange: return "prepare_lane_change";
    case FsmState::ExecuteLaneChange: return "execute_lane_change";
  }
  return "unknown";
}

void RuleParams::validate() const {
  if (!(headway_change_trigger > 0.0 && gap_accept_front > 0.0 && gap_accept_rear > 0.0 &&
        speed_advantage_min > 0.0))
    throw ConfigError("rules thresholds must all be > 0");
}

bool is_valid_transition(FsmState from, FsmState to) {
  switch (from) {
    case FsmState::CruiseFollow: return to != FsmState::ExecuteLaneChange;
    case FsmState::PrepareLaneChange: return to != FsmState::PrepareLaneChange;
    case FsmState::ExecuteLaneChange: return to != FsmState::PrepareLaneChange;
  }
  return false;
}

std::optional<TrafficPicture::Neighbor> TrafficPicture::leader(int lane) const {
  std::optional<Neighbor> best;
  for (const auto& [l, n] : ahead) {
    if (l == lane && (!best || n.gap < best->gap)) best = n;
  }
  return best;
}

std::optional<TrafficPicture::Neighbor> TrafficPicture::follower(int lane) const {
  std::optional<Neighbor> best;
  for (const auto& [l, n] : behind) {
    if (l == lane && (!best || n.gap < best->gap)) best = n;
  }
  return best;
}

TrafficPicture read_observation(const Observation& obs, const RoadConfig& road,
                                const ObservationScale& scale, double vehicle_length) {
  TrafficPicture pic;
  const auto ego = obs.row(0);
  pic.ego_x = 0.5 * (ego[1] + 1.0) * road.road_length;
  pic.ego_y = ego[2] * scale.y_range;
  pic.ego_speed = ego[3] * scale.v_range;
  pic.ego_lane = road.lane_of(pic.ego_y);
  for (std::size_t r = 1; r < Observation::kRows; ++r) {
    const auto row = obs.row(r);
    if (row[0] < 0.5) continue;
    const double dx = row[1] * scale.x_range;
    const double y = pic.ego_y + row[2] * scale.y_range;
    const int lane = static_cast<int>(std::lround(y / road.lane_width));
    TrafficPicture::Neighbor n;
    n.speed = pic.ego_speed + row[3] * scale.v_range;
    n.gap = std::abs(dx) - vehicle_length;
    if (dx >= 0.0) {
      pic.ahead.emplace_back(lane, n);
    } else {
      pic.behind.emplace_back(lane, n);
    }
  }
  // The end of a merge ramp behaves like a stopped leader in that lane.
  if (const int ramp = road.ramp_lane(); ramp >= 0) {
    const double gap = std::max(road.merge_ramp_end_x - pic.ego_x - 0.5 * vehicle_length, 0.0);
    pic.ahead.emplace_back(ramp, TrafficPicture::Neighbor{gap, 0.0});
  }
  return pic;
}

RuleDecision decide(const Observation& obs, FsmState state, const RuleParams& params,
                    const RoadConfig& road, const ObservationScale& scale) {
  const TrafficPicture pic = read_observation(obs, road, scale);
  const auto leader = pic.leader(pic.ego_lane);
  const double trigger = params.headway_change_trigger;

  auto cruise_action = [&] {
    if (!leader || headway(*leader, pic.ego_speed) >= trigger) return EgoAction::Faster;
    if (headway(*leader, pic.ego_speed) < 0.5 * trigger) return EgoAction::Slower;
    return EgoAction::Idle;
  };
  auto has_candidate_lane = [&] {
    return lane_open(pic.ego_lane - 1, pic.ego_x, road) || lane_open(pic.ego_lane + 1, pic.ego_x, road);
  };

  switch (state) {
    case FsmState::CruiseFollow: {
      const bool crowded = leader && headway(*leader, pic.ego_speed) < trigger;
      return {cruise_action(), crowded && has_candidate_lane() ? FsmState::PrepareLaneChange
                                                               : FsmState::CruiseFollow};
    }
    case FsmState::PrepareLaneChange: {
      if (leader) {
        for (const auto& [offset, action] : {std::pair{-1, EgoAction::LaneLeft}, std::pair{1, EgoAction::LaneRight}}) {
          const int lane = pic.ego_lane + offset;
          if (!lane_open(lane, pic.ego_x, road)) continue;
          const auto front = pic.leader(lane);
          const auto rear = pic.follower(lane);
          const bool front_ok = !front || front->gap >= params.gap_accept_front;
          const bool rear_ok = !rear || rear->gap >= params.gap_accept_rear;
          const bool faster = !front || front->speed - leader->speed >= params.speed_advantage_min;
          if (front_ok && rear_ok && faster) return {action, FsmState::ExecuteLaneChange};
        }
      }
      return {EgoAction::Slower, FsmState::CruiseFollow};
    }
    case FsmState::ExecuteLaneChange: {
      const double offset = std::abs(pic.ego_y - road.lane_center(pic.ego_lane));
      return {EgoAction::Idle, offset < kSettleTolerance ? FsmState::CruiseFollow : FsmState::ExecuteLaneChange};
    }
  }
  return {};
}

}  // namespace hrl
