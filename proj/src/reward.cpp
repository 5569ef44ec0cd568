#include "hrl/reward.hpp"

#include <algorithm>
#include <cmath>

#include "hrl/errors.hpp"

namespace hrl {

void RewardWeights::validate() const {
  if (!(safety >= 0.0) || !(comfort >= 0.0) || !(efficiency >= 0.0))
    throw ConfigError("reward weights must be >= 0");
  if (!(safety > 0.0 || comfort > 0.0 || efficiency > 0.0))
    throw ConfigError("at least one reward weight must be > 0");
}

void RewardParams::validate() const {
  if (!(tau_safe > 0.0)) throw ConfigError("reward.tau_safe must be > 0");
  if (!(a_max > 0.0)) throw ConfigError("reward.a_max must be > 0");
  if (!(kappa_lane_change >= 0.0 && kappa_lane_change <= 1.0))
    throw ConfigError("reward.kappa_lane_change must be in [0, 1]");
  if (!(v_min > 0.0) || !(v_max > v_min)) throw ConfigError("reward speeds need v_max > v_min > 0");
}

double safety_term(bool crashed, std::optional<double> gap, double ego_speed, const RewardParams& p) {
  if (crashed) return -1.0;
  if (!gap) return 0.0;
  const double headway = std::max(*gap, 0.0) / std::max(ego_speed, 0.1);
  return -0.5 * std::clamp(1.0 - headway / p.tau_safe, 0.0, 1.0);
}

double comfort_term(double mean_abs_accel, bool lane_change_initiated, const RewardParams& p) {
  const double ratio = std::min(mean_abs_accel / p.a_max, 1.0);
  return -(ratio * ratio) - (lane_change_initiated ? p.kappa_lane_change : 0.0);
}

double efficiency_term(double ego_speed, const RewardParams& p) {
  return std::clamp((ego_speed - p.v_min) / (p.v_max - p.v_min), 0.0, 1.0);
}

double weighted_total(const RewardWeights& w, double safety, double comfort, double efficiency) {
  return w.safety * safety + w.comfort * comfort + w.efficiency * efficiency;
}

RewardBreakdown compute_reward(const PeriodSummary& period, const RewardWeights& w,
                               const RewardParams& p) {
  RewardBreakdown r;
  r.safety = safety_term(period.crashed, period.leader_gap, period.ego_speed, p);
  r.comfort = comfort_term(period.mean_abs_accel, period.lane_change_initiated, p);
  r.efficiency = efficiency_term(period.ego_speed, p);
  r.total = weighted_total(w, r.safety, r.comfort, r.efficiency);
  return r;
}

}  // namespace hrl
