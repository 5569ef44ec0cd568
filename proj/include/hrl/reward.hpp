#pragma once

#include <optional>

namespace hrl {

/// Relative importance of the safety, comfort and efficiency terms.
struct RewardWeights {
  double safety = 1.0;
  double comfort = 0.3;
  double efficiency = 0.7;

  void validate() const;
};

struct RewardParams {
  double tau_safe = 1.5;          ///< safe time headway, s
  double a_max = 5.0;             ///< m/s^2, normalizes the acceleration penalty
  double kappa_lane_change = 0.1; ///< flat penalty per initiated lane change
  double v_min = 20.0;            ///< m/s, efficiency is 0 at or below
  double v_max = 30.0;            ///< m/s, efficiency is 1 at or above

  void validate() const;
};

/// Per-decision reward with its components. `total` is always produced by
/// `weighted_total` and is never recomputed downstream.
struct RewardBreakdown {
  double safety = 0.0;      ///< in [-1, 0]
  double comfort = 0.0;     ///< in [-2, 0]
  double efficiency = 0.0;  ///< in [0, 1]
  double total = 0.0;
};

/// What the reward needs to know about one decision period.
struct PeriodSummary {
  bool crashed = false;
  std::optional<double> leader_gap;  ///< bumper gap to the same-lane leader, m
  double ego_speed = 0.0;            ///< at the end of the period, m/s
  double mean_abs_accel = 0.0;       ///< mean |a| over the sub-steps, m/s^2
  bool lane_change_initiated = false;
};

double safety_term(bool crashed, std::optional<double> gap, double ego_speed, const RewardParams& p);
double comfort_term(double mean_abs_accel, bool lane_change_initiated, const RewardParams& p);
double efficiency_term(double ego_speed, const RewardParams& p);

/// The one place the weighted sum is evaluated.
double weighted_total(const RewardWeights& w, double safety, double comfort, double efficiency);

RewardBreakdown compute_reward(const PeriodSummary& period, const RewardWeights& w,
                               const RewardParams& p);

}  // namespace hrl
