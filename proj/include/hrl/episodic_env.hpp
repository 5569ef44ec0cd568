#pragma once

#include <cstddef>
#include <vector>

namespace hrl {

struct EnvStep {
  std::vector<double> observation;
  double reward = 0.0;
  bool terminated = false;  ///< absorbing end: collision, off-road, terminal MDP state
  bool truncated = false;   ///< time limit; the next state still has value
};

/// Minimal episodic interface the learners train against. Implementations
/// decide how episodes are seeded.
class EpisodicEnv {
 public:
  virtual ~EpisodicEnv() = default;

  virtual std::size_t observation_size() const = 0;
  virtual std::size_t action_count() const = 0;
  virtual std::vector<double> reset() = 0;
  virtual EnvStep step(std::size_t action) = 0;
};

}  // namespace hrl
