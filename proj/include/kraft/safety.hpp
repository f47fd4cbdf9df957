// Braking contingencies and the safety predicate: a state is safe when some
// contingency brings the robot to rest while keeping delta clearance.

#ifndef KRAFT_SAFETY_HPP_
#define KRAFT_SAFETY_HPP_

#include <optional>
#include <vector>

#include "kraft/model.hpp"
#include "kraft/world.hpp"

namespace kraft {

struct Contingency {
  Plan plan;
  double stop_time = 0.0;
};

// The contingency set: maximal braking with steering held at each fraction
// of phi_max, tried in order.
struct ContingencySet {
  std::vector<double> steering_fractions{0.0, -1.0, 1.0};
  double time_margin = kIntegrationStep;
};

std::vector<Contingency> braking_contingencies(
    const State& s, const ControlLimits& limits,
    const ContingencySet& set = {});

// Required clearance at a sample moving at speed v: delta plus the distance
// that can be covered between two integration samples.
inline double inflated_clearance(double delta, double v) {
  return delta + (v < 0.0 ? -v : v) * kIntegrationStep;
}

// First contingency whose rollout keeps inflated delta clearance at every
// sub-step sample until the robot stops.
std::optional<Contingency> find_safe_contingency(
    const State& s, const ModelParams& params, const ControlLimits& limits,
    const ContingencySet& set, const Environment& env, double delta);

bool safety_check(const State& s, const ModelParams& params,
                  const ControlLimits& limits, const ContingencySet& set,
                  const Environment& env, double delta);

}  // namespace kraft

#endif  // KRAFT_SAFETY_HPP_
