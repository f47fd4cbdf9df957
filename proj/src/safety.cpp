#include "kraft/safety.hpp"

#include <cmath>

namespace kraft {

std::vector<Contingency> braking_contingencies(const State& s,
                                               const ControlLimits& limits,
                                               const ContingencySet& set) {
  std::vector<Contingency> out;
  out.reserve(set.steering_fractions.size());
  const double speed = std::abs(s.v);
  for (double fraction : set.steering_fractions) {
    Contingency c;
    if (speed > 0.0) {
      c.stop_time = speed / limits.a_brake + set.time_margin;
      c.plan.append(Control{0.0, fraction * limits.phi_max, true}, c.stop_time);
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::optional<Contingency> find_safe_contingency(
    const State& s, const ModelParams& params, const ControlLimits& limits,
    const ContingencySet& set, const Environment& env, double delta) {
  for (auto& c : braking_contingencies(s, limits, set)) {
    const Trajectory traj = rollout(s, c.plan, params, limits);
    bool clear = true;
    for (const auto& sample : traj.samples()) {
      if (distance_to_closest_obstacle(sample.state, env) <
          inflated_clearance(delta, sample.state.v)) {
        clear = false;
        break;
      }
    }
    if (clear) return std::move(c);
  }
  return std::nullopt;
}

bool safety_check(const State& s, const ModelParams& params,
                  const ControlLimits& limits, const ContingencySet& set,
                  const Environment& env, double delta) {
  return find_safe_contingency(s, params, limits, set, env, delta).has_value();
}

}  // namespace kraft
