#include "kraft/control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kraft {

TrackingError tracking_error(const State& estimate, const Trajectory& traj,
                             double t) {
  const State ref = interpolate(traj, t);
  const double dx = estimate.x - ref.x;
  const double dy = estimate.y - ref.y;
  const double c = std::cos(ref.theta);
  const double s = std::sin(ref.theta);
  TrackingError e;
  e.cross_track = -(-s * dx + c * dy);
  e.along_track = -(c * dx + s * dy);
  e.heading = angle_diff(ref.theta, estimate.theta);
  e.speed = ref.v - estimate.v;
  return e;
}

void TrackerState::commit(Plan p, Trajectory traj) {
  plan = std::move(p);
  trajectory = std::move(traj);
  window_index = 0;
  integral = 0.0;
  previous_error = 0.0;
  has_previous = false;
}

Control open_loop_control(const Plan& plan, double t) {
  const std::size_t i = plan.segment_at(t);
  if (i >= plan.size() || t < 0.0) return Control{};
  return plan[i].control;
}

Control geometric_control(const State& estimate, TrackerState& ts, double dt) {
  const auto samples = ts.trajectory.samples();
  const std::size_t n = samples.size();
  const auto dist_to = [&](std::size_t j) {
    return std::hypot(samples[j].state.x - estimate.x,
                      samples[j].state.y - estimate.y);
  };

  std::size_t nearest = std::min(ts.window_index, n - 1);
  double best = dist_to(nearest);
  const std::size_t last = std::min(n - 1, ts.window_index + ts.gains.window);
  for (std::size_t j = nearest + 1; j <= last; ++j) {
    const double d = dist_to(j);
    if (d < best) {
      best = d;
      nearest = j;
    }
  }
  ts.window_index = nearest;

  // Walk the lookahead distance along the path from the nearest point.
  std::size_t target = nearest;
  double arc = 0.0;
  while (target + 1 < n && arc < ts.gains.lookahead) {
    arc += std::hypot(samples[target + 1].state.x - samples[target].state.x,
                      samples[target + 1].state.y - samples[target].state.y);
    ++target;
  }
  const double tx = samples[target].state.x - estimate.x;
  const double ty = samples[target].state.y - estimate.y;
  const double dist = std::hypot(tx, ty);
  const double alpha =
      dist < 1e-9 ? 0.0 : angle_diff(std::atan2(ty, tx), estimate.theta);

  ts.integral += alpha * dt;
  const double rate =
      ts.has_previous && dt > 0.0 ? (alpha - ts.previous_error) / dt : 0.0;
  ts.previous_error = alpha;
  ts.has_previous = true;

  Control u;
  u.phi = ts.gains.k_p * alpha + ts.gains.k_i * ts.integral + ts.gains.k_d * rate;
  const Control ref = open_loop_control(
      ts.plan, samples[nearest].t - ts.trajectory.start_time());
  if (ref.brake) {
    u.brake = true;
    return u;
  }
  u.nu = ts.gains.k_distance * dist / ts.params.v_delta;
  return u;
}

Control stanley_control(const State& estimate, const TrackerState& ts,
                        double t) {
  const double tq =
      std::clamp(t, ts.trajectory.start_time(), ts.trajectory.end_time());
  const TrackingError e = tracking_error(estimate, ts.trajectory, tq);
  const Control ff = open_loop_control(ts.plan, t);

  Control u;
  u.phi = e.heading +
          std::atan2(ts.gains.k_stanley * e.cross_track,
                     std::abs(estimate.v) + ts.gains.v_eps) +
          ff.phi;
  if (ff.brake) {
    u.brake = true;
    return u;
  }
  const double correction =
      ts.gains.k_station * e.along_track + ts.gains.k_speed * e.speed;
  u.nu = ff.nu + correction / ts.params.v_delta;
  return u;
}

Control track(const State& estimate, TrackerState& ts, double t, double dt) {
  if (ts.trajectory.empty()) return clamp(open_loop_control(ts.plan, t), ts.limits);
  switch (ts.mode) {
    case TrackerMode::kOpenLoop:
      return clamp(open_loop_control(ts.plan, t), ts.limits);
    case TrackerMode::kGeometric:
      return clamp(geometric_control(estimate, ts, dt), ts.limits);
    case TrackerMode::kKinodynamic:
      return clamp(stanley_control(estimate, ts, t), ts.limits);
  }
  return Control{};
}

}  // namespace kraft
