// Low-level trackers for a committed trajectory: open-loop playback,
// geometric path following (windowed nearest point, lookahead, PID) and
// kinodynamic trajectory tracking (Stanley, time-indexed reference).
//
// Trackers never see the environment; they only get the state estimate and
// the committed plan/trajectory. Sign convention: positive steering turns
// left, a positive cross-track error means the path lies to the robot's left.

#ifndef KRAFT_CONTROL_HPP_
#define KRAFT_CONTROL_HPP_

#include <cstddef>

#include "kraft/model.hpp"

namespace kraft {

enum class TrackerMode { kOpenLoop, kGeometric, kKinodynamic };

struct TrackerGains {
  // Geometric path follower.
  double k_p = 1.5;
  double k_i = 0.0;
  double k_d = 0.2;
  double lookahead = 0.5;        // m
  double k_distance = 2.0;       // commanded speed per metre to the target
  std::size_t window = 50;       // samples searched past the last nearest
  // Stanley tracker.
  double k_stanley = 3.0;
  double v_eps = 0.1;
  double k_speed = 0.3;          // on (v_ref - v_hat)
  double k_station = 1.0;        // on along-track lag, 1/s
};

struct TrackingError {
  double cross_track = 0.0;  // m, positive when the reference is to the left
  double heading = 0.0;      // rad, reference minus actual, shortest arc
  double speed = 0.0;        // m/s, reference minus actual
  double along_track = 0.0;  // m, positive when the robot lags the reference
};

// Errors against interpolate(traj, t). Throws std::out_of_range outside the
// trajectory span.
TrackingError tracking_error(const State& estimate, const Trajectory& traj,
                             double t);

struct TrackerState {
  TrackerMode mode = TrackerMode::kKinodynamic;
  TrackerGains gains;
  ModelParams params;
  ControlLimits limits;

  // Committed plan and its predicted trajectory, both starting at t = 0.
  Plan plan;
  Trajectory trajectory;

  std::size_t window_index = 0;
  double integral = 0.0;
  double previous_error = 0.0;
  bool has_previous = false;

  // Replaces the committed trajectory and resets the per-commit memory.
  void commit(Plan p, Trajectory traj);
};

// Segment control active at t; zero-throttle hold past the end.
Control open_loop_control(const Plan& plan, double t);

// dt is the time since the previous call (for the PID terms).
Control geometric_control(const State& estimate, TrackerState& ts, double dt);

// t is the time since the commit.
Control stanley_control(const State& estimate, const TrackerState& ts,
                        double t);

// Dispatches on ts.mode and clamps the result.
Control track(const State& estimate, TrackerState& ts, double t, double dt);

}  // namespace kraft

#endif  // KRAFT_CONTROL_HPP_
