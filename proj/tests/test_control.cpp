#include <cmath>

#include <gtest/gtest.h>

#include "kraft/control.hpp"
#include "kraft/world.hpp"
#include "test_util.hpp"

namespace kraft {
namespace {

Plan arc_plan() {
  Plan p;
  p.append({1.0, 0.0}, 1.0);
  p.append({1.2, 0.3}, 2.0);
  p.append({1.0, -0.2}, 1.5);
  return p;
}

TrackerState committed(TrackerMode mode, const Plan& plan, const State& start) {
  TrackerState ts;
  ts.mode = mode;
  ts.commit(plan, rollout(start, plan, ts.params, ts.limits));
  return ts;
}

TEST(TrackingError, OnReferenceIsZero) {
  const Plan plan = arc_plan();
  const Trajectory traj = rollout({}, plan, {}, {});
  for (double t : {0.0, 0.7, 2.2, 4.5}) {
    const TrackingError e = tracking_error(interpolate(traj, t), traj, t);
    EXPECT_NEAR(e.cross_track, 0.0, 1e-12);
    EXPECT_NEAR(e.heading, 0.0, 1e-12);
    EXPECT_NEAR(e.speed, 0.0, 1e-12);
    EXPECT_NEAR(e.along_track, 0.0, 1e-12);
  }
}

TEST(TrackingError, SignConventions) {
  Trajectory traj;
  traj.push_back(0.0, {0, 0, 0, 1.0});
  traj.push_back(1.0, {1, 0, 0, 1.0});
  // Robot right of the path, behind the reference and slower.
  const TrackingError e = tracking_error({0.3, -0.2, 0.1, 0.5}, traj, 0.5);
  EXPECT_NEAR(e.cross_track, 0.2, 1e-12);
  EXPECT_NEAR(e.along_track, 0.2, 1e-12);
  EXPECT_NEAR(e.heading, -0.1, 1e-12);
  EXPECT_NEAR(e.speed, 0.5, 1e-12);
  EXPECT_THROW(tracking_error({}, traj, 1.5), std::out_of_range);
}

TEST(OpenLoop, PlaysSegmentsThenHolds) {
  const Plan plan = arc_plan();
  EXPECT_EQ(open_loop_control(plan, 0.5).nu, 1.0);
  EXPECT_EQ(open_loop_control(plan, 1.0).phi, 0.3);
  EXPECT_EQ(open_loop_control(plan, 4.4).phi, -0.2);
  const Control hold = open_loop_control(plan, 4.5);
  EXPECT_EQ(hold.nu, 0.0);
  EXPECT_EQ(hold.phi, 0.0);
}

TEST(Stanley, OnReferenceReproducesFeedforward) {
  const Plan plan = arc_plan();
  const TrackerState ts = committed(TrackerMode::kKinodynamic, plan, {0, 0, 0, 1.0});
  for (double t : {0.2, 1.5, 3.7}) {
    const State on = interpolate(ts.trajectory, t);
    const Control u = stanley_control(on, ts, t);
    const Control ff = open_loop_control(plan, t);
    EXPECT_NEAR(u.phi, ff.phi, 1e-12);
    EXPECT_NEAR(u.nu, ff.nu, 1e-12);
  }
}

TEST(Stanley, SteersTowardPath) {
  const Plan plan = arc_plan();
  const TrackerState ts = committed(TrackerMode::kKinodynamic, plan, {0, 0, 0, 1.0});
  State off = interpolate(ts.trajectory, 0.5);
  off.y -= 0.3;  // path is to the left
  EXPECT_GT(stanley_control(off, ts, 0.5).phi, 0.0);
  off.y += 0.6;
  EXPECT_LT(stanley_control(off, ts, 0.5).phi, 0.0);
}

TEST(Stanley, LaggingRobotSpeedsUp) {
  const Plan plan = arc_plan();
  const TrackerState ts = committed(TrackerMode::kKinodynamic, plan, {0, 0, 0, 1.0});
  const State behind = interpolate(ts.trajectory, 0.3);
  EXPECT_GT(stanley_control(behind, ts, 0.6).nu, open_loop_control(plan, 0.6).nu);
}

TEST(Geometric, WindowOnlyMovesForward) {
  const Plan plan = arc_plan();
  TrackerState ts = committed(TrackerMode::kGeometric, plan, {0, 0, 0, 1.0});
  geometric_control(interpolate(ts.trajectory, 2.0), ts, 0.02);
  const std::size_t after = ts.window_index;
  EXPECT_GT(after, 0u);
  EXPECT_LE(after, ts.gains.window);
  geometric_control(interpolate(ts.trajectory, 0.0), ts, 0.02);
  EXPECT_GE(ts.window_index, after);
}

TEST(Geometric, CommitResetsMemory) {
  const Plan plan = arc_plan();
  TrackerState ts = committed(TrackerMode::kGeometric, plan, {0, 0, 0, 1.0});
  geometric_control({0.2, 0.1, 0.0, 1.0}, ts, 0.02);
  geometric_control({0.4, 0.1, 0.0, 1.0}, ts, 0.02);
  ts.commit(plan, rollout({}, plan, ts.params, ts.limits));
  EXPECT_EQ(ts.window_index, 0u);
  EXPECT_EQ(ts.integral, 0.0);
  EXPECT_FALSE(ts.has_previous);
}

TEST(Track, OutputIsClamped) {
  const Plan plan = arc_plan();
  TrackerState ts = committed(TrackerMode::kKinodynamic, plan, {0, 0, 0, 1.0});
  const Control u = track({0, -5, 3.0, 0.0}, ts, 0.1, 0.02);
  EXPECT_LE(std::abs(u.phi), ts.limits.phi_max);
  EXPECT_LE(u.nu, ts.limits.nu_max);
  EXPECT_GE(u.nu, ts.limits.nu_min);
}

// Closed loop against a mismatched world: feedback keeps the robot closer to
// the reference than playback does.
double final_error(TrackerMode mode) {
  Environment env = test::open_env();
  env.true_params = {0.34, 0.04, 1.15};
  const Plan plan = arc_plan();
  TrackerState ts = committed(mode, plan, {});
  WorldState w = make_world(env, 1);
  const double dt = 0.02;
  for (int k = 0; k * dt < plan.duration() - 1e-9; ++k) {
    const Control u = track(w.robot, ts, k * dt, dt);
    step(w, u, dt, env);
  }
  const State ref = ts.trajectory.back().state;
  return std::hypot(w.robot.x - ref.x, w.robot.y - ref.y);
}

TEST(Track, FeedbackBeatsOpenLoopUnderMismatch) {
  const double ol = final_error(TrackerMode::kOpenLoop);
  const double kino = final_error(TrackerMode::kKinodynamic);
  const double geo = final_error(TrackerMode::kGeometric);
  EXPECT_GT(ol, 0.2);
  EXPECT_LT(kino, 0.5 * ol);
  EXPECT_LT(geo, ol);
}

}  // namespace
}  // namespace kraft

namespace kraft {
namespace {

Plan straight_plan(double duration) {
  Plan p;
  p.append({1.0, 0.0}, duration);
  return p;
}

TEST(TrackingError, PureLateralOffset) {
  const Trajectory traj = rollout({0, 0, 0, 1.0}, straight_plan(2.0), {}, {});
  const State ref = interpolate(traj, 1.0);
  const TrackingError left = tracking_error({ref.x, 0.3, 0, 1.0}, traj, 1.0);
  EXPECT_NEAR(left.cross_track, -0.3, 1e-12);
  EXPECT_NEAR(left.heading, 0.0, 1e-12);
  EXPECT_NEAR(left.speed, 0.0, 1e-12);
  const TrackingError right = tracking_error({ref.x, -0.3, 0, 1.0}, traj, 1.0);
  EXPECT_NEAR(right.cross_track, 0.3, 1e-12);
}

TEST(TrackingError, SignOnKnownArc) {
  // Left turn of radius 1 about (0, 1): a robot at the centre side of the
  // arc is left of the path, so the path lies to its right.
  ControlLimits lim;
  lim.phi_max = 1.0;
  Plan p;
  p.append({1.0, std::atan(1.0)}, 1.0);
  const Trajectory traj = rollout({0, 0, 0, 1.0}, p, {1.0, 0.0, 1.0}, lim);
  const State ref = interpolate(traj, 1.0);
  const double toward_centre = 0.1;
  const State inside{ref.x + toward_centre * (0.0 - ref.x),
                     ref.y + toward_centre * (1.0 - ref.y), ref.theta, 1.0};
  EXPECT_NEAR(tracking_error(inside, traj, 1.0).cross_track, -toward_centre, 1e-9);
}

TEST(Geometric, AlignedOnPathSteersStraight) {
  TrackerState ts = committed(TrackerMode::kGeometric, straight_plan(3.0), {0, 0, 0, 1.0});
  EXPECT_NEAR(geometric_control({0.5, 0, 0, 1.0}, ts, 0.02).phi, 0.0, 1e-12);
}

TEST(Geometric, LeftOffsetSteersRight) {
  TrackerState ts = committed(TrackerMode::kGeometric, straight_plan(3.0), {0, 0, 0, 1.0});
  EXPECT_LT(geometric_control({0.5, 0.2, 0, 1.0}, ts, 0.02).phi, 0.0);
}

TEST(Stanley, CorrectionIsArctanOfCrossTrack) {
  TrackerState ts = committed(TrackerMode::kKinodynamic, straight_plan(3.0), {0, 0, 0, 1.0});
  ts.gains.k_stanley = 1.0;
  ts.gains.v_eps = 0.0;
  const double e = 0.3;
  const State ref = interpolate(ts.trajectory, 1.0);
  EXPECT_NEAR(stanley_control({ref.x, -e, 0, 1.0}, ts, 1.0).phi, std::atan(e), 1e-12);
}

struct StepResponse {
  double itae = 0.0;
  double error_after_3s = 0.0;
};

// 0.2 m lateral offset from a straight reference in the feature-free world.
StepResponse offset_response(TrackerMode mode) {
  const Environment env = test::open_env();
  const Plan plan = straight_plan(6.0);
  TrackerState ts = committed(mode, plan, {0, 0, 0, 1.0});
  WorldState w = make_world(env, 1);
  w.robot = {0, 0.2, 0, 1.0};
  StepResponse r;
  const double dt = 0.02;
  for (int k = 0; k < 250; ++k) {
    const double t = k * dt;
    step(w, track(w.robot, ts, t, dt), dt, env);
    const double e = std::abs(w.robot.y);
    r.itae += (t + dt) * e * dt;
    if (t + dt >= 3.0 - 1e-9) r.error_after_3s = std::max(r.error_after_3s, e);
  }
  return r;
}

TEST(Geometric, OffsetStepConverges) {
  EXPECT_LT(offset_response(TrackerMode::kGeometric).error_after_3s, 0.02);
}

TEST(Stanley, OffsetStepBeatsGeometric) {
  const StepResponse stanley = offset_response(TrackerMode::kKinodynamic);
  const StepResponse geo = offset_response(TrackerMode::kGeometric);
  EXPECT_LT(stanley.error_after_3s, 0.02);
  EXPECT_LT(stanley.itae, geo.itae);
}

}  // namespace
}  // namespace kraft
