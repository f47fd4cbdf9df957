#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "kraft/model.hpp"

namespace kraft {
namespace {

constexpr double kPi = std::numbers::pi;

// Independent explicit Euler integrator, written against the model equations
// rather than against derivative().
State euler(State s, double nu, double phi, double T, double h,
            const ModelParams& p, const ControlLimits& lim) {
  const long n = std::lround(T / h);
  for (long i = 0; i < n; ++i) {
    const double dx = s.v * std::cos(s.theta);
    const double dy = s.v * std::sin(s.theta);
    const double dth = s.v / p.wheelbase * std::tan(phi + p.phi_diff);
    const double dv = lim.k_acc * (p.v_delta * nu - s.v);
    s.x += h * dx;
    s.y += h * dy;
    s.theta += h * dth;
    s.v += h * dv;
  }
  return s;
}

double max_err(const State& a, const State& b) {
  return std::max({std::abs(a.x - b.x), std::abs(a.y - b.y),
                   std::abs(angle_diff(a.theta, b.theta)), std::abs(a.v - b.v)});
}

TEST(Derivative, RestStaysAtRest) {
  const StateDerivative d = derivative({}, {}, {0.3, 0.1, 1.3}, {});
  EXPECT_EQ(d.dx, 0.0);
  EXPECT_EQ(d.dy, 0.0);
  EXPECT_EQ(d.dtheta, 0.0);
  EXPECT_EQ(d.dv, 0.0);
}

TEST(Derivative, SteadyStraight) {
  const ModelParams p{0.3, 0.0, 1.25};
  const StateDerivative d = derivative({0, 0, 0, 1}, {1.0 / p.v_delta, 0.0}, p, {});
  EXPECT_DOUBLE_EQ(d.dx, 1.0);
  EXPECT_DOUBLE_EQ(d.dy, 0.0);
  EXPECT_DOUBLE_EQ(d.dtheta, 0.0);
  EXPECT_NEAR(d.dv, 0.0, 1e-15);
}

TEST(Derivative, UnitRadiusArc) {
  // phi + phi_diff = pi/4 with L = 1 gives R = 1 m.
  const ModelParams p{1.0, 0.05, 1.0};
  const StateDerivative d = derivative({0, 0, 0, 1}, {1.0, kPi / 4 - 0.05}, p, {});
  EXPECT_NEAR(d.dtheta, 1.0, 1e-12);
}

TEST(Derivative, SteeringOffsetCancelsYaw) {
  const ModelParams p{0.3, 0.07, 1.0};
  const StateDerivative d = derivative({0, 0, 0.4, 1.5}, {1.0, -0.07}, p, {});
  EXPECT_EQ(d.dtheta, 0.0);
}

TEST(Propagate, SteadyStraightOneSecond) {
  const ModelParams p{0.3, 0.0, 1.0};
  const State s = propagate({0, 0, 0, 1}, {1.0, 0.0}, 1.0, p, {});
  EXPECT_NEAR(s.x, 1.0, 1e-12);
  EXPECT_NEAR(s.y, 0.0, 1e-12);
  EXPECT_NEAR(s.theta, 0.0, 1e-12);
  EXPECT_NEAR(s.v, 1.0, 1e-12);
}

TEST(Propagate, ClosedFormArc) {
  // R = 1 m, v = 1 m/s for 1 s: theta = 1, position on the unit circle
  // centred at (0, 1).
  const ModelParams p{1.0, 0.0, 1.0};
  ControlLimits lim;
  lim.phi_max = 1.0;
  const State s = propagate({0, 0, 0, 1}, {1.0, kPi / 4}, 1.0, p, lim);
  EXPECT_NEAR(s.theta, 1.0, 1e-9);
  EXPECT_NEAR(s.x, std::sin(1.0), 1e-9);
  EXPECT_NEAR(s.y, 1.0 - std::cos(1.0), 1e-9);
}

TEST(Propagate, MatchesFineEulerOracle) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const ControlLimits lim;
  for (int c = 0; c < 20; ++c) {
    const ModelParams p{0.25 + 0.1 * U(rng), 0.04 * (U(rng) - 0.5), 0.9 + 0.3 * U(rng)};
    const State s{U(rng), U(rng), 6 * U(rng) - 3, lim.v_max * U(rng)};
    const double nu = std::min(lim.nu_max, lim.v_max / p.v_delta) * U(rng);
    const double phi = lim.phi_max * (2 * U(rng) - 1);
    const State rk = propagate(s, {nu, phi}, 1.0, p, lim);
    // Richardson-extrapolated Euler at 1e-5: O(h^2) accurate.
    const State a = euler(s, nu, phi, 1.0, 1e-5, p, lim);
    const State b = euler(s, nu, phi, 1.0, 5e-6, p, lim);
    const State oracle{2 * b.x - a.x, 2 * b.y - a.y, 2 * b.theta - a.theta, 2 * b.v - a.v};
    EXPECT_LE(max_err(rk, oracle), 1e-6) << "case " << c;
  }
}

TEST(Propagate, FourthOrderUnderStepHalving) {
  const ModelParams p{0.3, 0.02, 1.1};
  const ControlLimits lim;
  const State s{0, 0, 0.3, 0.5};
  const Control u{1.4, 0.35};
  const State ref = propagate(s, u, 1.0, p, lim);  // h = 0.01
  const auto with_step = [&](double h) {
    State cur = s;
    for (int i = 0; i < std::lround(1.0 / h); ++i) cur = integrate_step(cur, u, h, p, lim);
    return cur;
  };
  const double e1 = max_err(with_step(0.2), ref);
  const double e2 = max_err(with_step(0.1), ref);
  const double order = std::log2(e1 / e2);
  EXPECT_GT(order, 3.5);
  EXPECT_LT(order, 4.6);
}

TEST(Propagate, SpeedStaysWithinLimits) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const ControlLimits lim;
  const ModelParams p{0.3, 0.0, 1.4};
  for (int c = 0; c < 200; ++c) {
    const Control u{3.0 * U(rng), 2 * U(rng) - 1, U(rng) < 0.2};
    const State s = propagate({0, 0, 0, lim.v_max * U(rng)}, u, 0.05 + U(rng), p, lim);
    EXPECT_GE(s.v, lim.v_min);
    EXPECT_LE(s.v, lim.v_max);
  }
}

TEST(Propagate, MirrorSymmetry) {
  const ModelParams p{0.3, 0.0, 1.0};
  const State a = propagate({0, 0, 0, 1}, {1.2, 0.3}, 1.3, p, {});
  const State b = propagate({0, 0, 0, 1}, {1.2, -0.3}, 1.3, p, {});
  EXPECT_NEAR(a.x, b.x, 1e-12);
  EXPECT_NEAR(a.y, -b.y, 1e-12);
  EXPECT_NEAR(a.theta, -b.theta, 1e-12);
  EXPECT_NEAR(a.v, b.v, 1e-12);
}

TEST(Propagate, BrakeStopsAtComputedDistance) {
  ControlLimits lim;
  lim.a_brake = 4.0;
  const State s = propagate({0, 0, 0, 2}, {0, 0, true}, 1.0, {0.3, 0.0, 1.0}, lim);
  EXPECT_EQ(s.v, 0.0);
  EXPECT_NEAR(s.x, 2.0 * 2.0 / (2 * 4.0), 1e-9);
}

TEST(Rollout, EmptyPlanSingleSample) {
  const Trajectory t = rollout({1, 2, 0.5, 0.3}, Plan{}, {}, {});
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t[0].state.x, 1.0);
  EXPECT_EQ(t[0].t, 0.0);
}

TEST(Rollout, TwoStraightSegments) {
  Plan plan;
  plan.append({1.0, 0.0}, 1.0);
  plan.append({1.0, 0.0}, 1.0);
  const Trajectory t = rollout({0, 0, 0, 1}, plan, {0.3, 0.0, 1.0}, {});
  EXPECT_NEAR(t.back().state.x, 2.0, 1e-12);
  EXPECT_NEAR(t.end_time(), 2.0, 1e-12);
}

TEST(Rollout, SamplesReproduceByRePropagation) {
  Plan plan;
  plan.append({1.5, 0.3}, 0.37);
  plan.append({0.8, -0.4}, 0.51);
  plan.append({0.0, 0.0, true}, 0.4);
  const ModelParams p{0.31, 0.02, 1.1};
  const Trajectory t = rollout({0, 0, 0, 0.5}, plan, p, {});
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    const double tm = t[i].t;
    const Control u = plan[plan.segment_at(tm + 1e-12)].control;
    const State next = propagate(t[i].state, u, t[i + 1].t - tm, p, {});
    EXPECT_LE(max_err(next, t[i + 1].state), 1e-9) << "sample " << i;
  }
}

TEST(Rollout, SemigroupProperty) {
  Plan p1, p2;
  p1.append({1.2, 0.2}, 0.5);
  p1.append({0.7, -0.1}, 0.3);
  p2.append({1.9, 0.4}, 0.6);
  Plan both = p1;
  both.append(p2);
  const ModelParams p{0.3, 0.01, 1.05};
  const State s{0, 0, 0.2, 0.4};
  const State mid = rollout(s, p1, p, {}).back().state;
  const State split = rollout(mid, p2, p, {}).back().state;
  EXPECT_LE(max_err(rollout(s, both, p, {}).back().state, split), 1e-12);
}

TEST(Interpolate, SampleTimeIsExact) {
  Plan plan;
  plan.append({1.0, 0.2}, 0.5);
  const Trajectory t = rollout({0, 0, 0, 1}, plan, {}, {});
  const State s = interpolate(t, t[10].t);
  EXPECT_EQ(s.x, t[10].state.x);
  EXPECT_EQ(s.theta, t[10].state.theta);
}

TEST(Interpolate, StraightMidpointIsMean) {
  const State m = interpolate(State{0, 0, 0, 1}, State{2, 4, 0, 3}, 0.5);
  EXPECT_DOUBLE_EQ(m.x, 1.0);
  EXPECT_DOUBLE_EQ(m.y, 2.0);
  EXPECT_DOUBLE_EQ(m.v, 2.0);
}

TEST(Interpolate, AngleWrapsThroughPi) {
  const State m = interpolate(State{0, 0, 3.0, 0}, State{0, 0, -3.0, 0}, 0.5);
  // Unwrapped: -3.0 is 2*pi - 3.0 ahead of 3.0; the midpoint sits at pi.
  EXPECT_NEAR(std::abs(m.theta), kPi, 1e-12);
}

TEST(Interpolate, OutsideSpanThrows) {
  const Trajectory t = rollout({}, Plan{}, {}, {});
  EXPECT_THROW(interpolate(t, 1.0), std::out_of_range);
}

TEST(Clamp, InRangeUnchanged) {
  const Control u{1.0, 0.2};
  const Control c = clamp(u, {});
  EXPECT_EQ(c.nu, 1.0);
  EXPECT_EQ(c.phi, 0.2);
}

TEST(Clamp, SaturatesAndIsIdempotent) {
  const ControlLimits lim;
  const Control c = clamp({5.0, -3.0}, lim);
  EXPECT_EQ(c.nu, lim.nu_max);
  EXPECT_EQ(c.phi, -lim.phi_max);
  const Control cc = clamp(c, lim);
  EXPECT_EQ(cc.nu, c.nu);
  EXPECT_EQ(cc.phi, c.phi);
}

TEST(Plan, SegmentAtUsesHalfOpenIntervals) {
  Plan plan;
  plan.append({1.0, 0.0}, 0.5);
  plan.append({2.0, 0.0}, 0.5);
  EXPECT_EQ(plan.segment_at(0.0), 0u);
  EXPECT_EQ(plan.segment_at(0.5), 1u);
  EXPECT_EQ(plan.segment_at(1.0), 2u);
}

TEST(Plan, PrefixSuffixSplitStraddlingSegment) {
  Plan plan;
  plan.append({1.0, 0.0}, 0.4);
  plan.append({2.0, 0.1}, 0.4);
  const Plan pre = plan.prefix(0.5);
  const Plan post = plan.suffix(0.5);
  EXPECT_NEAR(pre.duration(), 0.5, 1e-12);
  EXPECT_NEAR(post.duration(), 0.3, 1e-12);
  ASSERT_EQ(post.size(), 1u);
  EXPECT_EQ(post[0].control.nu, 2.0);
}

TEST(Angles, WrapRange) {
  for (double a : {-10.0, -kPi, 0.0, kPi, 7.0}) {
    const double w = wrap_angle(a);
    EXPECT_GT(w, -kPi - 1e-12);
    EXPECT_LE(w, kPi + 1e-12);
    EXPECT_NEAR(std::remainder(w - a, 2 * kPi), 0.0, 1e-12);
  }
  EXPECT_NEAR(angle_diff(-3.0, 3.0), 2 * kPi - 6.0, 1e-12);
}

}  // namespace
}  // namespace kraft
