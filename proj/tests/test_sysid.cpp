#include <algorithm>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "kraft/bench.hpp"
#include "kraft/sysid.hpp"
#include "test_util.hpp"

namespace kraft::sysid {
namespace {

Plan three_controls() {
  Plan p;
  p.append({1.0, 0.2}, 0.5);
  p.append({1.4, -0.3}, 0.5);
  p.append({0.8, 0.1}, 0.5);
  return p;
}

ObservationRecord obs_of(double t, const State& s, double sigma = 0.01) {
  return {t, s.x, s.y, s.theta, {sigma, sigma, sigma}};
}

// Noise-free observations taken from the model itself.
std::vector<ObservationRecord> exact_observations(const Plan& plan, const ModelParams& p,
                                                  const std::vector<double>& times) {
  std::vector<ObservationRecord> out;
  for (double t : times) {
    const Trajectory traj = rollout({}, plan.prefix(t), p, {});
    out.push_back(obs_of(t, traj.back().state));
  }
  return out;
}

Assignment exact_assignment(const FactorGraph& g, const ModelParams& p) {
  Assignment a;
  a.params = p;
  State s{};
  a.states.push_back(s);
  for (const auto& seg : g.plan.segments()) {
    s = propagate(s, seg.control, seg.dt, p, {});
    a.states.push_back(s);
    a.controls.push_back(seg.control);
  }
  return a;
}

TEST(BuildGraph, BoundaryObservationsStructure) {
  const Plan plan = three_controls();
  const auto z = exact_observations(plan, {}, {0.0, 0.5, 1.0, 1.5});
  const FactorGraph g = build_graph(plan, z, {});
  EXPECT_EQ(g.state_node_count(), 4u);
  EXPECT_EQ(g.dynamics_factor_count(), 3u);
  ASSERT_EQ(g.estimation_factors.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(g.estimation_factors[k].node, k);
    EXPECT_EQ(g.estimation_factors[k].eps, 0.0);
  }
}

TEST(BuildGraph, MidSegmentObservation) {
  const Plan plan = three_controls();
  const auto z = exact_observations(plan, {}, {0.75});
  const FactorGraph g = build_graph(plan, z, {});
  ASSERT_EQ(g.estimation_factors.size(), 1u);
  EXPECT_EQ(g.estimation_factors[0].node, 1u);
  EXPECT_NEAR(g.estimation_factors[0].eps, 0.5, 1e-12);
}

TEST(BuildGraph, FactorCountOverRandomCases) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int c = 0; c < 25; ++c) {
    Plan plan;
    const int segs = 1 + static_cast<int>(U(rng) * 10);
    for (int i = 0; i < segs; ++i) plan.append({U(rng) * 2, U(rng) - 0.5}, 0.1 + U(rng));
    std::vector<double> times;
    const int nobs = 1 + static_cast<int>(U(rng) * 30);
    for (int i = 0; i < nobs; ++i) times.push_back(U(rng) * plan.duration());
    const FactorGraph g = build_graph(plan, exact_observations(plan, {}, times), {});
    EXPECT_EQ(g.factor_count(), 2u * segs + nobs + 1);
    const auto r = residuals(g, exact_assignment(g, {}));
    EXPECT_EQ(static_cast<std::size_t>(r.size()), g.residual_dimension());
  }
}

TEST(BuildGraph, ObservationOutsideHorizonNamed) {
  const Plan plan = three_controls();
  auto z = exact_observations(plan, {}, {0.1, 0.2});
  z.push_back(obs_of(9.0, {}));
  try {
    build_graph(plan, z, {});
    FAIL() << "expected ObservationOutOfHorizon";
  } catch (const ObservationOutOfHorizon& e) {
    EXPECT_EQ(e.index, 2u);
  }
}

TEST(Residuals, ExactFitIsZero) {
  const Plan plan = three_controls();
  const ModelParams p{0.31, 0.04, 1.15};
  const auto z = exact_observations(plan, p, {0.0, 0.13, 0.5, 0.77, 1.21, 1.5});
  const FactorGraph g = build_graph(plan, z, p);
  EXPECT_LE(residuals(g, exact_assignment(g, p)).norm(), 1e-9);
}

TEST(Residuals, PerturbedNodeShiftsAdjacentDynamics) {
  const Plan plan = three_controls();
  GraphOptions opt;
  opt.dynamics_sigma = 1.0;
  const auto z = exact_observations(plan, {}, {0.0});
  const FactorGraph g = build_graph(plan, z, {}, 0.0, opt);
  Assignment a = exact_assignment(g, {});
  const Eigen::VectorXd r0 = residuals(g, a);
  a.states[1].x += 0.1;
  const Eigen::VectorXd r1 = residuals(g, a);
  // Block order: 3 control priors (2 rows each), then dynamics (4 rows each).
  const Eigen::Index dyn0 = 6;
  // Factor 0 compares X_1 against the prediction: +0.1 in x.
  EXPECT_NEAR(r1[dyn0] - r0[dyn0], 0.1, 1e-12);
  // Factor 1 predicts from X_1; x enters the flow additively: -0.1 in x.
  EXPECT_NEAR(r1[dyn0 + 4] - r0[dyn0 + 4], -0.1, 1e-12);
  // Factor 2 does not touch X_1.
  EXPECT_NEAR(r1[dyn0 + 8] - r0[dyn0 + 8], 0.0, 1e-15);
}

TEST(Residuals, DoublingSigmaHalvesBlock) {
  const Plan plan = three_controls();
  auto z = exact_observations(plan, {}, {0.3});
  z[0].x += 0.05;
  const FactorGraph g1 = build_graph(plan, z, {});
  for (double& s : z[0].sigma) s *= 2;
  const FactorGraph g2 = build_graph(plan, z, {});
  const Assignment a = exact_assignment(g1, {});
  const auto r1 = residuals(g1, a);
  const auto r2 = residuals(g2, a);
  const Eigen::Index est = 6 + 12;
  EXPECT_NEAR(r2[est], 0.5 * r1[est], 1e-12);
}

TEST(InitialGuess, ZeroPlanKeepsFirstPose) {
  Plan plan;
  plan.append({0.0, 0.0}, 0.5);
  plan.append({0.0, 0.0}, 0.5);
  const ObservationRecord z0 = obs_of(0.0, {1.0, 2.0, 0.3, 0.0});
  const Assignment a = initial_guess(z0, plan, {});
  for (const auto& s : a.states) {
    EXPECT_EQ(s.x, 1.0);
    EXPECT_EQ(s.y, 2.0);
    EXPECT_EQ(s.theta, 0.3);
  }
}

TEST(InitialGuess, OnlyEstimationResidualsRemain) {
  const Plan plan = three_controls();
  auto z = exact_observations(plan, {0.3, 0.05, 1.2}, {0.0, 0.4, 0.9, 1.5});
  const FactorGraph g = build_graph(plan, z, {0.28, 0.0, 1.0});
  const Assignment a = initial_guess(g);
  const auto r = residuals(g, a);
  // Control priors and dynamics rows: 3*2 + 3*4 = 18; all exactly satisfied.
  EXPECT_LE(r.head(18).norm(), 1e-12);
  EXPECT_GT(r.segment(18, 12).norm(), 1e-3);  // parameters are off
}

TEST(Solve, NoiselessRecovery) {
  const ModelParams truth{0.30, 0.05, 1.20};
  Environment env = test::open_env(100);
  env.true_params = truth;
  const auto log = record_training_log(env, excitation_plan(20, 0.75), 3);
  const FactorGraph g = build_graph(log.plan, log.observations, {0.35, 0.0, 1.0}, log.t0);
  const SolveResult r = solve(g, initial_guess(g));
  EXPECT_NEAR(r.params.wheelbase, truth.wheelbase, 1e-4);
  EXPECT_NEAR(r.params.phi_diff, truth.phi_diff, 1e-4);
  EXPECT_NEAR(r.params.v_delta, truth.v_delta, 1e-4);
  EXPECT_LE(r.final_cost, r.initial_cost);
}

TEST(Solve, ExactInitialisationIsFixedPoint) {
  const Plan plan = three_controls();
  const ModelParams p{0.31, 0.04, 1.15};
  const auto z = exact_observations(plan, p, {0.0, 0.2, 0.6, 1.1, 1.5});
  const FactorGraph g = build_graph(plan, z, p);
  const Assignment a = exact_assignment(g, p);
  const SolveResult r = solve(g, a);
  EXPECT_LE(r.iterations, 2);
  EXPECT_LE(r.final_cost, cost(g, a));
}

TEST(Solve, AcceptedStepsNeverIncreaseCost) {
  Environment env = test::open_env(100);
  env.true_params = {0.30, 0.05, 1.20};
  env.noise = {0.01, 0.01};
  const auto log = record_training_log(env, excitation_plan(10, 0.75), 8);
  const FactorGraph g = build_graph(log.plan, log.observations, {0.32, 0.04, 1.1}, log.t0);
  SolverOptions opt;
  opt.relaxation.clear();  // one LM run, so the trace shares one objective
  const SolveResult r = solve(g, initial_guess(g), opt);
  double last = r.initial_cost;
  for (const auto& it : r.trace) {
    if (!it.accepted) continue;
    EXPECT_LE(it.cost, last);
    last = it.cost;
  }
}

TEST(Solve, UnexcitedWheelbaseReportsNoInformation) {
  // No steering and no offset: the yaw rate is zero whatever L is.
  Environment env = test::open_env(100);
  env.true_params = {0.30, 0.0, 1.2};
  Plan plan;
  for (int i = 0; i < 6; ++i) plan.append({0.6 + 0.15 * i, 0.0}, 0.5);
  const auto log = record_training_log(env, plan, 2);
  const FactorGraph g = build_graph(log.plan, log.observations, {0.3, 0.0, 1.0}, log.t0);
  const SolveResult r = solve(g, initial_guess(g));
  EXPECT_NE(r.termination, Termination::kMaxIterations);
  EXPECT_LT(r.param_information[0], 1e-6 * r.param_information[2]);
  EXPECT_NEAR(r.params.v_delta, 1.2, 1e-4);
}

TEST(Solve, ObservationOrderDoesNotMatter) {
  Environment env = test::open_env(100);
  env.true_params = {0.30, 0.05, 1.20};
  env.noise = {0.01, 0.01};
  const auto log = record_training_log(env, excitation_plan(8, 0.75), 5);
  auto shuffled = log.observations;
  std::mt19937_64 rng(1);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const ModelParams guess{0.32, 0.03, 1.1};
  const FactorGraph g1 = build_graph(log.plan, log.observations, guess, log.t0);
  const FactorGraph g2 = build_graph(log.plan, shuffled, guess, log.t0);
  const SolveResult a = solve(g1, initial_guess(g1));
  const SolveResult b = solve(g2, initial_guess(g2));
  EXPECT_NEAR(a.params.wheelbase, b.params.wheelbase, 1e-8);
  EXPECT_NEAR(a.params.phi_diff, b.params.phi_diff, 1e-8);
  EXPECT_NEAR(a.params.v_delta, b.params.v_delta, 1e-8);
}

TEST(Log, RoundTrip) {
  TrainingLog log;
  log.t0 = 1.0;
  log.plan = three_controls();
  log.observations = exact_observations(log.plan, {}, {0.2, 0.9});
  std::stringstream ss;
  write_log(ss, log);
  const TrainingLog back = read_log(ss);
  EXPECT_EQ(back.t0, 1.0);
  EXPECT_EQ(back.plan, log.plan);
  ASSERT_EQ(back.observations.size(), 2u);
  EXPECT_EQ(back.observations[1].x, log.observations[1].x);
}

TEST(Log, ErrorsNameTheLine) {
  std::stringstream ss;
  ss << R"({"t": 0, "kind": "control", "nu": 1, "phi": 0, "dt": 0.5})" << "\n"
     << R"({"t": 0.1, "kind": "obs", "x": 0})" << "\n";
  try {
    read_log(ss);
    FAIL() << "expected SysIdError";
  } catch (const SysIdError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace kraft::sysid
