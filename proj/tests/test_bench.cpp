#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "kraft/bench.hpp"
#include "test_util.hpp"

namespace kraft {
namespace {

using nlohmann::json;

json minimal_env() {
  return json::parse(R"({
    "schema": 1,
    "bounds": [[0, 0], [10, 6]],
    "obstacles": [[[3, 0], [3.4, 0], [3.4, 4], [3, 4]]],
    "start": {"x": 1, "y": 1, "theta": 0, "v": 0},
    "goal": {"center": [9, 5], "epsilon": 0.4},
    "noise": {"sigma_xy": 0.02, "sigma_theta": 0.02},
    "true_params": {"L": 0.32, "phi_diff": 0.03, "v_delta": 1.1}
  })");
}

TEST(Environment, ParsesMinimalFile) {
  const Environment env = parse_environment(minimal_env());
  EXPECT_EQ(env.obstacles.size(), 1u);
  EXPECT_EQ(env.goal.x, 9.0);
  EXPECT_EQ(env.goal.epsilon, 0.4);
  EXPECT_EQ(env.true_params.wheelbase, 0.32);
  EXPECT_TRUE(env.features.empty());
}

TEST(Environment, JsonRoundTrip) {
  for (const char* name : {"turns", "slope", "slip", "bump", "movable", "boxes"}) {
    const Environment env = load_environment(test::kRoot / "envs" / (std::string(name) + ".json"));
    const json once = environment_to_json(env);
    const json twice = environment_to_json(parse_environment(once));
    EXPECT_EQ(once, twice) << name;
  }
}

TEST(Environment, ShippedTurnsHasNoFeatures) {
  const Environment env = load_environment(test::kRoot / "envs" / "turns.json");
  EXPECT_TRUE(env.features.empty());
  EXPECT_TRUE(env.movable.empty());
  EXPECT_GE(distance_to_closest_obstacle(env.start, env), 0.0);
}

void expect_error_mentions(const json& j, const std::string& field) {
  try {
    parse_environment(j);
    FAIL() << "expected EnvironmentError for " << field;
  } catch (const EnvironmentError& e) {
    EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
  }
}

TEST(Environment, ErrorsNameTheField) {
  json j = minimal_env();
  j["obstacles"].push_back(json::parse("[[0, 0], [1, 1]]"));
  expect_error_mentions(j, "obstacles[1]");

  j = minimal_env();
  j.erase("goal");
  expect_error_mentions(j, "goal");

  j = minimal_env();
  j["true_params"]["L"] = -1;
  expect_error_mentions(j, "L");

  j = minimal_env();
  j["schema"] = 2;
  expect_error_mentions(j, "schema");
}

TEST(Csv, HeaderOnlyAndRoundTrip) {
  std::stringstream empty;
  write_csv(empty, {});
  EXPECT_EQ(empty.str(), std::string(kCsvHeader) + "\n");
  EXPECT_TRUE(read_csv(empty).empty());

  MetricsRow a{"turns", "KRAFT", 28, 1, 1, 10.5};
  MetricsRow b{"turns", "OneShot+OpenLoop", 0, 30, 0, std::nan("")};
  std::stringstream ss;
  write_csv(ss, {a, b});
  const auto rows = read_csv(ss);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].framework, "KRAFT");
  EXPECT_EQ(rows[0].succ, 28);
  EXPECT_NEAR(rows[0].t_ex_mean, 10.5, 1e-9);
  EXPECT_TRUE(std::isnan(rows[1].t_ex_mean));

  std::stringstream bad("nope\n");
  EXPECT_THROW(read_csv(bad), std::runtime_error);
}

TEST(Aggregate, CountsAndMean) {
  std::vector<EpisodeResult> eps(4);
  eps[0].outcome = Outcome::kSucc;
  eps[0].t_ex = 10.0;
  eps[1].outcome = Outcome::kSucc;
  eps[1].t_ex = 12.0;
  eps[2].outcome = Outcome::kColl;
  eps[3].outcome = Outcome::kTimeout;
  const MetricsRow r = aggregate("e", "f", eps);
  EXPECT_EQ(r.succ, 2);
  EXPECT_EQ(r.coll, 1);
  EXPECT_EQ(r.timeout, 1);
  EXPECT_NEAR(r.t_ex_mean, 11.0, 1e-12);
  EXPECT_TRUE(std::isnan(aggregate("e", "f", {eps[2]}).t_ex_mean));
}

TEST(Suite, SingleTrialCountsSumToOne) {
  Suite s = load_suite(test::kRoot / "suites" / "smoke.json");
  s.trials = 1;
  s.frameworks = {"OneShot+OpenLoop", "KRAFT"};
  const auto rows = run_suite(s, 1);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) EXPECT_EQ(r.trials(), 1);
}

TEST(Suite, ThreadCountDoesNotChangeResults) {
  Suite s = load_suite(test::kRoot / "suites" / "smoke.json");
  s.frameworks = {"KRAFT"};
  const auto a = run_suite(s, 1);
  const auto b = run_suite(s, 2);
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(a[0].succ, b[0].succ);
  EXPECT_EQ(a[0].coll, b[0].coll);
  if (a[0].succ > 0) {
    EXPECT_EQ(a[0].t_ex_mean, b[0].t_ex_mean);
  }
}

TEST(Suite, RejectsZeroTrials) {
  json j = json::parse(R"({"name": "x", "environments": [], "frameworks": ["KRAFT"], "trials": 0})");
  EXPECT_THROW(parse_suite(j), std::invalid_argument);
}

TEST(Parallel, VisitsEveryIndexOnce) {
  std::vector<int> hits(97, 0);
  parallel_for(97, 4, [&](int i) { ++hits[i]; });
  for (int h : hits) EXPECT_EQ(h, 1);
}

TEST(Identification, RecoversTrueParameters) {
  const Environment env = load_environment(test::kRoot / "envs" / "turns.json");
  const auto r = identify_model(env, {0.3, 0.0, 1.0}, 1);
  EXPECT_NEAR(r.params.wheelbase, env.true_params.wheelbase, 0.02);
  EXPECT_NEAR(r.params.phi_diff, env.true_params.phi_diff, 0.01);
  EXPECT_NEAR(r.params.v_delta, env.true_params.v_delta, 0.02);
}

}  // namespace
}  // namespace kraft

namespace kraft {
namespace {

TEST(Suite, SingleTrivialTrialIsOneSuccess) {
  Environment env = test::open_env(4);
  env.goal.x = 1.5;
  const auto dir = std::filesystem::temp_directory_path() / "kraft_bench_test";
  std::filesystem::create_directories(dir);
  save_environment(dir / "near.json", env);
  Suite s;
  s.name = "near";
  s.environments = {dir / "near.json"};
  s.frameworks = {"KRAFT"};
  s.trials = 1;
  s.model = env.true_params;
  s.executive.planner.budget = 300;
  const auto rows = run_suite(s, 1);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].succ, 1);
  EXPECT_EQ(rows[0].coll, 0);
  EXPECT_EQ(rows[0].timeout, 0);
  EXPECT_TRUE(std::isfinite(rows[0].t_ex_mean));
}

}  // namespace
}  // namespace kraft
