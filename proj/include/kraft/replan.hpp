// Online executive: fixed planning cycles, future-root prediction, the
// pre-commit safety gate with contingency fallback, and the tracker loop,
// all stepped in lockstep with the simulated world.

#ifndef KRAFT_REPLAN_HPP_
#define KRAFT_REPLAN_HPP_

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "kraft/control.hpp"
#include "kraft/model.hpp"
#include "kraft/planner.hpp"
#include "kraft/safety.hpp"
#include "kraft/world.hpp"

namespace kraft {

enum class Strategy { kOneShot, kReplanner };

struct ExecutiveConfig {
  Strategy strategy = Strategy::kReplanner;
  TrackerMode tracker = TrackerMode::kKinodynamic;
  bool conservative = false;
  double cycle = 0.5;            // s
  double timeout = 60.0;         // s
  double control_period = 0.02;  // s, tracker rate
  PlannerConfig planner;         // budget per cycle
  int oneshot_budget = 20000;
  ModelParams model;             // parameters the executive believes in
  TrackerGains gains;
  bool record_trace = false;
  // Test hook: called with the cycle index; returning false fails the gate.
  std::function<bool(int)> gate_override;
};

// Canonical names: "OneShot+OpenLoop", "OneShot+Geometric",
// "OneShot+Kinodynamic", "Replanner+OpenLoop", "Cons. Replanner+OpenLoop",
// "KRAFT", "Conservative KRAFT". Parsing also accepts lower-case,
// hyphenated forms such as "conservative-kraft".
std::string framework_name(const ExecutiveConfig& cfg);
ExecutiveConfig parse_framework(const std::string& name,
                                ExecutiveConfig base = {});
std::vector<std::string> all_frameworks();

enum class Outcome { kSucc, kColl, kTimeout };
std::string to_string(Outcome o);

struct EpisodeResult {
  Outcome outcome = Outcome::kTimeout;
  double t_ex = std::numeric_limits<double>::quiet_NaN();  // Succ only
  double end_time = 0.0;
  int plan_cycles = 0;
  int plan_commits = 0;
  int contingency_commits = 0;
  int root_collisions = 0;
  std::vector<std::string> trace;  // JSONL lines when recorded
};

// Rollout end state of the plan's first `cycle` seconds (padded with a
// zero-throttle hold) from the estimate.
State predict_next_root(const State& estimate, const Plan& committed,
                        const ModelParams& params, const ControlLimits& limits,
                        double cycle);

// First `cycle` seconds of the plan, padded with a zero-throttle hold.
Plan pad_to(const Plan& plan, double cycle);

// Deterministic per-stream seed derivation.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

EpisodeResult run_episode(const Environment& env, const ExecutiveConfig& cfg,
                          std::uint64_t seed);

}  // namespace kraft

#endif  // KRAFT_REPLAN_HPP_
