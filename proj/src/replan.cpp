#include "kraft/replan.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace kraft {
namespace {

using json = nlohmann::json;

constexpr double kTimeEps = 1e-9;

json state_json(const State& s) { return json::array({s.x, s.y, s.theta, s.v}); }

json plan_json(const Plan& p) {
  json segs = json::array();
  for (const auto& seg : p.segments()) {
    segs.push_back({seg.control.nu, seg.control.phi, seg.control.brake, seg.dt});
  }
  return segs;
}

class TraceWriter {
 public:
  TraceWriter(bool enabled, std::vector<std::string>& out)
      : enabled_(enabled), out_(out) {}

  void emit(double t, const char* type, json fields) {
    if (!enabled_) return;
    fields["t"] = t;
    fields["type"] = type;
    out_.push_back(fields.dump());
  }

  [[nodiscard]] bool enabled() const { return enabled_; }

 private:
  bool enabled_;
  std::vector<std::string>& out_;
};

std::string normalize(std::string s) {
  std::string out;
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || c == '+') out.push_back(static_cast<char>(std::tolower(u)));
  }
  return out;
}

// A contingency anchored at the state its rollout starts from.
struct Anchored {
  Plan plan;
  State anchor;
};

}  // namespace

std::string framework_name(const ExecutiveConfig& cfg) {
  const char* tracker = cfg.tracker == TrackerMode::kOpenLoop    ? "OpenLoop"
                        : cfg.tracker == TrackerMode::kGeometric ? "Geometric"
                                                                 : "Kinodynamic";
  if (cfg.strategy == Strategy::kOneShot) return std::string("OneShot+") + tracker;
  if (cfg.tracker == TrackerMode::kKinodynamic) {
    return cfg.conservative ? "Conservative KRAFT" : "KRAFT";
  }
  return std::string(cfg.conservative ? "Cons. Replanner+" : "Replanner+") + tracker;
}

std::vector<std::string> all_frameworks() {
  return {"OneShot+OpenLoop",   "OneShot+Geometric",
          "OneShot+Kinodynamic", "Replanner+OpenLoop",
          "Cons. Replanner+OpenLoop", "KRAFT",
          "Conservative KRAFT"};
}

ExecutiveConfig parse_framework(const std::string& name, ExecutiveConfig base) {
  const std::string key = normalize(name);
  for (const auto& candidate : all_frameworks()) {
    ExecutiveConfig cfg = base;
    const std::string n = normalize(candidate);
    cfg.conservative = n.rfind("cons", 0) == 0;
    cfg.strategy =
        n.find("oneshot") != std::string::npos ? Strategy::kOneShot : Strategy::kReplanner;
    cfg.tracker = n.find("openloop") != std::string::npos    ? TrackerMode::kOpenLoop
                  : n.find("geometric") != std::string::npos ? TrackerMode::kGeometric
                                                             : TrackerMode::kKinodynamic;
    const std::string alt = cfg.conservative && n.rfind("conservative", 0) != 0
                                ? "conservative" + n.substr(4)
                                : n;
    if (key == n || key == alt) return cfg;
  }
  throw std::invalid_argument("unknown framework: " + name);
}

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::kSucc: return "Succ";
    case Outcome::kColl: return "Coll";
    case Outcome::kTimeout: return "Timeout";
  }
  return "?";
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined value.
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + stream * 0xD1B54A32D192ED03ULL +
                    0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Plan pad_to(const Plan& plan, double cycle) {
  Plan out = plan.prefix(cycle);
  const double missing = cycle - out.duration();
  if (missing > kTimeEps) out.append(Control{}, missing);
  return out;
}

State predict_next_root(const State& estimate, const Plan& committed,
                        const ModelParams& params, const ControlLimits& limits,
                        double cycle) {
  const Trajectory traj =
      rollout(estimate, pad_to(committed, cycle), params, limits);
  return traj.back().state;
}

EpisodeResult run_episode(const Environment& env, const ExecutiveConfig& cfg,
                          std::uint64_t seed) {
  if (!(cfg.cycle > 0.0)) throw std::invalid_argument("cycle must be > 0");
  if (!(cfg.timeout > cfg.cycle)) throw std::invalid_argument("timeout must exceed cycle");
  if (!(cfg.control_period > 0.0)) {
    throw std::invalid_argument("control period must be > 0");
  }

  EpisodeResult result;
  TraceWriter trace(cfg.record_trace, result.trace);
  WorldState world = make_world(env, derive_seed(seed, 1));
  Rng planner_rng(derive_seed(seed, 2));

  const bool oneshot = cfg.strategy == Strategy::kOneShot;
  const ControlLimits& limits = env.limits;
  PlanningProblem problem;
  problem.env = &env;
  problem.params = cfg.model;
  problem.limits = limits;
  PlannerConfig pc = cfg.planner;
  pc.conservative = cfg.conservative;
  pc.cycle = oneshot ? std::numeric_limits<double>::infinity() : cfg.cycle;
  if (oneshot) pc.budget = cfg.oneshot_budget;
  const TreePlanner planner(problem, pc);
  const double delta = pc.delta;

  TrackerState ts;
  ts.mode = cfg.tracker;
  ts.gains = cfg.gains;
  ts.params = cfg.model;
  ts.limits = limits;

  const int ticks_per_cycle =
      std::max(1, static_cast<int>(std::lround(cfg.cycle / cfg.control_period)));
  const long max_ticks =
      static_cast<long>(std::ceil(cfg.timeout / cfg.control_period - kTimeEps));

  State estimate = env.start;
  trace.emit(0.0, "start", {{"state", state_json(env.start)},
                            {"framework", framework_name(cfg)},
                            {"seed", seed}});

  if (in_goal(world.robot, env.goal)) {
    result.outcome = Outcome::kSucc;
    result.t_ex = 0.0;
    trace.emit(0.0, "outcome", {{"outcome", "Succ"}});
    return result;
  }

  auto run_planner = [&](const State& root, const Plan& previous,
                         double t) -> std::optional<PlanCycleResult> {
    ++result.plan_cycles;
    PlanCycleResult r = planner.plan_cycle(root, previous, planner_rng);
    if (r.status == PlanStatus::kRootInCollision) {
      ++result.root_collisions;
      trace.emit(t, "root_collision", {{"root", state_json(root)}});
      return std::nullopt;
    }
    trace.emit(t, "plan", {{"root", state_json(root)},
                           {"reaches_goal", r.solution.reaches_goal},
                           {"duration", r.solution.plan.duration()},
                           {"tree_size", r.tree_size}});
    return r;
  };

  std::optional<PlanCycleResult> pending = run_planner(env.start, Plan{}, 0.0);
  std::optional<Anchored> contingency;  // verified for the current commit's end
  Plan remaining;                       // long-horizon plan beyond the commit
  double v_hat = 0.0;

  // Predicted state after one cycle of the tracker following `plan` under
  // the model, starting from the current estimate.
  auto tracked_end = [&](const Plan& plan, const Trajectory& reference) {
    TrackerState trial = ts;
    trial.commit(plan, reference);
    State s = estimate;
    for (int j = 0; j < ticks_per_cycle; ++j) {
      const Control u = track(s, trial, j * cfg.control_period, cfg.control_period);
      s = propagate(s, u, cfg.control_period, cfg.model, limits);
    }
    return s;
  };

  for (long tick = 0; tick < max_ticks; ++tick) {
    const double t = static_cast<double>(tick) * cfg.control_period;
    const bool boundary =
        oneshot ? tick == 0 : tick % ticks_per_cycle == 0;

    if (boundary) {
      const int cycle_index = static_cast<int>(tick / ticks_per_cycle);
      Plan commit_plan;
      Trajectory commit_traj;
      State next_root;
      bool committed_plan = false;

      if (pending && !pending->solution.plan.empty()) {
        if (oneshot) {
          commit_plan = pending->solution.plan;
          commit_traj = pending->solution.trajectory;
          committed_plan = true;
        } else {
          const Plan padded = pad_to(pending->committed_plan, cfg.cycle);
          const State root = pending->committed.front().state;
          const Trajectory reference = rollout(root, padded, cfg.model, limits);
          const State end = tracked_end(padded, reference);
          bool pass = true;
          std::optional<Contingency> gamma;
          if (cfg.conservative) {
            gamma = find_safe_contingency(end, cfg.model, limits,
                                          pc.contingencies, env, delta);
            pass = gamma.has_value();
          }
          if (cfg.gate_override && !cfg.gate_override(cycle_index)) pass = false;
          if (pass) {
            commit_plan = padded;
            commit_traj = reference;
            next_root = end;
            committed_plan = true;
            contingency = gamma ? std::optional<Anchored>(Anchored{gamma->plan, end})
                                : std::nullopt;
            remaining = pending->solution.plan.suffix(cfg.cycle);
          }
        }
      }

      if (!committed_plan) {
        Anchored gamma;
        if (contingency) {
          gamma = *contingency;
        } else {
          const auto fresh = cfg.conservative
                                 ? find_safe_contingency(estimate, cfg.model, limits,
                                                         pc.contingencies, env, delta)
                                 : std::nullopt;
          gamma.anchor = estimate;
          gamma.plan = fresh ? fresh->plan
                             : braking_contingencies(estimate, limits,
                                                     pc.contingencies)
                                   .front()
                                   .plan;
        }
        commit_plan = oneshot ? gamma.plan : pad_to(gamma.plan, cfg.cycle);
        if (commit_plan.empty()) commit_plan.append(Control{0.0, 0.0, true}, cfg.cycle);
        commit_traj = rollout(gamma.anchor, commit_plan, cfg.model, limits);
        next_root = tracked_end(commit_plan, commit_traj);
        // The rest of the same maneuver stays valid for the next cycle.
        const Trajectory g = rollout(gamma.anchor, pad_to(gamma.plan, cfg.cycle),
                                     cfg.model, limits);
        contingency = Anchored{gamma.plan.suffix(cfg.cycle), g.back().state};
        remaining = remaining.suffix(cfg.cycle);
        ++result.contingency_commits;
        trace.emit(t, "contingency", {{"cycle", cycle_index},
                                      {"plan", plan_json(commit_plan)},
                                      {"anchor", state_json(gamma.anchor)}});
      } else {
        ++result.plan_commits;
        trace.emit(t, "commit", {{"cycle", cycle_index},
                                 {"estimate", state_json(estimate)},
                                 {"plan", plan_json(commit_plan)},
                                 {"predicted_end", state_json(commit_traj.back().state)}});
      }
      ts.commit(commit_plan, commit_traj);

      if (!oneshot) {
        pending = run_planner(next_root, remaining, t);
      } else {
        pending.reset();
      }
    }

    const double t_rel =
        oneshot ? t
                : static_cast<double>(tick % ticks_per_cycle) * cfg.control_period;
    const Control u = track(estimate, ts, t_rel, cfg.control_period);
    const auto collision = step(world, u, cfg.control_period, env);
    // Speed implied by the issued commands under the model's speed response.
    v_hat = propagate(State{0.0, 0.0, 0.0, v_hat}, u, cfg.control_period,
                      cfg.model, limits)
                .v;
    const Observation obs = observe(world, env.noise, env);
    estimate = State{obs.x, obs.y, obs.theta, v_hat};

    if (trace.enabled()) {
      trace.emit(world.clock, "tick",
                 {{"u", {u.nu, u.phi, u.brake}},
                  {"state", state_json(world.robot)},
                  {"obs", {obs.t_obs, obs.x, obs.y, obs.theta, obs.v_reported}}});
    }
    result.end_time = world.clock;
    if (collision) {
      result.outcome = Outcome::kColl;
      trace.emit(world.clock, "collision",
                 {{"position", {collision->position.x, collision->position.y}},
                  {"obstacle", collision->obstacle}});
      trace.emit(world.clock, "outcome", {{"outcome", "Coll"}});
      return result;
    }
    if (in_goal(world.robot, env.goal)) {
      result.outcome = Outcome::kSucc;
      result.t_ex = world.clock;
      trace.emit(world.clock, "outcome", {{"outcome", "Succ"}});
      return result;
    }
  }
  result.outcome = Outcome::kTimeout;
  trace.emit(result.end_time, "outcome", {{"outcome", "Timeout"}});
  return result;
}

}  // namespace kraft
