// Command-line front end: single episodes, identification, single-shot
// planning and benchmark suites.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kraft/bench.hpp"
#include "kraft/planner.hpp"
#include "kraft/replan.hpp"
#include "kraft/sysid.hpp"

namespace {

using nlohmann::json;
using namespace kraft;

struct ModelChoice {
  std::string source = "identify";  // "identify", "true" or a JSON file
};

ModelParams resolve_model(const Environment& env, const ModelChoice& choice,
                          std::uint64_t seed) {
  if (choice.source == "true") return env.true_params;
  if (choice.source == "identify") return identify_model(env, ModelParams{}, seed).params;
  std::ifstream in(choice.source);
  if (!in) throw std::runtime_error(choice.source + ": cannot open");
  return parse_params(json::parse(in), choice.source + ": ");
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  return out;
}

int cmd_run(const std::string& env_path, const std::string& framework,
            std::uint64_t seed, bool conservative, int budget, double margin,
            double timeout, const ModelChoice& model, const std::string& trace) {
  const Environment env = load_environment(env_path);
  ExecutiveConfig base;
  base.planner.budget = budget;
  base.planner.collision_margin = margin;
  base.timeout = timeout;
  ExecutiveConfig cfg = parse_framework(framework, base);
  if (conservative) cfg.conservative = true;
  cfg.model = resolve_model(env, model, seed);
  cfg.record_trace = !trace.empty();

  const EpisodeResult r = run_episode(env, cfg, seed);
  if (!trace.empty()) write_trace(trace, r);
  json summary = {{"env", env.name},
                  {"framework", framework_name(cfg)},
                  {"seed", seed},
                  {"outcome", to_string(r.outcome)},
                  {"end_time", r.end_time},
                  {"plan_cycles", r.plan_cycles},
                  {"plan_commits", r.plan_commits},
                  {"contingency_commits", r.contingency_commits}};
  if (r.outcome == Outcome::kSucc) summary["t_ex"] = r.t_ex;
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_gen_log(const std::string& env_path, std::uint64_t seed,
                const std::string& out_path) {
  const Environment env = load_environment(env_path);
  const sysid::TrainingLog log =
      record_training_log(env, excitation_plan(), seed);
  std::ofstream out = open_out(out_path);
  sysid::write_log(out, log);
  return 0;
}

int cmd_sysid(const std::string& log_path, const std::string& init,
              const std::string& out_path) {
  std::ifstream in(log_path);
  if (!in) throw std::runtime_error(log_path + ": cannot open");
  const sysid::TrainingLog log = sysid::read_log(in);

  ModelParams guess;
  if (!init.empty() && std::filesystem::exists(init)) {
    std::ifstream f(init);
    guess = parse_params(json::parse(f), init + ": ");
  } else if (!init.empty()) {
    // Inline "L,phi_diff,v_delta".
    std::stringstream ss(init);
    std::string item;
    std::vector<double> v;
    while (std::getline(ss, item, ',')) v.push_back(std::stod(item));
    if (v.size() != 3) throw std::runtime_error("--init: expected a file or L,phi_diff,v_delta");
    guess = parse_params(json{{"L", v[0]}, {"phi_diff", v[1]}, {"v_delta", v[2]}}, "--init ");
  }
  const sysid::FactorGraph g =
      sysid::build_graph(log.plan, log.observations, guess, log.t0);
  const sysid::SolveResult r = sysid::solve(g, sysid::initial_guess(g));

  json j = params_to_json(r.params);
  j["iterations"] = r.iterations;
  j["final_cost"] = r.final_cost;
  if (!out_path.empty()) {
    std::ofstream out = open_out(out_path);
    out << j.dump(2) << "\n";
  }
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_plan(const std::string& env_path, std::uint64_t seed, int budget,
             double margin, const std::string& trace) {
  const Environment env = load_environment(env_path);
  PlanningProblem problem;
  problem.env = &env;
  problem.params = env.true_params;
  problem.limits = env.limits;
  problem.heuristic = euclidean_heuristic(env.goal, env.limits.v_max);
  PlannerConfig cfg;
  cfg.budget = budget;
  cfg.cycle = std::numeric_limits<double>::infinity();
  cfg.collision_margin = margin;
  const TreePlanner planner(std::move(problem), cfg);
  Rng rng(seed);
  const PlanCycleResult r = planner.plan_cycle(env.start, Plan{}, rng);

  if (!trace.empty()) {
    std::ofstream out = open_out(trace);
    for (const auto& s : r.solution.trajectory.samples()) {
      out << json{{"t", s.t},
                  {"state", {s.state.x, s.state.y, s.state.theta, s.state.v}}}
                 .dump()
          << "\n";
    }
  }
  json summary = {{"env", env.name},
                  {"reaches_goal", r.solution.reaches_goal},
                  {"tree_size", r.tree_size},
                  {"segments", r.solution.plan.size()}};
  summary["cost"] = r.solution.reaches_goal ? json(r.solution.cost) : json(nullptr);
  std::cout << summary.dump() << "\n";
  return r.solution.reaches_goal ? 0 : 1;
}

int cmd_bench_run(const std::string& suite_path, int threads,
                  const std::string& out_path) {
  const Suite suite = load_suite(suite_path);
  const auto rows = run_suite(suite, threads);
  if (!out_path.empty()) {
    std::ofstream out = open_out(out_path);
    write_csv(out, rows);
  } else {
    write_csv(std::cout, rows);
  }
  std::cerr << format_table(rows);
  return 0;
}

int cmd_bench_table(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error(csv_path + ": cannot open");
  std::cout << format_table(read_csv(in));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Replanning executive, planner and benchmark tools"};
  app.require_subcommand(1);

  std::string env_path, framework = "KRAFT", trace, out_path, log_path, init;
  std::string suite_path, csv_path;
  std::uint64_t seed = 0;
  bool conservative = false;
  int budget = 1000, threads = 0;
  double margin = 0.15, timeout = 60.0;
  ModelChoice model;

  auto* run = app.add_subcommand("run", "Run one episode");
  run->add_option("--env", env_path, "Environment file")->required();
  run->add_option("--mode,--framework", framework, "Framework name");
  run->add_option("--seed", seed);
  run->add_flag("--conservative", conservative, "Enable the safety gate");
  run->add_option("--budget", budget, "Planner iterations per cycle");
  run->add_option("--margin", margin, "Planner collision margin (m)");
  run->add_option("--timeout", timeout, "Episode timeout (s)");
  run->add_option("--model", model.source,
                  "\"identify\", \"true\" or a parameter JSON file");
  run->add_option("--trace", trace, "JSONL trace output");

  auto* gen = app.add_subcommand("gen-log", "Record a synthetic training log");
  gen->add_option("--env", env_path)->required();
  gen->add_option("--seed", seed);
  gen->add_option("--out", out_path)->required();

  auto* sysid = app.add_subcommand("sysid", "Identify model parameters");
  sysid->add_option("--log", log_path, "JSONL training log")->required();
  sysid->add_option("--init", init, "Initial parameters: JSON file or L,phi_diff,v_delta");
  sysid->add_option("--out", out_path, "Identified parameter JSON");

  auto* plan = app.add_subcommand("plan", "Single-shot plan from the start");
  plan->add_option("--env", env_path)->required();
  plan->add_option("--seed", seed);
  plan->add_option("--budget", budget);
  plan->add_option("--margin", margin);
  plan->add_option("--trace", trace, "JSONL trajectory output");

  auto* bench = app.add_subcommand("bench", "Benchmark suites");
  bench->require_subcommand(1);
  auto* bench_run = bench->add_subcommand("run", "Run a suite");
  bench_run->add_option("--suite", suite_path)->required();
  bench_run->add_option("--threads", threads, "Workers (default KRAFT_THREADS)");
  bench_run->add_option("--out", out_path, "CSV output (default stdout)");
  auto* bench_table = bench->add_subcommand("table", "Format a results CSV");
  bench_table->add_option("csv", csv_path)->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) {
      return cmd_run(env_path, framework, seed, conservative, budget, margin,
                     timeout, model, trace);
    }
    if (*gen) return cmd_gen_log(env_path, seed, out_path);
    if (*sysid) return cmd_sysid(log_path, init, out_path);
    if (*plan) return cmd_plan(env_path, seed, budget, margin, trace);
    if (*bench_run) return cmd_bench_run(suite_path, threads, out_path);
    if (*bench_table) return cmd_bench_table(csv_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
