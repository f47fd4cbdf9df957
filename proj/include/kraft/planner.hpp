// Informed, anytime kinodynamic tree planner with previous-plan retainment and
// safety-gated edges.
//
// Each planning cycle grows a tree rooted at the predicted state for the
// start of the next cycle. Edges are sampled piecewise-constant controls
// propagated with the approximate model. In conservative mode every edge
// keeps delta clearance and any edge that crosses the cycle boundary must
// leave a state from which a braking contingency is safe.

#ifndef KRAFT_PLANNER_HPP_
#define KRAFT_PLANNER_HPP_

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <unordered_map>
#include <vector>

#include "kraft/model.hpp"
#include "kraft/safety.hpp"
#include "kraft/world.hpp"

namespace kraft {

using Rng = std::mt19937_64;

struct PlannerConfig {
  int budget = 1000;  // iterations
  // Planning cycle duration. Infinity means no cycle boundary (single shot).
  double cycle = 0.5;
  int blossom = 3;
  double dt_min = 0.2;
  double dt_max = 1.0;
  double goal_bias = 0.3;
  double forward_bias = 0.7;
  // Share of the steering range edges may use; the rest is left to the tracker.
  double steering_fraction = 1.0;
  double selection_radius = 1.0;  // m
  bool conservative = false;
  double delta = 0.15;
  // Clearance every edge sample must keep. Conservative mode uses the larger
  // of this and the speed-inflated delta.
  double collision_margin = 0.0;
  // Wall-clock planning time in seconds; replaces `budget` when set.
  std::optional<double> time_budget;
  ContingencySet contingencies;
};

// Estimated remaining duration to the goal region.
using Heuristic = std::function<double(const State&)>;

// max(0, |q - q_G| - epsilon) / v_max: zero inside the goal, admissible for
// the duration cost.
Heuristic euclidean_heuristic(const GoalRegion& goal, double v_max);

struct PlanningProblem {
  const Environment* env = nullptr;
  ModelParams params;
  ControlLimits limits;
  Heuristic heuristic;

  [[nodiscard]] const GoalRegion& goal() const { return env->goal; }
};

struct TreeNode {
  State state;
  double arrival_time = 0.0;  // relative to the root
  int parent = -1;
  Control control;  // incoming edge
  double dt = 0.0;
  double h = 0.0;
  bool in_goal = false;
  bool expanded = false;  // already chosen by the informed branch

  [[nodiscard]] double cost() const { return arrival_time; }
};

class Tree {
 public:
  Tree(const State& root, double h_root, bool root_in_goal);

  std::size_t add(const TreeNode& node);

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] const TreeNode& operator[](std::size_t i) const {
    return nodes_[i];
  }
  TreeNode& mutable_node(std::size_t i) { return nodes_[i]; }
  [[nodiscard]] const std::vector<TreeNode>& nodes() const { return nodes_; }

  [[nodiscard]] int best_goal() const { return best_goal_; }
  [[nodiscard]] double best_cost() const { return best_cost_; }

  // Node indices from the root to `node`, root first.
  [[nodiscard]] std::vector<std::size_t> path_to(std::size_t node) const;
  [[nodiscard]] Plan plan_to(std::size_t node) const;

  // Nodes whose (x, y) lies within `radius` of p, in insertion order per cell.
  [[nodiscard]] std::vector<std::size_t> near(double x, double y,
                                              double radius) const;
  [[nodiscard]] std::size_t nearest(double x, double y) const;

 private:
  [[nodiscard]] long long cell_key(long long cx, long long cy) const;

  std::vector<TreeNode> nodes_;
  std::unordered_map<long long, std::vector<std::size_t>> grid_;
  long long min_cell_x_ = std::numeric_limits<long long>::max();
  long long max_cell_x_ = std::numeric_limits<long long>::min();
  long long min_cell_y_ = std::numeric_limits<long long>::max();
  long long max_cell_y_ = std::numeric_limits<long long>::min();
  int best_goal_ = -1;
  double best_cost_ = std::numeric_limits<double>::infinity();
};

struct Solution {
  Plan plan;
  Trajectory trajectory;
  bool reaches_goal = false;
  double cost = std::numeric_limits<double>::infinity();  // goal only
  std::size_t node = 0;
};

enum class PlanStatus { kOk, kRootInCollision };

struct PlanCycleResult {
  PlanStatus status = PlanStatus::kOk;
  Solution solution;
  Plan committed_plan;          // first `cycle` seconds of the solution
  Trajectory committed;         // its rollout from the root
  std::size_t tree_size = 0;
  // (iteration, incumbent goal cost) each time the incumbent improved.
  std::vector<std::pair<int, double>> cost_history;
};

class TreePlanner {
 public:
  TreePlanner(PlanningProblem problem, PlannerConfig config);

  // Seeds a tree with the valid prefix of the previous plan rolled out from
  // the root.
  [[nodiscard]] Tree retain(const State& root, const Plan& previous) const;

  // Runs the configured budget of select/propagate iterations.
  void expand(Tree& tree, Rng& rng,
              std::vector<std::pair<int, double>>* cost_history = nullptr) const;
  void expand(Tree& tree, Rng& rng, int iterations,
              std::vector<std::pair<int, double>>* cost_history = nullptr) const;

  // Min-cost goal node if any, otherwise the node with least heuristic.
  [[nodiscard]] Solution best_solution(const Tree& tree) const;

  PlanCycleResult plan_cycle(const State& root, const Plan& previous,
                             Rng& rng) const;

  [[nodiscard]] const PlannerConfig& config() const { return config_; }
  [[nodiscard]] const PlanningProblem& problem() const { return problem_; }

 private:
  struct Edge {
    bool valid = false;
    State end;
    double dt = 0.0;
    bool in_goal = false;
  };

  [[nodiscard]] Edge check_edge(const TreeNode& from, const Control& u,
                                double dt) const;
  [[nodiscard]] double required_clearance(double v) const;
  std::size_t select(const Tree& tree, Rng& rng) const;
  void sample_control(Rng& rng, Control& u, double& dt) const;
  bool try_add(Tree& tree, std::size_t parent, const Control& u,
               double dt) const;

  PlanningProblem problem_;
  PlannerConfig config_;
};

}  // namespace kraft

#endif  // KRAFT_PLANNER_HPP_
