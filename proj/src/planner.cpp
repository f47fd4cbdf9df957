#include "kraft/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <tuple>

namespace kraft {
namespace {

constexpr double kCellSize = 0.5;
constexpr double kTimeEps = 1e-9;

long long cell_of(double v) {
  return static_cast<long long>(std::floor(v / kCellSize));
}

// Mirrors the sampling of rollout() so that tree states equal re-rolled
// trajectories bit for bit.
template <typename Visit>
State walk_edge(const State& from, const Control& u, double dt,
                const ModelParams& params, const ControlLimits& limits,
                Visit&& visit) {
  const int n =
      std::max(1, static_cast<int>(std::ceil(dt / kIntegrationStep - 1e-9)));
  const double piece = dt / n;
  State cur = from;
  for (int k = 1; k <= n; ++k) {
    const State prev = cur;
    cur = propagate(cur, u, piece, params, limits);
    const double t = k == n ? dt : piece * k;
    if (!visit(prev, cur, t - piece, t)) break;
  }
  return cur;
}

State end_of_edge(const State& from, const Control& u, double dt,
                  const ModelParams& params, const ControlLimits& limits) {
  return walk_edge(from, u, dt, params, limits,
                   [](const State&, const State&, double, double) {
                     return true;
                   });
}

}  // namespace

Heuristic euclidean_heuristic(const GoalRegion& goal, double v_max) {
  if (!(v_max > 0.0)) throw std::invalid_argument("v_max must be positive");
  return [goal, v_max](const State& s) {
    if (in_goal(s, goal)) return 0.0;
    const double d = std::hypot(s.x - goal.x, s.y - goal.y);
    return std::max(0.0, d - goal.epsilon) / v_max;
  };
}

Tree::Tree(const State& root, double h_root, bool root_in_goal) {
  TreeNode node;
  node.state = root;
  node.h = h_root;
  node.in_goal = root_in_goal;
  add(node);
}

long long Tree::cell_key(long long cx, long long cy) const {
  return cx * 1000003LL + cy;
}

std::size_t Tree::add(const TreeNode& node) {
  const std::size_t id = nodes_.size();
  nodes_.push_back(node);
  const long long cx = cell_of(node.state.x), cy = cell_of(node.state.y);
  grid_[cell_key(cx, cy)].push_back(id);
  min_cell_x_ = std::min(min_cell_x_, cx);
  max_cell_x_ = std::max(max_cell_x_, cx);
  min_cell_y_ = std::min(min_cell_y_, cy);
  max_cell_y_ = std::max(max_cell_y_, cy);
  if (node.in_goal && node.cost() < best_cost_) {
    best_cost_ = node.cost();
    best_goal_ = static_cast<int>(id);
  }
  return id;
}

std::vector<std::size_t> Tree::path_to(std::size_t node) const {
  std::vector<std::size_t> path;
  for (int i = static_cast<int>(node); i >= 0; i = nodes_[i].parent) {
    path.push_back(static_cast<std::size_t>(i));
  }
  std::reverse(path.begin(), path.end());
  return path;
}

Plan Tree::plan_to(std::size_t node) const {
  Plan plan;
  const auto path = path_to(node);
  for (std::size_t i = 1; i < path.size(); ++i) {
    plan.append(nodes_[path[i]].control, nodes_[path[i]].dt);
  }
  return plan;
}

std::vector<std::size_t> Tree::near(double x, double y, double radius) const {
  std::vector<std::size_t> out;
  const long long x0 = cell_of(x - radius), x1 = cell_of(x + radius);
  const long long y0 = cell_of(y - radius), y1 = cell_of(y + radius);
  for (long long cx = x0; cx <= x1; ++cx) {
    for (long long cy = y0; cy <= y1; ++cy) {
      const auto it = grid_.find(cell_key(cx, cy));
      if (it == grid_.end()) continue;
      for (std::size_t id : it->second) {
        const auto& s = nodes_[id].state;
        if (std::hypot(s.x - x, s.y - y) <= radius) out.push_back(id);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t Tree::nearest(double x, double y) const {
  // Ring search over grid cells, widening until no unvisited cell can hold a
  // closer node.
  const long long cx = cell_of(x), cy = cell_of(y);
  const long long reach =
      std::max({std::llabs(cx - min_cell_x_), std::llabs(cx - max_cell_x_),
                std::llabs(cy - min_cell_y_), std::llabs(cy - max_cell_y_)});
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  const auto visit = [&](long long gx, long long gy) {
    const auto it = grid_.find(cell_key(gx, gy));
    if (it == grid_.end()) return;
    for (std::size_t id : it->second) {
      const double d =
          std::hypot(nodes_[id].state.x - x, nodes_[id].state.y - y);
      if (d < best_d || (d == best_d && id < best)) {
        best_d = d;
        best = id;
      }
    }
  };
  for (long long r = 0; r <= reach; ++r) {
    if (best_d < static_cast<double>(r - 1) * kCellSize) break;
    if (r == 0) {
      visit(cx, cy);
      continue;
    }
    for (long long gx = cx - r; gx <= cx + r; ++gx) {
      visit(gx, cy - r);
      visit(gx, cy + r);
    }
    for (long long gy = cy - r + 1; gy <= cy + r - 1; ++gy) {
      visit(cx - r, gy);
      visit(cx + r, gy);
    }
  }
  return best;
}

TreePlanner::TreePlanner(PlanningProblem problem, PlannerConfig config)
    : problem_(std::move(problem)), config_(std::move(config)) {
  if (problem_.env == nullptr) throw std::invalid_argument("no environment");
  if (config_.budget < 0) throw std::invalid_argument("budget must be >= 0");
  if (!(config_.cycle > 0.0)) throw std::invalid_argument("cycle must be > 0");
  if (config_.goal_bias < 0.0 || config_.goal_bias >= 1.0) {
    throw std::invalid_argument("goal_bias must lie in [0, 1)");
  }
  if (config_.blossom < 1) throw std::invalid_argument("blossom must be >= 1");
  if (!(config_.dt_min > 0.0) || config_.dt_max < config_.dt_min) {
    throw std::invalid_argument("invalid dt range");
  }
  if (config_.delta < 0.0) throw std::invalid_argument("delta must be >= 0");
  if (!(config_.steering_fraction > 0.0) || config_.steering_fraction > 1.0) {
    throw std::invalid_argument("steering_fraction must lie in (0, 1]");
  }
  if (!problem_.heuristic) {
    problem_.heuristic =
        euclidean_heuristic(problem_.env->goal, problem_.limits.v_max);
  }
}

double TreePlanner::required_clearance(double v) const {
  if (config_.conservative) {
    return std::max(config_.collision_margin, inflated_clearance(config_.delta, v));
  }
  return config_.collision_margin;
}

TreePlanner::Edge TreePlanner::check_edge(const TreeNode& from,
                                          const Control& u, double dt) const {
  const Environment& env = *problem_.env;
  const double t0 = from.arrival_time;
  const bool gate = config_.conservative && std::isfinite(config_.cycle) &&
                    t0 < config_.cycle - kTimeEps;
  Edge edge;
  edge.valid = true;
  edge.dt = dt;
  bool crossed = false;
  // A parent already inside the margin may still leave it: samples only need
  // to stay as clear as the parent.
  const double parent_clearance =
      std::max(0.0, distance_to_closest_obstacle(from.state, env));
  walk_edge(from.state, u, dt, problem_.params, problem_.limits,
            [&](const State&, const State& cur, double, double t) {
              if (distance_to_closest_obstacle(cur, env) <
                  std::min(required_clearance(cur.v), parent_clearance)) {
                edge.valid = false;
                return false;
              }
              if (gate && !crossed && t0 + t >= config_.cycle - kTimeEps) {
                crossed = true;
                const State at_cycle =
                    end_of_edge(from.state, u, config_.cycle - t0,
                                problem_.params, problem_.limits);
                if (!safety_check(at_cycle, problem_.params, problem_.limits,
                                  config_.contingencies, env, config_.delta)) {
                  edge.valid = false;
                  return false;
                }
              }
              if (in_goal(cur, problem_.goal())) {
                edge.in_goal = true;
                edge.dt = t;
                return false;
              }
              return true;
            });
  if (!edge.valid) return edge;
  edge.end = end_of_edge(from.state, u, edge.dt, problem_.params,
                         problem_.limits);
  return edge;
}

bool TreePlanner::try_add(Tree& tree, std::size_t parent, const Control& u,
                          double dt) const {
  const TreeNode& from = tree[parent];
  const Edge edge = check_edge(from, u, dt);
  if (!edge.valid) return false;
  TreeNode node;
  node.state = edge.end;
  node.arrival_time = from.arrival_time + edge.dt;
  node.parent = static_cast<int>(parent);
  node.control = u;
  node.dt = edge.dt;
  node.in_goal = edge.in_goal;
  node.h = node.in_goal ? 0.0 : problem_.heuristic(node.state);
  if (node.arrival_time + node.h >= tree.best_cost()) return false;
  tree.add(node);
  return true;
}

Tree TreePlanner::retain(const State& root, const Plan& previous) const {
  const bool root_goal = in_goal(root, problem_.goal());
  Tree tree(root, root_goal ? 0.0 : problem_.heuristic(root), root_goal);
  if (root_goal) return tree;
  std::size_t parent = 0;
  for (const auto& seg : previous.segments()) {
    const TreeNode& from = tree[parent];
    const Edge edge = check_edge(from, seg.control, seg.dt);
    if (!edge.valid) break;
    TreeNode node;
    node.state = edge.end;
    node.arrival_time = from.arrival_time + edge.dt;
    node.parent = static_cast<int>(parent);
    node.control = seg.control;
    node.dt = edge.dt;
    node.in_goal = edge.in_goal;
    node.h = node.in_goal ? 0.0 : problem_.heuristic(node.state);
    parent = tree.add(node);
    if (edge.in_goal) break;
  }
  return tree;
}

void TreePlanner::sample_control(Rng& rng, Control& u, double& dt) const {
  const auto& lim = problem_.limits;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double mid = 0.5 * (lim.nu_min + lim.nu_max);
  const double r = unit(rng);
  const double w = unit(rng);
  u.nu = r < config_.forward_bias ? mid + w * (lim.nu_max - mid)
                                  : lim.nu_min + w * (mid - lim.nu_min);
  const double phi_max = config_.steering_fraction * lim.phi_max;
  u.phi = -phi_max + 2.0 * phi_max * unit(rng);
  u.brake = false;
  const int k_min = static_cast<int>(std::ceil(config_.dt_min / kIntegrationStep - 1e-9));
  const int k_max = std::max(
      k_min, static_cast<int>(std::floor(config_.dt_max / kIntegrationStep + 1e-9)));
  std::uniform_int_distribution<int> steps(k_min, k_max);
  dt = steps(rng) * kIntegrationStep;
}

std::size_t TreePlanner::select(const Tree& tree, Rng& rng) const {
  const Rect& b = problem_.env->bounds;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double qx = b.min.x + unit(rng) * (b.max.x - b.min.x);
  const double qy = b.min.y + unit(rng) * (b.max.y - b.min.y);
  const double radius = unit(rng) * config_.selection_radius;
  const double pick = unit(rng);

  std::vector<std::size_t> candidates;
  for (std::size_t id : tree.near(qx, qy, radius)) {
    const TreeNode& n = tree[id];
    if (!n.in_goal && n.arrival_time + n.h < tree.best_cost()) {
      candidates.push_back(id);
    }
  }
  if (candidates.empty()) return tree.nearest(qx, qy);
  const auto i = std::min(candidates.size() - 1,
                          static_cast<std::size_t>(pick * candidates.size()));
  return candidates[i];
}

void TreePlanner::expand(Tree& tree, Rng& rng,
                         std::vector<std::pair<int, double>>* history) const {
  if (config_.time_budget) {
    const auto start = std::chrono::steady_clock::now();
    const auto limit = std::chrono::duration<double>(*config_.time_budget);
    while (std::chrono::steady_clock::now() - start < limit) {
      expand(tree, rng, 16, history);
    }
    return;
  }
  expand(tree, rng, config_.budget, history);
}

void TreePlanner::expand(Tree& tree, Rng& rng, int iterations,
                         std::vector<std::pair<int, double>>* history) const {
  // Informed branch: open list ordered by (cost + h, cost, insertion). Each
  // node is taken by the informed branch at most once.
  using Key = std::tuple<double, double, std::size_t>;
  std::priority_queue<Key, std::vector<Key>, std::greater<>> open;
  for (std::size_t i = 0; i < tree.size(); ++i) {
    const TreeNode& n = tree[i];
    if (!n.expanded && !n.in_goal) open.emplace(n.arrival_time + n.h, n.arrival_time, i);
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double incumbent = tree.best_cost();

  for (int it = 0; it < iterations; ++it) {
    // Draws happen in a fixed pattern per iteration so that a longer budget
    // replays the shorter run as a prefix.
    const double coin = unit(rng);
    std::size_t parent = 0;
    bool chosen = false;
    if (coin < config_.goal_bias) {
      while (!open.empty()) {
        const auto [f, c, id] = open.top();
        open.pop();
        if (tree[id].expanded || f >= tree.best_cost()) continue;
        tree.mutable_node(id).expanded = true;
        parent = id;
        chosen = true;
        break;
      }
    }
    const std::size_t explored = select(tree, rng);
    if (!chosen) parent = explored;

    if (tree[parent].in_goal ||
        tree[parent].arrival_time + tree[parent].h >= tree.best_cost()) {
      for (int b = 0; b < config_.blossom; ++b) {
        Control u;
        double dt = 0.0;
        sample_control(rng, u, dt);
      }
      continue;
    }
    for (int b = 0; b < config_.blossom; ++b) {
      Control u;
      double dt = 0.0;
      sample_control(rng, u, dt);
      const std::size_t before = tree.size();
      if (try_add(tree, parent, u, dt)) {
        const TreeNode& n = tree[before];
        if (!n.in_goal) open.emplace(n.arrival_time + n.h, n.arrival_time, before);
      }
    }
    if (tree.best_cost() < incumbent) {
      incumbent = tree.best_cost();
      if (history) history->emplace_back(it, incumbent);
    }
  }
}

Solution TreePlanner::best_solution(const Tree& tree) const {
  Solution sol;
  if (tree.best_goal() >= 0) {
    sol.node = static_cast<std::size_t>(tree.best_goal());
    sol.reaches_goal = true;
    sol.cost = tree.best_cost();
  } else {
    std::size_t best = 0;
    for (std::size_t i = 1; i < tree.size(); ++i) {
      const TreeNode& a = tree[i];
      const TreeNode& b = tree[best];
      if (a.h < b.h || (a.h == b.h && a.arrival_time < b.arrival_time)) best = i;
    }
    sol.node = best;
  }
  sol.plan = tree.plan_to(sol.node);
  sol.trajectory =
      rollout(tree[0].state, sol.plan, problem_.params, problem_.limits);
  return sol;
}

PlanCycleResult TreePlanner::plan_cycle(const State& root, const Plan& previous,
                                        Rng& rng) const {
  PlanCycleResult result;
  if (distance_to_closest_obstacle(root, *problem_.env) < 0.0) {
    result.status = PlanStatus::kRootInCollision;
    result.committed.push_back(0.0, root);
    return result;
  }
  Tree tree = retain(root, previous);
  if (tree.best_goal() >= 0) {
    result.cost_history.emplace_back(-1, tree.best_cost());
  }
  expand(tree, rng, &result.cost_history);
  result.tree_size = tree.size();
  result.solution = best_solution(tree);
  result.committed_plan = std::isfinite(config_.cycle)
                              ? result.solution.plan.prefix(config_.cycle)
                              : result.solution.plan;
  result.committed = rollout(root, result.committed_plan, problem_.params,
                             problem_.limits);
  return result;
}

}  // namespace kraft
