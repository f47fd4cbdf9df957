#include "kraft/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kraft {
namespace {

constexpr double kGravity = 9.81;
// Deceleration while climbing a bump the robot cannot clear.
constexpr double kStallDecel = 20.0;
// After a failed climb the robot rolls back this far behind the band edge.
constexpr double kRollback = 0.6;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

Vec2 position(const State& s) { return {s.x, s.y}; }

DynamicsModifiers modifiers_at(const WorldState& w, const Environment& env) {
  DynamicsModifiers mods;
  const Vec2 p = position(w.robot);
  for (const auto& feature : env.features) {
    if (!feature.region.contains(p)) continue;
    std::visit(Overloaded{
                   [&](const SlipEffect& slip) {
                     mods.yaw_rate_scale *= slip.friction_scale;
                     mods.speed_response_scale *= slip.friction_scale;
                     mods.brake_scale *= slip.friction_scale;
                   },
                   [&](const SlopeEffect& slope) {
                     const Vec2 heading{std::cos(w.robot.theta),
                                        std::sin(w.robot.theta)};
                     mods.extra_accel -= kGravity * std::sin(slope.angle) *
                                         heading.dot(slope.direction);
                   },
                   [](const BumpEffect&) {},
               },
               feature.effect);
  }
  if (w.stalled_bump >= 0) mods.extra_accel -= kStallDecel;
  return mods;
}

Control active_command(WorldState& w, const Control& issued,
                       const Environment& env) {
  const double latency = env.disturbances.command_latency;
  if (latency <= 0.0) return issued;
  while (w.pending_commands.size() > 1 &&
         w.pending_commands[1].first <= w.clock + 1e-12) {
    w.pending_commands.pop_front();
  }
  if (w.pending_commands.empty() ||
      w.pending_commands.front().first > w.clock + 1e-12) {
    return Control{};  // nothing has arrived yet
  }
  return w.pending_commands.front().second;
}

void update_actuation_noise(WorldState& w, const Disturbances& d, double h) {
  if (d.steer_noise <= 0.0 && d.throttle_noise <= 0.0) return;
  std::normal_distribution<double> normal(0.0, 1.0);
  const double tau = d.noise_time_constant;
  const double decay = h / tau;
  const double diffusion = std::sqrt(2.0 * h / tau);
  w.steer_bias += -w.steer_bias * decay + d.steer_noise * diffusion * normal(w.rng);
  w.throttle_bias +=
      -w.throttle_bias * decay + d.throttle_noise * diffusion * normal(w.rng);
}

// Bump entry/exit transitions for the sub-step that just ended.
void update_bumps(WorldState& w, const State& before, const Environment& env) {
  const Vec2 p = position(w.robot);
  for (std::size_t i = 0; i < env.features.size(); ++i) {
    const auto* bump = std::get_if<BumpEffect>(&env.features[i].effect);
    if (bump == nullptr) continue;
    const bool inside = env.features[i].region.contains(p);
    const bool was_inside = w.inside_feature[i] != 0;
    w.inside_feature[i] = inside ? 1 : 0;
    if (inside && !was_inside) {
      if (before.v >= bump->speed_threshold) {
        std::normal_distribution<double> kick(0.0, 2.0 * bump->height);
        w.robot.theta = wrap_angle(w.robot.theta + kick(w.rng));
      } else {
        w.stalled_bump = static_cast<int>(i);
        w.bump_entry = before;
        w.bump_entry.v = 0.0;
      }
    }
  }
  if (w.stalled_bump >= 0) {
    const bool inside =
        env.features[static_cast<std::size_t>(w.stalled_bump)].region.contains(p);
    if (!inside || w.robot.v <= 1e-9) {
      if (inside) {
        // Could not climb it: roll back behind where the band was entered,
        // leaving a run-up for another attempt.
        State back = w.bump_entry;
        back.x -= kRollback * std::cos(back.theta);
        back.y -= kRollback * std::sin(back.theta);
        const bool free =
            distance_to_closest_obstacle(back, env) >= 0.0 &&
            !env.features[static_cast<std::size_t>(w.stalled_bump)]
                 .region.contains(position(back));
        w.robot = free ? back : w.bump_entry;
        w.inside_feature[static_cast<std::size_t>(w.stalled_bump)] = 0;
      }
      w.stalled_bump = -1;
    }
  }
}

bool box_placement_blocked(const Polygon& moved, std::size_t self,
                           const WorldState& w, const Environment& env) {
  const Rect& bb = moved.bounding_box();
  if (bb.min.x < env.bounds.min.x || bb.min.y < env.bounds.min.y ||
      bb.max.x > env.bounds.max.x || bb.max.y > env.bounds.max.y) {
    return true;
  }
  for (const auto& obstacle : env.obstacles) {
    if (polygons_overlap(moved, obstacle)) return true;
  }
  for (std::size_t j = 0; j < env.movable.size(); ++j) {
    if (j == self) continue;
    if (polygons_overlap(moved,
                         env.movable[j].shape.translated(w.box_offsets[j]))) {
      return true;
    }
  }
  return false;
}

// Quasi-static pushing: the box takes (1 - drag) of the penetration, the
// robot is pushed back by the rest and slowed by (1 - drag).
void resolve_boxes(WorldState& w, const State& before, const Environment& env) {
  for (std::size_t i = 0; i < env.movable.size(); ++i) {
    const MovableBox& box = env.movable[i];
    const Polygon placed = box.shape.translated(w.box_offsets[i]);
    const Vec2 p = position(w.robot);
    const Vec2 closest = placed.closest_point(p);
    const bool inside = placed.contains(p);
    const double dist = (p - closest).norm();
    const double depth = env.robot_radius + (inside ? dist : -dist);
    if (depth <= 0.0) continue;

    Vec2 normal = inside ? closest - p : p - closest;
    const double len = normal.norm();
    if (len < 1e-12) {
      normal = Vec2{-std::cos(w.robot.theta), -std::sin(w.robot.theta)};
    } else {
      normal = normal * (1.0 / len);
    }

    const Vec2 box_push = normal * (-depth * (1.0 - box.drag));
    const Polygon moved = placed.translated(box_push);
    if (!box_placement_blocked(moved, i, w, env)) {
      w.box_offsets[i] += box_push;
      w.robot.x += normal.x * depth * box.drag;
      w.robot.y += normal.y * depth * box.drag;
      w.robot.v *= 1.0 - box.drag;
    } else {
      w.robot.x += normal.x * depth;
      w.robot.y += normal.y * depth;
      w.robot.v = 0.0;
    }
    if (distance_to_closest_obstacle(w.robot, env) < 0.0 &&
        distance_to_closest_obstacle(before, env) >= 0.0) {
      w.robot = before;
      w.robot.v = 0.0;
    }
  }
}

void inject_deviation(WorldState& w, const Environment& env, double h) {
  const Disturbances& d = env.disturbances;
  if (d.adversarial_deviation <= 0.0) return;
  const Vec2 p = position(w.robot);
  const ObstacleQuery q = closest_obstacle(p, env);
  Vec2 dir = q.closest_point - p;
  const double len = dir.norm();
  if (len < 1e-12) return;
  dir = dir * (1.0 / len);
  Vec2 next = w.injected_offset + dir * (d.adversarial_rate * h);
  const double mag = next.norm();
  if (mag > d.adversarial_deviation) next = next * (d.adversarial_deviation / mag);
  w.robot.x += next.x - w.injected_offset.x;
  w.robot.y += next.y - w.injected_offset.y;
  w.injected_offset = next;
}

}  // namespace

WorldState make_world(const Environment& env, std::uint64_t seed) {
  WorldState w;
  w.robot = env.start;
  w.prev_robot = env.start;
  w.box_offsets.assign(env.movable.size(), Vec2{});
  w.inside_feature.assign(env.features.size(), 0);
  for (std::size_t i = 0; i < env.features.size(); ++i) {
    w.inside_feature[i] =
        env.features[i].region.contains(position(env.start)) ? 1 : 0;
  }
  w.rng.seed(seed);
  return w;
}

std::optional<CollisionEvent> step(WorldState& w, const Control& u, double dt,
                                   const Environment& env) {
  w.prev_robot = w.robot;
  w.prev_clock = w.clock;
  w.last_command = u;
  w.substeps.clear();
  if (w.collided) return std::nullopt;
  if (env.disturbances.command_latency > 0.0) {
    w.pending_commands.emplace_back(w.clock + env.disturbances.command_latency, u);
  }

  const int n =
      std::max(1, static_cast<int>(std::ceil(dt / kIntegrationStep - 1e-9)));
  const double h = dt / n;
  const double start_clock = w.clock;
  for (int k = 0; k < n; ++k) {
    Control applied = clamp(active_command(w, u, env), env.limits);
    update_actuation_noise(w, env.disturbances, h);
    if (env.disturbances.steer_noise > 0.0) applied.phi += w.steer_bias;
    if (env.disturbances.throttle_noise > 0.0) {
      applied.nu *= 1.0 + w.throttle_bias;
    }
    applied = clamp(applied, env.limits);

    const State before = w.robot;
    const DynamicsModifiers mods = modifiers_at(w, env);
    w.substeps.push_back({w.clock, before, applied, mods});
    w.robot = integrate_step(w.robot, applied, h, env.true_params, env.limits,
                             mods);
    if (!env.features.empty()) update_bumps(w, before, env);
    if (!env.movable.empty()) resolve_boxes(w, before, env);
    inject_deviation(w, env, h);
    w.clock = k + 1 == n ? start_clock + dt : start_clock + h * (k + 1);

    const ObstacleQuery q = closest_obstacle(position(w.robot), env);
    if (q.clearance < 0.0) {
      w.collided = true;
      return CollisionEvent{w.clock, position(w.robot), q.obstacle};
    }
  }
  return std::nullopt;
}

Observation observe(WorldState& w, const ObservationNoise& noise,
                    const Environment& env) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double eps = unit(w.rng);
  const double span = w.clock - w.prev_clock;
  Observation obs;
  State pose = w.robot;
  if (span > 0.0) {
    obs.t_obs = w.prev_clock + eps * span;
    // Integrate from the sub-step containing t_obs; linear interpolation
    // across the whole step would bend turning arcs into chords.
    pose = interpolate(w.prev_robot, w.robot, eps);
    for (auto it = w.substeps.rbegin(); it != w.substeps.rend(); ++it) {
      if (it->t > obs.t_obs) continue;
      const double h = obs.t_obs - it->t;
      pose = h > 0.0 ? integrate_step(it->start, it->applied, h, env.true_params,
                                      env.limits, it->mods)
                     : it->start;
      break;
    }
  } else {
    obs.t_obs = w.clock;
  }

  Vec2 p{pose.x, pose.y};
  for (const auto& feature : env.features) {
    const auto* slope = std::get_if<SlopeEffect>(&feature.effect);
    if (slope == nullptr || !feature.region.contains(p)) continue;
    const Vec2 rel = p - slope->anchor;
    const double along = rel.dot(slope->direction);
    p = p - slope->direction * ((1.0 - std::cos(slope->angle)) * along);
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  const double nx = normal(w.rng);
  const double ny = normal(w.rng);
  const double nt = normal(w.rng);
  obs.x = p.x + noise.sigma_xy * nx;
  obs.y = p.y + noise.sigma_xy * ny;
  obs.theta = wrap_angle(pose.theta + noise.sigma_theta * nt);
  obs.v_reported = w.last_command.brake
                       ? 0.0
                       : w.commanded_speed_gain * w.last_command.nu;
  return obs;
}

ObstacleQuery closest_obstacle(const Vec2& p, const Environment& env) {
  ObstacleQuery best;
  best.clearance = std::numeric_limits<double>::infinity();

  // Workspace boundary acts as four walls.
  const Rect& b = env.bounds;
  const double walls[4] = {p.x - b.min.x, b.max.x - p.x, p.y - b.min.y,
                           b.max.y - p.y};
  const Vec2 wall_points[4] = {{b.min.x, p.y}, {b.max.x, p.y}, {p.x, b.min.y},
                               {p.x, b.max.y}};
  for (int i = 0; i < 4; ++i) {
    const double c = walls[i] - env.robot_radius;
    if (c < best.clearance) {
      best = {c, wall_points[i], -1};
    }
  }

  for (std::size_t i = 0; i < env.obstacles.size(); ++i) {
    const Polygon& poly = env.obstacles[i];
    const Rect& bb = poly.bounding_box();
    // Lower bound from the bounding box lets far obstacles be skipped.
    const double dx = std::max({bb.min.x - p.x, 0.0, p.x - bb.max.x});
    const double dy = std::max({bb.min.y - p.y, 0.0, p.y - bb.max.y});
    if (std::hypot(dx, dy) - env.robot_radius >= best.clearance) continue;
    const Vec2 c = poly.closest_point(p);
    const double d = (p - c).norm();
    const double clearance = (poly.contains(p) ? -d : d) - env.robot_radius;
    if (clearance < best.clearance) {
      best = {clearance, c, static_cast<int>(i)};
    }
  }
  return best;
}

double distance_to_closest_obstacle(const Vec2& p, const Environment& env) {
  return closest_obstacle(p, env).clearance;
}

double goal_distance(const State& s, const GoalRegion& goal) {
  const double dx = s.x - goal.x;
  const double dy = s.y - goal.y;
  if (!goal.use_theta) return std::hypot(dx, dy);
  const double dt = goal.theta_weight * angle_diff(s.theta, goal.theta);
  return std::sqrt(dx * dx + dy * dy + dt * dt);
}

bool in_goal(const State& s, const GoalRegion& goal) {
  return goal_distance(s, goal) < goal.epsilon;
}

}  // namespace kraft
