// Ground-truth world: true dynamics with unmodeled terrain features and
// movable boxes, noisy asynchronous pose observations, clearance queries.

#ifndef KRAFT_WORLD_HPP_
#define KRAFT_WORLD_HPP_

#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "kraft/geometry.hpp"
#include "kraft/model.hpp"

namespace kraft {

struct GoalRegion {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  bool use_theta = false;
  double theta_weight = 0.5;  // m per rad in the SE(2) metric
  double epsilon = 0.5;
};

// Reduced traction: yaw rate, speed response and braking scaled by mu.
struct SlipEffect {
  double friction_scale = 1.0;  // mu in (0, 1]
};

// Incline with unit uphill `direction`. Observed positions are compressed by
// cos(angle) along `direction`, measured from `anchor`.
struct SlopeEffect {
  double angle = 0.0;
  Vec2 direction{1.0, 0.0};
  Vec2 anchor;
};

// Speed bump band. Entering below `speed_threshold` stalls the robot; a
// successful crossing jolts the heading with std 2 * height rad.
struct BumpEffect {
  double height = 0.03;
  double speed_threshold = 0.8;
};

using FeatureEffect = std::variant<SlipEffect, SlopeEffect, BumpEffect>;

struct FeatureRegion {
  Polygon region;
  FeatureEffect effect;
};

struct MovableBox {
  Polygon shape;
  double drag = 0.1;  // in [0, 1)
};

struct ObservationNoise {
  double sigma_xy = 0.0;
  double sigma_theta = 0.0;
};

// Execution-level perturbations that are not tied to a region.
struct Disturbances {
  // Ornstein-Uhlenbeck steering offset (rad) and relative throttle error.
  double steer_noise = 0.0;
  double throttle_noise = 0.0;
  double noise_time_constant = 0.5;
  // Bounded displacement pushed toward the nearest obstacle (m) at `rate` m/s.
  double adversarial_deviation = 0.0;
  double adversarial_rate = 0.5;
  // Commands take effect this many seconds after they are issued.
  double command_latency = 0.0;
};

struct Environment {
  std::string name;
  Rect bounds;
  std::vector<Polygon> obstacles;
  std::vector<MovableBox> movable;
  std::vector<FeatureRegion> features;
  State start;
  GoalRegion goal;
  ObservationNoise noise;
  ModelParams true_params;
  ControlLimits limits;
  double robot_radius = 0.25;
  Disturbances disturbances;
};

struct Observation {
  double t_obs = 0.0;
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double v_reported = 0.0;
};

struct CollisionEvent {
  double t = 0.0;
  Vec2 position;
  int obstacle = -1;  // index into Environment::obstacles, -1 for bounds
};

struct WorldState {
  State robot;
  std::vector<Vec2> box_offsets;
  double clock = 0.0;
  std::mt19937_64 rng;

  // Speed reported to the estimator is gain * last throttle command; the
  // robot driver knows its own commanded desired speed.
  double commanded_speed_gain = 1.0;

  // Bookkeeping for asynchronous observations: the interval of the last step
  // and the integration sub-steps inside it.
  struct SubStep {
    double t = 0.0;
    State start;
    Control applied;
    DynamicsModifiers mods;
  };
  State prev_robot;
  double prev_clock = 0.0;
  Control last_command;
  std::vector<SubStep> substeps;

  double steer_bias = 0.0;
  double throttle_bias = 0.0;
  Vec2 injected_offset;
  std::deque<std::pair<double, Control>> pending_commands;
  std::vector<char> inside_feature;
  int stalled_bump = -1;
  State bump_entry;
  bool collided = false;
};

WorldState make_world(const Environment& env, std::uint64_t seed);

// Advances the true robot by dt in kIntegrationStep sub-steps. Returns the
// first collision with a static obstacle or the workspace boundary; the world
// stops advancing after a collision.
std::optional<CollisionEvent> step(WorldState& w, const Control& u, double dt,
                                   const Environment& env);

// Pose sampled at a uniformly jittered instant inside the last step interval,
// plus Gaussian noise. Advances w.rng.
Observation observe(WorldState& w, const ObservationNoise& noise,
                    const Environment& env);

// Clearance of the robot disc centred at p from static obstacles and the
// workspace boundary; negative when penetrating.
double distance_to_closest_obstacle(const Vec2& p, const Environment& env);
inline double distance_to_closest_obstacle(const State& s,
                                           const Environment& env) {
  return distance_to_closest_obstacle(Vec2{s.x, s.y}, env);
}

struct ObstacleQuery {
  double clearance = 0.0;
  Vec2 closest_point;
  int obstacle = -1;
};
ObstacleQuery closest_obstacle(const Vec2& p, const Environment& env);

double goal_distance(const State& s, const GoalRegion& goal);
bool in_goal(const State& s, const GoalRegion& goal);

}  // namespace kraft

#endif  // KRAFT_WORLD_HPP_
