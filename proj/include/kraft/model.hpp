// Approximate car-like dynamics (kinematic bicycle with first-order speed
// response), RK4 integration, plan rollout and trajectory interpolation.

#ifndef KRAFT_MODEL_HPP_
#define KRAFT_MODEL_HPP_

#include <cstddef>
#include <span>
#include <vector>

namespace kraft {

// Largest RK4 step used anywhere in the stack. Plans, the world and the
// collision checks all sub-step at this density.
inline constexpr double kIntegrationStep = 0.01;

struct State {
  double x = 0.0;      // m
  double y = 0.0;      // m
  double theta = 0.0;  // rad, wrapped to (-pi, pi]
  double v = 0.0;      // m/s, forward speed
};

struct StateDerivative {
  double dx = 0.0;
  double dy = 0.0;
  double dtheta = 0.0;
  double dv = 0.0;
};

// Throttle and steering command. `brake` selects the maximal-braking mode
// used by contingency maneuvers: constant deceleration to a full stop.
struct Control {
  double nu = 0.0;   // throttle, dimensionless
  double phi = 0.0;  // steering, rad (positive turns left)
  bool brake = false;
};

// Identifiable parameters: wheelbase, steering offset, throttle gain.
struct ModelParams {
  double wheelbase = 0.30;
  double phi_diff = 0.0;
  double v_delta = 1.0;
};

struct ControlLimits {
  double v_min = 0.0;
  double v_max = 2.0;
  double nu_min = 0.0;
  double nu_max = 2.0;
  double phi_max = 0.5;
  double a_brake = 4.0;  // m/s^2
  double k_acc = 5.0;    // 1/s
};

// Multiplicative/additive hooks the ground-truth world uses to perturb the
// nominal model. The defaults leave every term bit-identical.
struct DynamicsModifiers {
  double yaw_rate_scale = 1.0;
  double speed_response_scale = 1.0;
  double brake_scale = 1.0;
  double extra_accel = 0.0;
};

struct PlanSegment {
  Control control;
  double dt = 0.0;
};

// Piecewise-constant controls. Every segment has a finite, positive duration.
class Plan {
 public:
  Plan() = default;
  explicit Plan(std::vector<PlanSegment> segments);

  void append(const Control& control, double dt);
  void append(const Plan& other);

  [[nodiscard]] double duration() const;
  [[nodiscard]] bool empty() const { return segments_.empty(); }
  [[nodiscard]] std::size_t size() const { return segments_.size(); }
  [[nodiscard]] const std::vector<PlanSegment>& segments() const {
    return segments_;
  }
  [[nodiscard]] const PlanSegment& operator[](std::size_t i) const {
    return segments_[i];
  }

  // First `t` seconds of the plan; the straddling segment is split.
  [[nodiscard]] Plan prefix(double t) const;
  // Everything after `t` seconds; the straddling segment is split.
  [[nodiscard]] Plan suffix(double t) const;

  // Index of the segment active at time t, half-open intervals [t_i, t_i+dt_i).
  // Returns size() when t is at or beyond the end.
  [[nodiscard]] std::size_t segment_at(double t) const;

  friend bool operator==(const Plan&, const Plan&);

 private:
  std::vector<PlanSegment> segments_;
};

struct TimedState {
  double t = 0.0;
  State state;
};

// Time-stamped states with strictly increasing timestamps.
class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(std::vector<TimedState> samples);

  void push_back(double t, const State& s);

  [[nodiscard]] bool empty() const { return samples_.empty(); }
  [[nodiscard]] std::size_t size() const { return samples_.size(); }
  [[nodiscard]] const TimedState& front() const { return samples_.front(); }
  [[nodiscard]] const TimedState& back() const { return samples_.back(); }
  [[nodiscard]] const TimedState& operator[](std::size_t i) const {
    return samples_[i];
  }
  [[nodiscard]] std::span<const TimedState> samples() const { return samples_; }
  [[nodiscard]] double start_time() const { return samples_.front().t; }
  [[nodiscard]] double end_time() const { return samples_.back().t; }
  [[nodiscard]] double duration() const {
    return empty() ? 0.0 : end_time() - start_time();
  }

  // Copy with every timestamp shifted by `offset`.
  [[nodiscard]] Trajectory shifted(double offset) const;

 private:
  std::vector<TimedState> samples_;
};

// Angle helpers. wrap_angle maps onto (-pi, pi].
double wrap_angle(double a);
double angle_diff(double to, double from);  // shortest-arc to - from

Control clamp(const Control& u, const ControlLimits& limits);

StateDerivative derivative(const State& s, const Control& u,
                           const ModelParams& params,
                           const ControlLimits& limits,
                           const DynamicsModifiers& mods = {});

// One RK4 step of size h (h <= kIntegrationStep expected), followed by angle
// wrapping and speed clamping. Braking steps stop exactly at v = 0.
State integrate_step(const State& s, const Control& u, double h,
                     const ModelParams& params, const ControlLimits& limits,
                     const DynamicsModifiers& mods = {});

// Integrates for dt using ceil(dt / kIntegrationStep) equal RK4 sub-steps.
State propagate(const State& s, const Control& u, double dt,
                const ModelParams& params, const ControlLimits& limits);

// Samples every <= sample_dt, segment boundaries included; first sample is s
// at time t0.
Trajectory rollout(const State& s, const Plan& plan, const ModelParams& params,
                   const ControlLimits& limits,
                   double sample_dt = kIntegrationStep, double t0 = 0.0);

// Linear in x, y, v; shortest arc in theta. Throws std::out_of_range.
State interpolate(const Trajectory& traj, double t);
State interpolate(const State& a, const State& b, double fraction);

}  // namespace kraft

#endif  // KRAFT_MODEL_HPP_
