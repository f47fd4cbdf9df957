#include "kraft/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace kraft {
namespace {

// Boundary tolerance for plan/trajectory time arithmetic.
constexpr double kTimeEps = 1e-9;
constexpr double kMaxEffectiveSteer = std::numbers::pi / 2.0 - 1e-3;

int substep_count(double dt, double max_step) {
  return std::max(1, static_cast<int>(std::ceil(dt / max_step - kTimeEps)));
}

State add_scaled(const State& s, const StateDerivative& d, double h) {
  return {s.x + h * d.dx, s.y + h * d.dy, s.theta + h * d.dtheta,
          s.v + h * d.dv};
}

double sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

Plan::Plan(std::vector<PlanSegment> segments) {
  for (const auto& seg : segments) append(seg.control, seg.dt);
}

void Plan::append(const Control& control, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw std::invalid_argument("plan segment duration must be positive, got " +
                                std::to_string(dt));
  }
  segments_.push_back({control, dt});
}

void Plan::append(const Plan& other) {
  segments_.insert(segments_.end(), other.segments_.begin(),
                   other.segments_.end());
}

double Plan::duration() const {
  double total = 0.0;
  for (const auto& seg : segments_) total += seg.dt;
  return total;
}

Plan Plan::prefix(double t) const {
  Plan out;
  double start = 0.0;
  for (const auto& seg : segments_) {
    if (t - start <= kTimeEps) break;
    const double take = std::min(seg.dt, t - start);
    if (seg.dt - take <= kTimeEps) {
      out.segments_.push_back(seg);
    } else {
      out.segments_.push_back({seg.control, take});
    }
    start += seg.dt;
  }
  return out;
}

Plan Plan::suffix(double t) const {
  Plan out;
  double start = 0.0;
  for (const auto& seg : segments_) {
    const double end = start + seg.dt;
    if (end - t > kTimeEps) {
      if (t - start > kTimeEps) {
        out.segments_.push_back({seg.control, end - t});
      } else {
        out.segments_.push_back(seg);
      }
    }
    start = end;
  }
  return out;
}

std::size_t Plan::segment_at(double t) const {
  double start = 0.0;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const double end = start + segments_[i].dt;
    if (t < end - 1e-12) return i;
    start = end;
  }
  return segments_.size();
}

bool operator==(const Plan& a, const Plan& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& sa = a.segments_[i];
    const auto& sb = b.segments_[i];
    if (sa.dt != sb.dt || sa.control.nu != sb.control.nu ||
        sa.control.phi != sb.control.phi ||
        sa.control.brake != sb.control.brake) {
      return false;
    }
  }
  return true;
}

Trajectory::Trajectory(std::vector<TimedState> samples) {
  for (const auto& s : samples) push_back(s.t, s.state);
}

void Trajectory::push_back(double t, const State& s) {
  if (!samples_.empty() && !(t > samples_.back().t)) {
    throw std::invalid_argument("trajectory timestamps must strictly increase");
  }
  samples_.push_back({t, s});
}

Trajectory Trajectory::shifted(double offset) const {
  Trajectory out = *this;
  for (auto& s : out.samples_) s.t += offset;
  return out;
}

double wrap_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  if (a > -std::numbers::pi && a <= std::numbers::pi) return a;
  a = std::fmod(a + std::numbers::pi, kTwoPi);
  if (a <= 0.0) a += kTwoPi;
  return a - std::numbers::pi;
}

double angle_diff(double to, double from) { return wrap_angle(to - from); }

Control clamp(const Control& u, const ControlLimits& limits) {
  return {std::clamp(u.nu, limits.nu_min, limits.nu_max),
          std::clamp(u.phi, -limits.phi_max, limits.phi_max), u.brake};
}

StateDerivative derivative(const State& s, const Control& u,
                           const ModelParams& params,
                           const ControlLimits& limits,
                           const DynamicsModifiers& mods) {
  const double steer = std::clamp(u.phi + params.phi_diff, -kMaxEffectiveSteer,
                                  kMaxEffectiveSteer);
  StateDerivative d;
  d.dx = s.v * std::cos(s.theta);
  d.dy = s.v * std::sin(s.theta);
  d.dtheta = mods.yaw_rate_scale * (s.v / params.wheelbase) * std::tan(steer);
  if (u.brake) {
    const double decel = limits.a_brake * mods.brake_scale;
    if (s.v == 0.0 && std::abs(mods.extra_accel) <= decel) {
      d.dv = 0.0;  // brakes hold
    } else {
      d.dv = -decel * sign(s.v) + mods.extra_accel;
    }
  } else {
    d.dv = mods.speed_response_scale * limits.k_acc *
               (params.v_delta * u.nu - s.v) +
           mods.extra_accel;
  }
  return d;
}

State integrate_step(const State& s, const Control& u, double h,
                     const ModelParams& params, const ControlLimits& limits,
                     const DynamicsModifiers& mods) {
  bool stops = false;
  if (u.brake && s.v != 0.0) {
    const double net = derivative(s, u, params, limits, mods).dv;
    if (sign(net) == -sign(s.v) && std::abs(s.v) <= std::abs(net) * h) {
      h = std::abs(s.v / net);
      stops = true;
    }
  }

  const auto k1 = derivative(s, u, params, limits, mods);
  const auto k2 = derivative(add_scaled(s, k1, h / 2), u, params, limits, mods);
  const auto k3 = derivative(add_scaled(s, k2, h / 2), u, params, limits, mods);
  const auto k4 = derivative(add_scaled(s, k3, h), u, params, limits, mods);

  State next;
  next.x = s.x + h / 6.0 * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx);
  next.y = s.y + h / 6.0 * (k1.dy + 2.0 * k2.dy + 2.0 * k3.dy + k4.dy);
  next.theta = wrap_angle(
      s.theta + h / 6.0 * (k1.dtheta + 2.0 * k2.dtheta + 2.0 * k3.dtheta +
                           k4.dtheta));
  next.v = stops ? 0.0
                 : s.v + h / 6.0 * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv);
  next.v = std::clamp(next.v, limits.v_min, limits.v_max);
  return next;
}

State propagate(const State& s, const Control& u, double dt,
                const ModelParams& params, const ControlLimits& limits) {
  const Control uc = clamp(u, limits);
  const int n = substep_count(dt, kIntegrationStep);
  const double h = dt / n;
  State out = s;
  for (int i = 0; i < n; ++i) out = integrate_step(out, uc, h, params, limits);
  return out;
}

Trajectory rollout(const State& s, const Plan& plan, const ModelParams& params,
                   const ControlLimits& limits, double sample_dt, double t0) {
  Trajectory traj;
  traj.push_back(t0, s);
  State cur = s;
  double seg_start = t0;
  for (const auto& seg : plan.segments()) {
    const int n = substep_count(seg.dt, sample_dt);
    const double piece = seg.dt / n;
    for (int k = 1; k <= n; ++k) {
      cur = propagate(cur, seg.control, piece, params, limits);
      const double t = k == n ? seg_start + seg.dt : seg_start + piece * k;
      traj.push_back(t, cur);
    }
    seg_start += seg.dt;
  }
  return traj;
}

State interpolate(const State& a, const State& b, double fraction) {
  return {a.x + fraction * (b.x - a.x), a.y + fraction * (b.y - a.y),
          wrap_angle(a.theta + fraction * angle_diff(b.theta, a.theta)),
          a.v + fraction * (b.v - a.v)};
}

State interpolate(const Trajectory& traj, double t) {
  if (traj.empty() || t < traj.start_time() - kTimeEps ||
      t > traj.end_time() + kTimeEps) {
    throw std::out_of_range("time " + std::to_string(t) +
                            " outside trajectory span");
  }
  const auto samples = traj.samples();
  auto it = std::upper_bound(
      samples.begin(), samples.end(), t,
      [](double value, const TimedState& s) { return value < s.t; });
  if (it == samples.begin()) return samples.front().state;
  if (it == samples.end()) return samples.back().state;
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  if (t == lo.t) return lo.state;
  return interpolate(lo.state, hi.state, (t - lo.t) / (hi.t - lo.t));
}

}  // namespace kraft
