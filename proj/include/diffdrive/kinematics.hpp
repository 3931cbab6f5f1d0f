#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace diffdrive {

/// Chassis geometry of the two-wheel-plus-castor platform.
struct GeometryParams {
  double wheel_radius = 0.1;  // driving wheel radius [m]
  double track_width = 0.4;   // lateral distance between driving wheels [m]
  double l_f = 0.3;           // CG to castor contact, forward lever [m]
  double l_r = 0.1;           // rear axle to CG lever [m]
};

inline void validate(const GeometryParams& g) {
  if (!(g.wheel_radius > 0.0) || !std::isfinite(g.wheel_radius))
    throw std::invalid_argument("geometry: wheel_radius must be > 0");
  if (!(g.track_width > 0.0) || !std::isfinite(g.track_width))
    throw std::invalid_argument("geometry: track_width must be > 0");
  if (!(g.l_f > 0.0) || !std::isfinite(g.l_f))
    throw std::invalid_argument("geometry: l_f must be > 0");
  if (!(g.l_r > 0.0) || !std::isfinite(g.l_r))
    throw std::invalid_argument("geometry: l_r must be > 0");
}

/// Angular rates of the two driving wheels [rad/s].
struct WheelRates {
  double omega_r = 0.0;
  double omega_l = 0.0;
};

/// Body-frame velocities: u forward, v lateral (left positive), r yaw
/// (counter-clockwise positive).
struct BodyTwist {
  double u = 0.0;  // [m/s]
  double v = 0.0;  // [m/s]
  double r = 0.0;  // [rad/s]
};

/// World-frame pose. theta accumulates unwrapped; use wrap_angle() when a
/// (-pi, pi] reading is needed.
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

/// Body twist produced by the given wheel rates under pure rolling.
/// The lateral component is the CG velocity v = r * l_r.
inline BodyTwist forward_kinematics(const WheelRates& rates, const GeometryParams& g) {
  BodyTwist t;
  t.u = (rates.omega_r + rates.omega_l) * g.wheel_radius / 2.0;
  t.r = (rates.omega_r - rates.omega_l) * g.wheel_radius / g.track_width;
  t.v = t.r * g.l_r;
  return t;
}

/// Wheel rates that realize forward speed u and yaw rate r under pure rolling.
inline WheelRates inverse_kinematics(double u, double r, const GeometryParams& g) {
  WheelRates rates;
  rates.omega_r = (u + r * g.track_width / 2.0) / g.wheel_radius;
  rates.omega_l = (u - r * g.track_width / 2.0) / g.wheel_radius;
  return rates;
}

/// Rotates a body twist's translational part into world axes.
inline void body_to_world(const BodyTwist& t, double theta, double& vx, double& vy) {
  const double c = std::cos(theta), s = std::sin(theta);
  vx = t.u * c - t.v * s;
  vy = t.u * s + t.v * c;
}

/// Below this yaw rate the arc formulas switch to their straight-line limit.
inline constexpr double kYawRateEpsilon = 1e-9;

/// Advances a pose by a constant twist held for dt. Exact for constant
/// twist: the position moves along the circular arc the twist describes,
/// so composing n sub-steps equals one big step.
inline Pose integrate_pose(const Pose& p, const BodyTwist& t, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("integrate_pose: dt must be > 0");
  const double c = std::cos(p.theta), s = std::sin(p.theta);
  Pose out;
  if (std::abs(t.r) > kYawRateEpsilon) {
    const double th1 = p.theta + t.r * dt;
    const double c1 = std::cos(th1), s1 = std::sin(th1);
    out.x = p.x + (t.u * (s1 - s) + t.v * (c1 - c)) / t.r;
    out.y = p.y + (-t.u * (c1 - c) + t.v * (s1 - s)) / t.r;
    out.theta = th1;
  } else {
    out.x = p.x + (t.u * c - t.v * s) * dt;
    out.y = p.y + (t.u * s + t.v * c) * dt;
    out.theta = p.theta + t.r * dt;
  }
  return out;
}

/// Explicit-Euler pose update. First-order; kept selectable so the exact
/// integrator's convergence can be measured against it.
inline Pose integrate_pose_euler(const Pose& p, const BodyTwist& t, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("integrate_pose_euler: dt must be > 0");
  double vx = 0.0, vy = 0.0;
  body_to_world(t, p.theta, vx, vy);
  return Pose{p.x + vx * dt, p.y + vy * dt, p.theta + t.r * dt};
}

}  // namespace diffdrive
