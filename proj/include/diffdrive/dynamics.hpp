#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "diffdrive/kinematics.hpp"

namespace diffdrive {

enum class PoseIntegrator { kExactArc, kEuler };

/// Inertial and actuation parameters of the dynamic model.
struct DynamicParams {
  double mass = 40.0;               // [kg]
  double yaw_inertia = 2.627;       // about the CG [kg m^2]
  double drivetrain_inertia = 0.05; // wheel+gearbox+rotor, per wheel, at the wheel [kg m^2]
  double gravity = 9.81;            // [m/s^2]
  double torque_limit = 20.0;       // actuator bound per wheel [N m]
  GeometryParams geom;
  PoseIntegrator pose_integrator = PoseIntegrator::kExactArc;
};

inline void validate(const DynamicParams& p) {
  if (!(p.mass > 0.0)) throw std::invalid_argument("dynamics: mass must be > 0");
  if (!(p.yaw_inertia > 0.0)) throw std::invalid_argument("dynamics: yaw_inertia must be > 0");
  if (!(p.drivetrain_inertia > 0.0))
    throw std::invalid_argument("dynamics: drivetrain_inertia must be > 0");
  if (!(p.gravity > 0.0)) throw std::invalid_argument("dynamics: gravity must be > 0");
  if (!(p.torque_limit > 0.0)) throw std::invalid_argument("dynamics: torque_limit must be > 0");
  validate(p.geom);
}

struct WheelTorques {
  double tau_r = 0.0;  // [N m]
  double tau_l = 0.0;
};

/// Axis-aligned friction patch in the world frame.
struct SurfacePatch {
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;
  double mu = 0.0;
};

/// Piecewise-constant friction map. Later patches override earlier ones.
struct SurfaceMap {
  double default_mu = 0.8;
  std::vector<SurfacePatch> patches;
};

inline double friction_at(const SurfaceMap& map, double x, double y) {
  double mu = map.default_mu;
  for (const SurfacePatch& p : map.patches)
    if (x >= p.x_min && x <= p.x_max && y >= p.y_min && y <= p.y_max) mu = p.mu;
  return mu;
}

/// Full dynamic state. pose is the CG pose; (u, v, r) the CG body twist.
/// slip_vel_* hold each wheel's longitudinal contact slip speed from the
/// last step (used for re-stick crossing detection).
struct DynState {
  Pose pose;
  double u = 0.0, v = 0.0, r = 0.0;
  double omega_r = 0.0, omega_l = 0.0;
  bool slip_r = false, slip_l = false;
  double slip_vel_r = 0.0, slip_vel_l = 0.0;
};

/// Static normal loads (N_right, N_left) on the driving wheels from the
/// longitudinal moment balance about the castor contact.
inline std::pair<double, double> normal_loads(const DynamicParams& p) {
  const double wheelbase = p.geom.l_f + p.geom.l_r;
  if (!(wheelbase > 0.0)) throw std::invalid_argument("normal_loads: l_f + l_r must be > 0");
  const double axle = p.mass * p.gravity * p.geom.l_f / wheelbase;
  return {axle / 2.0, axle / 2.0};
}

/// Ground force a wheel demands to roll without slip: the applied torque
/// minus the drivetrain's share, referred to the contact patch.
inline double traction_demand(double tau_app, double wheel_accel, const DynamicParams& p) {
  const double r = p.geom.wheel_radius;
  return (r * tau_app - p.drivetrain_inertia * wheel_accel) / (r * r);
}

/// Per-wheel outcome of one step.
struct WheelStepInfo {
  double f_x = 0.0;      // longitudinal contact force on the body [N]
  double f_y = 0.0;      // lateral contact force share [N]
  double mu = 0.0;       // friction coefficient at the contact
  double normal = 0.0;   // normal load [N]
  double slip_vel = 0.0; // contact slip speed at step end [m/s]
  bool slip = false;
};

struct StepResult {
  DynState state;
  WheelStepInfo right, left;
  bool lateral_saturated = false;
  double work_in = 0.0;      // actuator work this step [J]
  double dissipation = 0.0;  // contact slip dissipation this step [J]
};

namespace detail {

struct WheelMode {
  bool stick = true;
  double kinetic = 0.0;  // known contact force when slipping [N]
};

// Solves the coupled body/drivetrain accelerations (du, dr). Wheels in
// stick mode contribute their rolling-constrained force expression; wheels
// in slip mode contribute a known kinetic force. `fy_known` replaces the
// lateral constraint force when the lateral direction has saturated
// (lateral_constraint = false).
struct AccelSolution {
  double du = 0.0, dr = 0.0;
  double f_r = 0.0, f_l = 0.0;  // longitudinal contact forces
};

inline AccelSolution solve_accels(const DynState& st, const WheelTorques& tau,
                                  const DynamicParams& p, const WheelMode& right,
                                  const WheelMode& left, bool lateral_constraint,
                                  double fy_known, double v_lat_rate) {
  const double R = p.geom.wheel_radius;
  const double T = p.geom.track_width;
  const double lr = p.geom.l_r;
  const double iw = p.drivetrain_inertia;
  const double c = iw * T / (2.0 * R * R);

  const int ns = (right.stick ? 1 : 0) + (left.stick ? 1 : 0);
  const double ss = (right.stick ? 1.0 : 0.0) - (left.stick ? 1.0 : 0.0);
  const double drive_sum = (right.stick ? tau.tau_r / R : right.kinetic) +
                           (left.stick ? tau.tau_l / R : left.kinetic);
  const double drive_diff = (right.stick ? tau.tau_r / R : right.kinetic) -
                            (left.stick ? tau.tau_l / R : left.kinetic);

  const double a11 = p.mass + ns * iw / (R * R);
  const double a12 = c * ss;
  const double b1 = drive_sum + p.mass * st.v * st.r;

  double a22 = p.yaw_inertia + ns * iw * T * T / (4.0 * R * R);
  double b2 = (T / 2.0) * drive_diff;
  if (lateral_constraint) {
    // Lateral force is the constraint reaction m*(lr*dr + u*r - v_lat/dt).
    a22 += p.mass * lr * lr;
    b2 += -p.mass * lr * st.u * st.r + p.mass * lr * v_lat_rate;
  } else {
    b2 += -lr * fy_known;
  }
  const double a21 = a12;
  const double det = a11 * a22 - a12 * a21;

  AccelSolution sol;
  sol.du = (b1 * a22 - a12 * b2) / det;
  sol.dr = (a11 * b2 - a21 * b1) / det;
  sol.f_r = right.stick ? (tau.tau_r / R - (iw / (R * R)) * (sol.du + (T / 2.0) * sol.dr))
                        : right.kinetic;
  sol.f_l = left.stick ? (tau.tau_l / R - (iw / (R * R)) * (sol.du - (T / 2.0) * sol.dr))
                       : left.kinetic;
  return sol;
}

inline double sign_of(double x) { return x >= 0.0 ? 1.0 : -1.0; }

// Splits a demanded lateral force between the wheels, each bounded by its
// friction-circle remainder. Returns true when fully assigned.
inline bool allocate_lateral(double want, double cap_r, double cap_l, double& fy_r,
                             double& fy_l) {
  fy_r = std::clamp(want / 2.0, -cap_r, cap_r);
  fy_l = std::clamp(want / 2.0, -cap_l, cap_l);
  double leftover = want - fy_r - fy_l;
  auto top_up = [&](double& fy, double cap) {
    const double next = std::clamp(fy + leftover, -cap, cap);
    leftover -= next - fy;
    fy = next;
  };
  top_up(fy_r, cap_r);
  top_up(fy_l, cap_l);
  return std::abs(leftover) <= 1e-9 * std::max(1.0, std::abs(want));
}

}  // namespace detail

/// One fixed-step update of the traction model.
///
/// Each wheel is either sticking (rolling constraint active, force solved
/// from the coupled equations) or slipping (Coulomb force mu*N opposing the
/// contact slip, spin integrating independently). A stick wheel whose force
/// demand exceeds mu*N transitions to slip; a slipping wheel re-sticks when
/// its slip speed crosses zero (1e-6 m/s hysteresis band) and the stick
/// demand fits the limit again. Lateral contact force is the constraint
/// reaction keeping v = r*l_r, split across the wheels inside each wheel's
/// friction circle; if the circles cannot supply it, v integrates freely.
inline StepResult step_dynamics(const DynState& st, const WheelTorques& tau,
                                const SurfaceMap& surface, const DynamicParams& p, double dt) {
  if (!(dt > 0.0) || dt > 0.01 + 1e-12)
    throw std::invalid_argument("step_dynamics: dt must be in (0, 10 ms]");
  for (double x : {st.pose.x, st.pose.y, st.pose.theta, st.u, st.v, st.r, st.omega_r,
                   st.omega_l})
    if (!std::isfinite(x)) throw std::invalid_argument("step_dynamics: non-finite state");
  if (std::abs(tau.tau_r) > p.torque_limit + 1e-9 ||
      std::abs(tau.tau_l) > p.torque_limit + 1e-9)
    throw std::invalid_argument("step_dynamics: torque exceeds the actuator limit");

  const double R = p.geom.wheel_radius;
  const double T = p.geom.track_width;
  const double lr = p.geom.l_r;

  // Contact locations (CG is l_r ahead of the axle midpoint).
  const double cth = std::cos(st.pose.theta), sth = std::sin(st.pose.theta);
  const double ax = st.pose.x - lr * cth, ay = st.pose.y - lr * sth;
  const double mu_r = friction_at(surface, ax + (T / 2.0) * sth, ay - (T / 2.0) * cth);
  const double mu_l = friction_at(surface, ax - (T / 2.0) * sth, ay + (T / 2.0) * cth);
  const auto [n_r, n_l] = normal_loads(p);
  const double limit_r = mu_r * n_r, limit_l = mu_l * n_l;

  const double roll_r = st.u + (T / 2.0) * st.r;
  const double roll_l = st.u - (T / 2.0) * st.r;
  const double slip_now_r = R * st.omega_r - roll_r;
  const double slip_now_l = R * st.omega_l - roll_l;

  constexpr double kBand = 1e-6;  // re-stick hysteresis [m/s]
  const double v_lat = st.v - lr * st.r;
  const double v_lat_rate = v_lat / dt;
  const double iw = p.drivetrain_inertia;

  // Mode selection is a small complementarity problem: a wheel at
  // (numerically) zero contact slip may stick, or slip either way with the
  // kinetic force matching the slip direction its acceleration produces; a
  // wheel already sliding keeps the force opposing its slip. Enumerate the
  // few combinations and take the first consistent one, preferring stick.
  struct Option {
    bool stick;
    double sign;
  };
  auto options_for = [&](bool was_slipping, double slip_now) {
    std::vector<Option> opts;
    if (was_slipping && std::abs(slip_now) > kBand) {
      opts.push_back(Option{false, detail::sign_of(slip_now)});
    } else {
      opts.push_back(Option{true, 0.0});
      opts.push_back(Option{false, 1.0});
      opts.push_back(Option{false, -1.0});
    }
    return opts;
  };
  const std::vector<Option> opts_r = options_for(st.slip_r, slip_now_r);
  const std::vector<Option> opts_l = options_for(st.slip_l, slip_now_l);

  detail::WheelMode mode_r, mode_l;
  auto settle = [&](bool lateral_constraint, double fy_known,
                    double lat_rate) -> detail::AccelSolution {
    detail::AccelSolution sol;
    detail::AccelSolution best;
    detail::WheelMode best_r, best_l;
    double best_score = -std::numeric_limits<double>::infinity();
    auto slip_rate = [&](double tau_i, double kinetic, double side) {
      return R * (tau_i - kinetic * R) / iw - (sol.du + side * (T / 2.0) * sol.dr);
    };
    for (const Option& orr : opts_r) {
      for (const Option& ol : opts_l) {
        mode_r = detail::WheelMode{orr.stick, orr.stick ? 0.0 : limit_r * orr.sign};
        mode_l = detail::WheelMode{ol.stick, ol.stick ? 0.0 : limit_l * ol.sign};
        sol = detail::solve_accels(st, tau, p, mode_r, mode_l, lateral_constraint, fy_known,
                                   lat_rate);
        bool ok = true;
        double score = 0.0;
        if (orr.stick) {
          ok = ok && std::abs(sol.f_r) <= limit_r + 1e-9;
        } else if (std::abs(slip_now_r) <= kBand) {
          const double rate = slip_rate(tau.tau_r, mode_r.kinetic, +1.0);
          ok = ok && rate * orr.sign >= -1e-9;
          score += rate * mode_r.kinetic;
        }
        if (ol.stick) {
          ok = ok && std::abs(sol.f_l) <= limit_l + 1e-9;
        } else if (std::abs(slip_now_l) <= kBand) {
          const double rate = slip_rate(tau.tau_l, mode_l.kinetic, -1.0);
          ok = ok && rate * ol.sign >= -1e-9;
          score += rate * mode_l.kinetic;
        }
        if (ok) return sol;
        if (score > best_score) {
          best_score = score;
          best = sol;
          best_r = mode_r;
          best_l = mode_l;
        }
      }
    }
    // No combination is exactly consistent (grazing numerics): keep the most
    // dissipative candidate.
    mode_r = best_r;
    mode_l = best_l;
    return best;
  };

  detail::AccelSolution sol = settle(true, 0.0, v_lat_rate);

  // Lateral constraint force and friction-circle allocation.
  double fy_want = p.mass * (lr * sol.dr + st.u * st.r - v_lat_rate);
  auto circle_cap = [](double limit, double fx) {
    return std::sqrt(std::max(0.0, limit * limit - fx * fx));
  };
  double fy_r = 0.0, fy_l = 0.0;
  bool lateral_ok = detail::allocate_lateral(fy_want, circle_cap(limit_r, sol.f_r),
                                             circle_cap(limit_l, sol.f_l), fy_r, fy_l);
  double dv = 0.0;
  if (!lateral_ok) {
    const double dir = std::abs(v_lat) > 1e-9 ? -detail::sign_of(v_lat)
                                              : detail::sign_of(fy_want);
    for (int pass = 0; pass < 2; ++pass) {
      fy_r = dir * circle_cap(limit_r, sol.f_r);
      fy_l = dir * circle_cap(limit_l, sol.f_l);
      const detail::AccelSolution next = settle(false, fy_r + fy_l, 0.0);
      const bool stable = std::abs(next.f_r - sol.f_r) < 1e-9 &&
                          std::abs(next.f_l - sol.f_l) < 1e-9;
      sol = next;
      if (stable) break;
    }
    fy_r = dir * circle_cap(limit_r, sol.f_r);
    fy_l = dir * circle_cap(limit_l, sol.f_l);
    dv = (fy_r + fy_l) / p.mass - st.u * st.r;
  }

  // Twist update, then pose with the new twist.
  StepResult out;
  DynState& ns = out.state;
  ns.pose = st.pose;
  ns.u = st.u + sol.du * dt;
  ns.r = st.r + sol.dr * dt;
  if (lateral_ok) {
    ns.v = lr * ns.r;
  } else {
    ns.v = st.v + dv * dt;
    // A lateral slide that reverses inside the step resolves back onto the
    // constraint; the next step decides whether it holds.
    if (v_lat != 0.0 && (ns.v - lr * ns.r) * v_lat < 0.0) ns.v = lr * ns.r;
  }

  auto advance_wheel = [&](const detail::WheelMode& m, double tau_i, double omega0,
                           double slip0, double f, double side) {
    const double rolling1 = (ns.u + side * (T / 2.0) * ns.r) / R;
    double omega1, slip1;
    if (m.stick) {
      omega1 = rolling1;
      slip1 = 0.0;
    } else {
      omega1 = omega0 + (tau_i - f * R) / iw * dt;
      slip1 = R * omega1 - R * rolling1;
      if (slip0 != 0.0 && slip1 * slip0 < 0.0) {
        // Crossed rolling speed inside the step: resolve to rolling and let
        // the next step decide between re-stick and renewed slip.
        omega1 = rolling1;
        slip1 = 0.0;
      }
    }
    return std::pair<double, double>{omega1, slip1};
  };
  auto [omega_r1, slipv_r1] =
      advance_wheel(mode_r, tau.tau_r, st.omega_r, slip_now_r, sol.f_r, +1.0);
  auto [omega_l1, slipv_l1] =
      advance_wheel(mode_l, tau.tau_l, st.omega_l, slip_now_l, sol.f_l, -1.0);
  ns.omega_r = omega_r1;
  ns.omega_l = omega_l1;
  ns.slip_r = !mode_r.stick;
  ns.slip_l = !mode_l.stick;
  ns.slip_vel_r = slipv_r1;
  ns.slip_vel_l = slipv_l1;

  const BodyTwist new_twist{ns.u, ns.v, ns.r};
  ns.pose = p.pose_integrator == PoseIntegrator::kExactArc
                ? integrate_pose(st.pose, new_twist, dt)
                : integrate_pose_euler(st.pose, new_twist, dt);

  // Energy bookkeeping: trapezoidal actuator work, contact dissipation at
  // midpoint slip speeds (non-negative up to discretisation of crossings).
  const double om_r = 0.5 * (st.omega_r + ns.omega_r);
  const double om_l = 0.5 * (st.omega_l + ns.omega_l);
  out.work_in = (tau.tau_r * om_r + tau.tau_l * om_l) * dt;
  const double u_mid = 0.5 * (st.u + ns.u);
  const double r_mid = 0.5 * (st.r + ns.r);
  const double v_mid = 0.5 * (st.v + ns.v);
  double dissip = 0.0;
  if (!mode_r.stick)
    dissip += sol.f_r * (R * om_r - (u_mid + (T / 2.0) * r_mid)) * dt;
  if (!mode_l.stick)
    dissip += sol.f_l * (R * om_l - (u_mid - (T / 2.0) * r_mid)) * dt;
  dissip += (fy_r + fy_l) * (lr * r_mid - v_mid) * dt;
  out.dissipation = dissip;

  out.right = WheelStepInfo{sol.f_r, fy_r, mu_r, n_r, slipv_r1, !mode_r.stick};
  out.left = WheelStepInfo{sol.f_l, fy_l, mu_l, n_l, slipv_l1, !mode_l.stick};
  out.lateral_saturated = !lateral_ok;
  return out;
}

}  // namespace diffdrive
