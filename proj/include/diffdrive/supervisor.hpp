#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "diffdrive/dynamics.hpp"
#include "diffdrive/errors.hpp"
#include "diffdrive/kinematics.hpp"
#include "diffdrive/path.hpp"
#include "diffdrive/trajectory.hpp"

namespace diffdrive {

enum class ControlMode { kLow, kCombined };

/// Longitudinal slip ratio between wheel circumferential speed and the
/// ground speed at the contact: 1 - ground/wheel when the wheel over-spins,
/// the symmetric form when it under-spins, clamped to [0, 1].
inline double slip_ratio(double wheel_speed, double ground_speed) {
  const double denom = std::max(std::abs(wheel_speed), std::abs(ground_speed));
  if (denom < 1e-6) return 0.0;
  return std::clamp(std::abs(wheel_speed - ground_speed) / denom, 0.0, 1.0);
}

struct SlipMetrics {
  double ratio_r = 0.0, ratio_l = 0.0;
  double pose_deviation = 0.0;   // dead-reckoned vs measured position [m]
  double innovation_rate = 0.0;  // one-tick odometry prediction mismatch [m/s]
  bool wheel_event_r = false, wheel_event_l = false, deviation_event = false;
  bool event_active = false;
  double event_onset_time = -1.0;
};

/// Slip ratios from measured wheel speeds against the measured body twist,
/// plus the accumulated odometry-vs-measured position deviation.
inline SlipMetrics slip_detect(const WheelRates& wheels, const BodyTwist& twist,
                               const Pose& odometry, const Pose& measured,
                               const GeometryParams& g) {
  SlipMetrics m;
  const double half_track = g.track_width / 2.0;
  m.ratio_r = slip_ratio(g.wheel_radius * wheels.omega_r, twist.u + half_track * twist.r);
  m.ratio_l = slip_ratio(g.wheel_radius * wheels.omega_l, twist.u - half_track * twist.r);
  m.pose_deviation = std::hypot(odometry.x - measured.x, odometry.y - measured.y);
  return m;
}

/// Traction-force magnitude implied by the measured body accelerations,
/// normalised by the driving-axle load.
inline double mu_from_motion(double du, double dv, const BodyTwist& twist, double mass,
                             double axle_load) {
  const double fx = mass * (du - twist.v * twist.r);
  const double fy = mass * (dv + twist.u * twist.r);
  return std::hypot(fx, fy) / axle_load;
}

struct AdaptationState {
  double mu_hat = 0.8;
  MotionLimits scaled_limits;
  std::vector<double> scaled_vmax;
  int replan_count = 0;
  double last_event_time = -std::numeric_limits<double>::infinity();
};

/// Folds a friction estimate into the adaptation state: acceleration limits
/// shrink to beta*mu*g and arc speeds so that v^2/r stays below beta*mu*g.
/// Within an episode limits only tighten; relaxing goes through
/// reset_adaptation. Returns true when anything tightened.
inline bool traction_adapt(AdaptationState& adapt, double mu_hat, const PathSpec& path,
                           double beta, double gravity, double accel_floor = 1e-3) {
  adapt.mu_hat = mu_hat;
  const double a_cap = std::max(accel_floor, beta * mu_hat * gravity);
  bool tightened = false;
  auto shrink = [&](double& value, double cap) {
    if (cap < value - 1e-12) {
      value = cap;
      tightened = true;
    }
  };
  shrink(adapt.scaled_limits.a_max, a_cap);
  shrink(adapt.scaled_limits.d_max, a_cap);
  for (std::size_t i = 0; i < adapt.scaled_vmax.size(); ++i) {
    const PathSection& sec = path.sections()[i];
    if (sec.kind() != PathSection::Kind::kArc) continue;
    shrink(adapt.scaled_vmax[i], std::sqrt(a_cap * sec.radius()));
  }
  return tightened;
}

inline void reset_adaptation(AdaptationState& adapt, double mu_initial,
                             const MotionLimits& configured,
                             const std::vector<double>& configured_vmax) {
  adapt.mu_hat = mu_initial;
  adapt.scaled_limits = configured;
  adapt.scaled_vmax = configured_vmax;
}

struct SupervisorConfig {
  ControlMode mode = ControlMode::kCombined;
  double control_period = 0.01;        // [s]
  double k_y = 2.0;                    // lateral error to yaw rate [1/(m s)]
  double k_theta = 3.0;                // heading error to yaw rate [1/s]
  double k_s = 2.0;                    // along-track error to speed [1/s]
  double slip_ratio_threshold = 0.05;
  double slip_debounce = 0.05;         // [s]
  double innovation_threshold = 0.05;  // odometry mismatch rate [m/s]
  double beta = 0.8;                   // traction safety factor
  double relax_time = 2.0;             // [s] without events before limits relax
  double mu_initial = 0.8;
  double mu_filter_tau = 0.2;          // [s]
  double mu_floor = 0.02;
  double min_replan_interval = 0.25;   // [s]
  bool track_cg = false;               // false: rear-axle midpoint follows the path
};

/// High-level controller: schedules the planned profile into wheel-rate
/// references with pose-error feedback, watches for slip, estimates the
/// local friction ceiling, and (in combined mode) scales limits and replans
/// the remaining path from the robot's projected progress. In low mode the
/// detector still runs but triggers nothing.
class Supervisor {
 public:
  struct Measurements {
    Pose pose;        // CG pose
    BodyTwist twist;  // CG body twist
    WheelRates wheels;
  };

  struct Output {
    WheelRates refs;
    double u_cmd = 0.0, r_cmd = 0.0;
    double planned_v = 0.0;
    double s_ref = 0.0;
    Pose ref_pose;
    double disp_error = 0.0;
    SlipMetrics metrics;
    bool replanned = false;
    bool emergency = false;
    bool finished = false;
  };

  Supervisor(PathSpec path, std::vector<double> section_vmax, MotionLimits limits,
             GeometryParams geom, double mass, double gravity, SupervisorConfig cfg,
             double v_initial = 0.0, double v_final = 0.0)
      : path_(std::move(path)),
        configured_vmax_(std::move(section_vmax)),
        configured_limits_(limits),
        geom_(geom),
        mass_(mass),
        gravity_(gravity),
        cfg_(cfg),
        v_final_(v_final),
        plan_(plan(path_, configured_vmax_, limits, v_initial, v_final)) {
    axle_load_ = mass_ * gravity_ * geom_.l_f / (geom_.l_f + geom_.l_r);
    reset_adaptation(adapt_, cfg_.mu_initial, configured_limits_, configured_vmax_);
  }

  Output step(double t, const Measurements& meas) {
    const double tc = cfg_.control_period;
    Output out;

    if (!initialized_) {
      odometry_ = meas.pose;
      prev_meas_ = meas;
      initialized_ = true;
    } else {
      odometry_ = integrate_pose(odometry_, forward_kinematics(meas.wheels, geom_), tc);
    }

    out.metrics = slip_detect(meas.wheels, meas.twist, odometry_, meas.pose, geom_);
    const Pose predicted =
        integrate_pose(prev_meas_.pose, forward_kinematics(prev_meas_.wheels, geom_), tc);
    out.metrics.innovation_rate =
        std::hypot(predicted.x - meas.pose.x, predicted.y - meas.pose.y) / tc;
    debounce(out.metrics, t, tc);

    if (cfg_.mode == ControlMode::kCombined) out.replanned = adapt_and_replan(t, meas, out);

    if (emergency_) {
      emergency_step(t, meas, out);
      prev_meas_ = meas;
      return out;
    }

    // Scheduled reference point and feed-forward twist.
    const double tl = t - plan_t0_;
    TrajectorySample sp;
    bool schedule_done = false;
    if (tl >= plan_.duration()) {
      sp = TrajectorySample{plan_.total_length(), 0.0, 0.0};
      schedule_done = true;
    } else {
      sp = plan_.sample(std::max(0.0, tl));
    }
    const double s_ref = std::min(s_offset_ + sp.s, path_.total_length());
    last_s_ref_ = s_ref;
    out.s_ref = s_ref;
    out.planned_v = sp.v;
    out.ref_pose = path_.pose_at(s_ref);

    const auto [tx, ty] = tracked_point(meas.pose);
    const double cref = std::cos(out.ref_pose.theta), sref = std::sin(out.ref_pose.theta);
    const double ex = out.ref_pose.x - tx, ey = out.ref_pose.y - ty;
    const double e_lat = -sref * ex + cref * ey;
    const double e_along = cref * ex + sref * ey;
    const double e_theta = wrap_angle(out.ref_pose.theta - meas.pose.theta);
    out.disp_error = std::hypot(ex, ey);

    const bool covers_end = s_offset_ + plan_.total_length() >= path_.total_length() - 1e-3;
    if (schedule_done) {
      yaw_corr_ = 0.0;
      out.r_cmd = 0.0;
      // Terminal approach: creep the last centimetres closed when the robot
      // ended near the goal; a robot that lost the path stays put.
      if (covers_end && out.disp_error < 0.25)
        out.u_cmd = std::clamp(cfg_.k_s * e_along, 0.0, 0.25);
      else
        out.u_cmd = 0.0;
      out.refs = inverse_kinematics(out.u_cmd, out.r_cmd, geom_);
    } else {
      const double corr_target = cfg_.k_y * e_lat + cfg_.k_theta * e_theta;
      const double max_delta = configured_limits_.alpha_max * tc;
      yaw_corr_ += std::clamp(corr_target - yaw_corr_, -max_delta, max_delta);
      const double kappa = path_.curvature_at(s_ref);
      // Along-track catch-up closes schedule lag; while a traction episode is
      // being managed it may only slow the robot down, never outrun the
      // adapted plan.
      double catch_up = std::clamp(cfg_.k_s * e_along, -0.5, 0.5);
      if (cfg_.mode == ControlMode::kCombined && episode_active_)
        catch_up = std::min(catch_up, 0.0);
      out.u_cmd = std::clamp(sp.v + catch_up, 0.0, configured_limits_.v_cap);
      out.r_cmd = std::clamp(sp.v * kappa + yaw_corr_, -configured_limits_.omega_max,
                             configured_limits_.omega_max);
      out.refs = inverse_kinematics(out.u_cmd, out.r_cmd, geom_);
    }

    const double speed = std::hypot(meas.twist.u, meas.twist.v);
    if (schedule_done && covers_end && speed < 0.01) {
      const double s_done = project_onto_path(path_, tx, ty, path_.total_length(), 3.0);
      out.finished = path_.total_length() - s_done <= 1e-3;
    }

    prev_meas_ = meas;
    return out;
  }

  const TrajectoryPlan& current_plan() const { return plan_; }
  const AdaptationState& adaptation() const { return adapt_; }
  double plan_start_arclength() const { return s_offset_; }
  double plan_start_time() const { return plan_t0_; }
  bool in_emergency() const { return emergency_; }
  const Pose& odometry() const { return odometry_; }

 private:
  std::pair<double, double> tracked_point(const Pose& cg) const {
    if (cfg_.track_cg) return {cg.x, cg.y};
    return {cg.x - geom_.l_r * std::cos(cg.theta), cg.y - geom_.l_r * std::sin(cg.theta)};
  }

  double scheduled_s(double t) const {
    const double tl = t - plan_t0_;
    if (tl >= plan_.duration()) return std::min(s_offset_ + plan_.total_length(),
                                                path_.total_length());
    return std::min(s_offset_ + plan_.sample(std::max(0.0, tl)).s, path_.total_length());
  }

  void debounce(SlipMetrics& m, double t, double tc) {
    acc_r_ = m.ratio_r > cfg_.slip_ratio_threshold ? acc_r_ + tc : 0.0;
    acc_l_ = m.ratio_l > cfg_.slip_ratio_threshold ? acc_l_ + tc : 0.0;
    acc_dev_ = m.innovation_rate > cfg_.innovation_threshold ? acc_dev_ + tc : 0.0;
    m.wheel_event_r = acc_r_ > cfg_.slip_debounce;
    m.wheel_event_l = acc_l_ > cfg_.slip_debounce;
    m.deviation_event = acc_dev_ > cfg_.slip_debounce;
    m.event_active = m.wheel_event_r || m.wheel_event_l || m.deviation_event;
    if (m.event_active) {
      if (event_onset_ < 0.0) event_onset_ = t;
      m.event_onset_time = event_onset_;
    } else {
      event_onset_ = -1.0;
    }
  }

  bool adapt_and_replan(double t, const Measurements& meas, Output& out) {
    const double tc = cfg_.control_period;
    if (out.metrics.event_active) {
      const double du = (meas.twist.u - prev_meas_.twist.u) / tc;
      const double dv = (meas.twist.v - prev_meas_.twist.v) / tc;
      double mu_raw = mu_from_motion(du, dv, meas.twist, mass_, axle_load_);
      mu_raw = std::clamp(mu_raw, cfg_.mu_floor, cfg_.mu_initial);
      adapt_.mu_hat += (tc / cfg_.mu_filter_tau) * (mu_raw - adapt_.mu_hat);
      adapt_.last_event_time = t;
      const bool tightened = traction_adapt(adapt_, adapt_.mu_hat, path_, cfg_.beta, gravity_);
      const bool first_of_episode = !episode_active_;
      episode_active_ = true;
      if ((tightened || first_of_episode) && t - last_replan_ >= cfg_.min_replan_interval &&
          !emergency_)
        return try_replan(t, meas);
      return false;
    }
    if (episode_active_ && !emergency_ && t - adapt_.last_event_time > cfg_.relax_time) {
      reset_adaptation(adapt_, cfg_.mu_initial, configured_limits_, configured_vmax_);
      episode_active_ = false;
      return try_replan(t, meas);
    }
    return false;
  }

  bool try_replan(double t, const Measurements& meas) {
    const auto [tx, ty] = tracked_point(meas.pose);
    const double s_now = project_onto_path(path_, tx, ty, scheduled_s(t), 3.0);
    if (path_.total_length() - s_now < 1e-3) return false;
    const PathSuffix suffix = suffix_from(path_, s_now);
    std::vector<double> vmax(adapt_.scaled_vmax.begin() +
                                 static_cast<std::ptrdiff_t>(suffix.first_section),
                             adapt_.scaled_vmax.end());
    const double first_cap = effective_section_vmax(suffix.path.sections().front(),
                                                    vmax.front(), adapt_.scaled_limits);
    const double v_init = std::clamp(meas.twist.u, 0.0, first_cap);
    try {
      plan_ = plan(suffix.path, vmax, adapt_.scaled_limits, v_init, v_final_);
    } catch (const InfeasiblePlanError&) {
      emergency_ = true;
      emergency_speed_ = std::max(meas.twist.u, 0.0);
      return false;
    }
    plan_t0_ = t;
    s_offset_ = s_now;
    last_replan_ = t;
    ++adapt_.replan_count;
    return true;
  }

  /// Maximum-deceleration straight-line stop holding the last reference
  /// point; once stopped, resume with a fresh plan from rest.
  void emergency_step(double t, const Measurements& meas, Output& out) {
    emergency_speed_ =
        std::max(0.0, emergency_speed_ - configured_limits_.d_max * cfg_.control_period);
    out.emergency = true;
    out.u_cmd = emergency_speed_;
    out.r_cmd = 0.0;
    out.refs = inverse_kinematics(out.u_cmd, out.r_cmd, geom_);
    out.planned_v = emergency_speed_;
    out.s_ref = last_s_ref_;
    out.ref_pose = path_.pose_at(out.s_ref);
    const auto [tx, ty] = tracked_point(meas.pose);
    out.disp_error = std::hypot(out.ref_pose.x - tx, out.ref_pose.y - ty);
    if (std::hypot(meas.twist.u, meas.twist.v) < 0.01 && emergency_speed_ == 0.0) {
      emergency_ = false;
      last_replan_ = -std::numeric_limits<double>::infinity();
      Supervisor::Measurements at_rest = meas;
      at_rest.twist = BodyTwist{};
      try_replan(t, at_rest);
    }
  }

  PathSpec path_;
  std::vector<double> configured_vmax_;
  MotionLimits configured_limits_;
  GeometryParams geom_;
  double mass_;
  double gravity_;
  SupervisorConfig cfg_;
  double v_final_;
  TrajectoryPlan plan_;
  double axle_load_ = 0.0;

  AdaptationState adapt_;
  Pose odometry_;
  Measurements prev_meas_;
  bool initialized_ = false;
  double plan_t0_ = 0.0;
  double s_offset_ = 0.0;
  double last_s_ref_ = 0.0;
  double yaw_corr_ = 0.0;
  double acc_r_ = 0.0, acc_l_ = 0.0, acc_dev_ = 0.0;
  double event_onset_ = -1.0;
  double last_replan_ = -std::numeric_limits<double>::infinity();
  bool episode_active_ = false;
  bool emergency_ = false;
  double emergency_speed_ = 0.0;
};

}  // namespace diffdrive
