#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "diffdrive/adaptive_control.hpp"
#include "diffdrive/dynamics.hpp"
#include "diffdrive/errors.hpp"
#include "diffdrive/scenario.hpp"
#include "diffdrive/supervisor.hpp"

namespace diffdrive {

/// One control-tick trace record. slip_flags packs the per-wheel flags
/// (bit 0 right, bit 1 left) so the schema stays at 19 columns.
struct TraceRow {
  double t = 0.0;
  double x = 0.0, y = 0.0, theta = 0.0;  // measured CG pose, theta wrapped
  double x_ref = 0.0, y_ref = 0.0;       // scheduled reference point
  double u = 0.0, v = 0.0, r = 0.0;      // measured twist
  double omega_r = 0.0, omega_l = 0.0;   // measured wheel rates
  double tau_r = 0.0, tau_l = 0.0;       // torques applied over this tick
  double f_xr = 0.0, f_xl = 0.0;         // traction forces at tick start
  int slip_flags = 0;
  double mu = 0.0;  // friction under the axle midpoint
  double planned_v = 0.0;
  double disp_error = 0.0;
};

inline constexpr const char* kTraceHeader =
    "t,x,y,theta,x_ref,y_ref,u,v,r,omega_r,omega_l,tau_r,tau_l,f_xr,f_xl,slip_flags,mu,"
    "planned_v,disp_error";

struct RunSummary {
  bool completed = false;
  double completion_time = 0.0;
  double max_error = 0.0;
  double mean_error = 0.0;
  double final_error = 0.0;
  double slip_time = 0.0;
  int replan_count = 0;
  int design_failures = 0;
  bool emergency_engaged = false;
  double work_in = 0.0;
  double dissipation = 0.0;
  std::uint64_t seed = 0;
  std::string mode;
};

struct RunResult {
  std::vector<TraceRow> trace;
  RunSummary summary;
  DynState final_state;
};

/// Per-physics-substep hook, used by tests to audit every step.
using SubstepObserver = std::function<void(double t, const StepResult&)>;

inline void write_trace(const std::vector<TraceRow>& rows, std::ostream& os) {
  os << kTraceHeader << '\n';
  char line[640];
  for (const TraceRow& w : rows) {
    std::snprintf(line, sizeof(line),
                  "%.12f,%.12f,%.12f,%.12f,%.12f,%.12f,%.12f,%.12f,%.12f,%.12f,%.12f,%.12f,"
                  "%.12f,%.12f,%.12f,%d,%.12f,%.12f,%.12f",
                  w.t, w.x, w.y, w.theta, w.x_ref, w.y_ref, w.u, w.v, w.r, w.omega_r,
                  w.omega_l, w.tau_r, w.tau_l, w.f_xr, w.f_xl, w.slip_flags, w.mu,
                  w.planned_v, w.disp_error);
    os << line << '\n';
  }
}

inline std::string trace_to_string(const std::vector<TraceRow>& rows) {
  std::ostringstream os;
  write_trace(rows, os);
  return os.str();
}

inline void write_trace_file(const std::vector<TraceRow>& rows, const std::string& filename) {
  std::ofstream out(filename, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open trace destination: " + filename);
  write_trace(rows, out);
}

inline void write_summary(const RunSummary& s, std::ostream& os) {
  os << "mode = " << s.mode << '\n'
     << "completed = " << (s.completed ? "true" : "false") << '\n'
     << "completion_time = " << s.completion_time << '\n'
     << "max_error = " << s.max_error << '\n'
     << "mean_error = " << s.mean_error << '\n'
     << "final_error = " << s.final_error << '\n'
     << "slip_time = " << s.slip_time << '\n'
     << "replan_count = " << s.replan_count << '\n'
     << "design_failures = " << s.design_failures << '\n'
     << "emergency_engaged = " << (s.emergency_engaged ? "true" : "false") << '\n'
     << "work_in = " << s.work_in << '\n'
     << "dissipation = " << s.dissipation << '\n'
     << "seed = " << s.seed << '\n';
}

/// Runs one scenario: per control tick the supervisor turns the schedule
/// into wheel references, the self-tuning loops turn those into torques,
/// and the traction model advances in fixed physics substeps. Terminates at
/// path completion (schedule exhausted, robot stopped at the end) or at the
/// duration cap.
inline RunResult run_scenario(const Scenario& sc, const SubstepObserver& observer = {}) {
  validate(sc);
  const DynamicParams params = resolved_dynamic_params(sc);
  const double tc = sc.controller.control_period;
  const int substeps = static_cast<int>(std::round(tc / sc.simulation.dt));
  const double dt = tc / substeps;

  SupervisorConfig sup_cfg;
  sup_cfg.mode = sc.controller.mode;
  sup_cfg.control_period = tc;
  sup_cfg.k_y = sc.controller.k_y;
  sup_cfg.k_theta = sc.controller.k_theta;
  sup_cfg.k_s = sc.controller.k_s;
  sup_cfg.slip_ratio_threshold = sc.controller.slip_ratio_threshold;
  sup_cfg.slip_debounce = sc.controller.slip_debounce;
  sup_cfg.innovation_threshold = sc.controller.innovation_threshold;
  sup_cfg.beta = sc.controller.beta;
  sup_cfg.relax_time = sc.controller.relax_time;
  sup_cfg.mu_initial = sc.controller.mu_initial;
  sup_cfg.mu_filter_tau = sc.controller.mu_filter_tau;
  sup_cfg.mu_floor = sc.controller.mu_floor;
  sup_cfg.min_replan_interval = sc.controller.min_replan_interval;
  sup_cfg.track_cg = sc.simulation.track_cg;

  Supervisor supervisor(sc.path, sc.section_vmax, sc.limits, params.geom, params.mass,
                        params.gravity, sup_cfg, sc.v_initial, sc.v_final);
  if (supervisor.current_plan().duration() >= sc.simulation.duration_cap)
    throw ValidationError("simulation.duration_cap: must exceed the planned trajectory duration");

  AdaptiveWheelController::Config wheel_cfg;
  wheel_cfg.ts = tc;
  wheel_cfg.lambda = sc.controller.rls.lambda;
  wheel_cfg.p0 = sc.controller.rls.p0;
  wheel_cfg.theta0 = Eigen::Vector4d(sc.controller.rls.theta0[0], sc.controller.rls.theta0[1],
                                     sc.controller.rls.theta0[2], sc.controller.rls.theta0[3]);
  const double pole = std::exp(-sc.controller.desired_pole_rate * tc);
  wheel_cfg.pole1 = {pole, 0.0};
  wheel_cfg.pole2 = {pole, 0.0};
  wheel_cfg.design_period = sc.controller.design_period;
  wheel_cfg.torque_limit = params.torque_limit;
  DriveController drive(wheel_cfg, sc.controller.k_c);

  DynState state;
  const Pose start = sc.path.start_pose();
  if (sc.simulation.track_cg) {
    state.pose = start;
  } else {
    state.pose = Pose{start.x + params.geom.l_r * std::cos(start.theta),
                      start.y + params.geom.l_r * std::sin(start.theta), start.theta};
  }

  std::mt19937_64 rng(sc.simulation.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const NoiseConfig& noise = sc.simulation.noise;
  auto noisy = [&](double value, double sigma) {
    return sigma > 0.0 ? value + sigma * gauss(rng) : value;
  };
  auto measure = [&](const DynState& st) {
    Supervisor::Measurements m;
    m.pose = Pose{noisy(st.pose.x, noise.pose_xy), noisy(st.pose.y, noise.pose_xy),
                  noisy(st.pose.theta, noise.heading)};
    m.twist = BodyTwist{noisy(st.u, noise.body_twist), noisy(st.v, noise.body_twist),
                        noisy(st.r, noise.body_twist)};
    m.wheels = WheelRates{noisy(st.omega_r, noise.wheel_speed),
                          noisy(st.omega_l, noise.wheel_speed)};
    return m;
  };

  RunResult result;
  RunSummary& summary = result.summary;
  summary.seed = sc.simulation.seed;
  summary.mode = sc.controller.mode == ControlMode::kLow ? "low" : "combined";

  double error_sum = 0.0;
  long tick = 0;
  bool finished = false;
  double t = 0.0;
  while (true) {
    t = tick * tc;
    if (t >= sc.simulation.duration_cap - 1e-12) break;
    const Supervisor::Measurements meas = measure(state);
    const Supervisor::Output sup = supervisor.step(t, meas);
    summary.emergency_engaged = summary.emergency_engaged || sup.emergency;
    if (sup.finished) {
      finished = true;
      break;
    }
    const bool freeze_on_slip = sc.controller.freeze_estimation_on_slip;
    const bool freeze_r =
        freeze_on_slip && sup.metrics.ratio_r > sc.controller.slip_ratio_threshold;
    const bool freeze_l =
        freeze_on_slip && sup.metrics.ratio_l > sc.controller.slip_ratio_threshold;
    const DriveController::Torques tau = drive.step(sup.refs.omega_r, sup.refs.omega_l,
                                                    meas.wheels.omega_r, meas.wheels.omega_l,
                                                    freeze_r, freeze_l);

    const double ax = state.pose.x - params.geom.l_r * std::cos(state.pose.theta);
    const double ay = state.pose.y - params.geom.l_r * std::sin(state.pose.theta);
    const double mu_here = friction_at(sc.surface, ax, ay);

    StepResult first;
    for (int k = 0; k < substeps; ++k) {
      const StepResult res = step_dynamics(state, WheelTorques{tau.tau_r, tau.tau_l},
                                           sc.surface, params, dt);
      if (k == 0) first = res;
      if (observer) observer(t + k * dt, res);
      summary.work_in += res.work_in;
      summary.dissipation += res.dissipation;
      state = res.state;
    }

    TraceRow row;
    row.t = t;
    row.x = meas.pose.x;
    row.y = meas.pose.y;
    row.theta = wrap_angle(meas.pose.theta);
    row.x_ref = sup.ref_pose.x;
    row.y_ref = sup.ref_pose.y;
    row.u = meas.twist.u;
    row.v = meas.twist.v;
    row.r = meas.twist.r;
    row.omega_r = meas.wheels.omega_r;
    row.omega_l = meas.wheels.omega_l;
    row.tau_r = tau.tau_r;
    row.tau_l = tau.tau_l;
    row.f_xr = first.right.f_x;
    row.f_xl = first.left.f_x;
    row.slip_flags = (first.right.slip ? 1 : 0) | (first.left.slip ? 2 : 0);
    row.mu = mu_here;
    row.planned_v = sup.planned_v;
    row.disp_error = sup.disp_error;
    result.trace.push_back(row);

    summary.max_error = std::max(summary.max_error, row.disp_error);
    error_sum += row.disp_error;
    if (row.slip_flags != 0) summary.slip_time += tc;
    ++tick;
  }

  summary.completed = finished;
  summary.completion_time = finished ? t : sc.simulation.duration_cap;
  if (!result.trace.empty()) {
    summary.mean_error = error_sum / static_cast<double>(result.trace.size());
    summary.final_error = result.trace.back().disp_error;
  }
  summary.replan_count = supervisor.adaptation().replan_count;
  summary.design_failures =
      drive.right().design_failures() + drive.left().design_failures();
  result.final_state = state;
  return result;
}

struct CompareReport {
  RunResult low;
  RunResult combined;
  double error_ratio = 0.0;  // low final error / combined final error
};

/// Runs the scenario once per controller mode with identical seeds.
inline CompareReport compare_modes(const Scenario& sc, const SubstepObserver& observer = {}) {
  Scenario low = sc;
  low.controller.mode = ControlMode::kLow;
  Scenario combined = sc;
  combined.controller.mode = ControlMode::kCombined;
  CompareReport report;
  report.low = run_scenario(low, observer);
  report.combined = run_scenario(combined, observer);
  const double denom = std::max(report.combined.summary.final_error, 1e-12);
  report.error_ratio = report.low.summary.final_error / denom;
  return report;
}

inline void write_compare_report(const CompareReport& r, std::ostream& os) {
  os << "[low]\n";
  write_summary(r.low.summary, os);
  os << "[combined]\n";
  write_summary(r.combined.summary, os);
  os << "[comparison]\n"
     << "error_ratio_low_over_combined = " << r.error_ratio << '\n'
     << "winner = "
     << (r.low.summary.final_error >= r.combined.summary.final_error ? "combined" : "low")
     << '\n';
}

}  // namespace diffdrive
