#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffdrive/body_model.hpp"
#include "diffdrive/dynamics.hpp"
#include "diffdrive/errors.hpp"
#include "diffdrive/supervisor.hpp"
#include "diffdrive/trajectory.hpp"

namespace diffdrive {

struct NoiseConfig {
  double pose_xy = 0.0;      // std dev on measured x and y [m]
  double heading = 0.0;      // std dev on measured theta [rad]
  double wheel_speed = 0.0;  // std dev on measured wheel rates [rad/s]
  double body_twist = 0.0;   // std dev on measured u, v, r
};

struct SimulationConfig {
  double dt = 0.001;           // physics step [s]
  double duration_cap = 30.0;  // [s]
  std::uint64_t seed = 1;
  PoseIntegrator integrator = PoseIntegrator::kExactArc;
  bool track_cg = false;  // false: the rear-axle midpoint follows the path
  NoiseConfig noise;
};

struct RlsConfig {
  double lambda = 0.99;
  double p0 = 1e3;
  std::array<double, 4> theta0 = {-0.5, 0.0, 0.1, 0.0};
};

struct ControllerConfig {
  ControlMode mode = ControlMode::kCombined;
  double control_period = 0.01;  // [s]
  double k_y = 2.0;
  double k_theta = 3.0;
  double k_s = 2.0;
  double k_c = 0.3;  // cross-coupling gain [N m s/rad]
  RlsConfig rls;
  double desired_pole_rate = 10.0;  // continuous double pole [rad/s]
  int design_period = 10;           // control ticks between redesigns
  double slip_ratio_threshold = 0.05;
  double slip_debounce = 0.05;
  double innovation_threshold = 0.05;
  double beta = 0.8;
  double relax_time = 2.0;
  double mu_initial = 0.8;
  double mu_filter_tau = 0.2;
  double mu_floor = 0.02;
  double min_replan_interval = 0.25;
  // Freeze the wheel-plant estimator while a wheel slips. Off by default:
  // the slipping plant is exactly what the self-tuner must track to keep
  // the wheel loop stable on a slick surface.
  bool freeze_estimation_on_slip = false;
};

/// Either a particle layout (aggregated at load) or explicit inertial values.
struct BodyConfig {
  bool use_particles = false;
  RigidBodySpec particles;
  double mass = 0.0;
  double yaw_inertia = 0.0;
};

struct Scenario {
  BodyConfig body;
  DynamicParams dynamics;  // mass / yaw_inertia filled via resolved_dynamic_params
  PathSpec path;
  std::vector<double> section_vmax;
  MotionLimits limits;
  double v_initial = 0.0;
  double v_final = 0.0;
  SurfaceMap surface;
  ControllerConfig controller;
  SimulationConfig simulation;
};

/// Dynamic parameters with mass and yaw inertia resolved from the body
/// section (aggregating the particle layout when one is given).
inline DynamicParams resolved_dynamic_params(const Scenario& sc) {
  DynamicParams p = sc.dynamics;
  if (sc.body.use_particles) {
    const MassProperties mp = aggregate(sc.body.particles);
    p.mass = mp.mass;
    p.yaw_inertia = yaw_inertia(mp);
  } else {
    p.mass = sc.body.mass;
    p.yaw_inertia = sc.body.yaw_inertia;
  }
  validate(p);
  return p;
}

namespace config_detail {

using nlohmann::json;

inline const json& member(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) throw ValidationError(path + ": expected an object");
  const auto it = j.find(key);
  if (it == j.end()) throw ValidationError(path + "." + key + ": missing");
  return *it;
}

inline double num(const json& j, const char* key, const std::string& path) {
  const json& v = member(j, key, path);
  if (!v.is_number()) throw ValidationError(path + "." + key + ": expected a number");
  return v.get<double>();
}

inline double num_or(const json& j, const char* key, const std::string& path, double fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return num(j, key, path);
}

inline std::string str(const json& j, const char* key, const std::string& path) {
  const json& v = member(j, key, path);
  if (!v.is_string()) throw ValidationError(path + "." + key + ": expected a string");
  return v.get<std::string>();
}

inline Eigen::Vector3d vec3(const json& j, const char* key, const std::string& path) {
  const json& v = member(j, key, path);
  if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() ||
      !v[2].is_number())
    throw ValidationError(path + "." + key + ": expected an array of 3 numbers");
  return Eigen::Vector3d(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
}

inline PathSpec parse_path(const json& j) {
  const json& sp = member(j, "start_pose", "path");
  Pose start{num(sp, "x", "path.start_pose"), num(sp, "y", "path.start_pose"),
             num(sp, "theta", "path.start_pose")};
  const json& secs = member(j, "sections", "path");
  if (!secs.is_array() || secs.empty())
    throw ValidationError("path.sections: expected a non-empty array");
  std::vector<PathSection> sections;
  for (std::size_t i = 0; i < secs.size(); ++i) {
    const std::string path = "path.sections[" + std::to_string(i) + "]";
    const json& s = secs[i];
    const std::string type = str(s, "type", path);
    try {
      if (type == "line") {
        sections.push_back(PathSection::line(num(s, "length", path)));
      } else if (type == "arc") {
        double angle;
        if (s.contains("turn_angle_deg"))
          angle = num(s, "turn_angle_deg", path) * std::numbers::pi / 180.0;
        else
          angle = num(s, "turn_angle", path);
        sections.push_back(PathSection::arc(num(s, "radius", path), angle));
      } else {
        throw ValidationError(path + ".type: must be \"line\" or \"arc\"");
      }
    } catch (const std::invalid_argument& e) {
      throw ValidationError(path + ": " + e.what());
    }
  }
  return PathSpec(start, std::move(sections));
}

inline BodyConfig parse_body(const json& j) {
  BodyConfig body;
  if (j.contains("particles")) {
    const json& parts = j["particles"];
    if (!parts.is_array() || parts.empty())
      throw ValidationError("body.particles: expected a non-empty array");
    body.use_particles = true;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const std::string path = "body.particles[" + std::to_string(i) + "]";
      Particle p;
      p.origin = vec3(parts[i], "origin", path);
      p.dims = vec3(parts[i], "dims", path);
      p.density = num(parts[i], "density", path);
      try {
        validate(p);
      } catch (const std::invalid_argument& e) {
        throw ValidationError(path + ": " + e.what());
      }
      body.particles.particles.push_back(p);
    }
  } else {
    body.mass = num(j, "mass", "body");
    body.yaw_inertia = num(j, "yaw_inertia", "body");
  }
  return body;
}

}  // namespace config_detail

/// Cross-field checks beyond what parsing enforces.
inline void validate(const Scenario& sc) {
  const auto& sim = sc.simulation;
  if (!(sim.dt > 0.0) || sim.dt > 0.01 + 1e-12)
    throw ValidationError("simulation.dt: must be in (0, 0.01]");
  if (!(sim.duration_cap > 0.0))
    throw ValidationError("simulation.duration_cap: must be > 0");
  const double ratio = sc.controller.control_period / sim.dt;
  if (!(sc.controller.control_period > 0.0) ||
      std::abs(ratio - std::round(ratio)) > 1e-9 || std::round(ratio) < 1.0)
    throw ValidationError("controller.control_period: must be a positive multiple of simulation.dt");
  if (sc.section_vmax.size() != sc.path.sections().size())
    throw ValidationError("section_vmax: must list one speed per path section");
  for (std::size_t i = 0; i < sc.section_vmax.size(); ++i)
    if (!(sc.section_vmax[i] > 0.0))
      throw ValidationError("section_vmax[" + std::to_string(i) + "]: must be > 0");
  validate(sc.limits);
  if (sc.v_initial < 0.0) throw ValidationError("v_initial: must be >= 0");
  if (sc.v_final < 0.0) throw ValidationError("v_final: must be >= 0");
  if (sc.surface.default_mu < 0.0) throw ValidationError("surface.default_mu: must be >= 0");
  for (std::size_t i = 0; i < sc.surface.patches.size(); ++i) {
    const SurfacePatch& p = sc.surface.patches[i];
    const std::string path = "surface.patches[" + std::to_string(i) + "]";
    if (p.mu < 0.0) throw ValidationError(path + ".mu: must be >= 0");
    if (!(p.x_max > p.x_min) || !(p.y_max > p.y_min))
      throw ValidationError(path + ": max bounds must exceed min bounds");
  }
  const auto& c = sc.controller;
  if (!(c.slip_ratio_threshold > 0.0) || c.slip_ratio_threshold >= 1.0)
    throw ValidationError("controller.slip_ratio_threshold: must be in (0, 1)");
  if (!(c.slip_debounce >= 0.0)) throw ValidationError("controller.slip_debounce: must be >= 0");
  if (!(c.beta > 0.0) || c.beta > 1.0)
    throw ValidationError("controller.beta: must be in (0, 1]");
  if (!(c.mu_initial > 0.0)) throw ValidationError("controller.mu_initial: must be > 0");
  if (!(c.mu_filter_tau > 0.0)) throw ValidationError("controller.mu_filter_tau: must be > 0");
  if (!(c.rls.lambda > 0.0) || c.rls.lambda > 1.0)
    throw ValidationError("controller.rls.lambda: must be in (0, 1]");
  if (!(c.rls.p0 > 0.0)) throw ValidationError("controller.rls.p0: must be > 0");
  if (c.design_period < 1) throw ValidationError("controller.design_period: must be >= 1");
  if (!(c.desired_pole_rate > 0.0))
    throw ValidationError("controller.desired_pole_rate: must be > 0");
  const auto& n = sim.noise;
  if (n.pose_xy < 0.0 || n.heading < 0.0 || n.wheel_speed < 0.0 || n.body_twist < 0.0)
    throw ValidationError("simulation.noise: std deviations must be >= 0");
  if (sc.body.use_particles) {
    if (sc.body.particles.particles.empty())
      throw ValidationError("body.particles: must not be empty");
  } else if (!(sc.body.mass > 0.0) || !(sc.body.yaw_inertia > 0.0)) {
    throw ValidationError("body: explicit mass and yaw_inertia must be > 0");
  }
}

inline Scenario parse_scenario(const nlohmann::json& j) {
  using namespace config_detail;

  BodyConfig body = parse_body(member(j, "body", "scenario"));

  const json& dj = member(j, "dynamics", "scenario");
  DynamicParams dyn;
  dyn.drivetrain_inertia = num(dj, "drivetrain_inertia", "dynamics");
  dyn.gravity = num_or(dj, "gravity", "dynamics", 9.81);
  dyn.torque_limit = num_or(dj, "torque_limit", "dynamics", 20.0);

  const json& gj = member(j, "geometry", "scenario");
  dyn.geom.wheel_radius = num(gj, "wheel_radius", "geometry");
  dyn.geom.track_width = num(gj, "track_width", "geometry");
  dyn.geom.l_f = num(gj, "L_F", "geometry");
  dyn.geom.l_r = num(gj, "L_R", "geometry");
  try {
    validate(dyn.geom);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(std::string("geometry: ") + e.what());
  }

  PathSpec path = parse_path(member(j, "path", "scenario"));

  const json& vj = member(j, "section_vmax", "scenario");
  if (!vj.is_array()) throw ValidationError("section_vmax: expected an array");
  std::vector<double> vmax;
  for (std::size_t i = 0; i < vj.size(); ++i) {
    if (!vj[i].is_number())
      throw ValidationError("section_vmax[" + std::to_string(i) + "]: expected a number");
    vmax.push_back(vj[i].get<double>());
  }

  const json& lj = member(j, "limits", "scenario");
  MotionLimits limits;
  limits.a_max = num(lj, "a_max", "limits");
  limits.d_max = num_or(lj, "d_max", "limits", limits.a_max);
  limits.v_cap = num(lj, "v_cap", "limits");
  limits.omega_max = num(lj, "omega_max", "limits");
  limits.alpha_max = num_or(lj, "alpha_max", "limits", 1.5);

  SurfaceMap surface;
  if (j.contains("surface")) {
    const json& sj = j["surface"];
    surface.default_mu = num_or(sj, "default_mu", "surface", 0.8);
    if (sj.contains("patches")) {
      const json& pl = sj["patches"];
      if (!pl.is_array()) throw ValidationError("surface.patches: expected an array");
      for (std::size_t i = 0; i < pl.size(); ++i) {
        const std::string path = "surface.patches[" + std::to_string(i) + "]";
        SurfacePatch p;
        p.x_min = num(pl[i], "x_min", path);
        p.x_max = num(pl[i], "x_max", path);
        p.y_min = num(pl[i], "y_min", path);
        p.y_max = num(pl[i], "y_max", path);
        p.mu = num(pl[i], "mu", path);
        surface.patches.push_back(p);
      }
    }
  }

  ControllerConfig ctrl;
  if (j.contains("controller")) {
    const json& cj = j["controller"];
    if (cj.contains("mode")) {
      const std::string mode = str(cj, "mode", "controller");
      if (mode == "low")
        ctrl.mode = ControlMode::kLow;
      else if (mode == "combined")
        ctrl.mode = ControlMode::kCombined;
      else
        throw ValidationError("controller.mode: must be \"low\" or \"combined\"");
    }
    ctrl.control_period = num_or(cj, "control_period", "controller", ctrl.control_period);
    ctrl.k_y = num_or(cj, "k_y", "controller", ctrl.k_y);
    ctrl.k_theta = num_or(cj, "k_theta", "controller", ctrl.k_theta);
    ctrl.k_s = num_or(cj, "k_s", "controller", ctrl.k_s);
    ctrl.k_c = num_or(cj, "k_c", "controller", ctrl.k_c);
    ctrl.desired_pole_rate = num_or(cj, "desired_pole_rate", "controller", ctrl.desired_pole_rate);
    ctrl.design_period =
        static_cast<int>(num_or(cj, "design_period", "controller", ctrl.design_period));
    ctrl.slip_ratio_threshold =
        num_or(cj, "slip_ratio_threshold", "controller", ctrl.slip_ratio_threshold);
    ctrl.slip_debounce = num_or(cj, "slip_debounce", "controller", ctrl.slip_debounce);
    ctrl.innovation_threshold =
        num_or(cj, "innovation_threshold", "controller", ctrl.innovation_threshold);
    ctrl.beta = num_or(cj, "beta", "controller", ctrl.beta);
    ctrl.relax_time = num_or(cj, "relax_time", "controller", ctrl.relax_time);
    ctrl.mu_initial = num_or(cj, "mu_initial", "controller", ctrl.mu_initial);
    ctrl.mu_filter_tau = num_or(cj, "mu_filter_tau", "controller", ctrl.mu_filter_tau);
    ctrl.mu_floor = num_or(cj, "mu_floor", "controller", ctrl.mu_floor);
    ctrl.min_replan_interval =
        num_or(cj, "min_replan_interval", "controller", ctrl.min_replan_interval);
    if (cj.contains("freeze_estimation_on_slip")) {
      const json& v = cj["freeze_estimation_on_slip"];
      if (!v.is_boolean())
        throw ValidationError("controller.freeze_estimation_on_slip: expected a boolean");
      ctrl.freeze_estimation_on_slip = v.get<bool>();
    }
    if (cj.contains("rls")) {
      const json& rj = cj["rls"];
      ctrl.rls.lambda = num_or(rj, "lambda", "controller.rls", ctrl.rls.lambda);
      ctrl.rls.p0 = num_or(rj, "p0", "controller.rls", ctrl.rls.p0);
      if (rj.contains("theta0")) {
        const json& th = rj["theta0"];
        if (!th.is_array() || th.size() != 4)
          throw ValidationError("controller.rls.theta0: expected an array of 4 numbers");
        for (int i = 0; i < 4; ++i) ctrl.rls.theta0[static_cast<std::size_t>(i)] = th[i].get<double>();
      }
    }
  }

  SimulationConfig sim;
  if (j.contains("simulation")) {
    const json& sj = j["simulation"];
    sim.dt = num_or(sj, "dt", "simulation", sim.dt);
    sim.duration_cap = num_or(sj, "duration_cap", "simulation", sim.duration_cap);
    sim.seed = static_cast<std::uint64_t>(num_or(sj, "seed", "simulation", 1.0));
    if (sj.contains("integrator")) {
      const std::string integ = str(sj, "integrator", "simulation");
      if (integ == "exact_arc")
        sim.integrator = PoseIntegrator::kExactArc;
      else if (integ == "euler")
        sim.integrator = PoseIntegrator::kEuler;
      else
        throw ValidationError("simulation.integrator: must be \"exact_arc\" or \"euler\"");
    }
    if (sj.contains("track_point")) {
      const std::string tp = str(sj, "track_point", "simulation");
      if (tp == "cg")
        sim.track_cg = true;
      else if (tp == "rear_axle")
        sim.track_cg = false;
      else
        throw ValidationError("simulation.track_point: must be \"rear_axle\" or \"cg\"");
    }
    if (sj.contains("noise")) {
      const json& nj = sj["noise"];
      sim.noise.pose_xy = num_or(nj, "pose_xy", "simulation.noise", 0.0);
      sim.noise.heading = num_or(nj, "heading", "simulation.noise", 0.0);
      sim.noise.wheel_speed = num_or(nj, "wheel_speed", "simulation.noise", 0.0);
      sim.noise.body_twist = num_or(nj, "body_twist", "simulation.noise", 0.0);
    }
  }
  dyn.pose_integrator = sim.integrator;

  Scenario sc{std::move(body), dyn,          std::move(path), std::move(vmax),
              limits,          0.0,          0.0,             std::move(surface),
              ctrl,            sim};
  sc.v_initial = num_or(j, "v_initial", "scenario", 0.0);
  sc.v_final = num_or(j, "v_final", "scenario", 0.0);
  validate(sc);
  return sc;
}

inline Scenario load_scenario(const std::string& filename) {
  std::ifstream in(filename);
  if (!in) throw ValidationError("cannot open scenario file: " + filename);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("scenario file is not valid JSON: " + std::string(e.what()));
  }
  return parse_scenario(j);
}

}  // namespace diffdrive
