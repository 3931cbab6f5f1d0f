// Acceptance suite: one test per release criterion, each printing a
// PASS/FAIL line with its headline tolerances.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "diffdrive/adaptive_control.hpp"
#include "diffdrive/body_model.hpp"
#include "diffdrive/dynamics.hpp"
#include "diffdrive/scenario.hpp"
#include "diffdrive/simulation.hpp"
#include "diffdrive/trajectory.hpp"
#include "test_oracles.hpp"

namespace diffdrive {
namespace {

class Criterion {
 public:
  Criterion(int number, std::string title) : number_(number), title_(std::move(title)) {
    start_ = std::chrono::steady_clock::now();
  }
  ~Criterion() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    const bool ok = info == nullptr || info->result() == nullptr || info->result()->Passed();
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::printf("[CRITERION %d] %s (%.2fs) - %s\n", number_, ok ? "PASS" : "FAIL", secs,
                title_.c_str());
  }
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  int number_;
  std::string title_;
  std::chrono::steady_clock::time_point start_;
};

std::string scenario_file(const char* name) {
  return std::string(DDSIM_SCENARIO_DIR) + "/" + name;
}

DynamicParams robot_params() {
  DynamicParams p;
  p.mass = 40.0;
  p.yaw_inertia = 2.627;
  p.drivetrain_inertia = 0.05;
  p.gravity = 9.81;
  p.torque_limit = 20.0;
  p.geom.wheel_radius = 0.1;
  p.geom.track_width = 0.4;
  p.geom.l_f = 0.3;
  p.geom.l_r = 0.1;
  return p;
}

TEST(Acceptance, Criterion1ReferenceParameterFidelity) {
  Criterion c(1, "reference scenario carries the published parameters and speed limits");
  const Scenario sc = load_scenario(scenario_file("reference.json"));
  const DynamicParams params = resolved_dynamic_params(sc);
  EXPECT_NEAR(params.mass, 40.0, 1e-9);
  EXPECT_NEAR(params.yaw_inertia, 2.627, 0.01 * 2.627);
  EXPECT_DOUBLE_EQ(params.geom.l_f, 0.3);
  EXPECT_DOUBLE_EQ(params.geom.l_r, 0.1);
  EXPECT_DOUBLE_EQ(sc.limits.v_cap, 2.0);
  EXPECT_DOUBLE_EQ(sc.limits.a_max, 1.5);
  EXPECT_DOUBLE_EQ(sc.limits.omega_max, 2.0);

  // The planner must never schedule past the published envelope; arcs are
  // additionally bounded by the yaw-rate cap.
  const TrajectoryPlan tp = plan(sc.path, sc.section_vmax, sc.limits, 0.0, 0.0);
  for (const SectionProfile& p : tp.profiles()) {
    const PathSection& sec = sc.path.sections()[p.section_index];
    EXPECT_LE(p.v_peak, 2.0 + 1e-6);
    if (sec.kind() == PathSection::Kind::kArc)
      EXPECT_LE(p.v_peak, sc.limits.omega_max * sec.radius() + 1e-6);
  }

  Scenario low = sc;
  low.controller.mode = ControlMode::kLow;
  const RunResult run = run_scenario(low);
  ASSERT_GT(run.trace.size(), 100u);
  for (std::size_t k = 0; k < run.trace.size(); ++k) {
    ASSERT_LE(run.trace[k].planned_v, 2.0 + 1e-6) << "tick " << k;
    if (k > 0) {
      const double accel = (run.trace[k].planned_v - run.trace[k - 1].planned_v) /
                           (run.trace[k].t - run.trace[k - 1].t);
      ASSERT_LE(std::abs(accel), 1.5 + 1e-3) << "tick " << k;
    }
  }
  EXPECT_LT(c.elapsed(), 5.0);
}

TEST(Acceptance, Criterion2TrajectoryClosedFormsAndOracle) {
  Criterion c(2, "trapezoid/triangle closed forms to 1e-9; 50-path duration oracle to 2%");
  MotionLimits lim;
  lim.a_max = 1.5;
  lim.d_max = 1.5;
  lim.v_cap = 2.0;
  lim.omega_max = 2.0;

  const PathSpec four(Pose{}, {PathSection::line(4.0)});
  const TrajectoryPlan trap = plan(four, std::vector<double>{2.0}, lim, 0.0, 0.0);
  EXPECT_NEAR(trap.duration(), 10.0 / 3.0, 1e-9);
  EXPECT_NEAR(trap.profiles().front().d_a, 4.0 / 3.0, 1e-9);
  EXPECT_NEAR(trap.profiles().front().t_c, 2.0 / 3.0, 1e-9);

  const PathSpec one(Pose{}, {PathSection::line(1.0)});
  const TrajectoryPlan tri = plan(one, std::vector<double>{2.0}, lim, 0.0, 0.0);
  EXPECT_NEAR(tri.profiles().front().v_peak, 1.224744871391589, 1e-9);
  EXPECT_NEAR(tri.duration(), 1.6329931618554518, 1e-9);

  std::mt19937_64 rng(2026);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> vmax;
    const PathSpec path = testing::random_path(rng, vmax);
    const TrajectoryPlan tp = plan(path, vmax, lim, 0.0, 0.0);
    const double oracle = testing::grid_time_oracle(path, vmax, lim, 0.0, 0.0);
    ASSERT_NEAR(tp.duration(), oracle, 0.02 * oracle) << "trial " << trial;
  }
  EXPECT_LT(c.elapsed(), 30.0);
}

TEST(Acceptance, Criterion3KinematicDynamicEquivalence) {
  Criterion c(3, "mu=10 dynamics matches kinematic integration to 1e-6 m per second");
  const DynamicParams p = robot_params();
  SurfaceMap surface;
  surface.default_mu = 10.0;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> torque(-3.0, 3.0);
  for (int trial = 0; trial < 10; ++trial) {
    DynState st;
    Pose kin;
    WheelTorques tau{};
    const double seconds = 5.0;
    const int steps = static_cast<int>(seconds * 1000);
    for (int i = 0; i < steps; ++i) {
      if (i % 50 == 0) tau = WheelTorques{torque(rng), torque(rng)};
      const StepResult res = step_dynamics(st, tau, surface, p, 1e-3);
      ASSERT_FALSE(res.state.slip_r);
      ASSERT_FALSE(res.state.slip_l);
      kin = integrate_pose(
          kin, forward_kinematics(WheelRates{res.state.omega_r, res.state.omega_l}, p.geom),
          1e-3);
      st = res.state;
    }
    const double err = std::hypot(st.pose.x - kin.x, st.pose.y - kin.y);
    EXPECT_LT(err, 1e-6 * seconds) << "trial " << trial;
  }
}

TEST(Acceptance, Criterion4FrictionBoundAndDissipation) {
  Criterion c(4, "traction forces within mu*N + 1e-9 and slip dissipation >= -1e-6 J");
  double min_margin = std::numeric_limits<double>::infinity();
  auto observer_for = [&](double* dissipation) {
    return [dissipation, &min_margin](double, const StepResult& r) {
      const double cap_r = r.right.mu * r.right.normal + 1e-9;
      const double cap_l = r.left.mu * r.left.normal + 1e-9;
      min_margin = std::min(min_margin, cap_r - std::hypot(r.right.f_x, r.right.f_y));
      min_margin = std::min(min_margin, cap_l - std::hypot(r.left.f_x, r.left.f_y));
      *dissipation += r.dissipation;
    };
  };

  // Reference scenario in both modes plus the uniform scenario.
  for (const char* file : {"reference.json", "uniform.json"}) {
    for (ControlMode mode : {ControlMode::kLow, ControlMode::kCombined}) {
      Scenario sc = load_scenario(scenario_file(file));
      sc.controller.mode = mode;
      double dissipation = 0.0;
      run_scenario(sc, observer_for(&dissipation));
      EXPECT_GE(dissipation, -1e-6) << file;
    }
  }
  // Open-loop random torque schedules over a patchy surface.
  const DynamicParams p = robot_params();
  SurfaceMap surface;
  surface.default_mu = 0.8;
  surface.patches.push_back(SurfacePatch{1.0, -5.0, 3.0, 5.0, 0.12});
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> torque(-6.0, 8.0);
  for (int trial = 0; trial < 3; ++trial) {
    DynState st;
    WheelTorques tau{};
    double dissipation = 0.0;
    auto obs = observer_for(&dissipation);
    for (int i = 0; i < 6000; ++i) {
      if (i % 40 == 0) tau = WheelTorques{torque(rng), torque(rng)};
      const StepResult res = step_dynamics(st, tau, surface, p, 1e-3);
      obs(i * 1e-3, res);
      st = res.state;
    }
    EXPECT_GE(dissipation, -1e-6) << "trial " << trial;
  }
  EXPECT_GE(min_margin, 0.0);
}

TEST(Acceptance, Criterion5BodyModelOracle) {
  Criterion c(5, "voxel brute force within 1e-4 relative; subdivision invariance to 1e-10");
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> pos(-0.5, 0.5), len(0.1, 0.7), rho(50.0, 800.0);
  for (int trial = 0; trial < 8; ++trial) {
    RigidBodySpec spec;
    for (int i = 0; i < 1 + trial % 4; ++i) {
      Particle p;
      p.origin = Eigen::Vector3d(pos(rng), pos(rng), pos(rng));
      p.dims = Eigen::Vector3d(len(rng), len(rng), len(rng));
      p.density = rho(rng);
      spec.particles.push_back(p);
    }
    const MassProperties mp = aggregate(spec);
    const MassProperties brute = testing::voxel_oracle(spec, 64);
    ASSERT_LT((brute.inertia_cg - mp.inertia_cg).norm(), 1e-4 * mp.inertia_cg.norm())
        << "trial " << trial;
    ASSERT_LT((brute.cg - mp.cg).norm(), 1e-6) << "trial " << trial;

    const MassProperties split = aggregate(testing::subdivide(spec.particles.front(), 3));
    const MassProperties whole = aggregate(RigidBodySpec{{spec.particles.front()}});
    ASSERT_LT((split.inertia_cg - whole.inertia_cg).norm(),
              1e-10 * whole.inertia_cg.norm() + 1e-18)
        << "trial " << trial;
  }
  // The shipped reference layout agrees with its own brute-force sum.
  const Scenario sc = load_scenario(scenario_file("reference.json"));
  const MassProperties mp = aggregate(sc.body.particles);
  const MassProperties brute = testing::voxel_oracle(sc.body.particles, 50);
  EXPECT_LT((brute.inertia_cg - mp.inertia_cg).norm(), 1e-4 * mp.inertia_cg.norm());
}

TEST(Acceptance, Criterion6RlsRecoveryAndPolePlacement) {
  Criterion c(6, "known-plant recovery to 1e-6 in 200 samples; designs match to 1e-9");
  // Noise-free recovery of a known second-order plant.
  const double a1 = -1.5, a2 = 0.7, b0 = 0.2, b1 = 0.1;
  RlsState rls = make_rls(Eigen::Vector4d(-0.5, 0.0, 0.1, 0.0), 1e7, 1.0);
  std::mt19937_64 rng(5);
  std::bernoulli_distribution flip(0.5);
  std::vector<double> y(200, 0.0), u(200, 0.0);
  for (int k = 0; k < 200; ++k) {
    u[static_cast<std::size_t>(k)] = flip(rng) ? 1.0 : -1.0;
    double yk = 0.0;
    if (k >= 1) yk += -a1 * y[k - 1] + b0 * u[k - 1];
    if (k >= 2) yk += -a2 * y[k - 2] + b1 * u[k - 2];
    y[static_cast<std::size_t>(k)] = yk;
  }
  for (int k = 2; k < 200; ++k)
    rls = rls_update(rls, arx_regressor(y[k - 1], y[k - 2], u[k - 1], u[k - 2]), y[k]);
  const Eigen::Vector4d truth(a1, a2, b0, b1);
  EXPECT_LT((rls.theta - truth).cwiseAbs().maxCoeff(), 1e-6);

  // Every successful design reproduces the requested polynomial.
  std::uniform_real_distribution<double> mag(0.1, 0.9), ang(0.1, 2.0), coef(-0.9, 0.9),
      gain(0.05, 1.0);
  int successes = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const ArxModel m{coef(rng), coef(rng) * 0.5, gain(rng), gain(rng) * 0.5, 0.01};
    const double r = mag(rng), w = ang(rng);
    const std::complex<double> p1(r * std::cos(w), r * std::sin(w));
    const std::complex<double> p2 = std::conj(p1);
    PidGains g;
    try {
      g = pole_placement_pid(m, p1, p2);
    } catch (const DesignFailureError&) {
      continue;
    }
    ++successes;
    const auto poly = closed_loop_polynomial(m, g);
    const std::array<double, 5> want = {1.0, -(p1 + p2).real(), (p1 * p2).real(), 0.0, 0.0};
    for (int i = 0; i < 5; ++i)
      ASSERT_NEAR(poly[i], want[i], 1e-9) << "trial " << trial << " coefficient " << i;
  }
  EXPECT_GT(successes, 50);
}

TEST(Acceptance, Criterion7SlipperyPatchOrdering) {
  Criterion c(7, "combined beats low by 2x on the patch; modes identical on uniform grip");
  const Scenario reference = load_scenario(scenario_file("reference.json"));
  const CompareReport report = compare_modes(reference);
  EXPECT_TRUE(report.combined.summary.completed);
  EXPECT_GE(report.low.summary.final_error, 2.0 * report.combined.summary.final_error)
      << "low " << report.low.summary.final_error << " vs combined "
      << report.combined.summary.final_error;

  const Scenario uniform = load_scenario(scenario_file("uniform.json"));
  const CompareReport clean = compare_modes(uniform);
  EXPECT_EQ(trace_to_string(clean.low.trace), trace_to_string(clean.combined.trace));
  EXPECT_LT(c.elapsed(), 10.0);
}

TEST(Acceptance, Criterion8Determinism) {
  Criterion c(8, "identical scenario and seed reproduce byte-identical traces");
  for (const char* file : {"reference.json", "uniform.json"}) {
    const Scenario sc = load_scenario(scenario_file(file));
    const std::string a = trace_to_string(run_scenario(sc).trace);
    const std::string b = trace_to_string(run_scenario(sc).trace);
    EXPECT_EQ(a, b) << file;
    Scenario noisy = sc;
    noisy.simulation.noise.pose_xy = 5e-4;
    noisy.simulation.noise.wheel_speed = 1e-3;
    const std::string n1 = trace_to_string(run_scenario(noisy).trace);
    const std::string n2 = trace_to_string(run_scenario(noisy).trace);
    EXPECT_EQ(n1, n2) << file << " with noise";
  }
}

}  // namespace
}  // namespace diffdrive
