#include "diffdrive/adaptive_control.hpp"

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

namespace diffdrive {
namespace {

// Reference second-order plant used throughout: stable, well excited.
constexpr double kA1 = -1.5, kA2 = 0.7, kB0 = 0.2, kB1 = 0.1;

// Simulates the known plant and runs the filter on its input/output data.
struct PlantRun {
  std::vector<double> y, u;
};

PlantRun simulate_plant(int samples, unsigned seed) {
  PlantRun run;
  run.y.assign(samples, 0.0);
  run.u.assign(samples, 0.0);
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution flip(0.5);
  for (int k = 0; k < samples; ++k) {
    run.u[k] = flip(rng) ? 1.0 : -1.0;  // persistently exciting +-1 input
    double yk = 0.0;
    if (k >= 1) yk += -kA1 * run.y[k - 1] + kB0 * run.u[k - 1];
    if (k >= 2) yk += -kA2 * run.y[k - 2] + kB1 * run.u[k - 2];
    run.y[k] = yk;
  }
  return run;
}

RlsState run_filter(const PlantRun& run, RlsState state, int until,
                    std::vector<double>* errors = nullptr) {
  const Eigen::Vector4d truth(kA1, kA2, kB0, kB1);
  for (int k = 2; k < until; ++k) {
    const Eigen::Vector4d phi =
        arx_regressor(run.y[k - 1], run.y[k - 2], run.u[k - 1], run.u[k - 2]);
    state = rls_update(state, phi, run.y[k]);
    if (errors) errors->push_back((state.theta - truth).norm());
  }
  return state;
}

TEST(RlsUpdate, ZeroRegressorScalesCovarianceOnly) {
  RlsState s = make_rls(Eigen::Vector4d(-0.5, 0.0, 0.1, 0.0), 10.0, 0.9);
  const RlsState next = rls_update(s, Eigen::Vector4d::Zero(), 1.23);
  EXPECT_TRUE(next.theta.isApprox(s.theta));
  EXPECT_TRUE(next.covariance.isApprox(s.covariance / 0.9, 1e-12));
}

TEST(RlsUpdate, RejectsNonFiniteInput) {
  RlsState s = make_rls(Eigen::Vector4d::Zero(), 10.0, 1.0);
  Eigen::Vector4d bad = Eigen::Vector4d::Zero();
  bad(2) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(rls_update(s, bad, 0.0), std::invalid_argument);
  EXPECT_THROW(rls_update(s, Eigen::Vector4d::Ones(),
                          std::numeric_limits<double>::infinity()),
               std::invalid_argument);
}

TEST(RlsUpdate, RecoversKnownPlantNoiseFree) {
  const PlantRun run = simulate_plant(200, 5);
  const RlsState s =
      run_filter(run, make_rls(Eigen::Vector4d(-0.5, 0.0, 0.1, 0.0), 1e7, 1.0), 200);
  const Eigen::Vector4d truth(kA1, kA2, kB0, kB1);
  EXPECT_LT((s.theta - truth).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(RlsUpdate, RecoversWithForgetting) {
  const PlantRun run = simulate_plant(500, 6);
  RlsState s = make_rls(Eigen::Vector4d(-0.5, 0.0, 0.1, 0.0), 1e7, 0.98);
  s = run_filter(run, s, 500);
  const Eigen::Vector4d truth(kA1, kA2, kB0, kB1);
  EXPECT_LT((s.theta - truth).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(RlsUpdate, ErrorDecreasesMonotonicallyAfterTransient) {
  const PlantRun run = simulate_plant(200, 7);
  std::vector<double> errors;
  run_filter(run, make_rls(Eigen::Vector4d(-0.5, 0.0, 0.1, 0.0), 1e7, 1.0), 200, &errors);
  // Monotone up to round-off wiggle once the error sits near 1e-8.
  for (std::size_t k = 16; k + 1 < errors.size(); ++k)
    EXPECT_LE(errors[k + 1], errors[k] * (1.0 + 1e-3)) << "sample " << k;
  EXPECT_LE(errors.back(), errors[16]);
  EXPECT_LT(errors.back(), 1e-6);
}

TEST(RlsUpdate, CovarianceStaysSymmetricPositiveDefinite) {
  RlsState s = make_rls(Eigen::Vector4d(-0.5, 0.0, 0.1, 0.0), 1e3, 0.99);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  for (int k = 0; k < 100000; ++k) {
    const Eigen::Vector4d phi(dist(rng), dist(rng), dist(rng), dist(rng));
    s = rls_update(s, phi, dist(rng));
    if (k % 997 == 0) {
      EXPECT_LT((s.covariance - s.covariance.transpose()).norm(), 1e-12);
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(s.covariance);
      ASSERT_GT(eig.eigenvalues().minCoeff(), 0.0) << "step " << k;
    }
  }
}

std::array<double, 5> desired_polynomial(std::complex<double> p1, std::complex<double> p2) {
  return {1.0, -(p1 + p2).real(), (p1 * p2).real(), 0.0, 0.0};
}

TEST(PolePlacement, FirstOrderHandSolvable) {
  const ArxModel m{-0.5, 0.0, 1.0, 0.0, 0.01};
  const PidGains g = pole_placement_pid(m, {0.2, 0.0}, {0.0, 0.0});
  // Hand solution of the 2x2 Diophantine system.
  EXPECT_NEAR(g.kp, 0.5, 1e-12);
  EXPECT_NEAR(g.ki, 0.8, 1e-12);
  EXPECT_NEAR(g.kd, 0.0, 1e-12);
  const auto poly = closed_loop_polynomial(m, g);
  const auto want = desired_polynomial({0.2, 0.0}, {0.0, 0.0});
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(poly[i], want[i], 1e-9) << "coefficient " << i;
}

TEST(PolePlacement, DeadbeatOnReferencePlant) {
  const ArxModel m{kA1, kA2, kB0, kB1, 0.01};
  const PidGains g = pole_placement_pid(m, {0.0, 0.0}, {0.0, 0.0});
  const auto poly = closed_loop_polynomial(m, g);
  EXPECT_NEAR(poly[0], 1.0, 1e-12);
  for (int i = 1; i < 5; ++i) EXPECT_NEAR(poly[i], 0.0, 1e-9) << "coefficient " << i;
}

TEST(PolePlacement, OpenLoopPolesReproduced) {
  // Stable plant with poles 0.8 and 0.4; request those same poles.
  const ArxModel m{-1.2, 0.32, 0.5, 0.25, 0.01};
  const PidGains g = pole_placement_pid(m, {0.8, 0.0}, {0.4, 0.0});
  const auto poly = closed_loop_polynomial(m, g);
  const auto want = desired_polynomial({0.8, 0.0}, {0.4, 0.0});
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(poly[i], want[i], 1e-9) << "coefficient " << i;
}

TEST(PolePlacement, ComplexPairAndRandomPlants) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> mag(0.1, 0.9), ang(0.1, 2.0), coef(-0.9, 0.9),
      gain(0.05, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const ArxModel m{coef(rng), coef(rng) * 0.5, gain(rng), gain(rng) * 0.5, 0.01};
    const double r = mag(rng), w = ang(rng);
    const std::complex<double> p1(r * std::cos(w), r * std::sin(w));
    const std::complex<double> p2 = std::conj(p1);
    PidGains g;
    try {
      g = pole_placement_pid(m, p1, p2);
    } catch (const DesignFailureError&) {
      continue;  // near-singular estimate: the caller falls back
    }
    const auto poly = closed_loop_polynomial(m, g);
    const auto want = desired_polynomial(p1, p2);
    for (int i = 0; i < 5; ++i)
      ASSERT_NEAR(poly[i], want[i], 1e-9) << "trial " << trial << " coefficient " << i;
  }
}

TEST(PolePlacement, RejectsBadRequests) {
  const ArxModel m{kA1, kA2, kB0, kB1, 0.01};
  EXPECT_THROW(pole_placement_pid(m, {1.2, 0.0}, {0.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(pole_placement_pid(m, {0.3, 0.2}, {0.3, 0.2}), std::invalid_argument);
  const ArxModel uncontrollable{-0.5, 0.2, 0.0, 0.0, 0.01};
  EXPECT_THROW(pole_placement_pid(uncontrollable, {0.2, 0.0}, {0.1, 0.0}),
               DesignFailureError);
}

TEST(WheelSpeedStep, ZeroErrorGivesZeroTorque) {
  const PidGains g{2.0, 0.5, 0.1, 0.0};
  auto [torque, state] = wheel_speed_step(3.0, 3.0, g, LoopState{}, 10.0);
  EXPECT_DOUBLE_EQ(torque, 0.0);
  (void)state;
}

TEST(WheelSpeedStep, ProportionalOnly) {
  const PidGains g{2.0, 0.0, 0.0, 0.0};
  LoopState loop;
  for (int k = 0; k < 3; ++k) {
    auto [torque, next] = wheel_speed_step(1.5, 0.5, g, loop, 10.0);
    EXPECT_DOUBLE_EQ(torque, 2.0);
    loop = next;
  }
}

TEST(WheelSpeedStep, SaturationFreezesIntegral) {
  const PidGains g{5.0, 1.0, 0.0, 0.0};
  LoopState loop;
  auto [t1, s1] = wheel_speed_step(10.0, 0.0, g, loop, 8.0);
  EXPECT_DOUBLE_EQ(t1, 8.0);  // clamped exactly at the limit
  auto [t2, s2] = wheel_speed_step(10.0, 0.0, g, s1, 8.0);
  EXPECT_DOUBLE_EQ(t2, 8.0);
  EXPECT_DOUBLE_EQ(s2.integral, s1.integral);  // back-calculation holds it
}

TEST(WheelSpeedStep, OutputAlwaysBounded) {
  const PidGains g{12.0, 4.0, 2.0, -0.3};
  LoopState loop;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(-30.0, 30.0);
  for (int k = 0; k < 10000; ++k) {
    auto [torque, next] = wheel_speed_step(dist(rng), dist(rng), g, loop, 6.0);
    ASSERT_LE(std::abs(torque), 6.0);
    loop = next;
  }
}

TEST(CrossCoupling, DefinitionAndAntisymmetry) {
  {
    auto [dr, dl] = cross_coupling_correction(1.0, 1.0, 0.5);
    EXPECT_DOUBLE_EQ(dr, 0.0);
    EXPECT_DOUBLE_EQ(dl, 0.0);
  }
  {
    auto [dr, dl] = cross_coupling_correction(1.0, 0.0, 0.5);
    EXPECT_DOUBLE_EQ(dr, -0.5);
    EXPECT_DOUBLE_EQ(dl, 0.5);
  }
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> dist(-5.0, 5.0);
  for (int k = 0; k < 1000; ++k) {
    auto [dr, dl] = cross_coupling_correction(dist(rng), dist(rng), dist(rng));
    ASSERT_EQ(dr + dl, 0.0);
  }
}

// The self-tuner fed by the known plant: estimates converge and every
// redesign reproduces the requested closed-loop polynomial.
TEST(AdaptiveWheelController, ConvergesAndDesignsConsistently) {
  AdaptiveWheelController::Config cfg;
  cfg.ts = 0.01;
  cfg.lambda = 1.0;
  cfg.p0 = 1e6;
  cfg.design_period = 10;
  cfg.torque_limit = 50.0;
  AdaptiveWheelController ctrl(cfg);
  std::mt19937_64 rng(21);
  std::bernoulli_distribution flip(0.5);
  double y1 = 0.0, y2 = 0.0, u1 = 0.0, u2 = 0.0;
  for (int k = 0; k < 400; ++k) {
    const double y = -kA1 * y1 - kA2 * y2 + kB0 * u1 + kB1 * u2;
    const double ref = flip(rng) ? 2.0 : -2.0;
    ctrl.step(ref, y, /*freeze_estimation=*/false);
    const double u = flip(rng) ? 1.0 : -1.0;  // external excitation as input
    ctrl.record_applied(u);
    y2 = y1;
    y1 = y;
    u2 = u1;
    u1 = u;
    if (k > 20 && k % 10 == 1) {
      const auto poly = closed_loop_polynomial(ctrl.model(), ctrl.gains());
      const auto want = desired_polynomial(cfg.pole1, cfg.pole2);
      for (int i = 0; i < 5; ++i) ASSERT_NEAR(poly[i], want[i], 1e-9) << "tick " << k;
    }
  }
  EXPECT_NEAR(ctrl.rls().theta(0), kA1, 1e-5);
  EXPECT_NEAR(ctrl.rls().theta(2), kB0, 1e-5);
  EXPECT_EQ(ctrl.design_failures(), 0);
}

}  // namespace
}  // namespace diffdrive
