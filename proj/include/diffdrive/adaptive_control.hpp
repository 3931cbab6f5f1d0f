#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <utility>
#include <vector>

#include "diffdrive/errors.hpp"

namespace diffdrive {

/// Discrete second-order plant y_k = -a1 y_{k-1} - a2 y_{k-2}
///                                   + b0 u_{k-1} + b1 u_{k-2}.
struct ArxModel {
  double a1 = 0.0, a2 = 0.0;
  double b0 = 0.0, b1 = 0.0;
  double ts = 0.01;  // sample period [s]
};

/// Exponentially-weighted recursive least squares over theta = (a1, a2, b0, b1).
struct RlsState {
  Eigen::Vector4d theta = Eigen::Vector4d::Zero();
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Identity();
  double lambda = 1.0;  // forgetting factor, (0, 1]
};

inline RlsState make_rls(const Eigen::Vector4d& theta0, double p0, double lambda) {
  if (!(lambda > 0.0) || lambda > 1.0)
    throw std::invalid_argument("rls: lambda must be in (0, 1]");
  if (!(p0 > 0.0)) throw std::invalid_argument("rls: initial covariance must be > 0");
  RlsState s;
  s.theta = theta0;
  s.covariance = p0 * Eigen::Matrix4d::Identity();
  s.lambda = lambda;
  return s;
}

/// Regressor matching ArxModel: phi = (-y_{k-1}, -y_{k-2}, u_{k-1}, u_{k-2}).
inline Eigen::Vector4d arx_regressor(double y1, double y2, double u1, double u2) {
  return Eigen::Vector4d(-y1, -y2, u1, u2);
}

/// One RLS step: K = P phi / (lambda + phi' P phi), theta += K innovation,
/// P = (P - K phi' P) / lambda, re-symmetrised.
inline RlsState rls_update(RlsState state, const Eigen::Vector4d& regressor, double measured) {
  if (!regressor.allFinite() || !std::isfinite(measured))
    throw std::invalid_argument("rls_update: non-finite input");
  const Eigen::Vector4d pphi = state.covariance * regressor;
  const double denom = state.lambda + regressor.dot(pphi);
  const Eigen::Vector4d gain = pphi / denom;
  state.theta += gain * (measured - regressor.dot(state.theta));
  state.covariance = (state.covariance - gain * pphi.transpose()) / state.lambda;
  state.covariance = 0.5 * (state.covariance + state.covariance.transpose()).eval();
  return state;
}

/// Discrete PID gains. ki and kd are already scaled by the sample period
/// (per-step integral gain, per-step derivative gain); d_pole is the
/// derivative-filter pole coefficient the design produces (controller
/// denominator (1 - q^-1)(1 + d_pole q^-1)).
struct PidGains {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
  double d_pole = 0.0;
};

namespace detail {

// Feedback-path numerator S(q^-1) = s0 + s1 q^-1 + s2 q^-2 equivalent to the
// PID gains under denominator (1 - q^-1)(1 + d_pole q^-1).
inline std::array<double, 3> gains_to_s_polynomial(const PidGains& g) {
  return {g.kp + g.ki + g.kd,
          g.kp * (g.d_pole - 1.0) + g.ki * g.d_pole - 2.0 * g.kd,
          -g.kp * g.d_pole + g.kd};
}

inline PidGains s_polynomial_to_gains(double s0, double s1, double s2, double r1) {
  // The derivative filter pole is a controller pole; an admissible design
  // keeps it strictly inside the unit circle.
  if (std::abs(r1) >= 0.995)
    throw DesignFailureError("pid mapping: unstable derivative filter pole");
  PidGains g;
  g.d_pole = r1;
  const double onep = 1.0 + r1;
  g.kp = (r1 * s0 - r1 * s2 - s1 - 2.0 * s2) / (onep * onep);
  g.kd = s2 + g.kp * r1;
  g.ki = s0 - s2 - g.kp * onep;
  return g;
}

}  // namespace detail

/// Closed-loop characteristic polynomial (coefficients of q^0..q^-4) of the
/// model under the given gains: A(q^-1) R(q^-1) + B(q^-1) S(q^-1) with
/// R = (1 - q^-1)(1 + d_pole q^-1).
inline std::array<double, 5> closed_loop_polynomial(const ArxModel& m, const PidGains& g) {
  const auto s = detail::gains_to_s_polynomial(g);
  // A * Delta = 1 + (a1-1) q^-1 + (a2-a1) q^-2 - a2 q^-3
  const std::array<double, 4> ad = {1.0, m.a1 - 1.0, m.a2 - m.a1, -m.a2};
  std::array<double, 5> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] += ad[i];
    out[i + 1] += ad[i] * g.d_pole;
  }
  const std::array<double, 2> b = {m.b0, m.b1};  // on q^-1, q^-2
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) out[i + j + 1] += b[i] * s[j];
  return out;
}

/// Pole-placement design of the PID-structured controller for the estimated
/// plant. The controller denominator carries a forced integrator; the design
/// solves A R + B S = A_m padded with poles at the origin (deadbeat observer).
/// Degenerate estimates (b1 or a2 negligible) reduce to the smaller
/// Diophantine system of the lower-order plant.
inline PidGains pole_placement_pid(const ArxModel& m, std::complex<double> p1,
                                   std::complex<double> p2) {
  if (std::abs(p1) >= 1.0 || std::abs(p2) >= 1.0)
    throw std::invalid_argument("pole_placement: desired poles must be inside the unit circle");
  const bool conj_pair = std::abs(p1.real() - p2.real()) < 1e-12 &&
                         std::abs(p1.imag() + p2.imag()) < 1e-12;
  const bool both_real = p1.imag() == 0.0 && p2.imag() == 0.0;
  if (!conj_pair && !both_real)
    throw std::invalid_argument("pole_placement: poles must be real or a conjugate pair");
  const double c1 = -(p1 + p2).real();
  const double c2 = (p1 * p2).real();

  const double scale = std::max({std::abs(m.b0), std::abs(m.b1), 1e-30});
  if (scale < 1e-12)
    throw DesignFailureError("pole_placement: uncontrollable estimate (b0 = b1 = 0)");
  const bool b1_zero = std::abs(m.b1) <= 1e-9 * scale;
  const bool a2_zero = std::abs(m.a2) <= 1e-9;

  if (b1_zero && a2_zero) {
    // First-order plant: R = Delta, S = s0 + s1 q^-1, A_cl degree 2.
    if (std::abs(m.b0) < 1e-12)
      throw DesignFailureError("pole_placement: uncontrollable first-order estimate");
    const double s0 = (c1 - (m.a1 - 1.0)) / m.b0;
    const double s1 = (c2 + m.a1) / m.b0;
    return detail::s_polynomial_to_gains(s0, s1, 0.0, 0.0);
  }
  if (b1_zero) {
    // Second-order plant, one input coefficient: R = Delta, S degree 2.
    if (std::abs(m.b0) < 1e-12)
      throw DesignFailureError("pole_placement: uncontrollable estimate");
    const double s0 = (c1 - (m.a1 - 1.0)) / m.b0;
    const double s1 = (c2 - (m.a2 - m.a1)) / m.b0;
    const double s2 = (0.0 + m.a2) / m.b0;
    return detail::s_polynomial_to_gains(s0, s1, s2, 0.0);
  }

  // Full structure: unknowns (r1, s0, s1, s2), A_cl = A_m padded to degree 4.
  Eigen::Matrix4d sys;
  sys << 1.0, m.b0, 0.0, 0.0,                  // q^-1
      m.a1 - 1.0, m.b1, m.b0, 0.0,             // q^-2
      m.a2 - m.a1, 0.0, m.b1, m.b0,            // q^-3
      -m.a2, 0.0, 0.0, m.b1;                   // q^-4
  Eigen::Vector4d rhs(c1 - (m.a1 - 1.0), c2 - (m.a2 - m.a1), m.a2, 0.0);
  const Eigen::JacobiSVD<Eigen::Matrix4d> svd(sys,
                                              Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double cond_floor = svd.singularValues()(0) * 1e-10;
  if (svd.singularValues()(3) <= cond_floor)
    throw DesignFailureError("pole_placement: singular Sylvester system");
  const Eigen::Vector4d x = svd.solve(rhs);
  return detail::s_polynomial_to_gains(x(1), x(2), x(3), x(0));
}

/// Per-loop integrator/derivative memory.
struct LoopState {
  double integral = 0.0;
  double prev_error = 0.0;
  double prev_meas = 0.0;
  double deriv = 0.0;        // filtered derivative-on-measurement state
  double prev_output = 0.0;  // last saturated output, for back-calculation
  bool primed = false;
};

/// One discrete PID step: derivative acts on the measurement through the
/// design's first-order filter, back-calculation keeps the integrator
/// consistent with the saturated output.
inline std::pair<double, LoopState> wheel_speed_step(double ref_omega, double meas_omega,
                                                     const PidGains& g, LoopState loop,
                                                     double torque_limit) {
  const double error = ref_omega - meas_omega;
  if (!loop.primed) {
    loop.prev_meas = meas_omega;
    loop.primed = true;
  }
  loop.deriv = -g.d_pole * loop.deriv - g.kd * (meas_omega - loop.prev_meas);
  loop.integral += g.ki * error;
  const double raw = g.kp * error + loop.integral + loop.deriv;
  const double out = std::clamp(raw, -torque_limit, torque_limit);
  loop.integral += out - raw;
  loop.prev_error = error;
  loop.prev_meas = meas_omega;
  loop.prev_output = out;
  return {out, loop};
}

/// Differential torque trim that penalises asymmetric tracking error between
/// the two drives. Always sums to zero.
inline std::pair<double, double> cross_coupling_correction(double err_r, double err_l,
                                                           double k_c) {
  const double diff = k_c * (err_r - err_l);
  return {-diff, +diff};
}

/// Self-tuning wheel-speed controller: RLS estimation of the torque-to-speed
/// plant feeding periodic pole-placement redesign of the PID loop.
class AdaptiveWheelController {
 public:
  struct Config {
    double ts = 0.01;
    double lambda = 0.99;
    double p0 = 1e3;
    Eigen::Vector4d theta0 = Eigen::Vector4d(-0.5, 0.0, 0.1, 0.0);
    std::complex<double> pole1 = {0.9048374180359595, 0.0};
    std::complex<double> pole2 = {0.9048374180359595, 0.0};
    int design_period = 10;  // control ticks between redesigns
    double torque_limit = 20.0;
    // Updates are skipped below this regressor norm: standstill data carries
    // no information and would only let the forgetting factor drift theta.
    double regressor_floor = 1e-3;
  };

  explicit AdaptiveWheelController(const Config& cfg)
      : cfg_(cfg), rls_(make_rls(cfg.theta0, cfg.p0, cfg.lambda)) {
    model_ = model_from(rls_.theta);
    gains_ = pole_placement_pid(model_, cfg_.pole1, cfg_.pole2);
  }

  /// Ingests the new speed measurement (updating the estimate unless frozen),
  /// redesigns on schedule, and returns the PID torque before coupling.
  double step(double ref_omega, double meas_omega, bool freeze_estimation) {
    if (history_ >= 2 && !freeze_estimation) {
      const Eigen::Vector4d phi = arx_regressor(y_[0], y_[1], u_[0], u_[1]);
      if (phi.norm() > cfg_.regressor_floor) rls_ = rls_update(rls_, phi, meas_omega);
    }
    if (tick_ > 0 && tick_ % cfg_.design_period == 0) {
      try {
        model_ = model_from(rls_.theta);
        gains_ = pole_placement_pid(model_, cfg_.pole1, cfg_.pole2);
      } catch (const DesignFailureError&) {
        ++design_failures_;  // keep the previous gains
      }
    }
    ++tick_;
    auto [torque, next] = wheel_speed_step(ref_omega, meas_omega, gains_, loop_,
                                           cfg_.torque_limit);
    loop_ = next;
    y_[1] = y_[0];
    y_[0] = meas_omega;
    return torque;
  }

  /// Records the torque actually applied (after coupling and clamping) so the
  /// estimator sees the true plant input.
  void record_applied(double torque) {
    u_[1] = u_[0];
    u_[0] = torque;
    history_ = std::min(history_ + 1, 2);
  }

  const RlsState& rls() const { return rls_; }
  const ArxModel& model() const { return model_; }
  const PidGains& gains() const { return gains_; }
  int design_failures() const { return design_failures_; }

 private:
  ArxModel model_from(const Eigen::Vector4d& theta) const {
    return ArxModel{theta(0), theta(1), theta(2), theta(3), cfg_.ts};
  }

  Config cfg_;
  RlsState rls_;
  ArxModel model_;
  PidGains gains_;
  LoopState loop_;
  double y_[2] = {0.0, 0.0};
  double u_[2] = {0.0, 0.0};
  int history_ = 0;
  long tick_ = 0;
  int design_failures_ = 0;
};

/// The two wheel loops plus the cross-coupling trim, clamped to the actuator.
class DriveController {
 public:
  DriveController(const AdaptiveWheelController::Config& cfg, double k_c)
      : right_(cfg), left_(cfg), k_c_(k_c), torque_limit_(cfg.torque_limit) {}

  struct Torques {
    double tau_r = 0.0, tau_l = 0.0;
  };

  Torques step(double ref_r, double ref_l, double meas_r, double meas_l, bool freeze_r,
               bool freeze_l) {
    const double pid_r = right_.step(ref_r, meas_r, freeze_r);
    const double pid_l = left_.step(ref_l, meas_l, freeze_l);
    const auto [trim_r, trim_l] =
        cross_coupling_correction(ref_r - meas_r, ref_l - meas_l, k_c_);
    Torques out;
    out.tau_r = std::clamp(pid_r + trim_r, -torque_limit_, torque_limit_);
    out.tau_l = std::clamp(pid_l + trim_l, -torque_limit_, torque_limit_);
    right_.record_applied(out.tau_r);
    left_.record_applied(out.tau_l);
    return out;
  }

  const AdaptiveWheelController& right() const { return right_; }
  const AdaptiveWheelController& left() const { return left_; }

 private:
  AdaptiveWheelController right_, left_;
  double k_c_;
  double torque_limit_;
};

}  // namespace diffdrive
