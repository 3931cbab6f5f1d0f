#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "diffdrive/errors.hpp"
#include "diffdrive/path.hpp"

namespace diffdrive {

/// Motion constraints the planner must honour. alpha_max is not used by the
/// planner itself; the supervisor applies it when rate-limiting yaw commands.
struct MotionLimits {
  double a_max = 1.5;      // acceleration [m/s^2]
  double d_max = 1.5;      // deceleration magnitude [m/s^2]
  double v_cap = 2.0;      // global speed cap [m/s]
  double omega_max = 2.0;  // yaw-rate cap [rad/s]
  double alpha_max = 1.5;  // yaw-acceleration cap [rad/s^2]
};

inline void validate(const MotionLimits& l) {
  if (!(l.a_max > 0.0)) throw std::invalid_argument("limits: a_max must be > 0");
  if (!(l.d_max > 0.0)) throw std::invalid_argument("limits: d_max must be > 0");
  if (!(l.v_cap > 0.0)) throw std::invalid_argument("limits: v_cap must be > 0");
  if (!(l.omega_max > 0.0)) throw std::invalid_argument("limits: omega_max must be > 0");
  if (!(l.alpha_max > 0.0)) throw std::invalid_argument("limits: alpha_max must be > 0");
}

/// Accelerate / cruise / decelerate decomposition of one section.
/// Zero-length cruise regions are kept so region counts stay stable.
struct SectionProfile {
  std::size_t section_index = 0;
  double v_start = 0.0;
  double v_peak = 0.0;
  double v_exit = 0.0;
  double d_a = 0.0, d_c = 0.0, d_d = 0.0;  // region lengths [m]
  double t_a = 0.0, t_c = 0.0, t_d = 0.0;  // region durations [s]

  double length() const { return d_a + d_c + d_d; }
  double duration() const { return t_a + t_c + t_d; }
};

struct TrajectorySample {
  double s = 0.0;  // distance along path [m]
  double v = 0.0;  // speed [m/s]
  double a = 0.0;  // acceleration [m/s^2]
};

/// Highest speed a section may carry: the requested section velocity capped
/// by the global limit and, on arcs, by the yaw-rate cap (v = omega * radius).
inline double effective_section_vmax(const PathSection& s, double requested,
                                     const MotionLimits& limits) {
  double v = std::min(requested, limits.v_cap);
  if (s.kind() == PathSection::Kind::kArc)
    v = std::min(v, limits.omega_max * s.radius());
  return v;
}

/// Fastest entry speed from which v_exit is still reachable by braking at
/// d_max over `length` metres.
inline double max_feasible_entry(double length, double v_exit, double d_max) {
  return std::sqrt(v_exit * v_exit + 2.0 * d_max * std::max(0.0, length));
}

/// Time-indexed velocity profile over a whole path. Region boundaries are
/// exact: s(t) is piecewise quadratic, v(t) piecewise linear and continuous.
class TrajectoryPlan {
 public:
  TrajectoryPlan(std::vector<SectionProfile> profiles, double total_length)
      : profiles_(std::move(profiles)), total_length_(total_length) {
    double t = 0.0, s = 0.0;
    for (const SectionProfile& p : profiles_) {
      time_offsets_.push_back(t);
      auto push = [&](double dur, double v0, double a) {
        if (dur > 0.0) regions_.push_back(Region{t, dur, s, v0, a});
        t += dur;
        s += v0 * dur + 0.5 * a * dur * dur;
      };
      push(p.t_a, p.v_start, p.t_a > 0.0 ? (p.v_peak - p.v_start) / p.t_a : 0.0);
      push(p.t_c, p.v_peak, 0.0);
      push(p.t_d, p.v_peak, p.t_d > 0.0 ? (p.v_exit - p.v_peak) / p.t_d : 0.0);
    }
    duration_ = t;
    if (regions_.empty()) regions_.push_back(Region{0.0, 0.0, 0.0, 0.0, 0.0});
  }

  const std::vector<SectionProfile>& profiles() const { return profiles_; }
  const std::vector<double>& section_time_offsets() const { return time_offsets_; }
  double duration() const { return duration_; }
  double total_length() const { return total_length_; }
  double v_initial() const { return profiles_.front().v_start; }
  double v_final() const { return profiles_.back().v_exit; }

  TrajectorySample sample(double t) const {
    if (!(t >= -1e-12) || !(t <= duration_ + 1e-9))
      throw std::invalid_argument("trajectory: sample time out of range");
    t = std::clamp(t, 0.0, duration_);
    std::size_t i = 0;
    while (i + 1 < regions_.size() && t >= regions_[i + 1].t0) ++i;
    const Region& g = regions_[i];
    const double tau = std::clamp(t - g.t0, 0.0, g.dur);
    return TrajectorySample{g.s0 + g.v0 * tau + 0.5 * g.a * tau * tau, g.v0 + g.a * tau, g.a};
  }

 private:
  struct Region {
    double t0, dur, s0, v0, a;
  };
  std::vector<SectionProfile> profiles_;
  std::vector<double> time_offsets_;
  std::vector<Region> regions_;
  double duration_ = 0.0;
  double total_length_ = 0.0;
};

namespace detail {

/// Profile of one section between fixed boundary speeds: trapezoid when the
/// cap is reachable with room to brake, otherwise the triangular profile
/// whose accelerate/decelerate parabolas intersect inside the section.
inline SectionProfile section_profile(std::size_t index, double length, double v_start,
                                      double v_exit, double vmax, double a, double d) {
  SectionProfile p;
  p.section_index = index;
  p.v_start = v_start;
  p.v_exit = v_exit;
  const double da_full = std::max(0.0, (vmax * vmax - v_start * v_start) / (2.0 * a));
  const double dd_full = std::max(0.0, (vmax * vmax - v_exit * v_exit) / (2.0 * d));
  if (da_full + dd_full <= length + 1e-12) {
    p.v_peak = vmax;
    p.d_a = da_full;
    p.d_d = dd_full;
    p.d_c = std::max(0.0, length - da_full - dd_full);
  } else {
    double vp = std::sqrt((2.0 * a * d * length + d * v_start * v_start + a * v_exit * v_exit) /
                          (a + d));
    vp = std::max({vp, v_start, v_exit});
    p.v_peak = vp;
    p.d_a = std::max(0.0, (vp * vp - v_start * v_start) / (2.0 * a));
    p.d_d = std::max(0.0, (vp * vp - v_exit * v_exit) / (2.0 * d));
    p.d_c = 0.0;
  }
  p.t_a = (p.v_peak - p.v_start) / a;
  p.t_d = (p.v_peak - p.v_exit) / d;
  p.t_c = p.v_peak > 0.0 ? p.d_c / p.v_peak : 0.0;
  return p;
}

}  // namespace detail

/// Plans the per-section velocity profile. Junction speeds start at the
/// adjacent section caps, a forward pass limits them to what acceleration
/// can reach, and a backward pass clamps entries to max_feasible_entry;
/// the two passes repeat until a fixed point (at most n sweeps).
inline TrajectoryPlan plan(const PathSpec& path, std::span<const double> section_vmax,
                           const MotionLimits& limits, double v_initial = 0.0,
                           double v_final = 0.0) {
  validate(limits);
  const std::size_t n = path.sections().size();
  if (section_vmax.size() != n)
    throw std::invalid_argument("trajectory: section_vmax size must match section count");
  if (v_initial < 0.0 || v_final < 0.0)
    throw std::invalid_argument("trajectory: boundary speeds must be >= 0");

  std::vector<double> veff(n), len(n);
  for (std::size_t i = 0; i < n; ++i) {
    veff[i] = effective_section_vmax(path.sections()[i], section_vmax[i], limits);
    len[i] = path.sections()[i].length();
    if (!(veff[i] > 0.0))
      throw InfeasiblePlanError("trajectory: section " + std::to_string(i) +
                                    " has a non-positive effective speed cap",
                                i);
  }
  const double a = limits.a_max, d = limits.d_max;
  if (v_initial > veff[0] + 1e-9)
    throw InfeasiblePlanError("trajectory: v_initial exceeds the first section cap", 0);
  if (v_final > veff[n - 1] + 1e-9)
    throw InfeasiblePlanError("trajectory: v_final exceeds the last section cap", n - 1);

  // Reachability of v_final along the acceleration chain, tracking which
  // section's cap or length bound the chain value.
  {
    double f = v_initial;
    std::size_t binder = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double reach = std::sqrt(f * f + 2.0 * a * len[i]);
      double cap = veff[i];
      std::size_t cap_owner = i;
      if (i + 1 < n && veff[i + 1] < cap) {
        cap = veff[i + 1];
        cap_owner = i + 1;
      }
      if (reach <= cap) {
        f = reach;  // length-bound: binder carried from the entry
      } else {
        f = cap;
        binder = cap_owner;
      }
      if (i + 1 == n && v_final > f + 1e-9)
        throw InfeasiblePlanError(
            "trajectory: v_final cannot be reached from v_initial (binding section " +
                std::to_string(binder == 0 ? i : binder) + ")",
            binder == 0 ? i : binder);
    }
  }
  // Brakeability of v_initial along the deceleration chain.
  {
    double b = v_final;
    for (std::size_t k = n; k-- > 0;) {
      b = std::sqrt(b * b + 2.0 * d * len[k]);
      if (k > 0) b = std::min(b, std::min(veff[k - 1], veff[k]));
      if (k == 0 && v_initial > b + 1e-9)
        throw InfeasiblePlanError("trajectory: v_initial is too fast to brake for the plan "
                                  "(binding section 0)",
                                  0);
    }
  }

  // Junction speeds w[0..n].
  std::vector<double> w(n + 1);
  w[0] = v_initial;
  w[n] = v_final;
  for (std::size_t i = 1; i < n; ++i) w[i] = std::min(veff[i - 1], veff[i]);
  for (std::size_t sweep = 0; sweep <= n + 1; ++sweep) {
    bool changed = false;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double reach = std::sqrt(w[i] * w[i] + 2.0 * a * len[i]);
      if (reach < w[i + 1]) {
        w[i + 1] = reach;
        changed = true;
      }
    }
    for (std::size_t i = n - 1; i >= 1; --i) {
      const double entry = max_feasible_entry(len[i], w[i + 1], d);
      if (entry < w[i]) {
        w[i] = entry;
        changed = true;
      }
    }
    if (!changed) break;
  }

  std::vector<SectionProfile> profiles;
  profiles.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    profiles.push_back(detail::section_profile(i, len[i], w[i], w[i + 1], veff[i], a, d));
  return TrajectoryPlan(std::move(profiles), path.total_length());
}

}  // namespace diffdrive
