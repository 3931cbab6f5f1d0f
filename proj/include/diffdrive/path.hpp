#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "diffdrive/kinematics.hpp"

namespace diffdrive {

/// One path piece: a straight line or a circular arc. Arcs carry a signed
/// turn angle, positive turning left.
class PathSection {
 public:
  enum class Kind { kLine, kArc };

  static PathSection line(double length) {
    if (!(length > 0.0) || !std::isfinite(length))
      throw std::invalid_argument("path section: line length must be > 0");
    PathSection s;
    s.kind_ = Kind::kLine;
    s.length_ = length;
    return s;
  }

  static PathSection arc(double radius, double turn_angle) {
    if (!(radius > 0.0) || !std::isfinite(radius))
      throw std::invalid_argument("path section: arc radius must be > 0");
    if (turn_angle == 0.0 || !std::isfinite(turn_angle) ||
        std::abs(turn_angle) > 2.0 * std::numbers::pi)
      throw std::invalid_argument("path section: arc turn angle must be nonzero and within 2*pi");
    PathSection s;
    s.kind_ = Kind::kArc;
    s.radius_ = radius;
    s.turn_angle_ = turn_angle;
    s.length_ = radius * std::abs(turn_angle);
    return s;
  }

  Kind kind() const { return kind_; }
  double length() const { return length_; }
  double radius() const { return radius_; }
  double turn_angle() const { return turn_angle_; }

  /// Signed curvature: 0 on lines, sign(turn)/radius on arcs.
  double curvature() const {
    if (kind_ == Kind::kLine) return 0.0;
    return (turn_angle_ > 0.0 ? 1.0 : -1.0) / radius_;
  }

 private:
  PathSection() = default;
  Kind kind_ = Kind::kLine;
  double length_ = 0.0;
  double radius_ = 0.0;
  double turn_angle_ = 0.0;
};

/// Advances a pose along one section by local arc length s_local.
inline Pose advance_along(const Pose& p, const PathSection& sec, double s_local) {
  if (sec.kind() == PathSection::Kind::kLine)
    return Pose{p.x + s_local * std::cos(p.theta), p.y + s_local * std::sin(p.theta), p.theta};
  const double k = sec.curvature();
  const double th1 = p.theta + k * s_local;
  return Pose{p.x + (std::sin(th1) - std::sin(p.theta)) / k,
              p.y - (std::cos(th1) - std::cos(p.theta)) / k, th1};
}

/// A tangent-continuous chain of sections anchored at a start pose. Entry
/// poses and cumulative lengths are precomputed so queries touch only one
/// section.
class PathSpec {
 public:
  PathSpec(const Pose& start_pose, std::vector<PathSection> sections)
      : start_pose_(start_pose), sections_(std::move(sections)) {
    if (sections_.empty())
      throw std::invalid_argument("path: at least one section is required");
    entry_poses_.reserve(sections_.size());
    cumulative_.reserve(sections_.size() + 1);
    Pose p = start_pose_;
    double s = 0.0;
    cumulative_.push_back(0.0);
    for (const PathSection& sec : sections_) {
      entry_poses_.push_back(p);
      p = advance_along(p, sec, sec.length());
      s += sec.length();
      cumulative_.push_back(s);
    }
    end_pose_ = p;
  }

  const Pose& start_pose() const { return start_pose_; }
  const Pose& end_pose() const { return end_pose_; }
  const std::vector<PathSection>& sections() const { return sections_; }
  double total_length() const { return cumulative_.back(); }

  /// Index of the section containing arc length s (joints belong to the
  /// later section, except at the very end).
  std::size_t section_index_at(double s) const {
    check_range(s);
    std::size_t i = 0;
    while (i + 1 < sections_.size() && s >= cumulative_[i + 1]) ++i;
    return i;
  }

  Pose pose_at(double s) const {
    check_range(s);
    const std::size_t i = section_index_at(s);
    return advance_along(entry_poses_[i], sections_[i], s - cumulative_[i]);
  }

  double curvature_at(double s) const {
    return sections_[section_index_at(s)].curvature();
  }

  double section_start(std::size_t i) const { return cumulative_[i]; }

 private:
  void check_range(double s) const {
    if (!(s >= -1e-12) || !(s <= total_length() + 1e-9))
      throw std::invalid_argument("path: arc length out of range");
  }

  Pose start_pose_;
  std::vector<PathSection> sections_;
  std::vector<Pose> entry_poses_;
  std::vector<double> cumulative_;
  Pose end_pose_;
};

inline double section_length(const PathSection& s) { return s.length(); }

inline double total_length(const PathSpec& p) { return p.total_length(); }

inline Pose pose_at_arclength(const PathSpec& p, double s) { return p.pose_at(s); }

/// Remainder of a path from arc length s, as a standalone path plus the
/// index of the original section it begins in (for per-section metadata).
struct PathSuffix {
  PathSpec path;
  std::size_t first_section;
};

inline PathSuffix suffix_from(const PathSpec& p, double s) {
  const double total = p.total_length();
  if (!(s >= 0.0) || !(s < total - 1e-9))
    throw std::invalid_argument("path: suffix start out of range");
  const std::size_t i = p.section_index_at(s);
  const double local = s - p.section_start(i);
  std::vector<PathSection> sections;
  const PathSection& cur = p.sections()[i];
  const double remaining = cur.length() - local;
  if (remaining > 1e-9) {
    if (cur.kind() == PathSection::Kind::kLine) {
      sections.push_back(PathSection::line(remaining));
    } else {
      const double sign = cur.turn_angle() > 0.0 ? 1.0 : -1.0;
      sections.push_back(PathSection::arc(cur.radius(), sign * remaining / cur.radius()));
    }
    for (std::size_t j = i + 1; j < p.sections().size(); ++j)
      sections.push_back(p.sections()[j]);
    return PathSuffix{PathSpec(p.pose_at(s), std::move(sections)), i};
  }
  for (std::size_t j = i + 1; j < p.sections().size(); ++j)
    sections.push_back(p.sections()[j]);
  if (sections.empty())
    throw std::invalid_argument("path: suffix start too close to path end");
  return PathSuffix{PathSpec(p.pose_at(s), std::move(sections)), i + 1};
}

/// Arc length of the path point closest to `point`, searched locally around
/// `hint` within `window` metres. Deterministic two-stage grid refinement.
inline double project_onto_path(const PathSpec& p, double px, double py, double hint,
                                double window = 2.0) {
  const double lo = std::max(0.0, hint - window);
  const double hi = std::min(p.total_length(), hint + window);
  auto dist2 = [&](double s) {
    const Pose q = p.pose_at(s);
    const double dx = q.x - px, dy = q.y - py;
    return dx * dx + dy * dy;
  };
  double best_s = lo, best_d = dist2(lo);
  const int coarse = 400;
  for (int i = 1; i <= coarse; ++i) {
    const double s = lo + (hi - lo) * i / coarse;
    const double d = dist2(s);
    if (d < best_d) {
      best_d = d;
      best_s = s;
    }
  }
  const double step = (hi - lo) / coarse;
  const double flo = std::max(0.0, best_s - step);
  const double fhi = std::min(p.total_length(), best_s + step);
  for (int i = 0; i <= 200; ++i) {
    const double s = flo + (fhi - flo) * i / 200.0;
    const double d = dist2(s);
    if (d < best_d) {
      best_d = d;
      best_s = s;
    }
  }
  return best_s;
}

}  // namespace diffdrive
