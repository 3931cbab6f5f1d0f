#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace diffdrive {

/// Axis-aligned cuboid particle of uniform density. `origin` is the minimum
/// corner in the body frame, `dims` the edge lengths along the body axes.
struct Particle {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();  // [m]
  Eigen::Vector3d dims = Eigen::Vector3d::Zero();    // [m], all > 0
  double density = 0.0;                              // [kg/m^3]
};

/// A rigid body assembled from cuboid particles.
struct RigidBodySpec {
  std::vector<Particle> particles;
};

/// Mass, centre of gravity, and inertia tensor about the CG in body axes.
struct MassProperties {
  double mass = 0.0;                                        // [kg]
  Eigen::Vector3d cg = Eigen::Vector3d::Zero();             // [m]
  Eigen::Matrix3d inertia_cg = Eigen::Matrix3d::Zero();     // [kg m^2]
};

inline void validate(const Particle& p) {
  for (int i = 0; i < 3; ++i) {
    if (!(p.dims[i] > 0.0) || !std::isfinite(p.dims[i]))
      throw std::invalid_argument("invalid particle: dims must be > 0");
    if (!std::isfinite(p.origin[i]))
      throw std::invalid_argument("invalid particle: origin must be finite");
  }
  if (p.density < 0.0 || !std::isfinite(p.density))
    throw std::invalid_argument("invalid particle: density must be >= 0");
}

/// Parallel-axis shift term for a point mass at displacement d from the axis
/// origin: m * ((d.d) I - d d^T).
inline Eigen::Matrix3d inertia_shift(const Eigen::Vector3d& d, double mass) {
  return mass * (d.squaredNorm() * Eigen::Matrix3d::Identity() - d * d.transpose());
}

/// Closed-form mass properties of one cuboid particle. The CG sits at the
/// cuboid centre and the tensor is the diagonal (m/12)(dy^2+dz^2, ...).
inline MassProperties particle_mass_properties(const Particle& p) {
  validate(p);
  MassProperties mp;
  mp.mass = p.density * p.dims.x() * p.dims.y() * p.dims.z();
  mp.cg = p.origin + 0.5 * p.dims;
  const double dx2 = p.dims.x() * p.dims.x();
  const double dy2 = p.dims.y() * p.dims.y();
  const double dz2 = p.dims.z() * p.dims.z();
  mp.inertia_cg.setZero();
  mp.inertia_cg(0, 0) = mp.mass / 12.0 * (dy2 + dz2);
  mp.inertia_cg(1, 1) = mp.mass / 12.0 * (dx2 + dz2);
  mp.inertia_cg(2, 2) = mp.mass / 12.0 * (dx2 + dy2);
  return mp;
}

/// Composes all particles into one body: mass is additive, the CG is the
/// mass-weighted mean, and each particle tensor moves to the aggregate CG by
/// the parallel-axis theorem. The full 3x3 tensor is kept even though only
/// the yaw entry feeds the planar dynamics.
inline MassProperties aggregate(const RigidBodySpec& spec) {
  if (spec.particles.empty())
    throw std::invalid_argument("degenerate body: no particles");
  double mass = 0.0;
  Eigen::Vector3d moment = Eigen::Vector3d::Zero();
  std::vector<MassProperties> parts;
  parts.reserve(spec.particles.size());
  for (const Particle& p : spec.particles) {
    parts.push_back(particle_mass_properties(p));
    mass += parts.back().mass;
    moment += parts.back().mass * parts.back().cg;
  }
  if (!(mass > 0.0))
    throw std::invalid_argument("degenerate body: total mass is zero");
  MassProperties mp;
  mp.mass = mass;
  mp.cg = moment / mass;
  mp.inertia_cg.setZero();
  for (const MassProperties& part : parts)
    mp.inertia_cg += part.inertia_cg + inertia_shift(part.cg - mp.cg, part.mass);
  return mp;
}

/// Inertia about the vertical body axis through the CG.
inline double yaw_inertia(const MassProperties& mp) { return mp.inertia_cg(2, 2); }

/// Axis-aligned hull of all particle boxes.
inline std::pair<Eigen::Vector3d, Eigen::Vector3d> bounding_box(const RigidBodySpec& spec) {
  if (spec.particles.empty())
    throw std::invalid_argument("bounding_box: empty body");
  Eigen::Vector3d lo = spec.particles.front().origin;
  Eigen::Vector3d hi = lo + spec.particles.front().dims;
  for (const Particle& p : spec.particles) {
    validate(p);
    lo = lo.cwiseMin(p.origin);
    hi = hi.cwiseMax(p.origin + p.dims);
  }
  return {lo, hi};
}

}  // namespace diffdrive
