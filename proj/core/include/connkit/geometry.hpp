#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace connkit {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Proper rigid motion x -> rotation * x + translation.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
  Vec3 rotate(const Vec3& v) const { return rotation * v; }
  RigidTransform inverse() const;
  // (a * b).apply(x) == a.apply(b.apply(x))
  friend RigidTransform operator*(const RigidTransform& a, const RigidTransform& b);

  // rotationᵀ·rotation = I and det = +1, both within `tol`.
  bool is_proper(double tol = 1e-9) const;
};

bool operator==(const RigidTransform& a, const RigidTransform& b);

// Angle of R_aᵀ R_b in [0, π].
double geodesic_distance(const Mat3& a, const Mat3& b);

Mat3 axis_angle(const Vec3& axis, double angle);

// Unit vector perpendicular to `n` that is smallest in lexicographic order
// (x first, then y, then z).
Vec3 lexicographic_perpendicular(const Vec3& n);

// Rotation of least angle taking unit `from` onto unit `to`. The antipodal
// case turns by π about lexicographic_perpendicular(from).
Mat3 minimal_rotation(const Vec3& from, const Vec3& to);

// Re-orthonormalize a nearly-proper rotation via SVD.
Mat3 project_to_rotation(const Mat3& m);

}  // namespace connkit
