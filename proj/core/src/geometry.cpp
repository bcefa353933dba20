#include "connkit/geometry.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

namespace connkit {

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
  RigidTransform out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

bool operator==(const RigidTransform& a, const RigidTransform& b) {
  return a.rotation == b.rotation && a.translation == b.translation;
}

bool RigidTransform::is_proper(double tol) const {
  const Mat3 gram = rotation.transpose() * rotation;
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

double geodesic_distance(const Mat3& a, const Mat3& b) {
  const Mat3 rel = a.transpose() * b;
  // acos is ill-conditioned near 0 and π; the axis-angle form is not.
  const Eigen::Vector3d skew(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1));
  const double s = 0.5 * skew.norm();
  const double c = 0.5 * (rel.trace() - 1.0);
  return std::atan2(s, c);
}

Mat3 axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (n == 0.0) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, axis / n).toRotationMatrix();
}

Vec3 lexicographic_perpendicular(const Vec3& n) {
  const Vec3 unit = n.normalized();
  for (int i = 0; i < 3; ++i) {
    const Vec3 e = Vec3::Unit(i);
    const Vec3 proj = e - e.dot(unit) * unit;
    // The minimum of component i over the great circle ⟂ n sits at -proj.
    if (proj.norm() > 1e-12) return -proj.normalized();
  }
  return -Vec3::UnitX();
}

Mat3 minimal_rotation(const Vec3& from, const Vec3& to) {
  const Vec3 f = from.normalized();
  const Vec3 t = to.normalized();
  const Vec3 cross = f.cross(t);
  const double s = cross.norm();
  const double c = f.dot(t);
  if (s < 1e-12) {
    if (c > 0.0) return Mat3::Identity();
    return axis_angle(lexicographic_perpendicular(f), M_PI);
  }
  return axis_angle(cross / s, std::atan2(s, c));
}

Mat3 project_to_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

}  // namespace connkit
