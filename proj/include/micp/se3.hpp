// micp — range-sensor-to-mesh registration
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "micp/rng.hpp"
#include "micp/types.hpp"

namespace micp {

// Rigid body transform (rotation + translation, meters). Composition and
// application follow the usual convention: p_out = R * p + t.
template <typename Scalar>
struct TransformT {
  Eigen::Quaternion<Scalar> rotation = Eigen::Quaternion<Scalar>::Identity();
  Vec3T<Scalar> translation = Vec3T<Scalar>::Zero();

  static TransformT identity() { return {}; }

  Mat3T<Scalar> rotation_matrix() const { return rotation.toRotationMatrix(); }
};

using Transform = TransformT<double>;

// result applies b first, then a: result * p == a * (b * p)
template <typename S>
TransformT<S> compose(const TransformT<S>& a, const TransformT<S>& b) {
  TransformT<S> out;
  out.rotation = (a.rotation * b.rotation).normalized();
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

template <typename S>
TransformT<S> invert(const TransformT<S>& t) {
  TransformT<S> out;
  out.rotation = t.rotation.conjugate();
  out.translation = -(out.rotation * t.translation);
  return out;
}

template <typename S, typename Derived>
Vec3T<S> apply(const TransformT<S>& t, const Eigen::MatrixBase<Derived>& p) {
  return t.rotation * Vec3T<S>(p) + t.translation;
}

// Geodesic angle of a unit quaternion, in [0, pi].
template <typename S>
S rotation_angle(const Eigen::Quaternion<S>& q) {
  const S n = q.vec().norm();
  return S(2) * std::atan2(n, std::abs(q.w()));
}

struct PoseError {
  double translation_error = 0.0;  // meters
  double rotation_error = 0.0;     // radians
};

inline PoseError pose_error(const Transform& estimate, const Transform& truth) {
  PoseError e;
  e.translation_error = (estimate.translation - truth.translation).norm();
  e.rotation_error = rotation_angle(Quat(truth.rotation.conjugate() * estimate.rotation));
  return e;
}

// Deterministic sample in the pose ball around `center`: translation offset
// uniform in the radius-`max_translation` ball, rotation axis uniform on the
// sphere with angle uniform in [0, max_rotation].
inline Transform random_pose_in_ball(const Transform& center, double max_translation,
                                     double max_rotation, std::uint64_t seed) {
  if (max_translation < 0.0) {
    throw std::invalid_argument("random_pose_in_ball: max_translation must be >= 0");
  }
  if (max_rotation < 0.0 || max_rotation > kPi) {
    throw std::invalid_argument("random_pose_in_ball: max_rotation must be in [0, pi]");
  }
  Rng rng(seed);
  const Vec3 dir = rng.unit_vector();
  const double radius = max_translation * std::cbrt(rng.uniform());
  const Vec3 axis = rng.unit_vector();
  const double angle = max_rotation * rng.uniform();

  Transform out;
  out.rotation = (center.rotation * Quat(Eigen::AngleAxisd(angle, axis))).normalized();
  out.translation = center.translation + radius * dir;
  return out;
}

}  // namespace micp
