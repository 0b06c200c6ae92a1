#pragma once

#include <Eigen/Core>

namespace senseflow {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// Twist ordered rotation first: [w_x, w_y, w_z, v_x, v_y, v_z].
using Twist = Eigen::Matrix<double, 6, 1>;

// Rigid motion p -> R p + t.
struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static RigidTransform identity() { return {}; }

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
    RigidTransform inverse() const;

    // (*this * other)(p) == this->apply(other.apply(p))
    RigidTransform operator*(const RigidTransform& other) const;

    // Adjoint in the rotation-first twist ordering: T exp(d) T^-1 == exp(Ad d).
    Mat6 adjoint() const;

    // max |R^T R - I| entry.
    double orthonormality_error() const;
};

RigidTransform se3_exp(const Twist& delta);
Twist se3_log(const RigidTransform& T);

// a o exp(delta), re-orthonormalized when drift exceeds 1e-12.
RigidTransform se3_compose(const RigidTransform& a, const Twist& delta);

Mat3 skew(const Vec3& w);

// Rotation about `axis_angle` (direction = axis, norm = angle) plus translation.
RigidTransform make_transform(const Vec3& axis_angle, const Vec3& translation);

} // namespace senseflow
