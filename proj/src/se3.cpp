#include "senseflow/se3.hpp"

#include <cmath>

#include <Eigen/Geometry>

namespace senseflow {

namespace {

// Below this angle the closed forms lose digits to cancellation and the
// Taylor series take over.
constexpr double kSeriesAngle = 1e-4;

void orthonormalize(Mat3& R)
{
    Eigen::Quaterniond q(R);
    q.normalize();
    R = q.toRotationMatrix();
}

} // namespace

Mat3 skew(const Vec3& w)
{
    Mat3 S;
    S << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
    return S;
}

RigidTransform RigidTransform::inverse() const
{
    RigidTransform inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
}

RigidTransform RigidTransform::operator*(const RigidTransform& other) const
{
    RigidTransform out;
    out.rotation = rotation * other.rotation;
    out.translation = rotation * other.translation + translation;
    return out;
}

Mat6 RigidTransform::adjoint() const
{
    Mat6 ad = Mat6::Zero();
    ad.topLeftCorner<3, 3>() = rotation;
    ad.bottomLeftCorner<3, 3>() = skew(translation) * rotation;
    ad.bottomRightCorner<3, 3>() = rotation;
    return ad;
}

double RigidTransform::orthonormality_error() const
{
    return (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
}

RigidTransform se3_exp(const Twist& delta)
{
    const Vec3 w = delta.head<3>();
    const Vec3 v = delta.tail<3>();
    const double theta2 = w.squaredNorm();
    const double theta = std::sqrt(theta2);
    const Mat3 W = skew(w);
    const Mat3 W2 = W * W;

    double a, b, c; // R = I + a W + b W^2,  V = I + b W + c W^2
    if (theta < kSeriesAngle) {
        a = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0;
        b = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0;
        c = 1.0 / 6.0 - theta2 / 120.0 + theta2 * theta2 / 5040.0;
    } else {
        const double s = std::sin(0.5 * theta);
        a = std::sin(theta) / theta;
        b = 2.0 * s * s / theta2;
        c = (theta - std::sin(theta)) / (theta2 * theta);
    }

    RigidTransform T;
    T.rotation = Mat3::Identity() + a * W + b * W2;
    T.translation = (Mat3::Identity() + b * W + c * W2) * v;
    return T;
}

Twist se3_log(const RigidTransform& T)
{
    const Eigen::AngleAxisd aa(T.rotation);
    const double theta = aa.angle();
    const Vec3 w = aa.axis() * theta;
    const Mat3 W = skew(w);

    Mat3 V_inv;
    if (theta < kSeriesAngle) {
        V_inv = Mat3::Identity() - 0.5 * W + (1.0 / 12.0 + theta * theta / 720.0) * W * W;
    } else {
        const double half = 0.5 * theta;
        const double k = (1.0 - half * std::cos(half) / std::sin(half)) / (theta * theta);
        V_inv = Mat3::Identity() - 0.5 * W + k * W * W;
    }

    Twist out;
    out.head<3>() = w;
    out.tail<3>() = V_inv * T.translation;
    return out;
}

RigidTransform se3_compose(const RigidTransform& a, const Twist& delta)
{
    RigidTransform out = a * se3_exp(delta);
    if (out.orthonormality_error() > 1e-12) orthonormalize(out.rotation);
    return out;
}

RigidTransform make_transform(const Vec3& axis_angle, const Vec3& translation)
{
    Twist tw;
    tw.head<3>() = axis_angle;
    tw.tail<3>().setZero();
    RigidTransform T = se3_exp(tw);
    T.translation = translation;
    return T;
}

} // namespace senseflow
