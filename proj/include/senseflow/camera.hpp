#pragma once

#include <Eigen/Core>

#include "senseflow/se3.hpp"

namespace senseflow {

// Rectified stereo pinhole rig. Baseline in meters, the rest in pixels.
struct StereoCamera {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    double baseline = 1.0;

    // Throws DomainError unless fx, fy, baseline > 0 and all entries finite.
    void validate() const;

    // f_x * b; disparity d corresponds to depth f_x b / d.
    double disparity_scale() const { return fx * baseline; }
};

struct Pixel {
    double x = 0.0;
    double y = 0.0;
};

struct Projection {
    Pixel pixel;
    double disparity = 0.0;
};

// Inverse-depth coordinates of a pixel: normalized (u, v) and d = 1/z.
struct InverseDepthPoint {
    double u = 0.0;
    double v = 0.0;
    double d = 0.0;
};

Vec3 backproject(Pixel x, double disparity, const StereoCamera& cam);
Projection project(const Vec3& p, const StereoCamera& cam);

// p_d = disparity / (f_x b), with p_u, p_v the normalized image coordinates.
InverseDepthPoint inverse_depth(Pixel x, double disparity, const StereoCamera& cam);

} // namespace senseflow
