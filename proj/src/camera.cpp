#include "senseflow/camera.hpp"

#include <cmath>
#include <string>

#include "senseflow/error.hpp"

namespace senseflow {

void StereoCamera::validate() const
{
    const bool finite = std::isfinite(fx) && std::isfinite(fy) && std::isfinite(cx) && std::isfinite(cy) &&
                        std::isfinite(baseline);
    if (!finite || !(fx > 0.0) || !(fy > 0.0) || !(baseline > 0.0)) {
        throw DomainError("camera requires finite intrinsics with fx, fy, baseline > 0");
    }
}

Vec3 backproject(Pixel x, double disparity, const StereoCamera& cam)
{
    if (!(disparity > 0.0)) throw DomainError("backproject: nonpositive disparity " + std::to_string(disparity));
    const double z = cam.disparity_scale() / disparity;
    return {(x.x - cam.cx) / cam.fx * z, (x.y - cam.cy) / cam.fy * z, z};
}

Projection project(const Vec3& p, const StereoCamera& cam)
{
    if (!(p.z() > 0.0)) throw DomainError("project: point behind camera (z = " + std::to_string(p.z()) + ")");
    const double iz = 1.0 / p.z();
    return {{cam.fx * p.x() * iz + cam.cx, cam.fy * p.y() * iz + cam.cy}, cam.disparity_scale() * iz};
}

InverseDepthPoint inverse_depth(Pixel x, double disparity, const StereoCamera& cam)
{
    if (!(disparity > 0.0)) throw DomainError("inverse_depth: nonpositive disparity");
    return {(x.x - cam.cx) / cam.fx, (x.y - cam.cy) / cam.fy, disparity / cam.disparity_scale()};
}

} // namespace senseflow
