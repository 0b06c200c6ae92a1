#pragma once

#include "senseflow/camera.hpp"
#include "senseflow/dense_map.hpp"
#include "senseflow/se3.hpp"

namespace senseflow {

struct WarpResult {
    DenseMap warped;
    ValidityMask inbounds; // 1 where every bilinear tap with nonzero weight lies inside the source
};

// Bilinear sample with clamp-to-edge. Pixel centers sit on integer coordinates.
struct BilinearSample {
    bool inbounds = false;
};
BilinearSample sample_bilinear(const DenseMap& src, double x, double y, double* out);

// Spatial derivative of the bilinear interpolant at (x, y), per channel.
// Used by the loss gradients; uses the cell containing (x, y).
void sample_bilinear_gradient(const DenseMap& src, double x, double y, double* ddx, double* ddy);

// warped(x, y) = src(x + u, y + v)
WarpResult inverse_warp_flow(const DenseMap& src, const FlowField& flow);

// warped(x, y) = right(x - d, y)
WarpResult inverse_warp_disparity(const DenseMap& right, const DisparityMap& disp);

// Second-frame disparity sampled at x + F1(x), i.e. indexed by frame-1 pixels.
WarpResult inverse_warp_disparity_via_flow(const FlowField& flow1, const DisparityMap& disp2);

struct RigidFlowResult {
    FlowField flow;         // W(xi; x, D1(x)) - x
    DisparityMap disparity; // disparity channel of W at each frame-1 pixel
    ValidityMask valid;     // 0 where D1 <= 0 or the point lands behind the camera
};
RigidFlowResult rigid_flow(const RigidTransform& xi, const DisparityMap& disp1, const StereoCamera& cam);

enum class SplatMode {
    Sequential, // single pass in scan order
    Parallel,   // row-parallel with an atomic max per target pixel
};

struct SplatOptions {
    SplatMode mode = SplatMode::Sequential;
    // Shift each splatted disparity by its local disparity gradient to the
    // target pixel center instead of copying it unchanged.
    bool first_order_correction = true;
};

struct ForwardWarpResult {
    DisparityMap disparity; // frame-2 grid
    ValidityMask valid;     // 0 where no source pixel landed
};

// Splats every valid frame-1 pixel, moved by xi, onto the nearest frame-2
// pixel. Collisions keep the largest disparity (nearest surface).
ForwardWarpResult forward_warp_disparity(const DisparityMap& disp1, const RigidTransform& xi, const StereoCamera& cam,
                                         const SplatOptions& opts = {});

} // namespace senseflow
