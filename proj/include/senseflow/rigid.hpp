#pragma once

#include <optional>
#include <set>
#include <vector>

#include <Eigen/Core>

#include "senseflow/camera.hpp"
#include "senseflow/dense_map.hpp"
#include "senseflow/se3.hpp"
#include "senseflow/warp.hpp"

namespace senseflow {

// Cityscapes train ids for sky, person, rider, car, truck, bus, train,
// motorcycle and bicycle.
const std::set<int>& default_dynamic_ids();

// 1 where the label is not dynamic, then eroded by a size x size square
// (anchor at size / 2). Pixels outside the image do not erode.
ValidityMask build_rigid_mask(const DenseMap& labels, const std::set<int>& dynamic_ids, int erosion = 10);

using Jacobian26 = Eigen::Matrix<double, 2, 6>;

// d(rigid flow) / d(twist) at a point with normalized coordinates (u, v) and
// inverse depth d, for a perturbation applied to the point. Columns follow
// the twist order [w; v].
Jacobian26 gn_jacobian(double p_u, double p_v, double p_d, const StereoCamera& cam);

struct GnOptions {
    int max_iters = 20;
    double residual_tol = 1e-6;
    double huber_delta = 1.345; // pixels
    double damping = 0.0;       // Levenberg term lambda * diag(H); 0 is plain Gauss-Newton
    bool robust = true;         // false: unweighted least squares
    double max_condition = 1e12;
    int threads = 0;            // 0: thread_count()

    void validate() const;
};

struct GnTrace {
    std::vector<double> energy;            // robust cost at the start of each iteration
    std::vector<double> mean_abs_residual; // sum w|r| / sum w
    std::vector<double> step_norm;
    std::vector<double> condition;         // of J^T W J
    int iterations = 0;                    // updates applied
    bool converged = false;
    std::size_t pixels = 0;
};

struct GnResult {
    RigidTransform transform;
    GnTrace trace;
};

// Huber-IRLS Gauss-Newton fit of the ego-motion explaining `flow` on the
// masked pixels with positive disparity, starting from identity.
GnResult gn_solve(const FlowField& flow, const DisparityMap& disp, const ValidityMask& mask, const StereoCamera& cam,
                  const GnOptions& opts = {});

// Per-pixel selection: rigid where B is set, raw elsewhere.
FlowField compose_flow(const FlowField& raw, const FlowField& rigid, const ValidityMask& B);

struct DisparityWithValidity {
    DisparityMap disparity;
    ValidityMask valid;
};

// Rigid disparity inside B, flow-warped disparity outside. An invalid pick
// falls back to the other source, then to the nearest valid pixel.
DisparityMap compose_warped_disparity(const WarpResult& via_flow, const DisparityWithValidity& rigid,
                                      const ValidityMask& B);

struct RefineOptions {
    GnOptions gn;
    std::set<int> dynamic_ids = default_dynamic_ids();
    int erosion = 10;
};

struct RefineResult {
    FlowField flow;
    DisparityMap disp2_warped;
    std::optional<RigidTransform> ego; // absent when the rigid region is too small
    GnTrace trace;
    ValidityMask rigid_mask;
};

RefineResult refine_scene_flow(const FlowField& flow1, const DisparityMap& disp1, const DisparityMap& disp2,
                               const DenseMap& labels, const StereoCamera& cam, const RefineOptions& opts = {});

} // namespace senseflow
