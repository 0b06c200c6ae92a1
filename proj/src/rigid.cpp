#include "senseflow/rigid.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "senseflow/error.hpp"
#include "senseflow/parallel.hpp"
#include "senseflow/simd/kernels.hpp"

namespace senseflow {

namespace {

constexpr std::size_t kMinPixels = 6;
constexpr std::size_t kChunk = 8192;

// Frame-1 points and their flow targets, structure of arrays.
struct PointSet {
    std::vector<double> px, py, pz, tx, ty;

    std::size_t size() const { return px.size(); }

    simd::RigidPoints slice(std::size_t begin, std::size_t end) const
    {
        return {px.data() + begin, py.data() + begin, pz.data() + begin, tx.data() + begin, ty.data() + begin,
                end - begin};
    }
};

PointSet gather_points(const FlowField& flow, const DisparityMap& disp, const ValidityMask& mask,
                       const StereoCamera& cam)
{
    PointSet s;
    for (int y = 0; y < disp.height(); ++y) {
        for (int x = 0; x < disp.width(); ++x) {
            const double d = disp.at(y, x);
            const double u = flow.at(y, x, 0);
            const double v = flow.at(y, x, 1);
            if (!mask.valid(y, x) || !(d > 0.0) || !std::isfinite(d) || !std::isfinite(u) || !std::isfinite(v)) {
                continue;
            }
            const Vec3 p = backproject({double(x), double(y)}, d, cam);
            s.px.push_back(p.x());
            s.py.push_back(p.y());
            s.pz.push_back(p.z());
            s.tx.push_back(x + u);
            s.ty.push_back(y + v);
        }
    }
    return s;
}

simd::NormalSums accumulate(const PointSet& pts, const RigidTransform& T, const StereoCamera& cam,
                            const GnOptions& opts)
{
    simd::RigidModel model;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) model.rotation[3 * r + c] = T.rotation(r, c);
        model.translation[r] = T.translation[r];
    }
    model.fx = cam.fx;
    model.fy = cam.fy;
    model.cx = cam.cx;
    model.cy = cam.cy;
    model.huber_delta = opts.huber_delta;
    model.robust = opts.robust;

    const auto& kern = simd::kernels();
    const std::size_t chunks = (pts.size() + kChunk - 1) / kChunk;
    std::vector<simd::NormalSums> partial(chunks);
    parallel_for_chunks(
        chunks,
        [&](std::size_t i) {
            const std::size_t begin = i * kChunk;
            kern.normal_equations(pts.slice(begin, std::min(pts.size(), begin + kChunk)), model, partial[i]);
        },
        opts.threads);
    simd::NormalSums total;
    for (const auto& p : partial) total += p;
    return total;
}

Mat6 unpack_hessian(const simd::NormalSums& s)
{
    Mat6 H;
    int k = 0;
    for (int r = 0; r < 6; ++r) {
        for (int c = r; c < 6; ++c) {
            H(r, c) = s.hessian[k];
            H(c, r) = s.hessian[k];
            ++k;
        }
    }
    return H;
}

} // namespace

const std::set<int>& default_dynamic_ids()
{
    static const std::set<int> ids{10, 11, 12, 13, 14, 15, 16, 17, 18};
    return ids;
}

ValidityMask build_rigid_mask(const DenseMap& labels, const std::set<int>& dynamic_ids, int erosion)
{
    require_channels(labels, 1, "build_rigid_mask");
    if (erosion < 0) throw DomainError("build_rigid_mask: negative erosion size");
    const int h = labels.height();
    const int w = labels.width();
    ValidityMask mask(h, w, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int id = static_cast<int>(std::lround(labels.at(y, x)));
            mask.at(y, x) = dynamic_ids.count(id) ? 0.0 : 1.0;
        }
    }
    if (erosion <= 1) return mask;

    // Square erosion is separable: min over the row window, then the column window.
    const int lo = -(erosion / 2);
    const int hi = erosion - 1 - erosion / 2;
    ValidityMask rows(h, w, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double m = 1.0;
            for (int dx = lo; dx <= hi && m > 0.0; ++dx) {
                const int sx = x + dx;
                if (sx >= 0 && sx < w) m = std::min(m, mask.at(y, sx));
            }
            rows.at(y, x) = m;
        }
    }
    ValidityMask out(h, w, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double m = 1.0;
            for (int dy = lo; dy <= hi && m > 0.0; ++dy) {
                const int sy = y + dy;
                if (sy >= 0 && sy < h) m = std::min(m, rows.at(sy, x));
            }
            out.at(y, x) = m;
        }
    }
    return out;
}

Jacobian26 gn_jacobian(double p_u, double p_v, double p_d, const StereoCamera& cam)
{
    if (!(p_d > 0.0)) throw DomainError("gn_jacobian: inverse depth must be positive");
    const double fx = cam.fx;
    const double fy = cam.fy;
    Jacobian26 J;
    J << -p_u * p_v * fx, (1.0 + p_u * p_u) * fx, -p_v * fx, p_d * fx, 0.0, -p_u * p_d * fx,
        -(1.0 + p_v * p_v) * fy, p_u * p_v * fy, p_u * fy, 0.0, p_d * fy, -p_v * p_d * fy;
    return J;
}

void GnOptions::validate() const
{
    if (max_iters < 1) throw DomainError("GnOptions: max_iters must be >= 1");
    if (!(residual_tol > 0.0) || !(huber_delta > 0.0) || !(max_condition > 0.0)) {
        throw DomainError("GnOptions: tolerances must be positive");
    }
    if (!(damping >= 0.0)) throw DomainError("GnOptions: damping must be nonnegative");
}

GnResult gn_solve(const FlowField& flow, const DisparityMap& disp, const ValidityMask& mask, const StereoCamera& cam,
                  const GnOptions& opts)
{
    opts.validate();
    cam.validate();
    require_same_grid(flow, disp, "gn_solve");
    require_same_grid(flow, mask, "gn_solve");

    const PointSet pts = gather_points(flow, disp, mask, cam);
    if (pts.size() < kMinPixels) {
        throw DomainError("gn_solve: " + std::to_string(pts.size()) + " usable pixels, need at least " +
                          std::to_string(kMinPixels));
    }

    GnResult result;
    result.trace.pixels = pts.size();
    RigidTransform& xi = result.transform;
    std::optional<double> previous;

    for (int it = 0;; ++it) {
        const simd::NormalSums s = accumulate(pts, xi, cam, opts);
        if (s.used < kMinPixels || !(s.weight_sum > 0.0)) {
            throw NumericalError("gn_solve: too few points in front of the camera");
        }
        const double mean = s.weighted_abs / s.weight_sum;
        result.trace.energy.push_back(s.cost);
        result.trace.mean_abs_residual.push_back(mean);

        if (mean <= opts.residual_tol || (previous && std::abs(*previous - mean) <= opts.residual_tol)) {
            result.trace.converged = true;
            break;
        }
        if (it == opts.max_iters) break;
        previous = mean;

        // The kernel linearizes around a perturbation after xi; the update
        // composes on the right, so map it through the adjoint.
        const Mat6 Ad = xi.adjoint();
        Mat6 H = Ad.transpose() * unpack_hessian(s) * Ad;
        const Eigen::Matrix<double, 6, 1> g =
            Ad.transpose() * Eigen::Map<const Eigen::Matrix<double, 6, 1>>(s.gradient.data());

        const Eigen::SelfAdjointEigenSolver<Mat6> eig(H, Eigen::EigenvaluesOnly);
        const double lmin = eig.eigenvalues()(0);
        const double lmax = eig.eigenvalues()(5);
        const double cond = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
        result.trace.condition.push_back(cond);
        if (!(cond <= opts.max_condition)) {
            throw NumericalError("gn_solve: degenerate geometry, condition number of J^T W J is " +
                                 std::to_string(cond));
        }
        if (opts.damping > 0.0) H.diagonal() *= 1.0 + opts.damping;

        const Twist delta = H.ldlt().solve(g);
        if (!delta.allFinite()) throw NumericalError("gn_solve: non-finite update");
        xi = se3_compose(xi, delta);
        result.trace.step_norm.push_back(delta.norm());
        result.trace.iterations = it + 1;
    }
    return result;
}

FlowField compose_flow(const FlowField& raw, const FlowField& rigid, const ValidityMask& B)
{
    require_same_grid(raw, rigid, "compose_flow");
    require_same_grid(raw, B, "compose_flow");
    FlowField out = raw;
    for (std::size_t p = 0; p < raw.pixels(); ++p) {
        if (B.values()[p] == 0.0) continue;
        out.values()[2 * p] = rigid.values()[2 * p];
        out.values()[2 * p + 1] = rigid.values()[2 * p + 1];
    }
    return out;
}

DisparityMap compose_warped_disparity(const WarpResult& via_flow, const DisparityWithValidity& rigid,
                                      const ValidityMask& B)
{
    const DenseMap& inv = via_flow.warped;
    require_channels(inv, 1, "compose_warped_disparity");
    require_same_grid(inv, rigid.disparity, "compose_warped_disparity");
    require_same_grid(inv, B, "compose_warped_disparity");
    const int h = inv.height();
    const int w = inv.width();
    const std::size_t n = inv.pixels();

    DisparityMap out(h, w);
    std::vector<char> have(n, 0);
    for (std::size_t p = 0; p < n; ++p) {
        const bool inv_ok = via_flow.inbounds.values()[p] != 0.0 && inv.values()[p] > 0.0;
        const bool rigid_ok = rigid.valid.values()[p] != 0.0 && rigid.disparity.values()[p] > 0.0;
        const bool prefer_rigid = B.values()[p] != 0.0;
        if (prefer_rigid ? rigid_ok : inv_ok) {
            out.values()[p] = prefer_rigid ? rigid.disparity.values()[p] : inv.values()[p];
        } else if (prefer_rigid ? inv_ok : rigid_ok) {
            out.values()[p] = prefer_rigid ? inv.values()[p] : rigid.disparity.values()[p];
        } else {
            continue;
        }
        have[p] = 1;
    }

    // Remaining holes take the value of the nearest filled pixel (4-connected BFS).
    std::deque<std::size_t> queue;
    for (std::size_t p = 0; p < n; ++p) {
        if (have[p]) queue.push_back(p);
    }
    while (!queue.empty()) {
        const std::size_t p = queue.front();
        queue.pop_front();
        const int y = static_cast<int>(p / w);
        const int x = static_cast<int>(p % w);
        const int nb[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
        for (const auto& q : nb) {
            if (q[0] < 0 || q[0] >= h || q[1] < 0 || q[1] >= w) continue;
            const std::size_t i = static_cast<std::size_t>(q[0]) * w + q[1];
            if (have[i]) continue;
            have[i] = 1;
            out.values()[i] = out.values()[p];
            queue.push_back(i);
        }
    }
    return out;
}

RefineResult refine_scene_flow(const FlowField& flow1, const DisparityMap& disp1, const DisparityMap& disp2,
                               const DenseMap& labels, const StereoCamera& cam, const RefineOptions& opts)
{
    require_same_grid(flow1, disp1, "refine_scene_flow");
    require_same_grid(flow1, disp2, "refine_scene_flow");
    require_same_grid(flow1, labels, "refine_scene_flow");

    RefineResult out;
    out.rigid_mask = build_rigid_mask(labels, opts.dynamic_ids, opts.erosion);
    for (std::size_t p = 0; p < disp1.pixels(); ++p) {
        if (!(disp1.values()[p] > 0.0)) out.rigid_mask.values()[p] = 0.0;
    }
    const WarpResult via_flow = inverse_warp_disparity_via_flow(flow1, disp2);

    if (out.rigid_mask.count() < kMinPixels) {
        out.flow = flow1;
        out.disp2_warped =
            compose_warped_disparity(via_flow, {DisparityMap(disp1.height(), disp1.width()), ValidityMask(disp1.height(), disp1.width(), 0.0)},
                                     out.rigid_mask);
        return out;
    }

    GnResult fit = gn_solve(flow1, disp1, out.rigid_mask, cam, opts.gn);
    out.trace = std::move(fit.trace);
    out.ego = fit.transform;

    RigidFlowResult rf = rigid_flow(*out.ego, disp1, cam);
    ValidityMask B = out.rigid_mask;
    for (std::size_t p = 0; p < B.pixels(); ++p) {
        if (rf.valid.values()[p] == 0.0) B.values()[p] = 0.0;
    }
    out.flow = compose_flow(flow1, rf.flow, B);
    out.disp2_warped = compose_warped_disparity(via_flow, {std::move(rf.disparity), std::move(rf.valid)}, B);
    return out;
}

} // namespace senseflow
