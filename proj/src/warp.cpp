#include "senseflow/warp.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "senseflow/error.hpp"
#include "senseflow/parallel.hpp"

namespace senseflow {

namespace {

struct Cell {
    int x0, x1, y0, y1;
    double fx, fy;
    bool inbounds;
};

Cell locate(const DenseMap& src, double x, double y)
{
    const int w = src.width();
    const int h = src.height();
    Cell c{};
    c.inbounds = x >= 0.0 && x <= w - 1 && y >= 0.0 && y <= h - 1;
    const double xc = std::clamp(std::isfinite(x) ? x : 0.0, 0.0, static_cast<double>(w - 1));
    const double yc = std::clamp(std::isfinite(y) ? y : 0.0, 0.0, static_cast<double>(h - 1));
    c.x0 = std::min(static_cast<int>(std::floor(xc)), std::max(w - 2, 0));
    c.y0 = std::min(static_cast<int>(std::floor(yc)), std::max(h - 2, 0));
    c.x1 = std::min(c.x0 + 1, w - 1);
    c.y1 = std::min(c.y0 + 1, h - 1);
    c.fx = xc - c.x0;
    c.fy = yc - c.y0;
    return c;
}

// Shared by every inverse warp so the flow and disparity variants sample
// identically. offset(y, x) returns the source displacement of pixel (x, y).
template <class Offset>
WarpResult inverse_warp(const DenseMap& src, int height, int width, Offset offset)
{
    WarpResult out{DenseMap(height, width, src.channels()), ValidityMask(height, width, 1.0)};
    const int rows = height;
    parallel_for_chunks(static_cast<std::size_t>(rows), [&](std::size_t row) {
        const int y = static_cast<int>(row);
        for (int x = 0; x < width; ++x) {
            const auto [du, dv] = offset(y, x);
            const BilinearSample s = sample_bilinear(src, x + du, y + dv, &out.warped.at(y, x));
            out.inbounds.at(y, x) = s.inbounds ? 1.0 : 0.0;
        }
    });
    return out;
}

} // namespace

BilinearSample sample_bilinear(const DenseMap& src, double x, double y, double* out)
{
    const Cell c = locate(src, x, y);
    const int ch = src.channels();
    const double w00 = (1.0 - c.fx) * (1.0 - c.fy);
    const double w01 = c.fx * (1.0 - c.fy);
    const double w10 = (1.0 - c.fx) * c.fy;
    const double w11 = c.fx * c.fy;
    const double* p00 = &src.values()[src.index(c.y0, c.x0)];
    const double* p01 = &src.values()[src.index(c.y0, c.x1)];
    const double* p10 = &src.values()[src.index(c.y1, c.x0)];
    const double* p11 = &src.values()[src.index(c.y1, c.x1)];
    for (int k = 0; k < ch; ++k) out[k] = w00 * p00[k] + w01 * p01[k] + w10 * p10[k] + w11 * p11[k];
    return {c.inbounds};
}

void sample_bilinear_gradient(const DenseMap& src, double x, double y, double* ddx, double* ddy)
{
    const Cell c = locate(src, x, y);
    const bool move_x = x >= 0.0 && x <= src.width() - 1 && c.x1 != c.x0;
    const bool move_y = y >= 0.0 && y <= src.height() - 1 && c.y1 != c.y0;
    for (int k = 0; k < src.channels(); ++k) {
        const double i00 = src.at(c.y0, c.x0, k);
        const double i01 = src.at(c.y0, c.x1, k);
        const double i10 = src.at(c.y1, c.x0, k);
        const double i11 = src.at(c.y1, c.x1, k);
        ddx[k] = move_x ? (1.0 - c.fy) * (i01 - i00) + c.fy * (i11 - i10) : 0.0;
        ddy[k] = move_y ? (1.0 - c.fx) * (i10 - i00) + c.fx * (i11 - i01) : 0.0;
    }
}

WarpResult inverse_warp_flow(const DenseMap& src, const FlowField& flow)
{
    require_same_grid(src, flow, "inverse_warp_flow");
    return inverse_warp(src, flow.height(), flow.width(), [&](int y, int x) {
        return std::pair{flow.at(y, x, 0), flow.at(y, x, 1)};
    });
}

WarpResult inverse_warp_disparity(const DenseMap& right, const DisparityMap& disp)
{
    require_same_grid(right, disp, "inverse_warp_disparity");
    return inverse_warp(right, disp.height(), disp.width(), [&](int y, int x) {
        return std::pair{-disp.at(y, x), 0.0};
    });
}

WarpResult inverse_warp_disparity_via_flow(const FlowField& flow1, const DisparityMap& disp2)
{
    require_same_grid(flow1, disp2, "inverse_warp_disparity_via_flow");
    return inverse_warp_flow(disp2, flow1);
}

RigidFlowResult rigid_flow(const RigidTransform& xi, const DisparityMap& disp1, const StereoCamera& cam)
{
    cam.validate();
    const int h = disp1.height();
    const int w = disp1.width();
    RigidFlowResult out{FlowField(h, w), DisparityMap(h, w), ValidityMask(h, w, 0.0)};
    parallel_for_chunks(static_cast<std::size_t>(h), [&](std::size_t row) {
        const int y = static_cast<int>(row);
        for (int x = 0; x < w; ++x) {
            const double d = disp1.at(y, x);
            if (!(d > 0.0) || !std::isfinite(d)) continue;
            const Vec3 p = xi.apply(backproject({double(x), double(y)}, d, cam));
            if (!(p.z() > 0.0)) continue;
            const Projection q = project(p, cam);
            out.flow.at(y, x, 0) = q.pixel.x - x;
            out.flow.at(y, x, 1) = q.pixel.y - y;
            out.disparity.at(y, x) = q.disparity;
            out.valid.at(y, x) = 1.0;
        }
    });
    return out;
}

ForwardWarpResult forward_warp_disparity(const DisparityMap& disp1, const RigidTransform& xi, const StereoCamera& cam,
                                         const SplatOptions& opts)
{
    const int h = disp1.height();
    const int w = disp1.width();
    const RigidFlowResult moved = rigid_flow(xi, disp1, cam);

    // Target position and disparity of source pixel (x, y), if any.
    auto source = [&](int y, int x, double& tx, double& ty, double& td) {
        if (x < 0 || y < 0 || x >= w || y >= h || !moved.valid.valid(y, x)) return false;
        tx = x + moved.flow.at(y, x, 0);
        ty = y + moved.flow.at(y, x, 1);
        td = moved.disparity.at(y, x);
        return true;
    };

    // Disparity gradient over the target grid, from the two source neighbors
    // that map most smoothly; false across depth edges.
    constexpr double kEdgeJump = 1.0;
    auto target_gradient = [&](int y, int x, double tx, double ty, double td, double& gx, double& gy) {
        double ax = 0, ay = 0, ad = 0, bx = 0, by = 0, bd = 0;
        bool have_a = false, have_b = false;
        for (int s : {1, -1}) {
            double nx, ny, nd;
            if (!have_a && source(y, x + s, nx, ny, nd) && std::abs(nd - td) <= kEdgeJump) {
                ax = s * (nx - tx), ay = s * (ny - ty), ad = s * (nd - td);
                have_a = true;
            }
            if (!have_b && source(y + s, x, nx, ny, nd) && std::abs(nd - td) <= kEdgeJump) {
                bx = s * (nx - tx), by = s * (ny - ty), bd = s * (nd - td);
                have_b = true;
            }
        }
        if (!have_a || !have_b) return false;
        const double det = ax * by - bx * ay;
        if (std::abs(det) < 1e-9) return false;
        // [gx gy] * [[ax bx], [ay by]] = [ad bd]
        gx = (ad * by - bd * ay) / det;
        gy = (bd * ax - ad * bx) / det;
        return true;
    };

    std::vector<std::uint64_t> zbuf(static_cast<std::size_t>(h) * w, 0);

    auto splat_row = [&](int y, bool atomic) {
        for (int x = 0; x < w; ++x) {
            double tx, ty, td;
            if (!source(y, x, tx, ty, td)) continue;
            const double X = std::floor(tx + 0.5);
            const double Y = std::floor(ty + 0.5);
            if (X < 0 || Y < 0 || X > w - 1 || Y > h - 1) continue;
            double value = td;
            double gx, gy;
            if (opts.first_order_correction && target_gradient(y, x, tx, ty, td, gx, gy)) {
                value += gx * (X - tx) + gy * (Y - ty);
            }
            if (!(value > 0.0)) continue;
            const std::uint64_t bits = std::bit_cast<std::uint64_t>(value);
            auto& slot = zbuf[static_cast<std::size_t>(Y) * w + static_cast<std::size_t>(X)];
            if (atomic) {
                // Positive doubles order like their bit patterns.
                std::atomic_ref<std::uint64_t> ref(slot);
                std::uint64_t cur = ref.load(std::memory_order_relaxed);
                while (bits > cur && !ref.compare_exchange_weak(cur, bits, std::memory_order_relaxed)) {
                }
            } else if (bits > slot) {
                slot = bits;
            }
        }
    };

    if (opts.mode == SplatMode::Parallel) {
        parallel_for_chunks(static_cast<std::size_t>(h), [&](std::size_t row) { splat_row(static_cast<int>(row), true); });
    } else {
        for (int y = 0; y < h; ++y) splat_row(y, false);
    }

    ForwardWarpResult out{DisparityMap(h, w), ValidityMask(h, w, 0.0)};
    for (std::size_t i = 0; i < zbuf.size(); ++i) {
        if (zbuf[i] == 0) continue;
        out.disparity.values()[i] = std::bit_cast<double>(zbuf[i]);
        out.valid.values()[i] = 1.0;
    }
    return out;
}

} // namespace senseflow
