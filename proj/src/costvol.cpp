#include "senseflow/costvol.hpp"

#include <string>

#include "senseflow/error.hpp"
#include "senseflow/parallel.hpp"
#include "senseflow/simd/kernels.hpp"

namespace senseflow {

namespace {

void check_inputs(const DenseMap& a, const DenseMap& b, int radius, const char* what)
{
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": feature maps differ in shape");
    }
    if (radius < 0) throw DomainError(std::string(what) + ": negative search radius");
}

CostVolume correlate(const DenseMap& f1, const DenseMap& f2, int k, SearchDims dims)
{
    const int h = f1.height();
    const int w = f1.width();
    const int c = f1.channels();
    const int side = 2 * k + 1;
    const int dy_lo = dims == SearchDims::TwoD ? -k : 0;
    const int dy_hi = dims == SearchDims::TwoD ? k : 0;
    const double inv_c = 1.0 / c;
    const auto& kern = simd::kernels();

    CostVolume out{DenseMap(h, w, CostVolume::channel_count(k, dims)), k, dims};
    parallel_for_chunks(static_cast<std::size_t>(h), [&](std::size_t row) {
        const int y = static_cast<int>(row);
        for (int x = 0; x < w; ++x) {
            const double* a = &f1.values()[f1.index(y, x)];
            double* dst = &out.scores.at(y, x);
            for (int dy = dy_lo; dy <= dy_hi; ++dy) {
                const int qy = y + dy;
                for (int dx = -k; dx <= k; ++dx) {
                    const int qx = x + dx;
                    const int ch = (dy - dy_lo) * side + (dx + k);
                    if (qy < 0 || qy >= h || qx < 0 || qx >= w) {
                        dst[ch] = 0.0;
                        continue;
                    }
                    dst[ch] = kern.dot(a, &f2.values()[f2.index(qy, qx)], static_cast<std::size_t>(c)) * inv_c;
                }
            }
        }
    });
    return out;
}

} // namespace

int CostVolume::channel_count(int radius, SearchDims dims)
{
    const int side = 2 * radius + 1;
    return dims == SearchDims::TwoD ? side * side : side;
}

CostVolume correlation_2d(const DenseMap& f1, const DenseMap& f2, int radius)
{
    check_inputs(f1, f2, radius, "correlation_2d");
    return correlate(f1, f2, radius, SearchDims::TwoD);
}

CostVolume correlation_1d(const DenseMap& left, const DenseMap& right, int radius)
{
    check_inputs(left, right, radius, "correlation_1d");
    return correlate(left, right, radius, SearchDims::OneD);
}

} // namespace senseflow
