#include "senseflow/pyramid.hpp"

#include <string>

#include "senseflow/error.hpp"

namespace senseflow {

namespace {

void check_levels(const DenseMap& m, int levels)
{
    if (levels < 1) throw DomainError("pyramid needs at least one level");
    int h = m.height();
    int w = m.width();
    if (h < 1 || w < 1) throw DomainError("pyramid of an empty map");
    for (int l = 1; l < levels; ++l) {
        if (h < 2 && w < 2) {
            throw DomainError("pyramid: " + std::to_string(levels) + " levels too deep for " +
                              std::to_string(m.height()) + "x" + std::to_string(m.width()));
        }
        h = (h + 1) / 2;
        w = (w + 1) / 2;
    }
}

double level_scale(MapKind kind) { return kind == MapKind::Motion ? 0.5 : 1.0; }

} // namespace

DenseMap downsample(const DenseMap& m, MapKind kind)
{
    const int h = (m.height() + 1) / 2;
    const int w = (m.width() + 1) / 2;
    const int c = m.channels();
    const double s = level_scale(kind);
    DenseMap out(h, w, c);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int k = 0; k < c; ++k) {
                double sum = 0.0;
                int n = 0;
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const int sy = 2 * y + dy;
                        const int sx = 2 * x + dx;
                        if (sy < m.height() && sx < m.width()) {
                            sum += m.at(sy, sx, k);
                            ++n;
                        }
                    }
                }
                out.at(y, x, k) = s * sum / n;
            }
        }
    }
    return out;
}

std::vector<DenseMap> build_pyramid(const DenseMap& m, int levels, MapKind kind)
{
    check_levels(m, levels);
    std::vector<DenseMap> out;
    out.reserve(levels);
    out.push_back(m);
    for (int l = 1; l < levels; ++l) out.push_back(downsample(out.back(), kind));
    return out;
}

MaskedPyramid build_masked_pyramid(const DenseMap& m, const ValidityMask& valid, int levels, MapKind kind)
{
    require_same_grid(m, valid, "masked pyramid");
    check_levels(m, levels);
    MaskedPyramid out;
    out.maps.push_back(m);
    out.valid.push_back(valid);
    const double s = level_scale(kind);
    for (int l = 1; l < levels; ++l) {
        const DenseMap& src = out.maps.back();
        const ValidityMask& sv = out.valid.back();
        const int h = (src.height() + 1) / 2;
        const int w = (src.width() + 1) / 2;
        const int c = src.channels();
        DenseMap dst(h, w, c);
        ValidityMask dv(h, w, 0.0);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                int n = 0;
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const int sy = 2 * y + dy;
                        const int sx = 2 * x + dx;
                        if (sy >= src.height() || sx >= src.width() || !sv.valid(sy, sx)) continue;
                        for (int k = 0; k < c; ++k) dst.at(y, x, k) += src.at(sy, sx, k);
                        ++n;
                    }
                }
                if (n == 0) continue;
                for (int k = 0; k < c; ++k) dst.at(y, x, k) *= s / n;
                dv.at(y, x) = 1.0;
            }
        }
        out.maps.push_back(std::move(dst));
        out.valid.push_back(std::move(dv));
    }
    return out;
}

} // namespace senseflow
