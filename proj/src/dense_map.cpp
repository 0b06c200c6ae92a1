#include "senseflow/dense_map.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "senseflow/error.hpp"

namespace senseflow {

namespace {

void check_dims(int height, int width, int channels)
{
    if (height < 0 || width < 0 || channels < 1) {
        throw ShapeError("invalid map dimensions " + std::to_string(height) + "x" + std::to_string(width) + "x" +
                         std::to_string(channels));
    }
}

} // namespace

DenseMap::DenseMap(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels)
{
    check_dims(height, width, channels);
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

DenseMap::DenseMap(int height, int width, int channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data))
{
    check_dims(height, width, channels);
    if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
        throw ShapeError("data length " + std::to_string(data_.size()) + " does not match " + std::to_string(height) +
                         "x" + std::to_string(width) + "x" + std::to_string(channels));
    }
}

bool DenseMap::all_finite() const
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_same_grid(const DenseMap& a, const DenseMap& b, const std::string& what)
{
    if (!a.same_grid(b)) {
        throw ShapeError(what + ": grid mismatch " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                         " vs " + std::to_string(b.height()) + "x" + std::to_string(b.width()));
    }
}

void require_channels(const DenseMap& m, int channels, const std::string& what)
{
    if (m.channels() != channels) {
        throw ShapeError(what + ": expected " + std::to_string(channels) + " channel(s), got " +
                         std::to_string(m.channels()));
    }
}

FlowField::FlowField(int height, int width, double u, double v) : DenseMap(height, width, 2)
{
    auto vals = values();
    for (std::size_t i = 0; i < vals.size(); i += 2) {
        vals[i] = u;
        vals[i + 1] = v;
    }
}

FlowField::FlowField(DenseMap m) : DenseMap(std::move(m))
{
    require_channels(*this, 2, "flow field");
}

DisparityMap::DisparityMap(int height, int width, double fill) : DenseMap(height, width, 1, fill) {}

DisparityMap::DisparityMap(DenseMap m) : DenseMap(std::move(m))
{
    require_channels(*this, 1, "disparity map");
}

OcclusionMask::OcclusionMask(int height, int width, double fill) : DenseMap(height, width, 1, fill)
{
    if (fill < 0.0 || fill > 1.0) throw DomainError("occlusion value outside [0, 1]");
}

OcclusionMask::OcclusionMask(DenseMap m) : DenseMap(std::move(m))
{
    require_channels(*this, 1, "occlusion mask");
    for (double v : values()) {
        if (!(v >= 0.0 && v <= 1.0)) throw DomainError("occlusion value outside [0, 1]");
    }
}

ValidityMask::ValidityMask(int height, int width, double fill) : DenseMap(height, width, 1, fill != 0.0 ? 1.0 : 0.0)
{
}

ValidityMask::ValidityMask(DenseMap m) : DenseMap(std::move(m))
{
    require_channels(*this, 1, "validity mask");
    for (double v : values()) {
        if (v != 0.0 && v != 1.0) throw DomainError("validity mask must be binary");
    }
}

std::size_t ValidityMask::count() const
{
    return static_cast<std::size_t>(std::count(data().begin(), data().end(), 1.0));
}

SegPosterior::SegPosterior(DenseMap m) : DenseMap(std::move(m))
{
    const int c = channels();
    for (int y = 0; y < height(); ++y) {
        for (int x = 0; x < width(); ++x) {
            const auto p = pixel(y, x);
            if (std::any_of(p.begin(), p.end(), [](double v) { return !(v >= 0.0); })) {
                throw DomainError("posterior entries must be nonnegative");
            }
            const double s = std::accumulate(p.begin(), p.end(), 0.0);
            if (std::abs(s - 1.0) > 1e-5) {
                throw DomainError("posterior at (" + std::to_string(y) + "," + std::to_string(x) + ") sums to " +
                                  std::to_string(s) + " over " + std::to_string(c) + " channels");
            }
        }
    }
}

} // namespace senseflow
