#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace senseflow {

// H x W x C grid of doubles, row-major with interleaved channels.
class DenseMap {
public:
    DenseMap() = default;
    DenseMap(int height, int width, int channels, double fill = 0.0);
    DenseMap(int height, int width, int channels, std::vector<double> data);

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    std::size_t pixels() const { return static_cast<std::size_t>(height_) * width_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
    double at(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

    std::size_t index(int y, int x, int c = 0) const
    {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    // Channel vector of one pixel.
    std::span<double> pixel(int y, int x) { return {data_.data() + index(y, x), static_cast<std::size_t>(channels_)}; }
    std::span<const double> pixel(int y, int x) const
    {
        return {data_.data() + index(y, x), static_cast<std::size_t>(channels_)};
    }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_grid(const DenseMap& other) const { return height_ == other.height_ && width_ == other.width_; }
    bool same_shape(const DenseMap& other) const { return same_grid(other) && channels_ == other.channels_; }
    bool all_finite() const;

    bool operator==(const DenseMap& other) const = default;

private:
    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

// Throws ShapeError naming `what` unless a and b share height and width.
void require_same_grid(const DenseMap& a, const DenseMap& b, const std::string& what);
void require_channels(const DenseMap& m, int channels, const std::string& what);

// Task-typed maps. Each constructor checks the channel count and any value
// invariant of the task; the underlying DenseMap stays accessible.

// (u, v) per pixel, u rightward, v downward.
class FlowField : public DenseMap {
public:
    FlowField() = default;
    FlowField(int height, int width, double u = 0.0, double v = 0.0);
    explicit FlowField(DenseMap m);
};

// Left-view disparity: left (x, y) corresponds to right (x - d, y).
// Entries <= 0 mean "no valid disparity".
class DisparityMap : public DenseMap {
public:
    DisparityMap() = default;
    DisparityMap(int height, int width, double fill = 0.0);
    explicit DisparityMap(DenseMap m);
};

// Soft occlusion in [0, 1]; 1 is fully occluded.
class OcclusionMask : public DenseMap {
public:
    OcclusionMask() = default;
    OcclusionMask(int height, int width, double fill = 0.0);
    explicit OcclusionMask(DenseMap m);
};

// Binary validity; 1 = ground truth present / in bounds.
class ValidityMask : public DenseMap {
public:
    ValidityMask() = default;
    ValidityMask(int height, int width, double fill = 1.0);
    explicit ValidityMask(DenseMap m);

    bool valid(int y, int x) const { return at(y, x) != 0.0; }
    std::size_t count() const;
};

// Per-pixel categorical posterior; channels sum to one.
class SegPosterior : public DenseMap {
public:
    SegPosterior() = default;
    explicit SegPosterior(DenseMap m);
};

} // namespace senseflow
