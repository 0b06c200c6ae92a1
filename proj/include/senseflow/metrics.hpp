#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "senseflow/dense_map.hpp"

namespace senseflow {

// KITTI outlier rule: error above 3 px and above 5% of the true magnitude.
inline constexpr double kOutlierAbsPx = 3.0;
inline constexpr double kOutlierRel = 0.05;

inline bool is_outlier(double err, double gt_magnitude)
{
    return err > kOutlierAbsPx && err > kOutlierRel * gt_magnitude;
}

struct RegionStats {
    double epe = 0.0;
    double outlier_rate = 0.0;
    std::size_t evaluated = 0;
};

struct MetricReport {
    double epe = 0.0;
    double outlier_rate = 0.0;
    std::size_t evaluated = 0;
    std::size_t valid = 0;
    std::optional<RegionStats> foreground;
    std::optional<RegionStats> background;

    static std::string csv_header();
    std::string csv_row(const std::string& label) const;
};

double flow_epe(const FlowField& pred, const FlowField& gt, const ValidityMask& valid);
double flow_outlier_rate(const FlowField& pred, const FlowField& gt, const ValidityMask& valid);
double disparity_outlier_rate(const DisparityMap& pred, const DisparityMap& gt, const ValidityMask& valid);

// Per-pixel outlier flags (1 = outlier, 0 otherwise or invalid).
ValidityMask flow_outlier_flags(const FlowField& pred, const FlowField& gt, const ValidityMask& valid);
ValidityMask disparity_outlier_flags(const DisparityMap& pred, const DisparityMap& gt, const ValidityMask& valid);

// Fraction of valid pixels flagged in any of the three maps.
double scene_flow_outlier_rate(const ValidityMask& d1, const ValidityMask& d2, const ValidityMask& fl,
                               const ValidityMask& valid);

// Full reports; `foreground` splits the valid set into fg (1) and bg (0).
MetricReport evaluate_flow(const FlowField& pred, const FlowField& gt, const ValidityMask& valid,
                           const ValidityMask* foreground = nullptr);
MetricReport evaluate_disparity(const DisparityMap& pred, const DisparityMap& gt, const ValidityMask& valid,
                                const ValidityMask* foreground = nullptr);

} // namespace senseflow
