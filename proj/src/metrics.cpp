#include "senseflow/metrics.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include "senseflow/error.hpp"

namespace senseflow {

namespace {

// Pairwise summation keeps reductions order-fixed and accurate.
double pairwise_sum(const double* v, std::size_t n)
{
    if (n <= 32) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += v[i];
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(v, half) + pairwise_sum(v + half, n - half);
}

struct PixelErrors {
    std::vector<double> err;
    std::vector<double> outlier;
    std::vector<int> region; // 1 fg, 0 bg
};

template <class ErrFn>
PixelErrors collect(const DenseMap& pred, const DenseMap& gt, const ValidityMask& valid,
                    const ValidityMask* foreground, ErrFn err_fn, const char* what)
{
    if (!pred.same_shape(gt)) throw ShapeError(std::string(what) + ": prediction and ground truth differ in shape");
    require_same_grid(pred, valid, what);
    if (foreground != nullptr) require_same_grid(pred, *foreground, what);
    PixelErrors e;
    for (std::size_t p = 0; p < pred.pixels(); ++p) {
        if (valid.values()[p] == 0.0) continue;
        double gt_mag = 0.0;
        const double err = err_fn(p, gt_mag);
        e.err.push_back(err);
        e.outlier.push_back(is_outlier(err, gt_mag) ? 1.0 : 0.0);
        e.region.push_back(foreground != nullptr && foreground->values()[p] != 0.0 ? 1 : 0);
    }
    if (e.err.empty()) throw DomainError(std::string(what) + ": no valid pixel");
    return e;
}

RegionStats stats(const PixelErrors& e, int region)
{
    std::vector<double> err, out;
    for (std::size_t i = 0; i < e.err.size(); ++i) {
        if (region >= 0 && e.region[i] != region) continue;
        err.push_back(e.err[i]);
        out.push_back(e.outlier[i]);
    }
    RegionStats s;
    s.evaluated = err.size();
    if (s.evaluated == 0) return s;
    s.epe = pairwise_sum(err.data(), err.size()) / static_cast<double>(err.size());
    s.outlier_rate = pairwise_sum(out.data(), out.size()) / static_cast<double>(out.size());
    return s;
}

PixelErrors flow_errors(const FlowField& pred, const FlowField& gt, const ValidityMask& valid,
                        const ValidityMask* fg)
{
    return collect(pred, gt, valid, fg, [&](std::size_t p, double& mag) {
        const double gu = gt.values()[2 * p];
        const double gv = gt.values()[2 * p + 1];
        mag = std::hypot(gu, gv);
        return std::hypot(pred.values()[2 * p] - gu, pred.values()[2 * p + 1] - gv);
    }, "flow metrics");
}

PixelErrors disparity_errors(const DisparityMap& pred, const DisparityMap& gt, const ValidityMask& valid,
                             const ValidityMask* fg)
{
    return collect(pred, gt, valid, fg, [&](std::size_t p, double& mag) {
        mag = std::abs(gt.values()[p]);
        return std::abs(pred.values()[p] - gt.values()[p]);
    }, "disparity metrics");
}

MetricReport make_report(const PixelErrors& e, const ValidityMask& valid, const ValidityMask* fg)
{
    const RegionStats all = stats(e, -1);
    MetricReport r;
    r.epe = all.epe;
    r.outlier_rate = all.outlier_rate;
    r.evaluated = all.evaluated;
    r.valid = valid.count();
    if (fg != nullptr) {
        r.foreground = stats(e, 1);
        r.background = stats(e, 0);
    }
    return r;
}

ValidityMask flags_from(const PixelErrors& e, const ValidityMask& valid)
{
    ValidityMask flags(valid.height(), valid.width(), 0.0);
    std::size_t k = 0;
    for (std::size_t p = 0; p < valid.pixels(); ++p) {
        if (valid.values()[p] == 0.0) continue;
        flags.values()[p] = e.outlier[k++];
    }
    return flags;
}

} // namespace

std::string MetricReport::csv_header()
{
    return "label,epe,outlier_rate,evaluated,valid,fg_epe,fg_outlier_rate,fg_evaluated,bg_epe,bg_outlier_rate,"
           "bg_evaluated";
}

std::string MetricReport::csv_row(const std::string& label) const
{
    std::ostringstream os;
    os.precision(10);
    os << label << ',' << epe << ',' << outlier_rate << ',' << evaluated << ',' << valid;
    for (const auto& region : {foreground, background}) {
        if (region) {
            os << ',' << region->epe << ',' << region->outlier_rate << ',' << region->evaluated;
        } else {
            os << ",,,";
        }
    }
    return os.str();
}

double flow_epe(const FlowField& pred, const FlowField& gt, const ValidityMask& valid)
{
    return stats(flow_errors(pred, gt, valid, nullptr), -1).epe;
}

double flow_outlier_rate(const FlowField& pred, const FlowField& gt, const ValidityMask& valid)
{
    return stats(flow_errors(pred, gt, valid, nullptr), -1).outlier_rate;
}

double disparity_outlier_rate(const DisparityMap& pred, const DisparityMap& gt, const ValidityMask& valid)
{
    return stats(disparity_errors(pred, gt, valid, nullptr), -1).outlier_rate;
}

ValidityMask flow_outlier_flags(const FlowField& pred, const FlowField& gt, const ValidityMask& valid)
{
    return flags_from(flow_errors(pred, gt, valid, nullptr), valid);
}

ValidityMask disparity_outlier_flags(const DisparityMap& pred, const DisparityMap& gt, const ValidityMask& valid)
{
    return flags_from(disparity_errors(pred, gt, valid, nullptr), valid);
}

double scene_flow_outlier_rate(const ValidityMask& d1, const ValidityMask& d2, const ValidityMask& fl,
                               const ValidityMask& valid)
{
    require_same_grid(d1, valid, "scene_flow_outlier_rate");
    require_same_grid(d2, valid, "scene_flow_outlier_rate");
    require_same_grid(fl, valid, "scene_flow_outlier_rate");
    std::size_t n = 0;
    std::size_t bad = 0;
    for (std::size_t p = 0; p < valid.pixels(); ++p) {
        if (valid.values()[p] == 0.0) continue;
        ++n;
        if (d1.values()[p] != 0.0 || d2.values()[p] != 0.0 || fl.values()[p] != 0.0) ++bad;
    }
    return n == 0 ? 0.0 : static_cast<double>(bad) / static_cast<double>(n);
}

MetricReport evaluate_flow(const FlowField& pred, const FlowField& gt, const ValidityMask& valid,
                           const ValidityMask* foreground)
{
    return make_report(flow_errors(pred, gt, valid, foreground), valid, foreground);
}

MetricReport evaluate_disparity(const DisparityMap& pred, const DisparityMap& gt, const ValidityMask& valid,
                                const ValidityMask* foreground)
{
    return make_report(disparity_errors(pred, gt, valid, foreground), valid, foreground);
}

} // namespace senseflow
