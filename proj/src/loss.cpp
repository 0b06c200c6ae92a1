#include "senseflow/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "json.hpp"

#include "senseflow/error.hpp"
#include "senseflow/simd/kernels.hpp"
#include "senseflow/warp.hpp"

namespace senseflow {

namespace {

constexpr double kProbFloor = 1e-7;

double smooth_l1(double r)
{
    const double a = std::abs(r);
    return a < 1.0 ? 0.5 * r * r : a - 0.5;
}

ValidityMask all_valid(const DenseMap& m) { return ValidityMask(m.height(), m.width(), 1.0); }

void check_pyramid_depth(std::span<const DenseMap> pyramid, const LossWeights& w, const char* what)
{
    if (pyramid.empty()) throw DomainError(std::string(what) + ": empty prediction pyramid");
    if (pyramid.size() > w.omega.size()) {
        throw DomainError(std::string(what) + ": " + std::to_string(pyramid.size()) + " levels but only " +
                          std::to_string(w.omega.size()) + " level weights");
    }
}

WarpResult warp_by_field(const DenseMap& other, const DenseMap& field, FieldMode mode)
{
    if (mode == FieldMode::Flow) return inverse_warp_flow(other, FlowField(field));
    return inverse_warp_disparity(other, DisparityMap(field));
}

double consistency(const DenseMap& ref, const DenseMap& other, const DenseMap& field, const OcclusionMask& occ,
                   FieldMode mode, ConsistencyGradient* grad, bool normalize, const char* what)
{
    if (!ref.same_shape(other)) throw ShapeError(std::string(what) + ": reference and source differ in shape");
    require_same_grid(ref, field, what);
    require_same_grid(ref, occ, what);

    const WarpResult warped = warp_by_field(other, field, mode);
    const int h = ref.height();
    const int w = ref.width();
    const int c = ref.channels();
    const double scale = normalize && ref.pixels() > 0 ? 1.0 / static_cast<double>(ref.pixels()) : 1.0;

    std::vector<double> weight(ref.size());
    for (std::size_t p = 0; p < ref.pixels(); ++p) {
        const double wp = (1.0 - occ.values()[p]) * warped.inbounds.values()[p];
        std::fill_n(weight.begin() + static_cast<std::ptrdiff_t>(p * c), c, wp);
    }
    const double loss =
        simd::kernels().weighted_abs_diff(ref.values().data(), warped.warped.values().data(), weight.data(),
                                          ref.size()) *
        scale;

    if (grad != nullptr) {
        grad->field = DenseMap(h, w, field.channels());
        grad->occlusion = DenseMap(h, w, 1);
        std::vector<double> ddx(c), ddy(c);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double inb = warped.inbounds.at(y, x);
                double abs_sum = 0.0;
                double gx = 0.0;
                double gy = 0.0;
                double sx = x, sy = y;
                if (mode == FieldMode::Flow) {
                    sx += field.at(y, x, 0);
                    sy += field.at(y, x, 1);
                } else {
                    sx -= field.at(y, x);
                }
                sample_bilinear_gradient(other, sx, sy, ddx.data(), ddy.data());
                for (int k = 0; k < c; ++k) {
                    const double e = ref.at(y, x, k) - warped.warped.at(y, x, k);
                    abs_sum += std::abs(e);
                    // d|e|/dW = -sign(e)
                    const double s = e > 0.0 ? -1.0 : (e < 0.0 ? 1.0 : 0.0);
                    gx += s * ddx[k];
                    gy += s * ddy[k];
                }
                const double wp = (1.0 - occ.at(y, x)) * inb * scale;
                if (mode == FieldMode::Flow) {
                    grad->field.at(y, x, 0) = wp * gx;
                    grad->field.at(y, x, 1) = wp * gy;
                } else {
                    grad->field.at(y, x) = -wp * gx;
                }
                grad->occlusion.at(y, x) = -inb * abs_sum * scale;
            }
        }
    }
    return loss;
}

// Separable Gaussian filter in "valid" mode: output is (h - n + 1) x (w - n + 1).
std::vector<double> filter_valid(const std::vector<double>& plane, int h, int w, const std::vector<double>& taps)
{
    const auto& kern = simd::kernels();
    const int n = static_cast<int>(taps.size());
    const int oh = h - n + 1;
    const int ow = w - n + 1;
    // rows, written transposed so the column pass is also a row pass
    std::vector<double> row_out(static_cast<std::size_t>(ow));
    std::vector<double> tmp_t(static_cast<std::size_t>(ow) * h);
    for (int y = 0; y < h; ++y) {
        kern.correlate_row(&plane[static_cast<std::size_t>(y) * w], row_out.data(), ow, taps.data(), n);
        for (int x = 0; x < ow; ++x) tmp_t[static_cast<std::size_t>(x) * h + y] = row_out[x];
    }
    std::vector<double> col_out(static_cast<std::size_t>(oh));
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int x = 0; x < ow; ++x) {
        kern.correlate_row(&tmp_t[static_cast<std::size_t>(x) * h], col_out.data(), oh, taps.data(), n);
        for (int y = 0; y < oh; ++y) out[static_cast<std::size_t>(y) * ow + x] = col_out[y];
    }
    return out;
}

std::vector<double> gaussian_taps(int size, double sigma)
{
    std::vector<double> taps(size);
    const double mid = 0.5 * (size - 1);
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        taps[i] = std::exp(-(i - mid) * (i - mid) / (2.0 * sigma * sigma));
        sum += taps[i];
    }
    for (double& t : taps) t /= sum;
    return taps;
}

} // namespace

void LossWeights::validate() const
{
    const double scalars[] = {alpha_O, alpha_Sd, alpha_PC, alpha_SC, beta_F, beta_D, pretrain_disp_scale};
    for (double v : scalars) {
        if (!(v >= 0.0)) throw DomainError("loss weights must be nonnegative");
    }
    for (double v : omega) {
        if (!(v >= 0.0)) throw DomainError("level weights must be nonnegative");
    }
    if ((gamma_F && !(*gamma_F >= 0.0)) || (gamma_D && !(*gamma_D >= 0.0))) {
        throw DomainError("SSIM weights must be nonnegative");
    }
    if (!(T > 0.0)) throw DomainError("distillation temperature must be positive");
}

double robust_penalty(std::span<const double> residual, Penalty kind)
{
    double s = 0.0;
    switch (kind) {
    case Penalty::L2Norm:
    case Penalty::L2Squared:
        for (double r : residual) s += r * r;
        return kind == Penalty::L2Norm ? std::sqrt(s) : s;
    case Penalty::SmoothL1:
        for (double r : residual) s += smooth_l1(r);
        return s;
    }
    return s;
}

double multiscale_task_loss(std::span<const DenseMap> pred_pyramid, const DenseMap& gt, const ValidityMask& valid,
                            const LossWeights& weights, Penalty kind, MapKind map_kind)
{
    check_pyramid_depth(pred_pyramid, weights, "multiscale_task_loss");
    const MaskedPyramid gts = build_masked_pyramid(gt, valid, static_cast<int>(pred_pyramid.size()), map_kind);
    const int c = gt.channels();
    std::vector<double> r(c);
    double total = 0.0;
    std::size_t evaluated = 0;
    for (std::size_t l = 0; l < pred_pyramid.size(); ++l) {
        const DenseMap& pred = pred_pyramid[l];
        const DenseMap& g = gts.maps[l];
        if (!pred.same_shape(g)) {
            throw ShapeError("multiscale_task_loss: level " + std::to_string(l) + " prediction is " +
                             std::to_string(pred.height()) + "x" + std::to_string(pred.width()) + "x" +
                             std::to_string(pred.channels()) + ", expected " + std::to_string(g.height()) + "x" +
                             std::to_string(g.width()) + "x" + std::to_string(g.channels()));
        }
        double level = 0.0;
        for (int y = 0; y < g.height(); ++y) {
            for (int x = 0; x < g.width(); ++x) {
                if (!gts.valid[l].valid(y, x)) continue;
                for (int k = 0; k < c; ++k) r[k] = pred.at(y, x, k) - g.at(y, x, k);
                level += robust_penalty(r, kind);
                ++evaluated;
            }
        }
        total += weights.omega[l] * level;
    }
    if (evaluated == 0) throw DomainError("multiscale_task_loss: no valid pixel at any level");
    return total;
}

double occlusion_bce(const OcclusionMask& pred, const OcclusionMask& gt, const ValidityMask& valid)
{
    require_same_grid(pred, gt, "occlusion_bce");
    require_same_grid(pred, valid, "occlusion_bce");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (valid.values()[i] == 0.0) continue;
        const double p = std::clamp(pred.values()[i], kProbFloor, 1.0 - kProbFloor);
        const double g = gt.values()[i];
        s -= g * std::log(p) + (1.0 - g) * std::log(1.0 - p);
    }
    return s;
}

double multiscale_occlusion_bce(std::span<const DenseMap> pred_pyramid, const OcclusionMask& gt,
                                const ValidityMask& valid, const LossWeights& weights)
{
    check_pyramid_depth(pred_pyramid, weights, "multiscale_occlusion_bce");
    const MaskedPyramid gts = build_masked_pyramid(gt, valid, static_cast<int>(pred_pyramid.size()));
    double total = 0.0;
    for (std::size_t l = 0; l < pred_pyramid.size(); ++l) {
        total += weights.omega[l] * occlusion_bce(OcclusionMask(pred_pyramid[l]), OcclusionMask(gts.maps[l]),
                                                  gts.valid[l]);
    }
    return total;
}

SegPosterior soften_logits(const DenseMap& logits, double T, bool negate_logits)
{
    if (!(T > 0.0)) throw DomainError("soften_logits: temperature must be positive");
    const double sign = negate_logits ? -1.0 : 1.0;
    DenseMap out(logits.height(), logits.width(), logits.channels());
    for (int y = 0; y < logits.height(); ++y) {
        for (int x = 0; x < logits.width(); ++x) {
            const auto z = logits.pixel(y, x);
            auto o = out.pixel(y, x);
            double zmax = -std::numeric_limits<double>::infinity();
            for (double v : z) zmax = std::max(zmax, sign * v / T);
            double sum = 0.0;
            for (std::size_t i = 0; i < z.size(); ++i) sum += (o[i] = std::exp(sign * z[i] / T - zmax));
            for (double& v : o) v /= sum;
        }
    }
    return SegPosterior(std::move(out));
}

double seg_distillation(const SegPosterior& student, const DenseMap& teacher_logits, double T,
                        const ValidityMask& valid, bool negate_logits)
{
    require_same_grid(student, teacher_logits, "seg_distillation");
    require_same_grid(student, valid, "seg_distillation");
    if (student.channels() != teacher_logits.channels()) {
        throw ShapeError("seg_distillation: student has " + std::to_string(student.channels()) +
                         " categories, teacher " + std::to_string(teacher_logits.channels()));
    }
    const SegPosterior teacher = soften_logits(teacher_logits, T, negate_logits);
    double s = 0.0;
    for (int y = 0; y < student.height(); ++y) {
        for (int x = 0; x < student.width(); ++x) {
            if (!valid.valid(y, x)) continue;
            const auto t = teacher.pixel(y, x);
            const auto p = student.pixel(y, x);
            for (std::size_t i = 0; i < t.size(); ++i) s -= t[i] * std::log(std::max(p[i], kProbFloor));
        }
    }
    return T * s;
}

double occlusion_distillation(std::span<const DenseMap> pred_pyramid, const OcclusionMask& pseudo_gt,
                              const LossWeights& weights)
{
    return multiscale_task_loss(pred_pyramid, pseudo_gt, all_valid(pseudo_gt), weights, Penalty::SmoothL1,
                                MapKind::Intensity);
}

double photometric_consistency(const DenseMap& ref, const DenseMap& other, const DenseMap& field,
                               const OcclusionMask& occ, FieldMode mode, ConsistencyGradient* grad,
                               bool per_pixel_normalize)
{
    return consistency(ref, other, field, occ, mode, grad, per_pixel_normalize, "photometric_consistency");
}

double semantic_consistency(const SegPosterior& ref, const SegPosterior& other, const DenseMap& field,
                            const OcclusionMask& occ, FieldMode mode, ConsistencyGradient* grad,
                            bool per_pixel_normalize)
{
    return consistency(ref, other, field, occ, mode, grad, per_pixel_normalize, "semantic_consistency");
}

double ssim_scalar(const DenseMap& a, const DenseMap& b)
{
    constexpr int kWindow = 11;
    constexpr double kSigma = 1.5;
    constexpr double C1 = 0.01 * 0.01;
    constexpr double C2 = 0.03 * 0.03;
    if (!a.same_shape(b)) throw ShapeError("ssim_scalar: inputs differ in shape");
    if (a.height() < kWindow || a.width() < kWindow) {
        throw DomainError("ssim_scalar: image " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                          " smaller than the 11x11 window");
    }
    static const std::vector<double> taps = gaussian_taps(kWindow, kSigma);
    const int h = a.height();
    const int w = a.width();
    const std::size_t n = a.pixels();
    std::vector<double> pa(n), pb(n), paa(n), pbb(n), pab(n);
    double total = 0.0;
    std::size_t count = 0;
    for (int k = 0; k < a.channels(); ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            pa[i] = a.values()[i * a.channels() + k];
            pb[i] = b.values()[i * b.channels() + k];
            paa[i] = pa[i] * pa[i];
            pbb[i] = pb[i] * pb[i];
            pab[i] = pa[i] * pb[i];
        }
        const auto mu_a = filter_valid(pa, h, w, taps);
        const auto mu_b = filter_valid(pb, h, w, taps);
        const auto e_aa = filter_valid(paa, h, w, taps);
        const auto e_bb = filter_valid(pbb, h, w, taps);
        const auto e_ab = filter_valid(pab, h, w, taps);
        for (std::size_t i = 0; i < mu_a.size(); ++i) {
            const double ma = mu_a[i];
            const double mb = mu_b[i];
            const double va = e_aa[i] - ma * ma;
            const double vb = e_bb[i] - mb * mb;
            const double cov = e_ab[i] - ma * mb;
            total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
        }
        count += mu_a.size();
    }
    return total / static_cast<double>(count);
}

DenseMap occlusion_composite(const DenseMap& ref, const DenseMap& warped, const OcclusionMask& occ)
{
    if (!ref.same_shape(warped)) throw ShapeError("occlusion_composite: reference and warped differ in shape");
    require_same_grid(ref, occ, "occlusion_composite");
    DenseMap out(ref.height(), ref.width(), ref.channels());
    const int c = ref.channels();
    for (std::size_t p = 0; p < ref.pixels(); ++p) {
        const double o = occ.values()[p];
        for (int k = 0; k < c; ++k) {
            const std::size_t i = p * c + k;
            out.values()[i] = ref.values()[i] * o + warped.values()[i] * (1.0 - o);
        }
    }
    return out;
}

double ssim_loss(const SsimBranch& flow_branch, const SsimBranch& disp_branch, const LossWeights& weights)
{
    auto branch = [](const SsimBranch& b, FieldMode mode) {
        const WarpResult warped = warp_by_field(*b.other, *b.field, mode);
        return 1.0 - ssim_scalar(*b.ref, occlusion_composite(*b.ref, warped.warped, *b.occ));
    };
    double s = 0.0;
    if (disp_branch.ref != nullptr) {
        s += weights.gamma_D_for(disp_branch.ref->height(), disp_branch.ref->width()) *
             branch(disp_branch, FieldMode::Disparity);
    }
    if (flow_branch.ref != nullptr) {
        s += weights.gamma_F_for(flow_branch.ref->height(), flow_branch.ref->width()) *
             branch(flow_branch, FieldMode::Flow);
    }
    return s;
}

double occlusion_regularization(const OcclusionMask* occ_flow, const OcclusionMask* occ_disp,
                                const LossWeights& weights)
{
    auto sum = [&](const OcclusionMask* m) {
        if (m == nullptr) return 0.0;
        double s = 0.0;
        for (double v : m->values()) s += v;
        return weights.per_pixel_normalize && m->pixels() > 0 ? s / static_cast<double>(m->pixels()) : s;
    };
    return weights.beta_D * sum(occ_disp) + weights.beta_F * sum(occ_flow);
}

// ---------------------------------------------------------------------------
// LossReport

std::size_t LossReport::slot(const std::string& term)
{
    for (std::size_t i = 0; i < kTermCount; ++i) {
        if (term == kTerms[i]) return i;
    }
    throw Error("unknown loss term: " + term);
}

void LossReport::set(const std::string& term, double value, double weight)
{
    const std::size_t i = slot(term);
    values_[i] = value;
    weights_[i] = weight;
    total_ = recompute_total();
}

std::optional<double> LossReport::value(const std::string& term) const { return values_[slot(term)]; }

double LossReport::weight(const std::string& term) const { return weights_[slot(term)]; }

std::size_t LossReport::present_count() const
{
    return static_cast<std::size_t>(std::count_if(std::begin(values_), std::end(values_),
                                                  [](const auto& v) { return v.has_value(); }));
}

double LossReport::recompute_total() const
{
    double s = 0.0;
    for (std::size_t i = 0; i < kTermCount; ++i) {
        if (values_[i]) s += weights_[i] * *values_[i];
    }
    return s;
}

std::string LossReport::to_csv_header() const
{
    std::string s;
    for (const char* t : kTerms) s += std::string(t) + ",";
    return s + "total";
}

std::string LossReport::to_csv_row() const
{
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < kTermCount; ++i) {
        if (values_[i]) os << *values_[i];
        os << ',';
    }
    os << total_;
    return os.str();
}

std::string LossReport::to_json_line() const
{
    nlohmann::ordered_json j;
    for (std::size_t i = 0; i < kTermCount; ++i) {
        j[kTerms[i]] = values_[i] ? nlohmann::ordered_json(*values_[i]) : nlohmann::ordered_json(nullptr);
    }
    j["total"] = total_;
    return j.dump();
}

// ---------------------------------------------------------------------------
// Totals

namespace {

const ValidityMask& valid_or(const std::optional<ValidityMask>& v, std::optional<ValidityMask>& storage,
                             const DenseMap& like)
{
    if (v) return *v;
    storage = all_valid(like);
    return *storage;
}

struct Branches {
    bool disp = false;
    bool flow = false;
};

// Which self-supervised branches have every input they need.
Branches self_supervised_branches(const LossInputs& in, bool semantic)
{
    Branches b;
    if (semantic) {
        b.disp = in.seg1_left && in.seg1_right && !in.disp_pred.empty() && !in.occ_disp_pred.empty();
        b.flow = in.seg1_left && in.seg2_left && !in.flow_pred.empty() && !in.occ_flow_pred.empty();
    } else {
        b.disp = in.image1_left && in.image1_right && !in.disp_pred.empty() && !in.occ_disp_pred.empty();
        b.flow = in.image1_left && in.image2_left && !in.flow_pred.empty() && !in.occ_flow_pred.empty();
    }
    return b;
}

void add_supervised_task_terms(const LossInputs& in, const LossWeights& w, LossReport& report, double disp_weight)
{
    if (!in.flow_pred.empty() && in.flow_gt) {
        std::optional<ValidityMask> tmp;
        const auto& valid = valid_or(in.flow_valid, tmp, *in.flow_gt);
        report.set("L_F", multiscale_task_loss(in.flow_pred, *in.flow_gt, valid, w, w.flow_penalty, MapKind::Motion),
                   1.0);
    }
    if (!in.disp_pred.empty() && in.disp_gt) {
        std::optional<ValidityMask> tmp;
        const auto& valid = valid_or(in.disp_valid, tmp, *in.disp_gt);
        report.set("L_D", multiscale_task_loss(in.disp_pred, *in.disp_gt, valid, w, w.disp_penalty, MapKind::Motion),
                   disp_weight);
    }
}

} // namespace

LossReport total_semi_supervised(const LossInputs& in, const LossWeights& w)
{
    w.validate();
    LossReport report;
    add_supervised_task_terms(in, w, report, 1.0);

    if (!in.occ_flow_pred.empty() && in.occ_flow_pseudo) {
        report.set("L_OFd", occlusion_distillation(in.occ_flow_pred, *in.occ_flow_pseudo, w), w.alpha_O);
    }
    if (!in.occ_disp_pred.empty() && in.occ_disp_pseudo) {
        report.set("L_ODd", occlusion_distillation(in.occ_disp_pred, *in.occ_disp_pseudo, w), w.alpha_O);
    }
    if (in.seg_student && in.seg_teacher_logits) {
        std::optional<ValidityMask> tmp;
        const auto& valid = valid_or(in.seg_valid, tmp, *in.seg_student);
        report.set("L_Sd",
                   seg_distillation(*in.seg_student, *in.seg_teacher_logits, w.T, valid, w.negate_teacher_logits),
                   w.alpha_Sd);
    }

    std::optional<OcclusionMask> occ_f;
    std::optional<OcclusionMask> occ_d;
    if (!in.occ_flow_pred.empty()) occ_f = OcclusionMask(in.occ_flow_pred.front());
    if (!in.occ_disp_pred.empty()) occ_d = OcclusionMask(in.occ_disp_pred.front());

    const Branches pc = self_supervised_branches(in, false);
    if (pc.disp || pc.flow) {
        double s = 0.0;
        if (pc.disp) {
            s += photometric_consistency(*in.image1_left, *in.image1_right, in.disp_pred.front(), *occ_d,
                                         FieldMode::Disparity, nullptr, w.per_pixel_normalize);
        }
        if (pc.flow) {
            s += photometric_consistency(*in.image1_left, *in.image2_left, in.flow_pred.front(), *occ_f,
                                         FieldMode::Flow, nullptr, w.per_pixel_normalize);
        }
        report.set("L_PC", s, w.alpha_PC);

        SsimBranch fb, db;
        if (pc.flow) fb = {&*in.image1_left, &*in.image2_left, &in.flow_pred.front(), &*occ_f};
        if (pc.disp) db = {&*in.image1_left, &*in.image1_right, &in.disp_pred.front(), &*occ_d};
        report.set("L_SS", ssim_loss(fb, db, w), 1.0);
    }

    const Branches sc = self_supervised_branches(in, true);
    if (sc.disp || sc.flow) {
        double s = 0.0;
        if (sc.disp) {
            s += semantic_consistency(*in.seg1_left, *in.seg1_right, in.disp_pred.front(), *occ_d,
                                      FieldMode::Disparity, nullptr, w.per_pixel_normalize);
        }
        if (sc.flow) {
            s += semantic_consistency(*in.seg1_left, *in.seg2_left, in.flow_pred.front(), *occ_f, FieldMode::Flow,
                                      nullptr, w.per_pixel_normalize);
        }
        report.set("L_SC", s, w.alpha_SC);
    }

    if (occ_f || occ_d) {
        report.set("L_REG", occlusion_regularization(occ_f ? &*occ_f : nullptr, occ_d ? &*occ_d : nullptr, w), 1.0);
    }

    if (report.present_count() == 0) throw DomainError("total_semi_supervised: no loss term has its inputs");
    return report;
}

LossReport pretrain_supervised(const LossInputs& in, const LossWeights& w)
{
    w.validate();
    const bool flow = !in.flow_pred.empty() && in.flow_gt;
    const bool disp = !in.disp_pred.empty() && in.disp_gt;
    if (!flow && !disp) throw DomainError("pretrain_supervised: needs flow or disparity ground truth");

    LossReport report;
    add_supervised_task_terms(in, w, report, w.pretrain_disp_scale);
    if (!in.occ_flow_pred.empty() && in.occ_flow_gt) {
        report.set("L_OF",
                   multiscale_occlusion_bce(in.occ_flow_pred, *in.occ_flow_gt, all_valid(*in.occ_flow_gt), w), 1.0);
    }
    if (!in.occ_disp_pred.empty() && in.occ_disp_gt) {
        report.set("L_OD",
                   multiscale_occlusion_bce(in.occ_disp_pred, *in.occ_disp_gt, all_valid(*in.occ_disp_gt), w),
                   w.pretrain_disp_scale);
    }
    return report;
}

} // namespace senseflow
