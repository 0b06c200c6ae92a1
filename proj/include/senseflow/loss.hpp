#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "senseflow/dense_map.hpp"
#include "senseflow/pyramid.hpp"

namespace senseflow {

enum class Penalty {
    L2Norm,    // ||r||_2
    L2Squared, // ||r||_2^2
    SmoothL1,  // sum_i 0.5 r_i^2 if |r_i| < 1 else |r_i| - 0.5
};

struct LossWeights {
    // Per-level weights, finest first.
    std::vector<double> omega{0.32, 0.08, 0.02, 0.01, 0.005};
    double alpha_O = 0.05;
    double alpha_Sd = 1.0;
    double alpha_PC = 0.5;
    double alpha_SC = 0.5;
    double beta_F = 0.5;
    double beta_D = 0.5;
    // Unset means 0.01 * H * W (flow) and 0.005 * H * W (disparity) for the
    // image being evaluated.
    std::optional<double> gamma_F;
    std::optional<double> gamma_D;
    double T = 1.0;
    double pretrain_disp_scale = 0.25;

    Penalty flow_penalty = Penalty::L2Norm;
    Penalty disp_penalty = Penalty::SmoothL1;
    // Teacher softmax uses exp(-z/T) instead of exp(z/T).
    bool negate_teacher_logits = false;
    // Divide photometric/semantic/regularization sums by the pixel count.
    bool per_pixel_normalize = false;

    double gamma_F_for(int height, int width) const { return gamma_F.value_or(0.01 * height * width); }
    double gamma_D_for(int height, int width) const { return gamma_D.value_or(0.005 * height * width); }

    void validate() const;
};

double robust_penalty(std::span<const double> residual, Penalty kind);

// sum_i omega_i sum_{p valid at level i} rho(gt_i(p) - pred_i(p)); the ground
// truth and its validity are pooled to each level with build_masked_pyramid.
double multiscale_task_loss(std::span<const DenseMap> pred_pyramid, const DenseMap& gt, const ValidityMask& valid,
                            const LossWeights& weights, Penalty kind, MapKind map_kind);

// Summed binary cross entropy over valid pixels; pred clamped to [1e-7, 1 - 1e-7].
double occlusion_bce(const OcclusionMask& pred, const OcclusionMask& gt, const ValidityMask& valid);

// occlusion_bce over a prediction pyramid, omega-weighted like the task loss.
double multiscale_occlusion_bce(std::span<const DenseMap> pred_pyramid, const OcclusionMask& gt,
                                const ValidityMask& valid, const LossWeights& weights);

// -T sum_i softmax(z / T)_i log(student_i), summed over valid pixels.
double seg_distillation(const SegPosterior& student, const DenseMap& teacher_logits, double T,
                        const ValidityMask& valid, bool negate_logits = false);

// Softened teacher posterior softmax(+-z / T).
SegPosterior soften_logits(const DenseMap& logits, double T, bool negate_logits = false);

// smooth_l1 between each level and the pooled pseudo ground truth.
double occlusion_distillation(std::span<const DenseMap> pred_pyramid, const OcclusionMask& pseudo_gt,
                              const LossWeights& weights);

enum class FieldMode { Flow, Disparity };

// Optional analytic gradients of a consistency term.
struct ConsistencyGradient {
    DenseMap field;     // d loss / d field, same shape as the field
    DenseMap occlusion; // d loss / d O
};

// sum_p (1 - O(p)) inbounds(p) sum_c |ref(p) - warp(other, field)(p)|
double photometric_consistency(const DenseMap& ref, const DenseMap& other, const DenseMap& field,
                               const OcclusionMask& occ, FieldMode mode, ConsistencyGradient* grad = nullptr,
                               bool per_pixel_normalize = false);

// Same structure with segmentation posteriors as payload.
double semantic_consistency(const SegPosterior& ref, const SegPosterior& other, const DenseMap& field,
                            const OcclusionMask& occ, FieldMode mode, ConsistencyGradient* grad = nullptr,
                            bool per_pixel_normalize = false);

// Mean SSIM over all full-window centers and channels; 11x11 Gaussian
// window, sigma 1.5, C1 = 0.01^2, C2 = 0.03^2.
double ssim_scalar(const DenseMap& a, const DenseMap& b);

struct SsimBranch {
    const DenseMap* ref = nullptr;
    const DenseMap* other = nullptr;
    const DenseMap* field = nullptr;
    const OcclusionMask* occ = nullptr;
};

// ref * O + warp(other, field) * (1 - O), elementwise.
DenseMap occlusion_composite(const DenseMap& ref, const DenseMap& warped, const OcclusionMask& occ);

// gamma_D (1 - SS(I_l, composite_D)) + gamma_F (1 - SS(I_1, composite_F)).
// Either branch may be absent (null ref).
double ssim_loss(const SsimBranch& flow_branch, const SsimBranch& disp_branch, const LossWeights& weights);

// beta_D sum O_D + beta_F sum O_F; either mask may be null.
double occlusion_regularization(const OcclusionMask* occ_flow, const OcclusionMask* occ_disp,
                                const LossWeights& weights);

// Named loss terms in a fixed order; absent terms stay std::nullopt.
class LossReport {
public:
    static constexpr const char* kTerms[] = {"L_F",   "L_D",  "L_OF", "L_OD", "L_OFd", "L_ODd",
                                             "L_Sd",  "L_PC", "L_SC", "L_SS", "L_REG"};
    static constexpr std::size_t kTermCount = std::size(kTerms);

    void set(const std::string& term, double value, double weight);
    std::optional<double> value(const std::string& term) const;
    double weight(const std::string& term) const;
    bool present(const std::string& term) const { return value(term).has_value(); }
    std::size_t present_count() const;

    // sum of weight * value over present terms
    double total() const { return total_; }
    double recompute_total() const;

    std::string to_csv_header() const;
    std::string to_csv_row() const;
    std::string to_json_line() const;

private:
    static std::size_t slot(const std::string& term);

    std::optional<double> values_[kTermCount];
    double weights_[kTermCount]{};
    double total_ = 0.0;
};

// Every map a loss evaluation may use. Leave a member empty to drop the terms
// that need it. Pyramids hold predictions finest first; level 0 doubles as the
// full-resolution estimate for the self-supervised terms.
struct LossInputs {
    // supervised
    std::vector<DenseMap> flow_pred;
    std::optional<FlowField> flow_gt;
    std::optional<ValidityMask> flow_valid;
    std::vector<DenseMap> disp_pred;
    std::optional<DisparityMap> disp_gt;
    std::optional<ValidityMask> disp_valid;

    // occlusion predictions and labels
    std::vector<DenseMap> occ_flow_pred;
    std::vector<DenseMap> occ_disp_pred;
    std::optional<OcclusionMask> occ_flow_gt;
    std::optional<OcclusionMask> occ_disp_gt;
    std::optional<OcclusionMask> occ_flow_pseudo;
    std::optional<OcclusionMask> occ_disp_pseudo;

    // segmentation distillation
    std::optional<SegPosterior> seg_student;
    std::optional<DenseMap> seg_teacher_logits;
    std::optional<ValidityMask> seg_valid;

    // images: first-frame left/right, second-frame left
    std::optional<DenseMap> image1_left;
    std::optional<DenseMap> image1_right;
    std::optional<DenseMap> image2_left;

    // teacher posteriors for semantic consistency, same views as the images
    std::optional<SegPosterior> seg1_left;
    std::optional<SegPosterior> seg1_right;
    std::optional<SegPosterior> seg2_left;
};

// L = L_F + L_D + a_O (L_OFd + L_ODd) + a_Sd L_Sd + a_PC L_PC + a_SC L_SC + L_SS + L_REG
LossReport total_semi_supervised(const LossInputs& in, const LossWeights& weights);

// L_sp = (L_F + L_OF) + s (L_D + L_OD), s = pretrain_disp_scale.
LossReport pretrain_supervised(const LossInputs& in, const LossWeights& weights);

} // namespace senseflow
