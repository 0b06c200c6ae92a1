#include "senseflow/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "senseflow/costvol.hpp"
#include "senseflow/error.hpp"
#include "senseflow/io.hpp"
#include "senseflow/loss.hpp"
#include "senseflow/metrics.hpp"
#include "senseflow/parallel.hpp"
#include "senseflow/rigid.hpp"
#include "senseflow/synth.hpp"
#include "senseflow/warp.hpp"

namespace senseflow {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr const char* kSubcommands[] = {"loss", "refine", "metrics", "synth", "warp", "costvol"};

bool has_extension(const std::string& path, const char* ext) { return fs::path(path).extension() == ext; }

std::vector<double> parse_numbers(const std::string& s, std::size_t expected, const std::string& what)
{
    std::vector<double> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError(what + ": bad number '" + item + "'");
        }
    }
    if (v.size() != expected) throw UsageError(what + " takes " + std::to_string(expected) + " comma-separated numbers");
    return v;
}

RigidTransform parse_motion(const std::string& s)
{
    const auto v = parse_numbers(s, 6, "--ego");
    return make_transform(Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5]));
}

std::set<int> parse_ids(const std::string& s)
{
    std::set<int> ids;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            ids.insert(std::stoi(item));
        } catch (const std::exception&) {
            throw UsageError("--dynamic-ids: bad id '" + item + "'");
        }
    }
    return ids;
}

// Loaders keyed on file format; PFM inputs carry no validity, so every
// finite sample counts as valid (and disparities must also be positive).

FlowWithValidity load_flow(const std::string& path, FileFormat format)
{
    if (format == FileFormat::KittiFlowPng) return read_kitti_flow_png(path);
    if (format != FileFormat::Pfm) throw FormatError(path + ": flow must be kitti_flow or pfm");
    DenseMap m = read_pfm(path);
    require_channels(m, 2, path);
    FlowField flow(std::move(m));
    ValidityMask valid(flow.height(), flow.width(), 1.0);
    for (std::size_t p = 0; p < flow.pixels(); ++p) {
        if (!std::isfinite(flow.values()[2 * p]) || !std::isfinite(flow.values()[2 * p + 1])) {
            valid.values()[p] = 0.0;
            flow.values()[2 * p] = flow.values()[2 * p + 1] = 0.0;
        }
    }
    return {std::move(flow), std::move(valid)};
}

DisparityWithValidity load_disp(const std::string& path, FileFormat format)
{
    if (format == FileFormat::KittiDispPng) return read_kitti_disp_png(path);
    if (format != FileFormat::Pfm) throw FormatError(path + ": disparity must be kitti_disp or pfm");
    DenseMap m = read_pfm(path);
    require_channels(m, 1, path);
    for (double& v : m.values()) {
        if (!std::isfinite(v) || v < 0.0) v = 0.0;
    }
    DisparityMap disp(std::move(m));
    ValidityMask valid(disp.height(), disp.width(), 0.0);
    for (std::size_t p = 0; p < disp.pixels(); ++p) valid.values()[p] = disp.values()[p] > 0.0 ? 1.0 : 0.0;
    return {std::move(disp), std::move(valid)};
}

DenseMap load_map(const std::string& path, FileFormat format)
{
    switch (format) {
    case FileFormat::Pfm: return read_pfm(path);
    case FileFormat::LabelPng: return read_label_png(path);
    case FileFormat::KittiFlowPng: return read_kitti_flow_png(path).flow;
    case FileFormat::KittiDispPng: return read_kitti_disp_png(path).disparity;
    case FileFormat::Intrinsics: break;
    }
    throw FormatError(path + ": not a dense map");
}

FileFormat format_from_extension(const std::string& path, FileFormat png_format)
{
    if (has_extension(path, ".pfm")) return FileFormat::Pfm;
    if (has_extension(path, ".png")) return png_format;
    throw UsageError(path + ": expected a .pfm or .png file");
}

FlowWithValidity load_flow(const std::string& path)
{
    return load_flow(path, format_from_extension(path, FileFormat::KittiFlowPng));
}

DisparityWithValidity load_disp(const std::string& path)
{
    return load_disp(path, format_from_extension(path, FileFormat::KittiDispPng));
}

void save_disp(const std::string& path, const DisparityMap& disp, const ValidityMask& valid)
{
    if (format_from_extension(path, FileFormat::KittiDispPng) == FileFormat::Pfm) {
        write_pfm(path, disp);
    } else {
        write_kitti_disp_png(path, disp, valid);
    }
}

ValidityMask positive(const DisparityMap& d)
{
    ValidityMask v(d.height(), d.width(), 0.0);
    for (std::size_t p = 0; p < d.pixels(); ++p) v.values()[p] = d.values()[p] > 0.0 ? 1.0 : 0.0;
    return v;
}

ValidityMask mask_and(const ValidityMask& a, const ValidityMask& b)
{
    ValidityMask out = a;
    for (std::size_t p = 0; p < out.pixels(); ++p) {
        if (b.values()[p] == 0.0) out.values()[p] = 0.0;
    }
    return out;
}

json twist_json(const RigidTransform& T)
{
    const Twist xi = se3_log(T);
    return json::array({xi[0], xi[1], xi[2], xi[3], xi[4], xi[5]});
}

json trace_json(const GnTrace& t)
{
    return json{{"iterations", t.iterations}, {"converged", t.converged}, {"pixels", t.pixels},
                {"energy", t.energy},         {"mean_abs_residual", t.mean_abs_residual},
                {"step_norm", t.step_norm},   {"condition", t.condition}};
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
    std::string out_dir;
    std::string scene;
    std::string ego;
    std::uint64_t seed = 0;
    double flow_noise = 0.0;
    std::uint64_t noise_seed = 1;
};

int run_synth(const SynthArgs& a, std::ostream& out)
{
    SceneSpec spec = a.scene.empty() ? kitti_like_scene(RigidTransform::identity(), a.seed) : load_scene_spec(a.scene);
    if (!a.ego.empty()) spec.ego = parse_motion(a.ego);
    if (!a.scene.empty() && a.seed != 0) spec.seed = a.seed;
    if (!(a.flow_noise >= 0.0)) throw UsageError("--flow-noise must be nonnegative");

    const SceneBundle b = render_scene(spec);
    fs::create_directories(a.out_dir);
    const fs::path dir(a.out_dir);
    FileBundleManifest m;
    auto add = [&](const std::string& role, FileFormat f, const std::string& name) {
        m.entries[role] = {f, (dir / name).string()};
        return (dir / name).string();
    };

    write_pfm(add("image1_left", FileFormat::Pfm, "image1_left.pfm"), b.image1_left);
    write_pfm(add("image2_left", FileFormat::Pfm, "image2_left.pfm"), b.image2_left);
    write_pfm(add("image1_right", FileFormat::Pfm, "image1_right.pfm"), b.image1_right);
    write_pfm(add("image2_right", FileFormat::Pfm, "image2_right.pfm"), b.image2_right);
    write_kitti_disp_png(add("disp1", FileFormat::KittiDispPng, "disp1.png"), b.disp1, b.valid_disp1);
    write_kitti_disp_png(add("disp2", FileFormat::KittiDispPng, "disp2.png"), b.disp2, b.valid_disp2);
    write_kitti_disp_png(add("disp2_warped_gt", FileFormat::KittiDispPng, "disp2_warped_gt.png"), b.disp2_warped,
                         mask_and(b.valid_flow, positive(b.disp2_warped)));
    write_kitti_flow_png(add("flow_gt", FileFormat::KittiFlowPng, "flow_gt.png"), b.flow, b.valid_flow);

    FlowField estimate = b.flow;
    if (a.flow_noise > 0.0) {
        std::mt19937_64 rng(a.noise_seed);
        std::normal_distribution<double> noise(0.0, a.flow_noise);
        for (double& v : estimate.values()) v += noise(rng);
    }
    write_kitti_flow_png(add("flow", FileFormat::KittiFlowPng, "flow.png"), estimate, b.valid_flow);
    write_pfm(add("occ_flow", FileFormat::Pfm, "occ_flow.pfm"), b.occ_flow);
    write_pfm(add("occ_disp", FileFormat::Pfm, "occ_disp.pfm"), b.occ_disp);
    write_label_png(add("labels", FileFormat::LabelPng, "labels.png"), b.labels);
    write_label_png(add("moving", FileFormat::LabelPng, "moving.png"), b.moving);
    write_intrinsics(add("intrinsics", FileFormat::Intrinsics, "intrinsics.txt"), spec.camera);
    {
        std::ofstream s(dir / "scene.txt");
        write_scene_spec(s, spec);
    }
    const std::string manifest = (dir / "manifest.txt").string();
    write_manifest(manifest, m);
    out << json{{"manifest", manifest}, {"height", spec.height}, {"width", spec.width}, {"ego", twist_json(spec.ego)}}
               .dump()
        << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- refine

struct RefineArgs {
    std::string manifest;
    std::string out_dir;
    int erosion = 10;
    std::string dynamic_ids;
    GnOptions gn;
    bool least_squares = false;
};

int run_refine(const RefineArgs& a, std::ostream& out)
{
    const FileBundleManifest in = read_manifest(a.manifest);
    const auto cam_path = in.intrinsics();
    if (!cam_path) throw FormatError(a.manifest + ": no intrinsics entry");
    const StereoCamera cam = read_intrinsics(*cam_path);
    const FlowWithValidity flow = load_flow(in.entry("flow").path, in.entry("flow").format);
    const DisparityWithValidity disp1 = load_disp(in.entry("disp1").path, in.entry("disp1").format);
    const DisparityWithValidity disp2 = load_disp(in.entry("disp2").path, in.entry("disp2").format);
    const DenseMap labels = load_map(in.entry("labels").path, in.entry("labels").format);

    RefineOptions opts;
    opts.gn = a.gn;
    opts.gn.robust = !a.least_squares;
    opts.erosion = a.erosion;
    if (!a.dynamic_ids.empty()) opts.dynamic_ids = parse_ids(a.dynamic_ids);
    opts.gn.validate();

    const RefineResult r = refine_scene_flow(flow.flow, disp1.disparity, disp2.disparity, labels, cam, opts);

    fs::create_directories(a.out_dir);
    const fs::path dir(a.out_dir);
    FileBundleManifest m;
    m.entries["flow"] = {FileFormat::KittiFlowPng, (dir / "flow.png").string()};
    m.entries["disp1"] = in.entry("disp1");
    m.entries["disp2_warped"] = {FileFormat::KittiDispPng, (dir / "disp2_warped.png").string()};
    m.entries["rigid_mask"] = {FileFormat::LabelPng, (dir / "rigid_mask.png").string()};
    m.entries["intrinsics"] = in.entry("intrinsics");
    write_kitti_flow_png(m.entries["flow"].path, r.flow, flow.valid);
    write_kitti_disp_png(m.entries["disp2_warped"].path, r.disp2_warped, positive(r.disp2_warped));
    write_label_png(m.entries["rigid_mask"].path, r.rigid_mask);
    write_manifest((dir / "manifest.txt").string(), m);

    json report{{"manifest", (dir / "manifest.txt").string()}, {"rigid_pixels", r.rigid_mask.count()}};
    report["ego"] = r.ego ? twist_json(*r.ego) : json(nullptr);
    report["trace"] = trace_json(r.trace);
    std::ofstream(dir / "ego.json") << report.dump(2) << '\n';
    out << report.dump() << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- metrics

struct MetricsArgs {
    std::string pred;
    std::string gt;
    std::string csv;
    std::string dynamic_ids;
};

// Scene-flow outlier row in the MetricReport column layout; EPE columns stay empty.
std::string sf_row(const ValidityMask& d1, const ValidityMask& d2, const ValidityMask& fl, const ValidityMask& valid,
                   const ValidityMask* fg)
{
    std::ostringstream os;
    os.precision(10);
    os << "sf,," << scene_flow_outlier_rate(d1, d2, fl, valid) << ',' << valid.count() << ',' << valid.count();
    if (fg == nullptr) {
        os << ",,,,,,";
        return os.str();
    }
    ValidityMask fgv = valid, bgv = valid;
    for (std::size_t p = 0; p < valid.pixels(); ++p) {
        (fg->values()[p] != 0.0 ? bgv : fgv).values()[p] = 0.0;
    }
    for (const ValidityMask* region : {&fgv, &bgv}) {
        os << ",," << scene_flow_outlier_rate(d1, d2, fl, *region) << ',' << region->count();
    }
    return os.str();
}

int run_metrics(const MetricsArgs& a, std::ostream& out)
{
    const FileBundleManifest pred = read_manifest(a.pred);
    const FileBundleManifest gt = read_manifest(a.gt);

    std::optional<ValidityMask> fg;
    if (gt.has("moving")) {
        fg = ValidityMask(load_map(gt.entry("moving").path, gt.entry("moving").format));
    } else if (gt.has("labels")) {
        const DenseMap labels = load_map(gt.entry("labels").path, gt.entry("labels").format);
        const std::set<int> ids = a.dynamic_ids.empty() ? default_dynamic_ids() : parse_ids(a.dynamic_ids);
        fg = ValidityMask(labels.height(), labels.width(), 0.0);
        for (std::size_t p = 0; p < labels.pixels(); ++p) {
            fg->values()[p] = ids.count(static_cast<int>(labels.values()[p])) ? 1.0 : 0.0;
        }
    }
    const ValidityMask* fg_ptr = fg ? &*fg : nullptr;

    std::vector<std::string> rows{MetricReport::csv_header()};
    std::optional<ValidityMask> fl_flags, d1_flags, d2_flags;
    std::optional<ValidityMask> fl_valid, d1_valid, d2_valid;

    const std::string flow_gt_role = gt.has("flow_gt") ? "flow_gt" : "flow";
    if (pred.has("flow") && gt.has(flow_gt_role)) {
        const auto p = load_flow(pred.entry("flow").path, pred.entry("flow").format);
        const auto g = load_flow(gt.entry(flow_gt_role).path, gt.entry(flow_gt_role).format);
        rows.push_back(evaluate_flow(p.flow, g.flow, g.valid, fg_ptr).csv_row("fl"));
        fl_flags = flow_outlier_flags(p.flow, g.flow, g.valid);
        fl_valid = g.valid;
    }
    const std::pair<const char*, const char*> disp_roles[] = {{"disp1", "disp1"}, {"disp2_warped", "disp2_warped_gt"}};
    for (const auto& [pred_role, gt_role] : disp_roles) {
        if (!pred.has(pred_role) || !gt.has(gt_role)) continue;
        const auto p = load_disp(pred.entry(pred_role).path, pred.entry(pred_role).format);
        const auto g = load_disp(gt.entry(gt_role).path, gt.entry(gt_role).format);
        const bool first = std::string(pred_role) == "disp1";
        rows.push_back(evaluate_disparity(p.disparity, g.disparity, g.valid, fg_ptr).csv_row(first ? "d1" : "d2"));
        (first ? d1_flags : d2_flags) = disparity_outlier_flags(p.disparity, g.disparity, g.valid);
        (first ? d1_valid : d2_valid) = g.valid;
    }
    if (rows.size() == 1) throw FormatError("metrics: no matching prediction / ground-truth roles");

    if (fl_flags && d1_flags && d2_flags) {
        const ValidityMask valid = mask_and(mask_and(*fl_valid, *d1_valid), *d2_valid);
        rows.push_back(sf_row(*d1_flags, *d2_flags, *fl_flags, valid, fg_ptr));
    }

    std::ostringstream text;
    for (const auto& r : rows) text << r << '\n';
    out << text.str();
    if (!a.csv.empty()) {
        std::ofstream f(a.csv);
        if (!(f << text.str())) throw FormatError("cannot write " + a.csv);
    }
    return kExitOk;
}

// ---------------------------------------------------------------- loss

std::vector<DenseMap> load_pyramid(const FileBundleManifest& m, const std::string& role)
{
    std::vector<DenseMap> levels;
    if (m.has(role)) levels.push_back(load_map(m.entry(role).path, m.entry(role).format));
    for (int i = levels.empty() ? 0 : 1;; ++i) {
        const std::string r = role + "." + std::to_string(i);
        if (!m.has(r)) break;
        levels.push_back(load_map(m.entry(r).path, m.entry(r).format));
    }
    return levels;
}

template <class T>
std::optional<T> load_optional(const FileBundleManifest& m, const std::string& role)
{
    if (!m.has(role)) return std::nullopt;
    return T(load_map(m.entry(role).path, m.entry(role).format));
}

struct LossArgs {
    std::string manifest;
    std::string config;
    std::string mode = "semi";
    bool json_out = false;
};

int run_loss(const LossArgs& a, std::ostream& out)
{
    const FileBundleManifest m = read_manifest(a.manifest);
    const LossWeights w = a.config.empty() ? LossWeights{} : read_loss_weights(a.config);
    w.validate();

    LossInputs in;
    in.flow_pred = load_pyramid(m, "flow_pred");
    in.disp_pred = load_pyramid(m, "disp_pred");
    in.occ_flow_pred = load_pyramid(m, "occ_flow_pred");
    in.occ_disp_pred = load_pyramid(m, "occ_disp_pred");
    if (m.has("flow_gt")) {
        auto f = load_flow(m.entry("flow_gt").path, m.entry("flow_gt").format);
        in.flow_gt = std::move(f.flow);
        in.flow_valid = std::move(f.valid);
    }
    if (m.has("disp_gt")) {
        auto d = load_disp(m.entry("disp_gt").path, m.entry("disp_gt").format);
        in.disp_gt = std::move(d.disparity);
        in.disp_valid = std::move(d.valid);
    }
    in.occ_flow_gt = load_optional<OcclusionMask>(m, "occ_flow_gt");
    in.occ_disp_gt = load_optional<OcclusionMask>(m, "occ_disp_gt");
    in.occ_flow_pseudo = load_optional<OcclusionMask>(m, "occ_flow_pseudo");
    in.occ_disp_pseudo = load_optional<OcclusionMask>(m, "occ_disp_pseudo");
    in.seg_student = load_optional<SegPosterior>(m, "seg_student");
    in.seg_teacher_logits = load_optional<DenseMap>(m, "seg_teacher_logits");
    in.seg_valid = load_optional<ValidityMask>(m, "seg_valid");
    in.image1_left = load_optional<DenseMap>(m, "image1_left");
    in.image1_right = load_optional<DenseMap>(m, "image1_right");
    in.image2_left = load_optional<DenseMap>(m, "image2_left");
    in.seg1_left = load_optional<SegPosterior>(m, "seg1_left");
    in.seg1_right = load_optional<SegPosterior>(m, "seg1_right");
    in.seg2_left = load_optional<SegPosterior>(m, "seg2_left");

    LossReport report;
    if (a.mode == "semi") {
        report = total_semi_supervised(in, w);
    } else if (a.mode == "pretrain") {
        report = pretrain_supervised(in, w);
    } else {
        throw UsageError("--mode must be semi or pretrain");
    }
    if (!std::isfinite(report.total())) throw NumericalError("loss: non-finite total");
    if (a.json_out) {
        out << report.to_json_line() << '\n';
    } else {
        out << report.to_csv_header() << '\n' << report.to_csv_row() << '\n';
    }
    return kExitOk;
}

// ---------------------------------------------------------------- warp

struct WarpArgs {
    std::string mode = "flow";
    std::string src;
    std::string field;
    std::string out;
    std::string valid_out;
    std::string ego;
    std::string intrinsics;
    bool parallel_splat = false;
    bool no_correction = false;
};

int run_warp(const WarpArgs& a, std::ostream& out)
{
    std::optional<ValidityMask> valid;
    std::size_t written = 0;
    if (a.mode == "flow" || a.mode == "disparity") {
        if (a.field.empty()) throw UsageError("--field is required for this mode");
        if (!has_extension(a.out, ".pfm")) throw UsageError("--out must be a .pfm file for image warps");
        const DenseMap src = read_pfm(a.src);
        const WarpResult r = a.mode == "flow" ? inverse_warp_flow(src, load_flow(a.field).flow)
                                              : inverse_warp_disparity(src, load_disp(a.field).disparity);
        write_pfm(a.out, r.warped);
        valid = r.inbounds;
        written = r.inbounds.count();
    } else if (a.mode == "via-flow") {
        if (a.field.empty()) throw UsageError("--field is required for this mode");
        const WarpResult r = inverse_warp_disparity_via_flow(load_flow(a.field).flow, load_disp(a.src).disparity);
        const ValidityMask v = mask_and(r.inbounds, positive(DisparityMap(r.warped)));
        save_disp(a.out, DisparityMap(r.warped), v);
        valid = v;
        written = v.count();
    } else if (a.mode == "forward") {
        if (a.ego.empty() || a.intrinsics.empty()) throw UsageError("forward mode needs --ego and --intrinsics");
        SplatOptions opts;
        opts.mode = a.parallel_splat ? SplatMode::Parallel : SplatMode::Sequential;
        opts.first_order_correction = !a.no_correction;
        const ForwardWarpResult r =
            forward_warp_disparity(load_disp(a.src).disparity, parse_motion(a.ego), read_intrinsics(a.intrinsics), opts);
        save_disp(a.out, r.disparity, r.valid);
        valid = r.valid;
        written = r.valid.count();
    } else {
        throw UsageError("--mode must be flow, disparity, via-flow or forward");
    }
    if (!a.valid_out.empty()) write_label_png(a.valid_out, *valid);
    out << json{{"out", a.out}, {"valid_pixels", written}}.dump() << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- costvol

struct CostvolArgs {
    std::string f1;
    std::string f2;
    std::string out;
    int radius = 4;
    int dims = 2;
};

int run_costvol(const CostvolArgs& a, std::ostream& out)
{
    if (a.dims != 1 && a.dims != 2) throw UsageError("--dims must be 1 or 2");
    if (!has_extension(a.out, ".pfm")) throw UsageError("--out must be a .pfm file");
    const DenseMap f1 = read_pfm(a.f1);
    const DenseMap f2 = read_pfm(a.f2);
    const CostVolume cv = a.dims == 2 ? correlation_2d(f1, f2, a.radius) : correlation_1d(f1, f2, a.radius);
    write_pfm(a.out, cv.scores);
    out << json{{"out", a.out}, {"channels", cv.scores.channels()}, {"radius", cv.radius}}.dump() << '\n';
    return kExitOk;
}

int exit_code_for(const Error& e)
{
    if (dynamic_cast<const UsageError*>(&e) != nullptr) return kExitUsage;
    if (dynamic_cast<const NumericalError*>(&e) != nullptr) return kExitNumerical;
    return kExitData;
}

} // namespace

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Scene-flow refinement, losses and evaluation on dense maps", "senseflow"};
    app.require_subcommand(1);
    app.fallthrough();
    int threads = -1;
    app.add_option("--threads", threads, "worker threads (0 = auto; default SENSEFLOW_THREADS)")
        ->check(CLI::NonNegativeNumber);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "render a synthetic planar scene with ground truth");
    s->add_option("--out", synth.out_dir, "output directory")->required();
    s->add_option("--scene", synth.scene, "scene description file (default: KITTI-like ground plane)");
    s->add_option("--ego", synth.ego, "ego-motion wx,wy,wz,tx,ty,tz (axis-angle rad, meters)");
    s->add_option("--seed", synth.seed, "texture seed");
    s->add_option("--flow-noise", synth.flow_noise, "std-dev of Gaussian noise added to the flow estimate (px)");
    s->add_option("--noise-seed", synth.noise_seed, "noise generator seed");

    RefineArgs refine;
    auto* r = app.add_subcommand("refine", "fit ego-motion on the rigid region and replace its flow");
    r->add_option("--manifest", refine.manifest, "input manifest (flow, disp1, disp2, labels, intrinsics)")->required();
    r->add_option("--out", refine.out_dir, "output directory")->required();
    r->add_option("--erosion", refine.erosion, "erosion window size")->check(CLI::NonNegativeNumber);
    r->add_option("--dynamic-ids", refine.dynamic_ids, "comma-separated dynamic label ids");
    r->add_option("--max-iters", refine.gn.max_iters, "Gauss-Newton iteration cap");
    r->add_option("--tol", refine.gn.residual_tol, "mean absolute residual tolerance (px)");
    r->add_option("--huber-delta", refine.gn.huber_delta, "Huber threshold (px)");
    r->add_option("--damping", refine.gn.damping, "Levenberg damping");
    r->add_option("--max-condition", refine.gn.max_condition, "largest accepted condition number of the normal equations");
    r->add_flag("--least-squares", refine.least_squares, "disable Huber weighting");

    MetricsArgs metrics;
    auto* m = app.add_subcommand("metrics", "EPE and KITTI outlier rates");
    m->add_option("--pred", metrics.pred, "prediction manifest")->required();
    m->add_option("--gt", metrics.gt, "ground-truth manifest")->required();
    m->add_option("--csv", metrics.csv, "also write the report to this file");
    m->add_option("--dynamic-ids", metrics.dynamic_ids, "foreground label ids when no 'moving' mask is given");

    LossArgs loss;
    auto* l = app.add_subcommand("loss", "evaluate the training objective");
    l->add_option("--manifest", loss.manifest, "input manifest")->required();
    l->add_option("--config", loss.config, "loss weight file (key = value)");
    l->add_option("--mode", loss.mode, "semi or pretrain")->check(CLI::IsMember({"semi", "pretrain"}));
    l->add_flag("--json", loss.json_out, "emit a JSON line instead of CSV");

    WarpArgs warp;
    auto* w = app.add_subcommand("warp", "backward or forward warping");
    w->add_option("--mode", warp.mode, "flow, disparity, via-flow or forward")
        ->check(CLI::IsMember({"flow", "disparity", "via-flow", "forward"}));
    w->add_option("--src", warp.src, "source map")->required();
    w->add_option("--field", warp.field, "flow or disparity field");
    w->add_option("--out", warp.out, "output file")->required();
    w->add_option("--valid-out", warp.valid_out, "validity mask PNG");
    w->add_option("--ego", warp.ego, "rigid motion for forward mode");
    w->add_option("--intrinsics", warp.intrinsics, "camera file for forward mode");
    w->add_flag("--parallel", warp.parallel_splat, "row-parallel splatting");
    w->add_flag("--no-correction", warp.no_correction, "splat disparities unchanged");

    CostvolArgs costvol;
    auto* c = app.add_subcommand("costvol", "correlation cost volume between feature maps");
    c->add_option("--f1", costvol.f1, "first feature map (PFM)")->required();
    c->add_option("--f2", costvol.f2, "second feature map (PFM)")->required();
    c->add_option("--out", costvol.out, "output PFM")->required();
    c->add_option("--radius", costvol.radius, "search radius")->check(CLI::NonNegativeNumber);
    c->add_option("--dims", costvol.dims, "1 (stereo) or 2 (flow)");

    if (argc < 2) {
        err << app.help() << "error: a subcommand is required\n";
        return kExitUsage;
    }
    const std::string first = argv[1];
    if (!first.empty() && first[0] != '-' && std::find(std::begin(kSubcommands), std::end(kSubcommands), first) == std::end(kSubcommands)) {
        err << "error: unknown subcommand '" << first << "'\n";
        return kExitUsage;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    if (threads >= 0) set_thread_count(threads);

    try {
        if (s->parsed()) return run_synth(synth, out);
        if (r->parsed()) return run_refine(refine, out);
        if (m->parsed()) return run_metrics(metrics, out);
        if (l->parsed()) return run_loss(loss, out);
        if (w->parsed()) return run_warp(warp, out);
        if (c->parsed()) return run_costvol(costvol, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::bad_alloc&) {
        err << "error: out of memory\n";
        return kExitData;
    }
    return kExitUsage;
}

} // namespace senseflow
