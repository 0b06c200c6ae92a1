#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "senseflow/costvol.hpp"
#include "senseflow/io.hpp"
#include "senseflow/loss.hpp"
#include "senseflow/metrics.hpp"
#include "senseflow/parallel.hpp"
#include "senseflow/rigid.hpp"
#include "senseflow/synth.hpp"

using namespace senseflow;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

DenseMap random_map(int h, int w, int c, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> u(lo, hi);
    DenseMap m(h, w, c);
    for (double& v : m.values()) v = u(rng);
    return m;
}

double rotation_error(const RigidTransform& a, const RigidTransform& b)
{
    return std::abs(Eigen::AngleAxisd(Mat3(a.rotation * b.rotation.transpose())).angle());
}

double translation_error(const RigidTransform& a, const RigidTransform& b)
{
    return (a.translation - b.translation).norm();
}

// Rotation angle up to 2 degrees, translation up to 0.5 m, uniform directions.
RigidTransform random_ego(std::mt19937_64& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Vec3 axis = Vec3(n(rng), n(rng), n(rng)).normalized();
    const Vec3 dir = Vec3(n(rng), n(rng), n(rng)).normalized();
    return make_transform(axis * u(rng) * 2.0 * M_PI / 180.0, dir * u(rng) * 0.5);
}

ValidityMask usable(const SceneBundle& b)
{
    ValidityMask m = b.valid_flow;
    for (std::size_t p = 0; p < m.pixels(); ++p) {
        if (!(b.disp1.values()[p] > 0.0)) m.values()[p] = 0.0;
    }
    return m;
}

// ---------------------------------------------------------------- 1

Outcome jacobian_fidelity()
{
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> uv(-1.0, 1.0), inv(0.005, 1.0), focal(300.0, 1500.0);
    const double h = 1e-6;
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        StereoCamera cam{focal(rng), focal(rng), 600.0, 180.0, 0.54};
        const double pu = uv(rng), pv = uv(rng), pd = inv(rng);
        const Vec3 P(pu / pd, pv / pd, 1.0 / pd);
        const Jacobian26 J = gn_jacobian(pu, pv, pd, cam);
        for (int k = 0; k < 6; ++k) {
            Twist e = Twist::Zero();
            e[k] = h;
            const Projection a = project(se3_exp(e).apply(P), cam), b = project(se3_exp(-e).apply(P), cam);
            const Eigen::Vector2d fd((a.pixel.x - b.pixel.x) / (2 * h), (a.pixel.y - b.pixel.y) / (2 * h));
            worst = std::max(worst, (fd - J.col(k)).norm() / J.col(k).norm());
        }
    }
    const double t = seconds_since(t0);
    return {worst <= 1e-4 && t < 1.0,
            fmt("max column relative error %.2e over 1000 configurations, %.3f s", worst, t)};
}

// ---------------------------------------------------------------- 2, 3, 5

struct EgoStats {
    int failures = 0;
    int max_iterations = 0;
    double worst_rot = 0.0, worst_t = 0.0;
};

struct RobustStats {
    int failures = 0;
    double worst_huber_rot = 0.0, worst_huber_t = 0.0;
    double min_ratio = 1e300;
};

struct RuntimeStats {
    double gn = 0.0;
    double refine = 0.0;
};

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

void ego_trials(EgoStats& ego, RobustStats& robust, RuntimeStats& runtime)
{
    for (int seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(1000 + seed);
        const RigidTransform truth = random_ego(rng);
        const SceneSpec spec = kitti_like_scene(truth, seed);
        const SceneBundle b = render_scene(spec);
        const ValidityMask mask = usable(b);

        const GnResult clean = gn_solve(b.flow, b.disp1, mask, spec.camera);
        const double er = rotation_error(clean.transform, truth), et = translation_error(clean.transform, truth);
        ego.worst_rot = std::max(ego.worst_rot, er);
        ego.worst_t = std::max(ego.worst_t, et);
        ego.max_iterations = std::max(ego.max_iterations, clean.trace.iterations);
        if (!(er <= 1e-6 && et <= 1e-6 && clean.trace.converged && clean.trace.iterations <= 20)) ++ego.failures;

        // 10% of the usable pixels get a 20 px error in a random direction
        FlowField corrupted = b.flow;
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        for (std::size_t p = 0; p < corrupted.pixels(); ++p) {
            if (mask.values()[p] == 0.0 || u01(rng) >= 0.1) continue;
            const double a = 2.0 * M_PI * u01(rng);
            corrupted.values()[2 * p] += 20.0 * std::cos(a);
            corrupted.values()[2 * p + 1] += 20.0 * std::sin(a);
        }
        GnOptions ls;
        ls.robust = false;
        const RigidTransform hub = gn_solve(corrupted, b.disp1, mask, spec.camera).transform;
        const RigidTransform pla = gn_solve(corrupted, b.disp1, mask, spec.camera, ls).transform;
        const double hr = rotation_error(hub, truth), ht = translation_error(hub, truth);
        const double ratio = std::min(rotation_error(pla, truth) / hr, translation_error(pla, truth) / ht);
        robust.worst_huber_rot = std::max(robust.worst_huber_rot, hr);
        robust.worst_huber_t = std::max(robust.worst_huber_t, ht);
        robust.min_ratio = std::min(robust.min_ratio, ratio);
        if (!(hr <= 1e-3 && ht <= 1e-3 && ratio >= 10.0)) ++robust.failures;

        if (seed == 0) {
            FlowField noisy = b.flow;
            std::normal_distribution<double> n(0.0, 0.5);
            for (double& v : noisy.values()) v += n(rng);
            GnOptions single;
            single.threads = 1;
            std::vector<double> gn_times, refine_times;
            for (int rep = 0; rep < 5; ++rep) {
                const auto t0 = std::chrono::steady_clock::now();
                gn_solve(noisy, b.disp1, mask, spec.camera, single);
                gn_times.push_back(seconds_since(t0));
            }
            set_thread_count(1);
            for (int rep = 0; rep < 3; ++rep) {
                const auto t0 = std::chrono::steady_clock::now();
                refine_scene_flow(noisy, b.disp1, b.disp2, b.labels, spec.camera);
                refine_times.push_back(seconds_since(t0));
            }
            set_thread_count(0);
            runtime.gn = median(gn_times);
            runtime.refine = median(refine_times);
        }
    }
}

// ---------------------------------------------------------------- 4

Outcome refinement_helps()
{
    int improved = 0;
    double worst_gain = 1e300;
    for (int seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(2000 + seed);
        SceneSpec spec = kitti_like_scene(random_ego(rng), 100 + seed);
        PlaneSpec car;
        car.normal = Vec3::UnitZ();
        car.offset = 12.0;
        car.label = 13;
        car.texture_scale = 0.3;
        car.bounds = {-2.5, 0.5, -0.5, 1.65, -1e30, 1e30};
        car.motion = make_transform(Vec3(0.0, 0.02, 0.0), Vec3(0.2, 0.0, 0.8));
        spec.planes.push_back(car);
        const SceneBundle b = render_scene(spec);

        FlowField noisy = b.flow;
        std::normal_distribution<double> n(0.0, 0.5);
        for (double& v : noisy.values()) v += n(rng);
        const RefineResult r = refine_scene_flow(noisy, b.disp1, b.disp2, b.labels, spec.camera);

        ValidityMask bg = b.valid_flow;
        for (std::size_t p = 0; p < bg.pixels(); ++p) {
            if (b.moving.values()[p] != 0.0) bg.values()[p] = 0.0;
        }
        const double before = flow_epe(noisy, b.flow, bg), after = flow_epe(r.flow, b.flow, bg);
        if (after < before) ++improved;
        worst_gain = std::min(worst_gain, before - after);
    }
    return {improved >= 19, fmt("background EPE reduced in %d/20 trials, smallest reduction %.3f px", improved,
                                worst_gain)};
}

// ---------------------------------------------------------------- 6

Outcome loss_fixed_points()
{
    std::mt19937_64 rng(6);
    std::vector<std::string> failed;
    auto check = [&](bool ok, const char* name) {
        if (!ok) failed.push_back(name);
    };
    const int h = 16, w = 20;
    const double N = h * w;
    const DenseMap a = random_map(h, w, 3, rng), b = random_map(h, w, 3, rng);
    const OcclusionMask full(h, w, 1.0), none(h, w, 0.0);
    check(photometric_consistency(a, b, random_map(h, w, 2, rng, -3, 3), full, FieldMode::Flow) == 0.0,
          "L_PC flow under full occlusion");
    check(photometric_consistency(a, b, random_map(h, w, 1, rng, 0, 4), full, FieldMode::Disparity) == 0.0,
          "L_PC disparity under full occlusion");
    check(photometric_consistency(a, a, FlowField(h, w), none, FieldMode::Flow) == 0.0, "L_PC identity");

    LossWeights lw;
    check(lw.beta_F == 0.5 && lw.beta_D == 0.5, "default beta");
    check(occlusion_regularization(&full, nullptr, lw) == 0.5 * N, "L_REG flow");
    check(occlusion_regularization(nullptr, &full, lw) == 0.5 * N, "L_REG disparity");
    check(occlusion_regularization(&none, &none, lw) == 0.0, "L_REG zero");

    check(std::abs(ssim_scalar(a, a) - 1.0) <= 1e-9, "SSIM self");
    const double ca = 0.3, cb = 0.7, C1 = 1e-4;
    check(std::abs(ssim_scalar(DenseMap(h, w, 1, ca), DenseMap(h, w, 1, cb)) -
                   (2 * ca * cb + C1) / (ca * ca + cb * cb + C1)) <= 1e-12,
          "SSIM constants");

    check(robust_penalty(std::vector<double>{3.0, 4.0}, Penalty::L2Norm) == 5.0, "L2 norm");
    check(robust_penalty(std::vector<double>{0.5}, Penalty::SmoothL1) == 0.125, "smooth L1 quadratic");
    check(robust_penalty(std::vector<double>{2.0}, Penalty::SmoothL1) == 1.5, "smooth L1 linear");
    check(std::abs(occlusion_bce(OcclusionMask(h, w, 0.5), OcclusionMask(h, w, 1.0), ValidityMask(h, w)) -
                   N * std::log(2.0)) <= 1e-9,
          "BCE at 0.5");

    LossInputs in;
    const FlowField fgt(random_map(h, w, 2, rng, -4, 4));
    const DisparityMap dgt(random_map(h, w, 1, rng, 1, 8));
    in.flow_gt = fgt;
    in.disp_gt = dgt;
    in.flow_pred = {DenseMap(random_map(h, w, 2, rng, -4, 4)), DenseMap(random_map(h / 2, w / 2, 2, rng, -2, 2))};
    in.disp_pred = {DenseMap(random_map(h, w, 1, rng, 1, 8)), DenseMap(random_map(h / 2, w / 2, 1, rng, 0, 4))};
    const LossReport pre = pretrain_supervised(in, lw);
    check(pre.total() == *pre.value("L_F") + 0.25 * *pre.value("L_D"), "pretrain total");
    check(!pre.present("L_OF") && !pre.present("L_OD"), "pretrain without occlusion");

    std::string detail = failed.empty() ? "all closed forms hold" : "failed:";
    for (const auto& f : failed) detail += " [" + f + "]";
    return {failed.empty(), detail};
}

// ---------------------------------------------------------------- 7

DenseMap smooth_image(int h, int w, int c, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> freq(0.1, 0.6), phase(0.0, 6.28);
    DenseMap m(h, w, c);
    for (int k = 0; k < c; ++k) {
        const double fx = freq(rng), fy = freq(rng), p = phase(rng);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) m.at(y, x, k) = 0.5 + 0.4 * std::sin(fx * x + fy * y + p);
        }
    }
    return m;
}

SegPosterior random_posterior(int h, int w, int c, std::mt19937_64& rng)
{
    DenseMap m = random_map(h, w, c, rng, 0.05, 1.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (double v : m.pixel(y, x)) s += v;
            for (double& v : m.pixel(y, x)) v /= s;
        }
    }
    return SegPosterior(std::move(m));
}

// Integer part plus a fraction in [0.2, 0.8], so the differences stay in one bilinear cell.
DenseMap interior_field(int h, int w, int c, std::mt19937_64& rng, int lo, int hi)
{
    std::uniform_int_distribution<int> whole(lo, hi);
    std::uniform_real_distribution<double> frac(0.2, 0.8);
    DenseMap m(h, w, c);
    for (double& v : m.values()) v = whole(rng) + frac(rng);
    return m;
}

using ConsistencyFn = std::function<double(const DenseMap&, const OcclusionMask&, ConsistencyGradient*)>;

double worst_gradient_error(const ConsistencyFn& loss, const DenseMap& field, const OcclusionMask& occ,
                            std::mt19937_64& rng)
{
    ConsistencyGradient g;
    loss(field, occ, &g);
    std::uniform_int_distribution<int> py(2, field.height() - 3), px(2, field.width() - 3);
    const double h = 1e-4;
    double worst = 0.0;
    for (int s = 0; s < 100; ++s) {
        const int y = py(rng), x = px(rng);
        for (int c = 0; c < field.channels(); ++c) {
            DenseMap plus = field, minus = field;
            plus.at(y, x, c) += h;
            minus.at(y, x, c) -= h;
            const double fd = (loss(plus, occ, nullptr) - loss(minus, occ, nullptr)) / (2 * h);
            const double an = g.field.at(y, x, c);
            worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
        }
    }
    return worst;
}

Outcome gradient_checks()
{
    std::mt19937_64 rng(7);
    const int h = 32, w = 40;
    const DenseMap i1 = smooth_image(h, w, 3, rng), i2 = smooth_image(h, w, 3, rng);
    const SegPosterior s1 = random_posterior(h, w, 5, rng), s2 = random_posterior(h, w, 5, rng);
    const OcclusionMask occ(random_map(h, w, 1, rng, 0.1, 0.9));
    double worst = 0.0;
    for (FieldMode mode : {FieldMode::Flow, FieldMode::Disparity}) {
        const DenseMap field =
            mode == FieldMode::Flow ? interior_field(h, w, 2, rng, -2, 1) : interior_field(h, w, 1, rng, 0, 1);
        worst = std::max(worst, worst_gradient_error(
                                    [&](const DenseMap& f, const OcclusionMask& o, ConsistencyGradient* g) {
                                        return photometric_consistency(i1, i2, f, o, mode, g);
                                    },
                                    field, occ, rng));
        worst = std::max(worst, worst_gradient_error(
                                    [&](const DenseMap& f, const OcclusionMask& o, ConsistencyGradient* g) {
                                        return semantic_consistency(s1, s2, f, o, mode, g);
                                    },
                                    field, occ, rng));
    }
    return {worst <= 1e-4,
            fmt("max relative error %.2e for L_PC and L_SC, flow and disparity, 100 pixels each", worst)};
}

// ---------------------------------------------------------------- 8

Outcome cost_volumes()
{
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> hs(3, 9), ws(3, 12), cs(1, 5), rs(0, 4);
    double worst = 0.0;
    bool slice_exact = true;
    for (int t = 0; t < 50; ++t) {
        const int h = hs(rng), w = ws(rng), c = cs(rng), k = rs(rng);
        const DenseMap f1 = random_map(h, w, c, rng, -1, 1), f2 = random_map(h, w, c, rng, -1, 1);
        const CostVolume v2 = correlation_2d(f1, f2, k), v1 = correlation_1d(f1, f2, k);
        const int n = 2 * k + 1;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                for (int dy = -k; dy <= k; ++dy) {
                    for (int dx = -k; dx <= k; ++dx) {
                        double s = 0.0;
                        if (y + dy >= 0 && y + dy < h && x + dx >= 0 && x + dx < w) {
                            for (int ch = 0; ch < c; ++ch) s += f1.at(y, x, ch) * f2.at(y + dy, x + dx, ch);
                            s /= c;
                        }
                        worst = std::max(worst, std::abs(s - v2.scores.at(y, x, (dy + k) * n + dx + k)));
                        if (dy == 0) {
                            worst = std::max(worst, std::abs(s - v1.scores.at(y, x, dx + k)));
                            slice_exact &= v1.scores.at(y, x, dx + k) == v2.scores.at(y, x, k * n + dx + k);
                        }
                    }
                }
            }
        }
    }
    return {worst <= 1e-6 && slice_exact,
            fmt("max deviation from brute force %.2e over 50 tensors, 1D slice %s", worst,
                slice_exact ? "identical" : "differs")};
}

// ---------------------------------------------------------------- 9

Outcome metric_truth_tables()
{
    struct Case {
        double gt, err;
        bool outlier;
    };
    // error vs 3 px and vs 5% of |gt|: both, only one, neither, and the boundaries
    const Case cases[] = {
        {10.0, 2.9, false}, {10.0, 3.5, true},   {100.0, 4.0, false}, {100.0, 6.0, true},
        {60.0, 3.0, false}, {40.0, 3.0, false},  {80.0, 4.0, false},  {80.0, 4.5, true},
        {0.0, 3.01, true},  {0.0, 2.99, false},  {1000.0, 49.0, false}, {1000.0, 51.0, true},
    };
    int mismatches = 0;
    for (const Case& c : cases) {
        // error orthogonal to the flow keeps both magnitudes exact at the boundaries
        FlowField gt(1, 1, c.gt, 0.0);
        FlowField pred(1, 1, c.gt, c.err);
        const double want = c.outlier ? 1.0 : 0.0;
        if (flow_outlier_rate(pred, gt, ValidityMask(1, 1)) != want) ++mismatches;
        const DisparityMap dg(1, 1, c.gt), dp(1, 1, c.gt + c.err);
        if (disparity_outlier_rate(dp, dg, ValidityMask(1, 1)) != want) ++mismatches;
    }
    // all cases at once: the rate is the enumerated fraction
    FlowField gt(1, std::size(cases)), pred(1, std::size(cases));
    int expected_bad = 0;
    for (std::size_t i = 0; i < std::size(cases); ++i) {
        gt.at(0, i, 0) = cases[i].gt;
        pred.at(0, i, 0) = cases[i].gt + cases[i].err;
        expected_bad += cases[i].outlier;
    }
    const bool batch = flow_outlier_rate(pred, gt, ValidityMask(1, std::size(cases))) ==
                       static_cast<double>(expected_bad) / std::size(cases);

    std::mt19937_64 rng(9);
    std::bernoulli_distribution coin(0.3), keep(0.8);
    int sf_violations = 0;
    for (int t = 0; t < 100; ++t) {
        ValidityMask d1(12, 15), d2(12, 15), fl(12, 15), valid(12, 15);
        for (std::size_t p = 0; p < valid.pixels(); ++p) {
            d1.values()[p] = coin(rng);
            d2.values()[p] = coin(rng);
            fl.values()[p] = coin(rng);
            valid.values()[p] = keep(rng);
        }
        auto rate = [&](const ValidityMask& f) {
            int n = 0, bad = 0;
            for (std::size_t p = 0; p < valid.pixels(); ++p) {
                if (valid.values()[p] == 0.0) continue;
                ++n;
                bad += f.values()[p] != 0.0;
            }
            return static_cast<double>(bad) / n;
        };
        int n = 0, bad = 0;
        for (std::size_t p = 0; p < valid.pixels(); ++p) {
            if (valid.values()[p] == 0.0) continue;
            ++n;
            bad += d1.values()[p] != 0.0 || d2.values()[p] != 0.0 || fl.values()[p] != 0.0;
        }
        const double sf = scene_flow_outlier_rate(d1, d2, fl, valid);
        if (sf < std::max({rate(d1), rate(d2), rate(fl)}) || sf != static_cast<double>(bad) / n) ++sf_violations;
    }
    return {mismatches == 0 && batch && sf_violations == 0,
            fmt("%d/%zu threshold cases wrong, batch rate %s, SF-all violations %d/100", mismatches,
                2 * std::size(cases), batch ? "exact" : "wrong", sf_violations)};
}

// ---------------------------------------------------------------- 10

std::vector<char> slurp(const fs::path& p)
{
    std::ifstream f(p, std::ios::binary);
    return std::vector<char>(std::istreambuf_iterator<char>(f), {});
}

Outcome io_bit_exactness(const fs::path& dir)
{
    std::mt19937_64 rng(10);
    int checked = 0, failed = 0;
    auto same = [&](const fs::path& a, const fs::path& b, bool values_equal) {
        ++checked;
        if (!values_equal || slurp(a) != slurp(b) || slurp(a).empty()) ++failed;
    };
    for (int t = 0; t < 5; ++t) {
        std::uniform_int_distribution<int> q(-30000, 30000), qd(1, 65535);
        std::bernoulli_distribution keep(0.85);
        const int h = 20 + 7 * t, w = 31 + 5 * t;

        FlowField f(h, w);
        ValidityMask fv(h, w);
        for (double& v : f.values()) v = q(rng) / 64.0;
        for (double& v : fv.values()) v = keep(rng);
        write_kitti_flow_png((dir / "f1.png").string(), f, fv);
        const FlowWithValidity fr = read_kitti_flow_png((dir / "f1.png").string());
        write_kitti_flow_png((dir / "f2.png").string(), fr.flow, fr.valid);
        same(dir / "f1.png", dir / "f2.png",
             std::ranges::equal(fr.flow.values(), f.values()) && std::ranges::equal(fr.valid.values(), fv.values()));

        DisparityMap d(h, w);
        ValidityMask dv(h, w);
        for (std::size_t p = 0; p < d.pixels(); ++p) {
            dv.values()[p] = keep(rng);
            d.values()[p] = dv.values()[p] != 0.0 ? qd(rng) / 256.0 : 0.0;
        }
        write_kitti_disp_png((dir / "d1.png").string(), d, dv);
        const DisparityWithValidity dr = read_kitti_disp_png((dir / "d1.png").string());
        write_kitti_disp_png((dir / "d2.png").string(), dr.disparity, dr.valid);
        same(dir / "d1.png", dir / "d2.png",
             std::ranges::equal(dr.disparity.values(), d.values()) && std::ranges::equal(dr.valid.values(), dv.values()));

        for (int c : {1, 2, 3, 5}) {
            DenseMap m = random_map(h, w, c, rng, -1e4, 1e4);
            for (double& v : m.values()) v = static_cast<float>(v);
            for (Endian e : {Endian::Little, Endian::Big}) {
                write_pfm((dir / "p1.pfm").string(), m, e);
                const DenseMap r = read_pfm((dir / "p1.pfm").string());
                write_pfm((dir / "p2.pfm").string(), r, e);
                same(dir / "p1.pfm", dir / "p2.pfm", std::ranges::equal(r.values(), m.values()));
            }
        }
    }
    return {failed == 0, fmt("%d/%d round trips byte-identical (KITTI flow, KITTI disparity, PFM)", checked - failed,
                             checked)};
}

// ---------------------------------------------------------------- 11

int run_cli(const std::string& args, const fs::path& log)
{
    const std::string cmd = std::string("\"") + SENSEFLOW_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome end_to_end(const fs::path& dir)
{
    const fs::path gt = dir / "gt", refined = dir / "refined";
    const int s = run_cli("synth --out \"" + gt.string() + "\" --ego 0.01,-0.02,0.005,0.1,0.05,0.4 --seed 11",
                          dir / "synth.log");
    const int r = s != 0 ? -1
                         : run_cli("refine --manifest \"" + (gt / "manifest.txt").string() + "\" --out \"" +
                                       refined.string() + "\"",
                                   dir / "refine.log");
    const int m = r != 0 ? -1
                         : run_cli("metrics --pred \"" + (refined / "manifest.txt").string() + "\" --gt \"" +
                                       (gt / "manifest.txt").string() + "\"",
                                   dir / "metrics.csv");
    double bg_fl = -1.0;
    if (m == 0) {
        std::ifstream f(dir / "metrics.csv");
        std::string line;
        while (std::getline(f, line)) {
            if (line.rfind("fl,", 0) != 0) continue;
            std::stringstream ls(line);
            std::string cell;
            for (int i = 0; i <= 9; ++i) std::getline(ls, cell, ',');
            bg_fl = std::stod(cell);
        }
    }
    return {s == 0 && r == 0 && m == 0 && bg_fl >= 0.0 && bg_fl <= 0.01,
            fmt("exit codes synth %d, refine %d, metrics %d; background Fl %.4f%%", s, r, m, 100.0 * bg_fl)};
}

} // namespace

int main()
{
    const fs::path dir = fs::temp_directory_path() / ("senseflow_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(dir);

    int failures = 0;
    auto report = [&](int id, const char* name, const Outcome& o) {
        std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
        std::fflush(stdout);
        failures += !o.pass;
    };
    auto guarded = [&](const std::function<Outcome()>& fn) {
        try {
            return fn();
        } catch (const std::exception& e) {
            return Outcome{false, std::string("exception: ") + e.what()};
        }
    };

    report(1, "jacobian fidelity", guarded(jacobian_fidelity));

    EgoStats ego;
    RobustStats robust;
    RuntimeStats runtime;
    const Outcome scenes = guarded([&] {
        ego_trials(ego, robust, runtime);
        return Outcome{true, {}};
    });
    report(2, "ego-motion recovery",
           scenes.pass ? Outcome{ego.failures == 0,
                                 fmt("%d/20 trials failed; worst error %.2e rad, %.2e m; at most %d iterations",
                                     ego.failures, ego.worst_rot, ego.worst_t, ego.max_iterations)}
                       : scenes);
    report(3, "huber robustness",
           scenes.pass ? Outcome{robust.failures == 0,
                                 fmt("%d/20 trials failed; worst Huber error %.2e rad, %.2e m; least squares at least "
                                     "%.1fx worse",
                                     robust.failures, robust.worst_huber_rot, robust.worst_huber_t, robust.min_ratio)}
                       : scenes);
    report(4, "refinement helps", guarded(refinement_helps));
    report(5, "runtime",
           scenes.pass ? Outcome{runtime.gn <= 0.2 && runtime.refine <= 1.0,
                                 fmt("gn_solve %.3f s, refine_scene_flow %.3f s on 375x1242, one thread", runtime.gn,
                                     runtime.refine)}
                       : scenes);
    report(6, "loss closed forms", guarded(loss_fixed_points));
    report(7, "gradient checks", guarded(gradient_checks));
    report(8, "cost volumes", guarded(cost_volumes));
    report(9, "metric truth tables", guarded(metric_truth_tables));
    report(10, "io bit-exactness", guarded([&] { return io_bit_exactness(dir); }));
    report(11, "end-to-end smoke", guarded([&] { return end_to_end(dir); }));

    fs::remove_all(dir);
    std::printf("%d/11 criteria passed\n", 11 - failures);
    return failures == 0 ? 0 : 1;
}
