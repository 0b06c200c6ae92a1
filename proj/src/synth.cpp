#include "senseflow/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include <Eigen/Geometry>

#include "senseflow/error.hpp"
#include "senseflow/parallel.hpp"

namespace senseflow {

namespace {

constexpr int kSkyLabel = 10;
constexpr int kTextureWaves = 4;
constexpr double kDepthMatch = 1e-7; // relative depth agreement for visibility tests
constexpr double kBorderSlack = 1e-9; // pixels; absorbs round-off of points reprojected onto the border

std::uint64_t splitmix64(std::uint64_t& state)
{
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double uniform01(std::uint64_t& state) { return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53; }

// Band-limited texture: a few plane waves in the plane's own 2D basis.
struct Texture {
    Vec3 e1, e2;
    double kx[kTextureWaves], ky[kTextureWaves], phase[kTextureWaves], amp[kTextureWaves];

    Texture(const PlaneSpec& plane, std::uint64_t seed)
    {
        const Vec3 n = plane.normal.normalized();
        const Vec3 helper = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
        e1 = n.cross(helper).normalized();
        e2 = n.cross(e1);
        std::uint64_t state = seed;
        const double two_pi = 2.0 * std::numbers::pi;
        for (int k = 0; k < kTextureWaves; ++k) {
            // wavelengths between scale and 4 * scale
            const double wavelength = plane.texture_scale * (1.0 + 3.0 * uniform01(state));
            const double angle = two_pi * uniform01(state);
            kx[k] = two_pi / wavelength * std::cos(angle);
            ky[k] = two_pi / wavelength * std::sin(angle);
            phase[k] = two_pi * uniform01(state);
            amp[k] = 0.1 * (0.5 + 0.5 * uniform01(state));
        }
    }

    double operator()(const Vec3& p) const
    {
        const double s = e1.dot(p);
        const double t = e2.dot(p);
        double v = 0.5;
        for (int k = 0; k < kTextureWaves; ++k) v += amp[k] * std::sin(kx[k] * s + ky[k] * t + phase[k]);
        return v;
    }
};

struct Hit {
    int plane = -1;
    double depth = std::numeric_limits<double>::infinity();
    Vec3 rest = Vec3::Zero(); // point in the plane's frame-1 coordinates
};

// A camera placement: per plane, the transform from plane rest coordinates
// into this camera.
struct View {
    std::vector<RigidTransform> to_camera;
    std::vector<RigidTransform> to_rest;
    std::vector<Vec3> normal;
    std::vector<double> offset;
};

View make_view(const SceneSpec& spec, const RigidTransform& camera_from_frame1, bool second_frame)
{
    View v;
    for (const PlaneSpec& p : spec.planes) {
        const RigidTransform M = second_frame ? camera_from_frame1 * p.motion : camera_from_frame1;
        const Vec3 n = M.rotation * p.normal;
        const double o = p.offset + n.dot(M.translation);
        if (std::abs(o) < 1e-9 * p.normal.norm()) {
            throw DomainError("render_scene: plane passes through a camera center (degenerate view)");
        }
        v.to_camera.push_back(M);
        v.to_rest.push_back(M.inverse());
        v.normal.push_back(n);
        v.offset.push_back(o);
    }
    return v;
}

Hit raycast(const SceneSpec& spec, const View& view, double x, double y)
{
    const StereoCamera& cam = spec.camera;
    const Vec3 ray((x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0);
    Hit best;
    for (std::size_t i = 0; i < spec.planes.size(); ++i) {
        const double denom = view.normal[i].dot(ray);
        if (std::abs(denom) < 1e-12) continue;
        const double z = view.offset[i] / denom;
        if (!(z > 1e-9) || z >= best.depth) continue;
        const Vec3 rest = view.to_rest[i].apply(z * ray);
        if (!spec.planes[i].bounds.contains(rest)) continue;
        best.plane = static_cast<int>(i);
        best.depth = z;
        best.rest = rest;
    }
    return best;
}

bool visible_at(const SceneSpec& spec, const View& view, const Projection& q, double depth)
{
    const double x = std::clamp(q.pixel.x, 0.0, spec.width - 1.0);
    const double y = std::clamp(q.pixel.y, 0.0, spec.height - 1.0);
    if (std::abs(x - q.pixel.x) > kBorderSlack || std::abs(y - q.pixel.y) > kBorderSlack) return false;
    const Hit h = raycast(spec, view, x, y);
    return h.plane >= 0 && std::abs(h.depth - depth) <= kDepthMatch * depth;
}

void render_image(const SceneSpec& spec, const View& view, const std::vector<Texture>& tex, DenseMap& image,
                  DisparityMap* disp, ValidityMask* valid)
{
    parallel_for_chunks(static_cast<std::size_t>(spec.height), [&](std::size_t row) {
        const int y = static_cast<int>(row);
        for (int x = 0; x < spec.width; ++x) {
            const Hit h = raycast(spec, view, x, y);
            if (h.plane < 0) continue;
            image.at(y, x) = tex[h.plane](h.rest);
            if (disp != nullptr) {
                disp->at(y, x) = spec.camera.disparity_scale() / h.depth;
                valid->at(y, x) = 1.0;
            }
        }
    });
}

std::vector<double> parse_list(const std::string& s, std::size_t expected, const std::string& key)
{
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw FormatError("scene file: bad number '" + item + "' in " + key);
        }
    }
    if (out.size() != expected) {
        throw FormatError("scene file: " + key + " needs " + std::to_string(expected) + " values");
    }
    return out;
}

RigidTransform transform_from(const std::vector<double>& v)
{
    return make_transform(Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5]));
}

std::vector<double> transform_values(const RigidTransform& T)
{
    const Twist log = se3_log(T);
    return {log[0], log[1], log[2], T.translation.x(), T.translation.y(), T.translation.z()};
}

} // namespace

void SceneSpec::validate() const
{
    if (height < 1 || width < 1) throw DomainError("scene file: image size must be positive");
    camera.validate();
    if (planes.empty()) throw DomainError("scene file: no planes");
    for (const PlaneSpec& p : planes) {
        if (!(p.normal.norm() > 0.0) || !p.normal.allFinite() || !std::isfinite(p.offset)) {
            throw DomainError("scene file: degenerate plane normal");
        }
        if (!(p.texture_scale > 0.0)) throw DomainError("scene file: texture scale must be positive");
    }
}

SceneBundle render_scene(const SceneSpec& spec)
{
    spec.validate();
    const int h = spec.height;
    const int w = spec.width;
    const StereoCamera& cam = spec.camera;

    std::vector<Texture> tex;
    for (std::size_t i = 0; i < spec.planes.size(); ++i) {
        const PlaneSpec& p = spec.planes[i];
        tex.emplace_back(p, p.texture_seed.value_or(spec.seed * 1000003ULL + i));
    }

    RigidTransform to_right;
    to_right.translation = Vec3(-cam.baseline, 0.0, 0.0);
    const View left1 = make_view(spec, RigidTransform::identity(), false);
    const View right1 = make_view(spec, to_right, false);
    const View left2 = make_view(spec, spec.ego, true);
    const View right2 = make_view(spec, to_right * spec.ego, true);

    SceneBundle b{
        DenseMap(h, w, 1),      DenseMap(h, w, 1),       DenseMap(h, w, 1),         DenseMap(h, w, 1),
        DisparityMap(h, w),     DisparityMap(h, w),      DisparityMap(h, w),        FlowField(h, w),
        OcclusionMask(h, w),    OcclusionMask(h, w),     DenseMap(h, w, 1, kSkyLabel), ValidityMask(h, w, 0.0),
        ValidityMask(h, w, 0.0), ValidityMask(h, w, 0.0), ValidityMask(h, w, 0.0),
    };

    parallel_for_chunks(static_cast<std::size_t>(h), [&](std::size_t row) {
        const int y = static_cast<int>(row);
        for (int x = 0; x < w; ++x) {
            const Hit hit = raycast(spec, left1, x, y);
            if (hit.plane < 0) continue;
            const PlaneSpec& plane = spec.planes[hit.plane];
            const double d1 = cam.disparity_scale() / hit.depth;
            b.image1_left.at(y, x) = tex[hit.plane](hit.rest);
            b.disp1.at(y, x) = d1;
            b.valid_disp1.at(y, x) = 1.0;
            b.labels.at(y, x) = plane.label;
            b.moving.at(y, x) = plane.motion.rotation.isIdentity(0.0) && plane.motion.translation.isZero(0.0) ? 0.0 : 1.0;

            // Left-right visibility within frame 1: the right view sees the
            // point at (x - d, y).
            const Projection right = {{x - d1, double(y)}, d1};
            b.occ_disp.at(y, x) = visible_at(spec, right1, right, hit.depth) ? 0.0 : 1.0;

            const Vec3 p2 = left2.to_camera[hit.plane].apply(hit.rest);
            if (!(p2.z() > 0.0)) {
                b.occ_flow.at(y, x) = 1.0;
                continue;
            }
            const Projection q = project(p2, cam);
            b.flow.at(y, x, 0) = q.pixel.x - x;
            b.flow.at(y, x, 1) = q.pixel.y - y;
            b.disp2_warped.at(y, x) = q.disparity;
            b.valid_flow.at(y, x) = 1.0;
            b.occ_flow.at(y, x) = visible_at(spec, left2, q, p2.z()) ? 0.0 : 1.0;
        }
    });

    render_image(spec, right1, tex, b.image1_right, nullptr, nullptr);
    render_image(spec, left2, tex, b.image2_left, &b.disp2, &b.valid_disp2);
    render_image(spec, right2, tex, b.image2_right, nullptr, nullptr);
    return b;
}

SceneSpec parse_scene_spec(std::istream& in)
{
    SceneSpec spec;
    spec.planes.clear();
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        auto fail = [&](const std::string& why) {
            throw FormatError("scene file line " + std::to_string(lineno) + ": " + why);
        };
        if (key == "size") {
            if (!(ls >> spec.height >> spec.width)) fail("size needs <height> <width>");
        } else if (key == "camera") {
            StereoCamera& c = spec.camera;
            if (!(ls >> c.fx >> c.fy >> c.cx >> c.cy >> c.baseline)) fail("camera needs fx fy cx cy baseline");
        } else if (key == "ego") {
            std::vector<double> v(6);
            for (double& x : v) {
                if (!(ls >> x)) fail("ego needs 6 numbers");
            }
            spec.ego = transform_from(v);
        } else if (key == "seed") {
            if (!(ls >> spec.seed)) fail("seed needs an unsigned integer");
        } else if (key == "plane") {
            PlaneSpec p;
            double nx, ny, nz;
            if (!(ls >> nx >> ny >> nz >> p.offset)) fail("plane needs <nx> <ny> <nz> <offset>");
            p.normal = Vec3(nx, ny, nz);
            std::string opt;
            while (ls >> opt) {
                const auto eq = opt.find('=');
                if (eq == std::string::npos) fail("expected key=value, got '" + opt + "'");
                const std::string k = opt.substr(0, eq);
                const std::string v = opt.substr(eq + 1);
                try {
                    if (k == "label") {
                        p.label = std::stoi(v);
                    } else if (k == "texture") {
                        p.texture_seed = std::stoull(v);
                    } else if (k == "scale") {
                        p.texture_scale = std::stod(v);
                    } else if (k == "bounds") {
                        const auto b = parse_list(v, 6, k);
                        p.bounds = {b[0], b[1], b[2], b[3], b[4], b[5]};
                    } else if (k == "motion") {
                        p.motion = transform_from(parse_list(v, 6, k));
                    } else {
                        fail("unknown plane option '" + k + "'");
                    }
                } catch (const std::invalid_argument&) {
                    fail("bad value for " + k);
                } catch (const std::out_of_range&) {
                    fail("value out of range for " + k);
                }
            }
            spec.planes.push_back(p);
        } else {
            fail("unknown directive '" + key + "'");
        }
    }
    spec.validate();
    return spec;
}

SceneSpec load_scene_spec(const std::string& path)
{
    std::ifstream f(path);
    if (!f) throw FormatError("cannot open scene file " + path);
    return parse_scene_spec(f);
}

void write_scene_spec(std::ostream& out, const SceneSpec& spec)
{
    out << std::setprecision(17);
    out << "size " << spec.height << ' ' << spec.width << '\n';
    const StereoCamera& c = spec.camera;
    out << "camera " << c.fx << ' ' << c.fy << ' ' << c.cx << ' ' << c.cy << ' ' << c.baseline << '\n';
    out << "ego";
    for (double v : transform_values(spec.ego)) out << ' ' << v;
    out << "\nseed " << spec.seed << '\n';
    for (const PlaneSpec& p : spec.planes) {
        out << "plane " << p.normal.x() << ' ' << p.normal.y() << ' ' << p.normal.z() << ' ' << p.offset
            << " label=" << p.label << " scale=" << p.texture_scale;
        if (p.texture_seed) out << " texture=" << *p.texture_seed;
        const Bounds& b = p.bounds;
        out << " bounds=" << b.x_min << ',' << b.x_max << ',' << b.y_min << ',' << b.y_max << ',' << b.z_min << ','
            << b.z_max;
        const auto m = transform_values(p.motion);
        out << " motion=" << m[0] << ',' << m[1] << ',' << m[2] << ',' << m[3] << ',' << m[4] << ',' << m[5] << '\n';
    }
}

SceneSpec kitti_like_scene(const RigidTransform& ego, std::uint64_t seed)
{
    SceneSpec spec;
    spec.ego = ego;
    spec.seed = seed;
    PlaneSpec ground;
    ground.normal = Vec3(0.0, 1.0, 0.0);
    ground.offset = 1.65;
    ground.label = 0; // road
    ground.texture_scale = 0.4;
    ground.bounds.z_max = 40.0;
    PlaneSpec backdrop;
    backdrop.normal = Vec3(0.0, 0.0, 1.0);
    backdrop.offset = 40.0;
    backdrop.label = 2; // building
    backdrop.texture_scale = 3.0;
    spec.planes = {ground, backdrop};
    return spec;
}

} // namespace senseflow
