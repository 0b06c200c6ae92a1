#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "senseflow/camera.hpp"
#include "senseflow/dense_map.hpp"
#include "senseflow/se3.hpp"

namespace senseflow {

// Axis-aligned limits of a plane patch in its frame-1 (rest) coordinates.
struct Bounds {
    double x_min = -1e30, x_max = 1e30;
    double y_min = -1e30, y_max = 1e30;
    double z_min = -1e30, z_max = 1e30;

    bool contains(const Vec3& p) const
    {
        return p.x() >= x_min && p.x() <= x_max && p.y() >= y_min && p.y() <= y_max && p.z() >= z_min &&
               p.z() <= z_max;
    }
};

// Plane normal . X = offset, in frame-1 left camera coordinates.
struct PlaneSpec {
    Vec3 normal = Vec3::UnitZ();
    double offset = 10.0;
    int label = 0;
    std::optional<std::uint64_t> texture_seed; // defaults to a function of the scene seed
    double texture_scale = 1.0;                // shortest texture wavelength in meters
    Bounds bounds;
    RigidTransform motion; // object motion in frame-1 coordinates, applied before ego-motion
};

struct SceneSpec {
    int height = 375;
    int width = 1242;
    StereoCamera camera{721.5377, 721.5377, 609.5593, 172.854, 0.5372};
    RigidTransform ego; // frame-1 camera coordinates -> frame-2 camera coordinates
    std::uint64_t seed = 0;
    std::vector<PlaneSpec> planes;

    void validate() const;
};

// Ground truth and images of one rendered scene. Frame-2 maps with a "2"
// suffix live on the frame-2 grid except disp2_warped, which holds the
// frame-2 disparity of each frame-1 pixel.
struct SceneBundle {
    DenseMap image1_left;
    DenseMap image2_left;
    DenseMap image1_right;
    DenseMap image2_right;
    DisparityMap disp1;
    DisparityMap disp2;
    DisparityMap disp2_warped;
    FlowField flow;
    OcclusionMask occ_flow;
    OcclusionMask occ_disp;
    DenseMap labels;
    ValidityMask valid_disp1;
    ValidityMask valid_disp2;
    ValidityMask valid_flow; // also gates disp2_warped
    ValidityMask moving;     // pixels on planes with their own motion
};

SceneBundle render_scene(const SceneSpec& spec);

// Text scene description, one directive per line ('#' starts a comment):
//   size <height> <width>
//   camera <fx> <fy> <cx> <cy> <baseline>
//   ego <wx> <wy> <wz> <tx> <ty> <tz>          axis-angle (rad) and translation (m)
//   seed <n>
//   plane <nx> <ny> <nz> <offset> [label=<id>] [texture=<seed>] [scale=<m>]
//         [bounds=<xmin>,<xmax>,<ymin>,<ymax>,<zmin>,<zmax>] [motion=<wx>,<wy>,<wz>,<tx>,<ty>,<tz>]
SceneSpec parse_scene_spec(std::istream& in);
SceneSpec load_scene_spec(const std::string& path);
void write_scene_spec(std::ostream& out, const SceneSpec& spec);

// Ground plane 1.65 m below the camera plus a textured backdrop, KITTI-sized.
SceneSpec kitti_like_scene(const RigidTransform& ego, std::uint64_t seed = 0);

} // namespace senseflow
