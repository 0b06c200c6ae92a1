#pragma once

#include <map>
#include <optional>
#include <string>

#include "senseflow/camera.hpp"
#include "senseflow/dense_map.hpp"
#include "senseflow/loss.hpp"
#include "senseflow/rigid.hpp"

namespace senseflow {

// KITTI flow PNG: 16-bit RGB, u = (R - 2^15) / 64, v = (G - 2^15) / 64,
// valid = B != 0.
struct FlowWithValidity {
    FlowField flow;
    ValidityMask valid;
};
FlowWithValidity read_kitti_flow_png(const std::string& path);
void write_kitti_flow_png(const std::string& path, const FlowField& flow, const ValidityMask& valid);

// KITTI disparity PNG: 16-bit gray, d = pixel / 256, 0 = invalid. Invalid
// pixels read back as disparity 0.
DisparityWithValidity read_kitti_disp_png(const std::string& path);
void write_kitti_disp_png(const std::string& path, const DisparityMap& disp, const ValidityMask& valid);

// Label maps as 8-bit gray PNG.
DenseMap read_label_png(const std::string& path);
void write_label_png(const std::string& path, const DenseMap& labels);

// PFM with float32 samples: "Pf" (1 channel), "PF" (3 channels) and "Pc"
// (any count, header line "W H C"). Rows are stored bottom-up; a negative
// scale means little-endian.
enum class Endian { Little, Big };
DenseMap read_pfm(const std::string& path);
void write_pfm(const std::string& path, const DenseMap& m, Endian endian = Endian::Little);

// One line: fx fy cx cy baseline.
StereoCamera read_intrinsics(const std::string& path);
void write_intrinsics(const std::string& path, const StereoCamera& cam);

// "key = value" lines; keys are the LossWeights member names, omega takes a
// comma-separated list, penalties take l2norm / l2squared / smoothl1.
LossWeights read_loss_weights(const std::string& path);

enum class FileFormat { Pfm, KittiFlowPng, KittiDispPng, LabelPng, Intrinsics };
const char* format_name(FileFormat f);
FileFormat parse_format(const std::string& name);

struct ManifestEntry {
    FileFormat format;
    std::string path; // resolved against the manifest's directory
};

// Text manifest, one "<role> <format> <path>" per line, '#' comments.
// The role "intrinsics" names the camera file.
struct FileBundleManifest {
    std::map<std::string, ManifestEntry> entries;

    bool has(const std::string& role) const { return entries.count(role) != 0; }
    const ManifestEntry& entry(const std::string& role) const;
    std::optional<std::string> intrinsics() const;
};

// Throws FormatError for malformed lines or files that do not exist.
FileBundleManifest read_manifest(const std::string& path);
// Paths are written relative to the manifest's directory when they lie inside it.
void write_manifest(const std::string& path, const FileBundleManifest& manifest);

} // namespace senseflow
