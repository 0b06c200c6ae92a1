#include "senseflow/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <vector>

#include "senseflow/error.hpp"

namespace senseflow {

namespace {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- PNG

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const std::string& path, const char* mode)
{
    File f(std::fopen(path.c_str(), mode));
    if (!f) throw FormatError("cannot open " + path);
    return f;
}

struct PngMessage {
    char text[256] = {};
};

void png_fail(png_structp png, png_const_charp msg)
{
    auto* m = static_cast<PngMessage*>(png_get_error_ptr(png));
    std::snprintf(m->text, sizeof m->text, "%s", msg);
    png_longjmp(png, 1);
}

void png_quiet(png_structp, png_const_charp) {}

struct PngImage {
    int width = 0;
    int height = 0;
    int bit_depth = 0;
    int channels = 0;
    std::vector<std::uint8_t> bytes; // rows top-down, samples big-endian as stored
};

// The setjmp frames below touch only trivially destructible locals.
bool png_read_header(png_structp png, png_infop info, std::FILE* f, PngImage* img)
{
    if (setjmp(png_jmpbuf(png))) return false;
    png_init_io(png, f);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    img->width = static_cast<int>(png_get_image_width(png, info));
    img->height = static_cast<int>(png_get_image_height(png, info));
    img->bit_depth = png_get_bit_depth(png, info);
    img->channels = color == PNG_COLOR_TYPE_GRAY ? 1 : color == PNG_COLOR_TYPE_RGB ? 3 : 0;
    png_set_interlace_handling(png);
    png_read_update_info(png, info);
    return true;
}

bool png_read_rows(png_structp png, png_infop info, png_bytep* rows)
{
    if (setjmp(png_jmpbuf(png))) return false;
    png_read_image(png, rows);
    png_read_end(png, info);
    return true;
}

PngImage read_png(const std::string& path, int bit_depth, int channels)
{
    File f = open_file(path, "rb");
    std::uint8_t sig[8];
    if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw FormatError(path + ": not a PNG file");
    }
    PngMessage msg;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &msg, png_fail, png_quiet);
    if (png == nullptr) throw FormatError("libpng initialisation failed");
    png_infop info = png_create_info_struct(png);
    if (info == nullptr) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw FormatError("libpng initialisation failed");
    }
    png_set_sig_bytes(png, 8);

    PngImage img;
    auto fail = [&](const std::string& why) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError(path + ": " + why);
    };
    if (!png_read_header(png, info, f.get(), &img)) fail(msg.text);
    if (img.bit_depth != bit_depth || img.channels != channels) {
        fail("expected " + std::to_string(bit_depth) + "-bit " + std::to_string(channels) + "-channel PNG, got " +
             std::to_string(img.bit_depth) + "-bit " + (img.channels == 0 ? "palette/alpha" : std::to_string(img.channels) + "-channel"));
    }
    const std::size_t stride = png_get_rowbytes(png, info);
    img.bytes.assign(stride * static_cast<std::size_t>(img.height), 0);
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y) rows[static_cast<std::size_t>(y)] = img.bytes.data() + stride * y;
    if (!png_read_rows(png, info, rows.data())) fail(msg.text);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

bool png_write_all(png_structp png, png_infop info, std::FILE* f, const PngImage* img, png_bytep* rows)
{
    if (setjmp(png_jmpbuf(png))) return false;
    png_init_io(png, f);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img->width), static_cast<png_uint_32>(img->height),
                 img->bit_depth, img->channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    png_write_image(png, rows);
    png_write_end(png, nullptr);
    return true;
}

void write_png(const std::string& path, PngImage& img)
{
    if (img.width < 1 || img.height < 1) throw DomainError(path + ": cannot write an empty image");
    File f = open_file(path, "wb");
    PngMessage msg;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &msg, png_fail, png_quiet);
    if (png == nullptr) throw FormatError("libpng initialisation failed");
    png_infop info = png_create_info_struct(png);
    if (info == nullptr) {
        png_destroy_write_struct(&png, nullptr);
        throw FormatError("libpng initialisation failed");
    }
    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels * (img.bit_depth / 8);
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y) rows[static_cast<std::size_t>(y)] = img.bytes.data() + stride * y;
    const bool ok = png_write_all(png, info, f.get(), &img, rows.data());
    png_destroy_write_struct(&png, &info);
    if (!ok) throw FormatError(path + ": " + msg.text);
    if (std::fflush(f.get()) != 0) throw FormatError(path + ": write failed");
}

std::uint16_t get16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] << 8 | p[1]); }

void put16(std::uint8_t* p, std::uint16_t v)
{
    p[0] = static_cast<std::uint8_t>(v >> 8);
    p[1] = static_cast<std::uint8_t>(v & 0xFF);
}

std::uint16_t quantize16(double v, double lo, const std::string& what)
{
    if (!std::isfinite(v)) throw DomainError(what + ": non-finite value");
    return static_cast<std::uint16_t>(std::clamp(std::nearbyint(v), lo, 65535.0));
}

// ---------------------------------------------------------------- PFM

std::string next_token(std::istream& in, const std::string& path)
{
    std::string tok;
    if (!(in >> tok)) throw FormatError(path + ": truncated PFM header");
    return tok;
}

int parse_dim(const std::string& tok, const std::string& path)
{
    std::size_t used = 0;
    long v = 0;
    try {
        v = std::stol(tok, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != tok.size() || v < 1 || v > (1L << 24)) throw FormatError(path + ": bad PFM dimension '" + tok + "'");
    return static_cast<int>(v);
}

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& s, const std::string& what)
{
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size()) throw FormatError(what + ": bad number '" + s + "'");
    return v;
}

Penalty parse_penalty(const std::string& s)
{
    if (s == "l2norm") return Penalty::L2Norm;
    if (s == "l2squared") return Penalty::L2Squared;
    if (s == "smoothl1") return Penalty::SmoothL1;
    throw FormatError("unknown penalty '" + s + "'");
}

bool parse_bool(const std::string& s)
{
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw FormatError("expected true/false, got '" + s + "'");
}

} // namespace

FlowWithValidity read_kitti_flow_png(const std::string& path)
{
    const PngImage img = read_png(path, 16, 3);
    FlowWithValidity out{FlowField(img.height, img.width), ValidityMask(img.height, img.width, 0.0)};
    for (std::size_t p = 0; p < out.valid.pixels(); ++p) {
        const std::uint8_t* px = img.bytes.data() + 6 * p;
        out.flow.values()[2 * p] = (get16(px) - 32768.0) / 64.0;
        out.flow.values()[2 * p + 1] = (get16(px + 2) - 32768.0) / 64.0;
        out.valid.values()[p] = get16(px + 4) != 0 ? 1.0 : 0.0;
    }
    return out;
}

void write_kitti_flow_png(const std::string& path, const FlowField& flow, const ValidityMask& valid)
{
    require_same_grid(flow, valid, "write_kitti_flow_png");
    PngImage img{flow.width(), flow.height(), 16, 3, std::vector<std::uint8_t>(6 * flow.pixels())};
    for (std::size_t p = 0; p < flow.pixels(); ++p) {
        std::uint8_t* px = img.bytes.data() + 6 * p;
        put16(px, quantize16(flow.values()[2 * p] * 64.0 + 32768.0, 0.0, path));
        put16(px + 2, quantize16(flow.values()[2 * p + 1] * 64.0 + 32768.0, 0.0, path));
        put16(px + 4, valid.values()[p] != 0.0 ? 1 : 0);
    }
    write_png(path, img);
}

DisparityWithValidity read_kitti_disp_png(const std::string& path)
{
    const PngImage img = read_png(path, 16, 1);
    DisparityWithValidity out{DisparityMap(img.height, img.width), ValidityMask(img.height, img.width, 0.0)};
    for (std::size_t p = 0; p < out.valid.pixels(); ++p) {
        const std::uint16_t v = get16(img.bytes.data() + 2 * p);
        out.disparity.values()[p] = v / 256.0;
        out.valid.values()[p] = v != 0 ? 1.0 : 0.0;
    }
    return out;
}

void write_kitti_disp_png(const std::string& path, const DisparityMap& disp, const ValidityMask& valid)
{
    require_same_grid(disp, valid, "write_kitti_disp_png");
    PngImage img{disp.width(), disp.height(), 16, 1, std::vector<std::uint8_t>(2 * disp.pixels())};
    for (std::size_t p = 0; p < disp.pixels(); ++p) {
        // valid pixels never encode as 0, which would read back as invalid
        const std::uint16_t v = valid.values()[p] != 0.0 ? quantize16(disp.values()[p] * 256.0, 1.0, path) : 0;
        put16(img.bytes.data() + 2 * p, v);
    }
    write_png(path, img);
}

DenseMap read_label_png(const std::string& path)
{
    const PngImage img = read_png(path, 8, 1);
    DenseMap out(img.height, img.width, 1);
    for (std::size_t p = 0; p < out.pixels(); ++p) out.values()[p] = img.bytes[p];
    return out;
}

void write_label_png(const std::string& path, const DenseMap& labels)
{
    require_channels(labels, 1, "write_label_png");
    PngImage img{labels.width(), labels.height(), 8, 1, std::vector<std::uint8_t>(labels.pixels())};
    for (std::size_t p = 0; p < labels.pixels(); ++p) {
        const double v = labels.values()[p];
        if (!(v >= 0.0 && v <= 255.0) || v != std::floor(v)) {
            throw DomainError("write_label_png: label " + std::to_string(v) + " is not an integer in [0, 255]");
        }
        img.bytes[p] = static_cast<std::uint8_t>(v);
    }
    write_png(path, img);
}

DenseMap read_pfm(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    const std::string magic = next_token(in, path);
    int channels = 0;
    if (magic == "Pf") {
        channels = 1;
    } else if (magic == "PF") {
        channels = 3;
    } else if (magic != "Pc") {
        throw FormatError(path + ": bad PFM magic '" + magic + "'");
    }
    const int width = parse_dim(next_token(in, path), path);
    const int height = parse_dim(next_token(in, path), path);
    if (channels == 0) channels = parse_dim(next_token(in, path), path);
    const double scale = parse_double(next_token(in, path), path);
    if (scale == 0.0 || !std::isfinite(scale)) throw FormatError(path + ": PFM scale must be nonzero");
    // exactly one whitespace byte separates the header from the samples
    if (!std::isspace(in.get())) throw FormatError(path + ": malformed PFM header");

    const bool little = scale < 0.0;
    const bool swap = little != (std::endian::native == std::endian::little);
    const std::size_t row_len = static_cast<std::size_t>(width) * channels;
    std::vector<float> row(row_len);
    DenseMap out(height, width, channels);
    for (int r = 0; r < height; ++r) {
        if (!in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row_len * sizeof(float)))) {
            throw FormatError(path + ": truncated PFM data");
        }
        const int y = height - 1 - r;
        for (std::size_t i = 0; i < row_len; ++i) {
            std::uint32_t bits = std::bit_cast<std::uint32_t>(row[i]);
            if (swap) bits = __builtin_bswap32(bits);
            out.values()[static_cast<std::size_t>(y) * row_len + i] = std::bit_cast<float>(bits);
        }
    }
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path + ": trailing bytes after PFM data");
    return out;
}

void write_pfm(const std::string& path, const DenseMap& m, Endian endian)
{
    if (m.empty()) throw DomainError("write_pfm: empty map");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    const char* scale = endian == Endian::Little ? "-1.0" : "1.0";
    if (m.channels() == 1) {
        out << "Pf\n" << m.width() << ' ' << m.height() << '\n';
    } else if (m.channels() == 3) {
        out << "PF\n" << m.width() << ' ' << m.height() << '\n';
    } else {
        out << "Pc\n" << m.width() << ' ' << m.height() << ' ' << m.channels() << '\n';
    }
    out << scale << '\n';
    const bool swap = (endian == Endian::Little) != (std::endian::native == std::endian::little);
    const std::size_t row_len = static_cast<std::size_t>(m.width()) * m.channels();
    std::vector<std::uint32_t> row(row_len);
    for (int y = m.height() - 1; y >= 0; --y) {
        for (std::size_t i = 0; i < row_len; ++i) {
            std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(m.values()[y * row_len + i]));
            row[i] = swap ? __builtin_bswap32(bits) : bits;
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row_len * 4));
    }
    if (!out.flush()) throw FormatError(path + ": write failed");
}

StereoCamera read_intrinsics(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    std::vector<double> v;
    std::string tok;
    while (in >> tok) v.push_back(parse_double(tok, path));
    if (v.size() != 5) throw FormatError(path + ": intrinsics need exactly 5 numbers (fx fy cx cy baseline)");
    StereoCamera cam{v[0], v[1], v[2], v[3], v[4]};
    try {
        cam.validate();
    } catch (const DomainError& e) {
        throw FormatError(path + ": " + e.what());
    }
    return cam;
}

void write_intrinsics(const std::string& path, const StereoCamera& cam)
{
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << std::setprecision(17) << cam.fx << ' ' << cam.fy << ' ' << cam.cx << ' ' << cam.cy << ' ' << cam.baseline
        << '\n';
}

LossWeights read_loss_weights(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    LossWeights w;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(lineno);
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError(where + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "omega") {
            w.omega.clear();
            std::stringstream ss(val);
            std::string item;
            while (std::getline(ss, item, ',')) w.omega.push_back(parse_double(trim(item), where));
        } else if (key == "alpha_O") {
            w.alpha_O = parse_double(val, where);
        } else if (key == "alpha_Sd") {
            w.alpha_Sd = parse_double(val, where);
        } else if (key == "alpha_PC") {
            w.alpha_PC = parse_double(val, where);
        } else if (key == "alpha_SC") {
            w.alpha_SC = parse_double(val, where);
        } else if (key == "beta_F") {
            w.beta_F = parse_double(val, where);
        } else if (key == "beta_D") {
            w.beta_D = parse_double(val, where);
        } else if (key == "gamma_F") {
            w.gamma_F = parse_double(val, where);
        } else if (key == "gamma_D") {
            w.gamma_D = parse_double(val, where);
        } else if (key == "T") {
            w.T = parse_double(val, where);
        } else if (key == "pretrain_disp_scale") {
            w.pretrain_disp_scale = parse_double(val, where);
        } else if (key == "flow_penalty") {
            w.flow_penalty = parse_penalty(val);
        } else if (key == "disp_penalty") {
            w.disp_penalty = parse_penalty(val);
        } else if (key == "negate_teacher_logits") {
            w.negate_teacher_logits = parse_bool(val);
        } else if (key == "per_pixel_normalize") {
            w.per_pixel_normalize = parse_bool(val);
        } else {
            throw FormatError(where + ": unknown key '" + key + "'");
        }
    }
    try {
        w.validate();
    } catch (const DomainError& e) {
        throw FormatError(path + ": " + e.what());
    }
    return w;
}

const char* format_name(FileFormat f)
{
    switch (f) {
    case FileFormat::Pfm: return "pfm";
    case FileFormat::KittiFlowPng: return "kitti_flow";
    case FileFormat::KittiDispPng: return "kitti_disp";
    case FileFormat::LabelPng: return "labels";
    case FileFormat::Intrinsics: return "intrinsics";
    }
    return "?";
}

FileFormat parse_format(const std::string& name)
{
    for (FileFormat f : {FileFormat::Pfm, FileFormat::KittiFlowPng, FileFormat::KittiDispPng, FileFormat::LabelPng,
                         FileFormat::Intrinsics}) {
        if (name == format_name(f)) return f;
    }
    throw FormatError("unknown file format '" + name + "'");
}

const ManifestEntry& FileBundleManifest::entry(const std::string& role) const
{
    const auto it = entries.find(role);
    if (it == entries.end()) throw FormatError("manifest has no '" + role + "' entry");
    return it->second;
}

std::optional<std::string> FileBundleManifest::intrinsics() const
{
    const auto it = entries.find("intrinsics");
    if (it == entries.end()) return std::nullopt;
    return it->second.path;
}

FileBundleManifest read_manifest(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open manifest " + path);
    const fs::path base = fs::path(path).parent_path();
    FileBundleManifest m;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string role, format, file, extra;
        if (!(ls >> role)) continue;
        const std::string where = path + ":" + std::to_string(lineno);
        if (!(ls >> format >> file) || (ls >> extra)) throw FormatError(where + ": expected <role> <format> <path>");
        if (m.entries.count(role) != 0) throw FormatError(where + ": duplicate role '" + role + "'");
        const fs::path resolved = fs::path(file).is_absolute() ? fs::path(file) : base / file;
        if (!fs::exists(resolved)) throw FormatError(where + ": missing file " + resolved.string());
        m.entries.emplace(role, ManifestEntry{parse_format(format), resolved.string()});
    }
    return m;
}

void write_manifest(const std::string& path, const FileBundleManifest& manifest)
{
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    const fs::path base = fs::absolute(fs::path(path)).parent_path();
    for (const auto& [role, e] : manifest.entries) {
        const fs::path abs = fs::absolute(e.path);
        const fs::path rel = abs.lexically_relative(base);
        const bool inside = !rel.empty() && *rel.begin() != "..";
        out << role << ' ' << format_name(e.format) << ' ' << (inside ? rel.string() : abs.string()) << '\n';
    }
    if (!out.flush()) throw FormatError(path + ": write failed");
}

} // namespace senseflow
