#include "lgrit/geom/io.hpp"

#include <fstream>
#include <string>

#include "lgrit/core/binio.hpp"
#include "lgrit/core/error.hpp"

namespace lgrit::geom {
namespace {

constexpr std::string_view kImageMagic = "LGRITIMG";

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    return is;
}

void write_grid_header(std::ostream& os, std::size_t h, std::size_t w, GridDtype dtype) {
    binio::write_magic(os, kImageMagic);
    binio::write_u32(os, kImageFormatVersion);
    binio::write_u32(os, static_cast<std::uint32_t>(h));
    binio::write_u32(os, static_cast<std::uint32_t>(w));
    binio::write_u8(os, static_cast<std::uint8_t>(dtype));
}

struct GridHeader {
    std::size_t height;
    std::size_t width;
    GridDtype dtype;
};

GridHeader read_grid_header(std::istream& is, const std::filesystem::path& path) {
    binio::expect_magic(is, kImageMagic);
    const auto version = binio::read_u32(is, "version");
    if (version != kImageFormatVersion) {
        throw IoError(path.string() + ": unsupported image format version " + std::to_string(version));
    }
    GridHeader h{};
    h.height = binio::read_u32(is, "height");
    h.width = binio::read_u32(is, "width");
    const auto tag = binio::read_u8(is, "dtype");
    if (tag > 1) throw IoError(path.string() + ": unknown dtype tag " + std::to_string(tag));
    h.dtype = static_cast<GridDtype>(tag);
    return h;
}

}  // namespace

PointCloud read_kitti_bin(const std::filesystem::path& path) {
    auto is = open_in(path);
    is.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(is.tellg());
    is.seekg(0);
    if (bytes % 16 != 0) {
        throw IoError(path.string() + ": size " + std::to_string(bytes) + " is not a multiple of 16-byte records");
    }
    PointCloud cloud;
    const std::size_t n = bytes / 16;
    cloud.points.reserve(n);
    cloud.intensity.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const float x = binio::read_f32(is, "x");
        const float y = binio::read_f32(is, "y");
        const float z = binio::read_f32(is, "z");
        cloud.intensity.push_back(binio::read_f32(is, "intensity"));
        cloud.points.push_back({x, y, z});
    }
    return cloud;
}

void write_kitti_bin(const std::filesystem::path& path, const PointCloud& cloud) {
    auto os = open_out(path);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto& p = cloud.points[i];
        binio::write_f32(os, static_cast<float>(p.x));
        binio::write_f32(os, static_cast<float>(p.y));
        binio::write_f32(os, static_cast<float>(p.z));
        binio::write_f32(os, cloud.intensity.empty() ? 0.0f : cloud.intensity[i]);
    }
    if (!os) throw IoError("write failed: " + path.string());
}

void write_range_image(const std::filesystem::path& path, const RangeImage& img) {
    auto os = open_out(path);
    write_grid_header(os, img.height, img.width, GridDtype::range_f32);
    for (float v : img.values) binio::write_f32(os, v);
    if (!os) throw IoError("write failed: " + path.string());
}

void write_mask(const std::filesystem::path& path, const RaydropMask& mask) {
    auto os = open_out(path);
    write_grid_header(os, mask.height, mask.width, GridDtype::mask_u8);
    os.write(reinterpret_cast<const char*>(mask.bits.data()), static_cast<std::streamsize>(mask.bits.size()));
    if (!os) throw IoError("write failed: " + path.string());
}

RangeImage read_range_image(const std::filesystem::path& path, const ProjectionConfig& cfg) {
    auto is = open_in(path);
    const auto h = read_grid_header(is, path);
    if (h.dtype != GridDtype::range_f32) throw IoError(path.string() + ": expected a range image, found a mask");
    if (h.height != cfg.height || h.width != cfg.width) {
        throw ValidationError(path.string() + ": image is " + std::to_string(h.height) + "x" + std::to_string(h.width) +
                              " but the projection config is " + std::to_string(cfg.height) + "x" +
                              std::to_string(cfg.width));
    }
    RangeImage img(cfg);
    for (auto& v : img.values) v = binio::read_f32(is, "range payload");
    return img;
}

RaydropMask read_mask(const std::filesystem::path& path) {
    auto is = open_in(path);
    const auto h = read_grid_header(is, path);
    if (h.dtype != GridDtype::mask_u8) throw IoError(path.string() + ": expected a mask, found a range image");
    RaydropMask mask(h.height, h.width);
    binio::read_exact(is, reinterpret_cast<char*>(mask.bits.data()), mask.bits.size(), "mask payload");
    for (auto b : mask.bits) {
        if (b > 1) throw IoError(path.string() + ": mask contains non-binary value " + std::to_string(b));
    }
    return mask;
}

}  // namespace lgrit::geom
