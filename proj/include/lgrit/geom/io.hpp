#pragma once

#include <filesystem>

#include "lgrit/geom/point_cloud.hpp"
#include "lgrit/geom/projection.hpp"

namespace lgrit::geom {

// KITTI velodyne layout: consecutive little-endian float32 (x, y, z, intensity).
PointCloud read_kitti_bin(const std::filesystem::path& path);
void write_kitti_bin(const std::filesystem::path& path, const PointCloud& cloud);

// Grid files: "LGRITIMG", u32 version, u32 H, u32 W, u8 dtype, payload.
inline constexpr std::uint32_t kImageFormatVersion = 1;
enum class GridDtype : std::uint8_t { range_f32 = 0, mask_u8 = 1 };

void write_range_image(const std::filesystem::path& path, const RangeImage& img);
void write_mask(const std::filesystem::path& path, const RaydropMask& mask);

/// The file carries no projection parameters; `cfg` supplies them and its
/// H and W must match the file.
RangeImage read_range_image(const std::filesystem::path& path, const ProjectionConfig& cfg);
RaydropMask read_mask(const std::filesystem::path& path);

}  // namespace lgrit::geom
