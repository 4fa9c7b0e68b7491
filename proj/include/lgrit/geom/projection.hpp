#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lgrit/geom/point_cloud.hpp"

namespace lgrit::geom {

enum class ProjectionMode { spherical, scan_unfold };
enum class RangeNormalization { linear, log };

/// Range-image geometry. Row 0 is the highest elevation bin; column 0 starts
/// at azimuth -pi and columns advance counter-clockwise.
struct ProjectionConfig {
    ProjectionMode mode = ProjectionMode::spherical;
    std::size_t height = 64;
    std::size_t width = 1024;
    double elevation_min = -0.4363323129985824;  // -25 deg
    double elevation_max = 0.05235987755982989;  // +3 deg
    double range_min = 1.45;
    double range_max = 80.0;
    RangeNormalization normalization = RangeNormalization::log;
    /// s in v = log(1 + r s) / log(1 + r_max s), per meter.
    double log_scale = 1.0;

    void validate() const;

    double elevation_step() const { return (elevation_max - elevation_min) / static_cast<double>(height); }
    double azimuth_step() const;

    /// Normalized value in [0, 1] for a range inside [range_min, range_max].
    double normalize(double range) const;
    double denormalize(double value) const;

    /// Worst-case range error introduced by storing normalized values as
    /// 32-bit floats (two float ulps at 1.0 scaled by max |dr/dv|).
    double range_quantization_step() const;

    /// Bin index for an angle, or -1 if outside the configured field of view.
    std::ptrdiff_t row_of(double elevation) const;
    std::size_t column_of(double azimuth) const;

    double row_center(std::size_t row) const;
    double column_center(std::size_t col) const;
};

/// Normalized ranges; pixels with mask 0 hold 0.
struct RangeImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> values;
    ProjectionConfig config;

    RangeImage() = default;
    explicit RangeImage(const ProjectionConfig& cfg);

    float& at(std::size_t r, std::size_t c) { return values[r * width + c]; }
    float at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
};

struct RaydropMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> bits;

    RaydropMask() = default;
    RaydropMask(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), bits(h * w, fill) {}

    std::uint8_t& at(std::size_t r, std::size_t c) { return bits[r * width + c]; }
    std::uint8_t at(std::size_t r, std::size_t c) const { return bits[r * width + c]; }

    double occupancy() const;
};

/// Counts of what happened to the input points during one projection.
struct ProjectionStats {
    std::size_t input_points = 0;
    std::size_t projected = 0;
    std::size_t out_of_range = 0;
    std::size_t out_of_fov = 0;
    /// Points that lost the nearest-return tie-break against another point
    /// in the same bin.
    std::size_t occluded = 0;
};

struct Projection {
    RangeImage image;
    RaydropMask mask;
    ProjectionStats stats;
};

Projection spherical_project(const PointCloud& cloud, const ProjectionConfig& cfg);

/// Splits the ordered stream into `height` rows, either by the per-point
/// ring index when present or at azimuth wrap-arounds (a jump of more than
/// pi between consecutive points), then bins each row by azimuth.
Projection scan_unfold_project(const PointCloud& cloud, const ProjectionConfig& cfg);

/// Dispatches on cfg.mode.
Projection project(const PointCloud& cloud, const ProjectionConfig& cfg);

/// One point per set mask bit, at the bin-center angles and denormalized
/// range. Uses the linear elevation bins of img.config for both modes.
PointCloud unproject(const RangeImage& img, const RaydropMask& mask);

}  // namespace lgrit::geom
