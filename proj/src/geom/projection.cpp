#include "lgrit/geom/projection.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "lgrit/core/error.hpp"

namespace lgrit::geom {

void PointCloud::validate() const {
    if (!intensity.empty() && intensity.size() != points.size()) {
        throw ValidationError("point cloud: intensity channel has " + std::to_string(intensity.size()) +
                              " entries for " + std::to_string(points.size()) + " points");
    }
    if (!ring.empty() && ring.size() != points.size()) {
        throw ValidationError("point cloud: ring channel has " + std::to_string(ring.size()) + " entries for " +
                              std::to_string(points.size()) + " points");
    }
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
            throw ValidationError("point cloud: non-finite coordinate at point index " + std::to_string(i));
        }
    }
}

void ProjectionConfig::validate() const {
    if (height < 1 || width < 1) throw ValidationError("projection: height and width must be >= 1");
    if (!(elevation_min < elevation_max)) throw ValidationError("projection: elevation_min must be < elevation_max");
    if (!(range_min > 0.0 && range_min < range_max)) {
        throw ValidationError("projection: need 0 < range_min < range_max");
    }
    if (normalization == RangeNormalization::log && !(log_scale > 0.0)) {
        throw ValidationError("projection: log_scale must be > 0");
    }
}

double ProjectionConfig::azimuth_step() const { return 2.0 * std::numbers::pi / static_cast<double>(width); }

double ProjectionConfig::normalize(double range) const {
    if (normalization == RangeNormalization::linear) return (range - range_min) / (range_max - range_min);
    return std::log1p(range * log_scale) / std::log1p(range_max * log_scale);
}

double ProjectionConfig::denormalize(double value) const {
    if (normalization == RangeNormalization::linear) return range_min + value * (range_max - range_min);
    return std::expm1(value * std::log1p(range_max * log_scale)) / log_scale;
}

double ProjectionConfig::range_quantization_step() const {
    double max_slope;
    if (normalization == RangeNormalization::linear) {
        max_slope = range_max - range_min;
    } else {
        const double l = std::log1p(range_max * log_scale);
        max_slope = l * (1.0 + range_max * log_scale) / log_scale;
    }
    return max_slope * 2.0 * static_cast<double>(std::numeric_limits<float>::epsilon());
}

std::ptrdiff_t ProjectionConfig::row_of(double elevation) const {
    if (elevation < elevation_min || elevation > elevation_max) return -1;
    auto row = static_cast<std::ptrdiff_t>(std::floor((elevation_max - elevation) / elevation_step()));
    // elevation == elevation_min lands exactly on the lower edge.
    if (row >= static_cast<std::ptrdiff_t>(height)) row = static_cast<std::ptrdiff_t>(height) - 1;
    return row;
}

std::size_t ProjectionConfig::column_of(double azimuth) const {
    auto col = static_cast<std::ptrdiff_t>(std::floor((azimuth + std::numbers::pi) / azimuth_step()));
    const auto w = static_cast<std::ptrdiff_t>(width);
    col %= w;
    if (col < 0) col += w;
    return static_cast<std::size_t>(col);
}

double ProjectionConfig::row_center(std::size_t row) const {
    return elevation_max - (static_cast<double>(row) + 0.5) * elevation_step();
}

double ProjectionConfig::column_center(std::size_t col) const {
    return -std::numbers::pi + (static_cast<double>(col) + 0.5) * azimuth_step();
}

RangeImage::RangeImage(const ProjectionConfig& cfg)
    : height(cfg.height), width(cfg.width), values(cfg.height * cfg.width, 0.0f), config(cfg) {}

double RaydropMask::occupancy() const {
    if (bits.empty()) return 0.0;
    std::size_t on = 0;
    for (auto b : bits) on += b;
    return static_cast<double>(on) / static_cast<double>(bits.size());
}

namespace {

struct Binner {
    const ProjectionConfig& cfg;
    Projection out;
    std::vector<double> best;

    explicit Binner(const ProjectionConfig& c) : cfg(c), best(c.height * c.width, std::numeric_limits<double>::infinity()) {
        out.image = RangeImage(c);
        out.mask = RaydropMask(c.height, c.width);
    }

    // Nearest return wins a shared bin.
    void place(std::size_t row, std::size_t col, double range) {
        const std::size_t k = row * cfg.width + col;
        if (out.mask.bits[k]) {
            ++out.stats.occluded;
            if (range >= best[k]) return;
        } else {
            ++out.stats.projected;
        }
        best[k] = range;
        out.mask.bits[k] = 1;
    }

    Projection finish() {
        for (std::size_t k = 0; k < best.size(); ++k) {
            if (out.mask.bits[k]) out.image.values[k] = static_cast<float>(cfg.normalize(best[k]));
        }
        return std::move(out);
    }
};

void check_inputs(const PointCloud& cloud, const ProjectionConfig& cfg) {
    cfg.validate();
    if (cloud.empty()) throw ValidationError("projection: empty point cloud");
    cloud.validate();
}

}  // namespace

Projection spherical_project(const PointCloud& cloud, const ProjectionConfig& cfg) {
    check_inputs(cloud, cfg);
    if (cfg.mode != ProjectionMode::spherical) throw ValidationError("spherical_project: config mode is not spherical");
    Binner binner(cfg);
    binner.out.stats.input_points = cloud.size();
    for (const auto& p : cloud.points) {
        const double planar = std::hypot(p.x, p.y);
        const double range = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
        if (range < cfg.range_min || range > cfg.range_max) {
            ++binner.out.stats.out_of_range;
            continue;
        }
        const auto row = cfg.row_of(std::atan2(p.z, planar));
        if (row < 0) {
            ++binner.out.stats.out_of_fov;
            continue;
        }
        binner.place(static_cast<std::size_t>(row), cfg.column_of(std::atan2(p.y, p.x)), range);
    }
    return binner.finish();
}

Projection scan_unfold_project(const PointCloud& cloud, const ProjectionConfig& cfg) {
    check_inputs(cloud, cfg);
    if (cfg.mode != ProjectionMode::scan_unfold) {
        throw ValidationError("scan_unfold_project: config mode is not scan_unfold");
    }
    const std::size_t n = cloud.size();
    std::vector<std::size_t> rows(n);
    if (cloud.has_ring()) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto r = cloud.ring[i];
            if (r < 0 || static_cast<std::size_t>(r) >= cfg.height) {
                throw ValidationError("scan_unfold_project: ring index " + std::to_string(r) + " at point " +
                                      std::to_string(i) + " outside [0, " + std::to_string(cfg.height) + ")");
            }
            rows[i] = static_cast<std::size_t>(r);
        }
    } else {
        std::size_t row = 0;
        double prev = std::atan2(cloud.points[0].y, cloud.points[0].x);
        for (std::size_t i = 0; i < n; ++i) {
            const double az = std::atan2(cloud.points[i].y, cloud.points[i].x);
            if (i > 0 && std::abs(az - prev) > std::numbers::pi) ++row;
            prev = az;
            rows[i] = row;
        }
        if (row + 1 != cfg.height) {
            throw ValidationError("scan_unfold_project: ordered stream of " + std::to_string(n) + " points splits into " +
                                  std::to_string(row + 1) + " sweeps, expected " + std::to_string(cfg.height));
        }
    }
    Binner binner(cfg);
    binner.out.stats.input_points = n;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& p = cloud.points[i];
        const double range = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
        if (range < cfg.range_min || range > cfg.range_max) {
            ++binner.out.stats.out_of_range;
            continue;
        }
        binner.place(rows[i], cfg.column_of(std::atan2(p.y, p.x)), range);
    }
    return binner.finish();
}

Projection project(const PointCloud& cloud, const ProjectionConfig& cfg) {
    return cfg.mode == ProjectionMode::spherical ? spherical_project(cloud, cfg) : scan_unfold_project(cloud, cfg);
}

PointCloud unproject(const RangeImage& img, const RaydropMask& mask) {
    if (img.height != mask.height || img.width != mask.width) {
        throw ValidationError("unproject: image is " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                              " but mask is " + std::to_string(mask.height) + "x" + std::to_string(mask.width));
    }
    if (img.values.size() != img.height * img.width || mask.bits.size() != mask.height * mask.width) {
        throw ValidationError("unproject: payload size does not match dimensions");
    }
    const auto& cfg = img.config;
    PointCloud cloud;
    for (std::size_t r = 0; r < img.height; ++r) {
        const double elev = cfg.row_center(r);
        const double ce = std::cos(elev);
        const double se = std::sin(elev);
        for (std::size_t c = 0; c < img.width; ++c) {
            if (!mask.at(r, c)) continue;
            const double az = cfg.column_center(c);
            const double range = cfg.denormalize(img.at(r, c));
            cloud.points.push_back({range * ce * std::cos(az), range * ce * std::sin(az), range * se});
        }
    }
    return cloud;
}

}  // namespace lgrit::geom
