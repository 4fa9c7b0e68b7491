#pragma once

// Shared generators and oracles for the unit and acceptance suites.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <vector>

#include "lgrit/core/rng.hpp"
#include "lgrit/geom/projection.hpp"

namespace lgrit::test {

/// Random cloud with at most one point per bin: each bin is occupied with
/// probability `fill`, at a uniformly random angle inside the bin and a
/// uniformly random range inside the configured bounds.
inline geom::PointCloud random_binned_cloud(const geom::ProjectionConfig& cfg, double fill, Rng& rng) {
    geom::PointCloud cloud;
    const double daz = cfg.azimuth_step();
    const double del = cfg.elevation_step();
    for (std::size_t r = 0; r < cfg.height; ++r) {
        for (std::size_t c = 0; c < cfg.width; ++c) {
            if (!rng.bernoulli(fill)) continue;
            // Stay a hair inside the bin edges so floor() cannot flip bins.
            const double az = -std::numbers::pi + (static_cast<double>(c) + rng.uniform(1e-6, 1.0 - 1e-6)) * daz;
            const double el = cfg.elevation_max - (static_cast<double>(r) + rng.uniform(1e-6, 1.0 - 1e-6)) * del;
            const double range = rng.uniform(cfg.range_min, cfg.range_max);
            cloud.points.push_back({range * std::cos(el) * std::cos(az), range * std::cos(el) * std::sin(az),
                                    range * std::sin(el)});
        }
    }
    if (cloud.empty()) cloud.points.push_back({cfg.range_min * 1.5, 0.0, 0.0});
    return cloud;
}

struct RoundTripError {
    double azimuth = 0.0;
    double elevation = 0.0;
    double range = 0.0;
};

/// Worst per-point error between an original cloud (one point per bin) and
/// its reconstruction, matching points by bin.
inline RoundTripError round_trip_errors(const geom::PointCloud& original, const geom::PointCloud& rebuilt,
                                        const geom::ProjectionConfig& cfg) {
    auto polar = [](const geom::Point3& p) {
        return std::array<double, 3>{std::atan2(p.y, p.x), std::atan2(p.z, std::hypot(p.x, p.y)),
                                     std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z)};
    };
    std::map<std::size_t, std::array<double, 3>> by_bin;
    for (const auto& p : original.points) {
        const auto s = polar(p);
        const auto row = cfg.row_of(s[1]);
        by_bin[static_cast<std::size_t>(row) * cfg.width + cfg.column_of(s[0])] = s;
    }
    RoundTripError err;
    for (const auto& p : rebuilt.points) {
        const auto s = polar(p);
        const auto row = cfg.row_of(s[1]);
        const auto it = by_bin.find(static_cast<std::size_t>(row) * cfg.width + cfg.column_of(s[0]));
        if (it == by_bin.end()) {
            err.azimuth = err.elevation = err.range = INFINITY;
            return err;
        }
        double daz = std::abs(s[0] - it->second[0]);
        daz = std::min(daz, 2.0 * std::numbers::pi - daz);
        err.azimuth = std::max(err.azimuth, daz);
        err.elevation = std::max(err.elevation, std::abs(s[1] - it->second[1]));
        err.range = std::max(err.range, std::abs(s[2] - it->second[2]));
    }
    return err;
}

}  // namespace lgrit::test
