#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace lgrit::geom {

struct Point3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
};

/// Points in the sensor frame, meters, in acquisition order. `intensity`
/// and `ring` are either empty or parallel to `points`.
struct PointCloud {
    std::vector<Point3> points;
    std::vector<float> intensity;
    std::vector<std::int32_t> ring;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    bool has_ring() const { return !ring.empty(); }

    /// Throws ValidationError naming the first non-finite point, or if the
    /// optional channels are not parallel to `points`.
    void validate() const;
};

}  // namespace lgrit::geom
