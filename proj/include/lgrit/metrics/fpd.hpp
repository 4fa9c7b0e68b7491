#pragma once

#include <vector>

#include "lgrit/geom/point_cloud.hpp"

namespace lgrit::metrics {

struct FeatureConfig {
    /// Upper edge of the 16-bin range histogram, meters.
    double range_max = 80.0;
};

inline constexpr std::size_t kRangeBins = 16;
/// centroid (3) + covariance upper triangle (6) + range histogram + octants (8).
inline constexpr std::size_t kFeatureDim = 3 + 6 + kRangeBins + 8;

/// Deterministic statistic vector of one cloud, each part normalized by the
/// point count. Octant k has bit 0 set for x >= 0, bit 1 for y >= 0, bit 2
/// for z >= 0 (relative to the sensor).
std::vector<double> cloud_features(const geom::PointCloud& cloud, const FeatureConfig& cfg);

struct FeatureStats {
    std::vector<double> mean;
    /// Row-major dim x dim, unbiased (n - 1).
    std::vector<double> cov;
    std::size_t count = 0;

    std::size_t dim() const { return mean.size(); }
};

/// Throws when there are fewer samples than feature dimensions.
FeatureStats feature_stats(const std::vector<std::vector<double>>& features);

/// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)), with negative
/// rounding residue clamped to 0.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

double fpd(const std::vector<geom::PointCloud>& a, const std::vector<geom::PointCloud>& b, const FeatureConfig& cfg);

}  // namespace lgrit::metrics
