#pragma once

#include <optional>
#include <vector>

#include "lgrit/geom/point_cloud.hpp"

namespace lgrit::metrics {

struct BevConfig {
    /// Square region [-half_extent, half_extent)^2 in meters.
    double half_extent = 50.0;
    std::size_t cells = 100;

    void validate() const;
};

/// Bird's-eye-view occupancy, row-major over (x, y) cells. `probabilities`
/// sums to 1 unless `empty` is set, in which case it is all zero.
struct BevHistogram {
    std::size_t cells = 0;
    std::vector<double> counts;
    std::vector<double> probabilities;
    bool empty = true;
};

BevHistogram bev_histogram(const geom::PointCloud& cloud, const BevConfig& cfg);

/// Cell-wise sum of counts, renormalized.
BevHistogram aggregate(const std::vector<BevHistogram>& hists);

struct MmdResult {
    /// Unbiased estimate; may be slightly negative.
    double raw = 0.0;
    double bandwidth = 0.0;
    /// Empty histograms skipped in either set.
    std::size_t skipped = 0;
};

/// Median pairwise Euclidean distance over the pooled vectors (1 when all
/// pairs coincide).
double median_bandwidth(const std::vector<std::vector<double>>& pooled);

/// Squared MMD with kernel exp(-|x - y|^2 / (2 bandwidth^2)) over the
/// histograms' probability vectors. Equal-size sets use the paired
/// U-statistic over i != j, which is exactly 0 when a and b hold the same
/// histograms in the same order. Otherwise the within-set means skip i = j
/// and the cross mean covers all pairs; a set with one element falls back
/// to k(x, x) = 1 for its within-set mean.
MmdResult mmd_gaussian(const std::vector<BevHistogram>& a, const std::vector<BevHistogram>& b,
                       std::optional<double> bandwidth = std::nullopt);

/// Base-2 Jensen-Shannon divergence of two probability vectors.
double jsd(const std::vector<double>& p, const std::vector<double>& q);

/// JSD between the aggregated histograms of two sets.
double set_jsd(const std::vector<BevHistogram>& a, const std::vector<BevHistogram>& b);

}  // namespace lgrit::metrics
