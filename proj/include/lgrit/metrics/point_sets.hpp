#pragma once

#include <cstdint>
#include <vector>

#include "lgrit/geom/point_cloud.hpp"

namespace lgrit::metrics {

/// Greedy farthest point sampling starting from `first`; each further pick
/// maximizes the Euclidean distance to the selected set (ties to the lowest
/// index). Returns indices in selection order.
std::vector<std::size_t> farthest_point_indices(const geom::PointCloud& cloud, std::size_t n, std::size_t first);

/// Same, with the first index drawn from derive_seed(seed, "fps").
geom::PointCloud farthest_point_sample(const geom::PointCloud& cloud, std::size_t n, std::uint64_t seed);

/// mean_a min_b |a - b|^2 + mean_b min_a |a - b|^2.
double chamfer(const geom::PointCloud& a, const geom::PointCloud& b);

/// Minimum over bijections of the mean Euclidean distance between matched
/// points (Hungarian algorithm; equal sizes required).
double earth_movers(const geom::PointCloud& a, const geom::PointCloud& b);

/// Optimal assignment for a square cost matrix: assignment[row] = column.
std::vector<std::size_t> hungarian(const std::vector<double>& cost, std::size_t n);

enum class MatchingDistance { chamfer, emd };

struct MdConfig {
    std::size_t points = 512;
    MatchingDistance distance = MatchingDistance::chamfer;
    std::uint64_t seed = 1;
};

/// Mean over generated clouds of the minimum distance to any real cloud,
/// after subsampling both to cfg.points (clouds already that small or
/// smaller are used whole; EMD subsamples both to their common minimum).
double min_matching_distance(const std::vector<geom::PointCloud>& generated, const std::vector<geom::PointCloud>& real,
                             const MdConfig& cfg);

}  // namespace lgrit::metrics
