#include "lgrit/metrics/point_sets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "lgrit/core/error.hpp"
#include "lgrit/core/parallel.hpp"
#include "lgrit/core/rng.hpp"

namespace lgrit::metrics {

namespace {

double sq(const geom::Point3& a, const geom::Point3& b) {
    const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return dx * dx + dy * dy + dz * dz;
}

double directed(const geom::PointCloud& a, const geom::PointCloud& b) {
    double s = 0.0;
    for (const auto& p : a.points) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : b.points) best = std::min(best, sq(p, q));
        s += best;
    }
    return s / static_cast<double>(a.size());
}

geom::PointCloud subset(const geom::PointCloud& cloud, const std::vector<std::size_t>& idx) {
    geom::PointCloud out;
    out.points.reserve(idx.size());
    for (auto i : idx) out.points.push_back(cloud.points[i]);
    return out;
}

}  // namespace

std::vector<std::size_t> farthest_point_indices(const geom::PointCloud& cloud, std::size_t n, std::size_t first) {
    const std::size_t m = cloud.size();
    if (n < 1) throw ValidationError("farthest point sampling: n must be >= 1");
    if (n > m) {
        throw ValidationError("farthest point sampling: asked for " + std::to_string(n) + " points from a cloud of " +
                              std::to_string(m));
    }
    if (first >= m) throw ValidationError("farthest point sampling: first index out of range");
    std::vector<std::size_t> picked{first};
    std::vector<double> dist(m, std::numeric_limits<double>::infinity());
    std::size_t last = first;
    while (picked.size() < n) {
        std::size_t best = m;
        double best_d = -1.0;
        for (std::size_t i = 0; i < m; ++i) {
            dist[i] = std::min(dist[i], sq(cloud.points[i], cloud.points[last]));
            if (dist[i] > best_d) {
                best_d = dist[i];
                best = i;
            }
        }
        picked.push_back(best);
        last = best;
    }
    return picked;
}

geom::PointCloud farthest_point_sample(const geom::PointCloud& cloud, std::size_t n, std::uint64_t seed) {
    if (cloud.empty()) throw ValidationError("farthest point sampling: empty cloud");
    Rng rng(derive_seed(seed, "fps"));
    const auto first = static_cast<std::size_t>(rng.below(cloud.size()));
    return subset(cloud, farthest_point_indices(cloud, n, first));
}

double chamfer(const geom::PointCloud& a, const geom::PointCloud& b) {
    if (a.empty() || b.empty()) throw ValidationError("chamfer: empty cloud");
    return directed(a, b) + directed(b, a);
}

std::vector<std::size_t> hungarian(const std::vector<double>& cost, std::size_t n) {
    if (cost.size() != n * n) throw ValidationError("hungarian: cost matrix is not n x n");
    // Shortest augmenting paths with row/column potentials; 1-based with a
    // virtual column 0.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> assignment(n);
    for (std::size_t j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
    return assignment;
}

double earth_movers(const geom::PointCloud& a, const geom::PointCloud& b) {
    if (a.empty() || a.size() != b.size()) {
        throw ValidationError("earth_movers: clouds must be non-empty and equal in size (" + std::to_string(a.size()) +
                              " vs " + std::to_string(b.size()) + ")");
    }
    const std::size_t n = a.size();
    std::vector<double> cost(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = std::sqrt(sq(a.points[i], b.points[j]));
    const auto match = hungarian(cost, n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += cost[i * n + match[i]];
    return s / static_cast<double>(n);
}

double min_matching_distance(const std::vector<geom::PointCloud>& generated, const std::vector<geom::PointCloud>& real,
                             const MdConfig& cfg) {
    if (generated.empty() || real.empty()) throw ValidationError("matching distance: both sets must be non-empty");
    if (cfg.points < 1) throw ValidationError("matching distance: points must be >= 1");
    std::size_t n = cfg.points;
    for (const auto* set : {&generated, &real}) {
        for (const auto& c : *set) {
            if (c.empty()) throw ValidationError("matching distance: empty cloud");
            if (cfg.distance == MatchingDistance::emd) n = std::min(n, c.size());
        }
    }
    auto reduce = [&](const std::vector<geom::PointCloud>& set) {
        std::vector<geom::PointCloud> out(set.size());
        parallel_for(set.size(), [&](std::size_t i) {
            out[i] = set[i].size() <= n && cfg.distance == MatchingDistance::chamfer
                         ? set[i]
                         : farthest_point_sample(set[i], std::min(n, set[i].size()), cfg.seed);
        });
        return out;
    };
    const auto g = reduce(generated);
    const auto r = reduce(real);
    std::vector<double> best(g.size());
    parallel_for(g.size(), [&](std::size_t i) {
        double b = std::numeric_limits<double>::infinity();
        for (const auto& c : r) {
            b = std::min(b, cfg.distance == MatchingDistance::chamfer ? chamfer(g[i], c) : earth_movers(g[i], c));
        }
        best[i] = b;
    });
    double s = 0.0;
    for (double v : best) s += v;
    return s / static_cast<double>(best.size());
}

}  // namespace lgrit::metrics
