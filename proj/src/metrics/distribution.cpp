#include "lgrit/metrics/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lgrit/core/error.hpp"

namespace lgrit::metrics {

void BevConfig::validate() const {
    if (!(half_extent > 0.0) || !std::isfinite(half_extent)) throw ValidationError("bev: half_extent must be > 0");
    if (cells < 1) throw ValidationError("bev: cells must be >= 1");
}

namespace {

void normalize(BevHistogram& h) {
    double total = 0.0;
    for (double c : h.counts) total += c;
    h.empty = total == 0.0;
    h.probabilities.assign(h.counts.size(), 0.0);
    if (h.empty) return;
    for (std::size_t i = 0; i < h.counts.size(); ++i) h.probabilities[i] = h.counts[i] / total;
}

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

std::vector<std::vector<double>> usable(const std::vector<BevHistogram>& set, std::size_t& skipped) {
    std::vector<std::vector<double>> out;
    for (const auto& h : set) {
        if (h.empty) {
            ++skipped;
            continue;
        }
        out.push_back(h.probabilities);
    }
    return out;
}

}  // namespace

BevHistogram bev_histogram(const geom::PointCloud& cloud, const BevConfig& cfg) {
    cfg.validate();
    BevHistogram h;
    h.cells = cfg.cells;
    h.counts.assign(cfg.cells * cfg.cells, 0.0);
    const double cell = 2.0 * cfg.half_extent / static_cast<double>(cfg.cells);
    for (const auto& p : cloud.points) {
        const double fx = std::floor((p.x + cfg.half_extent) / cell);
        const double fy = std::floor((p.y + cfg.half_extent) / cell);
        if (fx < 0.0 || fy < 0.0 || fx >= static_cast<double>(cfg.cells) || fy >= static_cast<double>(cfg.cells)) continue;
        h.counts[static_cast<std::size_t>(fx) * cfg.cells + static_cast<std::size_t>(fy)] += 1.0;
    }
    normalize(h);
    return h;
}

BevHistogram aggregate(const std::vector<BevHistogram>& hists) {
    if (hists.empty()) throw ValidationError("bev aggregate: no histograms");
    BevHistogram out;
    out.cells = hists.front().cells;
    out.counts.assign(out.cells * out.cells, 0.0);
    for (const auto& h : hists) {
        if (h.cells != out.cells) throw ValidationError("bev aggregate: histograms have different grid sizes");
        for (std::size_t i = 0; i < h.counts.size(); ++i) out.counts[i] += h.counts[i];
    }
    normalize(out);
    return out;
}

double median_bandwidth(const std::vector<std::vector<double>>& pooled) {
    std::vector<double> d;
    for (std::size_t i = 0; i < pooled.size(); ++i)
        for (std::size_t j = i + 1; j < pooled.size(); ++j) d.push_back(std::sqrt(squared_distance(pooled[i], pooled[j])));
    if (d.empty()) return 1.0;
    const std::size_t mid = d.size() / 2;
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
    double m = d[mid];
    if (d.size() % 2 == 0) {
        const double lower = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
        m = 0.5 * (m + lower);
    }
    return m > 0.0 ? m : 1.0;
}

MmdResult mmd_gaussian(const std::vector<BevHistogram>& a, const std::vector<BevHistogram>& b,
                       std::optional<double> bandwidth) {
    MmdResult r;
    const auto xa = usable(a, r.skipped);
    const auto xb = usable(b, r.skipped);
    if (xa.empty() || xb.empty()) throw ValidationError("mmd: a set has no non-empty histograms");
    if (xa.front().size() != xb.front().size()) throw ValidationError("mmd: histogram sizes differ");
    if (bandwidth) {
        if (!(*bandwidth > 0.0)) throw ValidationError("mmd: bandwidth must be > 0");
        r.bandwidth = *bandwidth;
    } else {
        auto pooled = xa;
        pooled.insert(pooled.end(), xb.begin(), xb.end());
        r.bandwidth = median_bandwidth(pooled);
    }
    const double inv = 1.0 / (2.0 * r.bandwidth * r.bandwidth);
    auto k = [&](const std::vector<double>& x, const std::vector<double>& y) { return std::exp(-squared_distance(x, y) * inv); };
    auto within = [&](const std::vector<std::vector<double>>& s) {
        if (s.size() == 1) return 1.0;
        double sum = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i)
            for (std::size_t j = 0; j < s.size(); ++j)
                if (i != j) sum += k(s[i], s[j]);
        return sum / (static_cast<double>(s.size()) * static_cast<double>(s.size() - 1));
    };
    if (xa.size() == xb.size() && xa.size() > 1) {
        // Paired U-statistic: sum over i != j of
        // k(a_i, a_j) + k(b_i, b_j) - k(a_i, b_j) - k(a_j, b_i).
        const std::size_t n = xa.size();
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) sum += k(xa[i], xa[j]) + k(xb[i], xb[j]) - k(xa[i], xb[j]) - k(xa[j], xb[i]);
        r.raw = sum / (static_cast<double>(n) * static_cast<double>(n - 1));
        return r;
    }
    double cross = 0.0;
    for (const auto& x : xa)
        for (const auto& y : xb) cross += k(x, y);
    cross /= static_cast<double>(xa.size()) * static_cast<double>(xb.size());
    r.raw = within(xa) + within(xb) - 2.0 * cross;
    return r;
}

double jsd(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size() || p.empty()) throw ValidationError("jsd: distributions differ in size");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < 0.0 || q[i] < 0.0) throw ValidationError("jsd: negative probability");
        const double m = 0.5 * (p[i] + q[i]);
        if (p[i] > 0.0) s += 0.5 * p[i] * std::log2(p[i] / m);
        if (q[i] > 0.0) s += 0.5 * q[i] * std::log2(q[i] / m);
    }
    return std::clamp(s, 0.0, 1.0);
}

double set_jsd(const std::vector<BevHistogram>& a, const std::vector<BevHistogram>& b) {
    const auto pa = aggregate(a), pb = aggregate(b);
    if (pa.empty || pb.empty) throw ValidationError("jsd: a set has no points inside the BEV bounds");
    return jsd(pa.probabilities, pb.probabilities);
}

}  // namespace lgrit::metrics
