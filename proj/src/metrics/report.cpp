#include "lgrit/metrics/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "lgrit/core/error.hpp"
#include "lgrit/core/rng.hpp"

namespace lgrit::metrics {

void EvalConfig::validate() const {
    swd.validate();
    bev.validate();
    if (mmd_bandwidth && !(*mmd_bandwidth > 0.0)) throw ValidationError("metrics: mmd bandwidth must be > 0");
    if (!(features.range_max > 0.0)) throw ValidationError("metrics: feature range_max must be > 0");
    if (md.points < 1) throw ValidationError("metrics: md points must be >= 1");
}

nlohmann::ordered_json EvalConfig::to_json() const {
    nlohmann::ordered_json j;
    j["swd"] = {{"patch_size", swd.patch_size},
                {"patches_per_image", swd.patches_per_image},
                {"levels", swd.levels},
                {"projections", swd.projections},
                {"seed", swd.seed},
                {"scale", 100}};
    j["bev"] = {{"half_extent", bev.half_extent}, {"cells", bev.cells}};
    j["mmd"] = {{"bandwidth", mmd_bandwidth ? nlohmann::ordered_json(*mmd_bandwidth) : nlohmann::ordered_json("median")}};
    j["features"] = {{"range_max", features.range_max}, {"range_bins", kRangeBins}};
    j["md"] = {{"points", md.points},
               {"distance", md.distance == MatchingDistance::chamfer ? "chamfer" : "emd"},
               {"seed", md.seed}};
    return j;
}

std::string fingerprint(const nlohmann::ordered_json& config) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_name(config.dump())));
    return buf;
}

std::optional<double> MetricReport::get(const std::string& name) const {
    for (const auto& [k, v] : values) {
        if (k == name) return v;
    }
    return std::nullopt;
}

void MetricReport::set(const std::string& name, double value) {
    if (!std::isfinite(value)) throw NumericalError("metric " + name + " is not finite");
    for (auto& [k, v] : values) {
        if (k == name) {
            v = value;
            return;
        }
    }
    values.emplace_back(name, value);
}

void MetricReport::write_csv(const std::filesystem::path& path) const {
    if (config.is_null()) throw ValidationError("metric report: configuration fingerprint is mandatory");
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    const auto fp = fingerprint();
    os << "metric,value,config_fingerprint\n";
    for (const auto& [k, v] : values) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.9g", v);
        os << k << ',' << buf << ',' << fp << '\n';
    }
    if (!os) throw IoError("write failed for " + path.string());
}

void MetricReport::write_json(const std::filesystem::path& path) const {
    nlohmann::ordered_json j;
    j["config_fingerprint"] = fingerprint();
    j["values"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : values) j["values"][k] = v;
    j["notes"] = notes;
    j["config"] = config;
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << j.dump(2) << '\n';
}

MetricReport evaluate(const std::vector<Scan>& generated, const std::vector<Scan>& real, const EvalConfig& cfg) {
    cfg.validate();
    if (generated.empty() || real.empty()) throw ValidationError("evaluate: both scan sets must be non-empty");
    MetricReport report;
    report.config = cfg.to_json();
    report.notes.push_back(std::to_string(generated.size()) + " generated and " + std::to_string(real.size()) +
                           " real scans");

    std::vector<Image> gi, ri;
    std::vector<geom::PointCloud> gc, rc;
    std::vector<BevHistogram> gh, rh;
    auto load = [&](const std::vector<Scan>& set, std::vector<Image>& imgs, std::vector<geom::PointCloud>& clouds,
                    std::vector<BevHistogram>& hists) {
        for (const auto& s : set) {
            imgs.push_back({s.image.height, s.image.width, s.image.values});
            clouds.push_back(geom::unproject(s.image, s.mask));
            hists.push_back(bev_histogram(clouds.back(), cfg.bev));
        }
    };
    load(generated, gi, gc, gh);
    load(real, ri, rc, rh);

    report.set("SWD", 100.0 * swd(gi, ri, cfg.swd));

    std::size_t empty = 0;
    for (const auto* hs : {&gh, &rh})
        for (const auto& h : *hs) empty += h.empty;
    if (empty > 0) report.notes.push_back(std::to_string(empty) + " scans with no points inside the BEV bounds were excluded");
    auto all_empty = [](const std::vector<BevHistogram>& set) {
        return std::all_of(set.begin(), set.end(), [](const BevHistogram& h) { return h.empty; });
    };
    if (all_empty(gh) || all_empty(rh)) {
        report.notes.push_back("MMD and JSD omitted: a set has no points inside the BEV bounds");
    } else {
        const auto m = mmd_gaussian(gh, rh, cfg.mmd_bandwidth);
        report.set("MMD", std::max(0.0, m.raw));
        report.set("MMD_raw", m.raw);
        char bw[64];
        std::snprintf(bw, sizeof bw, "MMD bandwidth %.9g", m.bandwidth);
        report.notes.push_back(bw);
        report.set("JSD", set_jsd(gh, rh));
    }

    auto non_empty = [](const std::vector<geom::PointCloud>& set) {
        std::vector<geom::PointCloud> out;
        for (const auto& c : set)
            if (!c.empty()) out.push_back(c);
        return out;
    };
    const auto gne = non_empty(gc), rne = non_empty(rc);
    if (gne.size() < kFeatureDim || rne.size() < kFeatureDim) {
        report.notes.push_back("FPD* omitted: needs at least " + std::to_string(kFeatureDim) + " non-empty scans per set");
    } else {
        report.set("FPD*", fpd(gne, rne, cfg.features));
    }
    if (gne.empty() || rne.empty()) {
        report.notes.push_back("MD omitted: a set has no points");
    } else {
        report.set("MD", min_matching_distance(gne, rne, cfg.md));
    }
    return report;
}

}  // namespace lgrit::metrics
