#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lgrit/geom/projection.hpp"
#include "lgrit/metrics/distribution.hpp"
#include "lgrit/metrics/fpd.hpp"
#include "lgrit/metrics/point_sets.hpp"
#include "lgrit/metrics/swd.hpp"

namespace lgrit::metrics {

struct EvalConfig {
    SwdConfig swd;
    BevConfig bev;
    /// Median heuristic when unset.
    std::optional<double> mmd_bandwidth;
    FeatureConfig features;
    MdConfig md;

    void validate() const;
    nlohmann::ordered_json to_json() const;
};

/// 16 hex digits identifying a configuration.
std::string fingerprint(const nlohmann::ordered_json& config);

struct MetricReport {
    std::vector<std::pair<std::string, double>> values;
    std::vector<std::string> notes;
    nlohmann::ordered_json config;

    std::string fingerprint() const { return metrics::fingerprint(config); }
    std::optional<double> get(const std::string& name) const;
    /// Throws NumericalError if the value is not finite.
    void set(const std::string& name, double value);

    /// Columns metric,value,config_fingerprint.
    void write_csv(const std::filesystem::path& path) const;
    /// Values, notes and the full configuration.
    void write_json(const std::filesystem::path& path) const;
};

/// One evaluated scan: the composed range image and its mask.
struct Scan {
    geom::RangeImage image;
    geom::RaydropMask mask;
};

/// SWD (x100) on range images, MMD and JSD on BEV histograms, FPD* on
/// cloud features, and MD on FPS-subsampled clouds. FPD* is omitted with a
/// note when a set has fewer samples than feature dimensions.
MetricReport evaluate(const std::vector<Scan>& generated, const std::vector<Scan>& real, const EvalConfig& cfg);

}  // namespace lgrit::metrics
