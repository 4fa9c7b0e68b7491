#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "lgrit/ar/trainer.hpp"
#include "lgrit/ar/transformer.hpp"
#include "lgrit/geom/projection.hpp"
#include "lgrit/metrics/report.hpp"
#include "lgrit/synth/scene.hpp"
#include "lgrit/vqvae/trainer.hpp"

namespace lgrit::pipeline {

/// Everything a command needs. Seeds of the individual stages are derived
/// from `seed` by resolve(); projection geometry is shared by the scene,
/// the VQ-VAE and the transformer sequence length.
struct RunConfig {
    std::uint64_t seed = 1;
    std::size_t train_count = 256;
    std::size_t test_count = 64;
    std::size_t sample_count = 64;

    geom::ProjectionConfig projection;
    synth::SceneSpec scene;
    vqvae::VqvaeConfig vqvae;
    vqvae::TrainConfig vqvae_train;
    ar::TransformerConfig transformer;
    ar::TransformerTrainConfig transformer_train;
    ar::SamplingConfig sampling;
    metrics::EvalConfig metrics;

    /// 16x64 desk scans with models small enough to train on one core.
    static RunConfig desk();

    /// Propagates shared geometry and the derived seeds into the nested
    /// configurations, then validates everything.
    void resolve();
};

/// Parses key = value lines grouped in [section]s on top of the desk
/// preset. Unknown sections or keys, duplicates and out-of-range values
/// throw ValidationError naming the key. The result is resolved.
RunConfig parse_config(std::istream& is, const std::string& origin = "config");
RunConfig load_config(const std::filesystem::path& path);

/// Every key with its resolved value; parse_config(to_ini(c)) == c.
std::string to_ini(const RunConfig& cfg);

/// Writes to_ini(cfg) to dir/config.ini, creating dir.
void echo_config(const RunConfig& cfg, const std::filesystem::path& dir);

/// The explicit path, else $LGRIT_CONFIG, else the desk preset.
RunConfig config_from(const std::string& explicit_path);

}  // namespace lgrit::pipeline
