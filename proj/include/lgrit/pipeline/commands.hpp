#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "lgrit/metrics/report.hpp"
#include "lgrit/pipeline/config.hpp"
#include "lgrit/vqvae/trainer.hpp"

namespace lgrit::pipeline {

namespace fs = std::filesystem;

/// Binary PGM (P5, maxval 255): dropped pixels are 0, returned pixels are
/// 1 + round(254 * value) so that range 0 stays distinguishable from a drop.
void emit_preview(const geom::RangeImage& img, const geom::RaydropMask& mask, const fs::path& path);

/// Scans stored as stem.range / stem.mask pairs, ordered by file name.
std::vector<metrics::Scan> load_scans(const fs::path& dir, const geom::ProjectionConfig& proj);
std::vector<vqvae::Sample> load_samples(const fs::path& dir, const geom::ProjectionConfig& proj);

/// dir/train with scans 0 .. train_count-1 and dir/test with the following
/// test_count indices.
void synth_data(const RunConfig& cfg, const fs::path& out);

/// Projects one KITTI .bin file or every .bin in a directory into
/// out/<stem>.range, .mask and .pgm. Returns the number of clouds.
std::size_t project(const RunConfig& cfg, const fs::path& input, const fs::path& out);

/// out/vqvae.ckpt and out/vqvae_log.csv.
vqvae::TrainResult train_vqvae(const RunConfig& cfg, const fs::path& data, const fs::path& out);

/// Loads a VQ-VAE checkpoint for the configured architecture. A missing
/// file or a shape mismatch throws ValidationError with a hint.
vqvae::Model<float> load_vqvae(const RunConfig& cfg, const fs::path& checkpoint);
ar::Transformer<float> load_transformer(const RunConfig& cfg, const fs::path& checkpoint);

/// out/tokens.bin holding one token grid per scan of `data`.
std::size_t extract_tokens(const RunConfig& cfg, const fs::path& vqvae_ckpt, const fs::path& data, const fs::path& out);

/// out/transformer.ckpt and out/transformer_log.csv; returns the final
/// training-set NLL.
double train_transformer(const RunConfig& cfg, const fs::path& tokens, const fs::path& out);

/// `count` scans decoded from sampled token grids: out/scan_NNNNN.range,
/// .mask (the composed image), .bin (unprojected cloud) and .pgm.
void sample(const RunConfig& cfg, const fs::path& vqvae_ckpt, const fs::path& transformer_ckpt, std::size_t count,
            std::uint64_t seed, const fs::path& out);

/// Writes out/metrics.csv and out/metrics.json.
metrics::MetricReport evaluate(const RunConfig& cfg, const fs::path& generated, const fs::path& real, const fs::path& out);

struct AblationRow {
    std::string variant;
    metrics::MetricReport report;
    double iou = 0.0;
    double masked_l1 = 0.0;
};

/// Trains the baseline, +RL and +RL+GP VQ-VAEs on data/train and scores
/// their test-set reconstructions against data/test. Writes
/// out/ablation.csv and one subdirectory per variant.
std::vector<AblationRow> ablate(const RunConfig& cfg, const fs::path& data, const fs::path& out,
                                std::ostream* progress = nullptr);

}  // namespace lgrit::pipeline
