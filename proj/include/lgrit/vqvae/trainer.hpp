#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "lgrit/geom/projection.hpp"
#include "lgrit/vqvae/geometric.hpp"
#include "lgrit/vqvae/model.hpp"

namespace lgrit::vqvae {

/// One training image: the noisy composite (0 where rays dropped) and its
/// ground-truth raydrop mask, both row-major H*W.
struct Sample {
    std::vector<float> range;
    std::vector<std::uint8_t> mask;
};

template <typename T>
struct BatchLosses {
    Tensor<T> rec;
    Tensor<T> raydrop;
    Tensor<T> commit;
    Tensor<T> total;
    ForwardResult<T> fwd;
    Tensor<T> input;
};

/// Builds the full objective for one batch. The transform (if any) is
/// applied to the loss targets, and to the encoder input as well when
/// cfg.gp.transform_encoder_input is set.
template <typename T>
BatchLosses<T> batch_losses(const Model<T>& model, const std::vector<const Sample*>& batch,
                            const GeometricTransform& transform = {});

struct TrainConfig {
    std::size_t steps = 3000;
    std::size_t batch_size = 8;
    ad::AdamConfig adam;
    std::uint64_t seed = 1;
    std::size_t log_every = 50;
    std::size_t checkpoint_every = 0;
    std::filesystem::path checkpoint_dir;
    bool reseed_dead_codes = true;
    /// Codes unused for max(one epoch, this many steps) are re-seeded.
    std::size_t dead_code_window = 100;
    bool init_codebook_from_data = true;

    void validate() const;
};

struct LogRow {
    std::size_t step = 0;
    double rec = 0.0;
    double raydrop = 0.0;
    double commit = 0.0;
    double total = 0.0;
    /// Fraction of codebook entries selected so far in the current epoch.
    double usage = 0.0;
};

struct TrainResult {
    std::vector<LogRow> log;
    std::size_t reseeded_codes = 0;
    std::vector<std::string> events;
};

void write_log_header(std::ostream& os);
void write_log_row(std::ostream& os, const LogRow& row);

/// Adam on the float model. Throws NumericalError naming the first
/// non-finite tensor if the loss diverges.
TrainResult train_vqvae(Model<float>& model, const std::vector<Sample>& data, const TrainConfig& cfg,
                        std::ostream* csv = nullptr);

struct Reconstruction {
    std::vector<float> range;
    std::vector<float> logits;
    std::vector<std::int32_t> tokens;
};

std::vector<std::vector<std::int32_t>> encode_tokens(const Model<float>& model, const std::vector<Sample>& data,
                                                     std::size_t batch_size = 32);
std::vector<Reconstruction> reconstruct(const Model<float>& model, const std::vector<Sample>& data,
                                        std::size_t batch_size = 32);
std::vector<Reconstruction> decode_tokens(const Model<float>& model, const std::vector<std::vector<std::int32_t>>& grids,
                                          std::size_t batch_size = 32);

/// The generated mask: thresholded logits, or thresholded range for the
/// baseline model.
geom::RaydropMask predicted_mask(const VqvaeConfig& cfg, const Reconstruction& r, const geom::ProjectionConfig& proj);

}  // namespace lgrit::vqvae
