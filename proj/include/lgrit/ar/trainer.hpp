#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "lgrit/ar/transformer.hpp"

namespace lgrit::ar {

struct TransformerTrainConfig {
    std::size_t steps = 5000;
    std::size_t batch_size = 16;
    ad::AdamConfig adam{3e-4};
    std::uint64_t seed = 1;
    std::size_t log_every = 50;
    std::size_t checkpoint_every = 0;
    std::filesystem::path checkpoint_dir;

    void validate() const;
};

struct NllRow {
    std::size_t step = 0;
    double nll = 0.0;
};

/// Teacher-forced NLL minimization with Adam. The CSV log has columns
/// step,nll. Throws NumericalError if the loss becomes non-finite.
std::vector<NllRow> train_transformer(Transformer<float>& model, const std::vector<std::vector<std::int32_t>>& data,
                                      const TransformerTrainConfig& cfg, std::ostream* csv = nullptr);

/// Mean per-token NLL of a dataset, evaluated in batches without gradients.
double evaluate_nll(const Transformer<float>& model, const std::vector<std::vector<std::int32_t>>& data,
                    std::size_t batch_size = 64);

}  // namespace lgrit::ar
