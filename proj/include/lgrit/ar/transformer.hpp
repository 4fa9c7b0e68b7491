#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lgrit/ad/ops.hpp"
#include "lgrit/ad/optim.hpp"

namespace lgrit::ar {

using ad::Shape;
using ad::Tensor;

struct TransformerConfig {
    /// Codebook size K; the begin-of-sequence sentinel is index K.
    std::size_t vocab = 512;
    /// Sequence length h*w.
    std::size_t length = 32;
    std::size_t d_model = 128;
    std::size_t heads = 4;
    std::size_t layers = 4;
    std::size_t ff_mult = 4;

    void validate() const;
    std::size_t sentinel() const { return vocab; }
};

/// Pre-LN decoder-only transformer over sentinel-prefixed token sequences.
template <typename T>
class Transformer {
  public:
    Transformer(const TransformerConfig& cfg, std::uint64_t seed);

    const TransformerConfig& config() const { return cfg_; }
    ad::ParameterStore<T>& store() { return store_; }
    const ad::ParameterStore<T>& store() const { return store_; }

    /// inputs: N rows of n <= length positions, each starting with the
    /// sentinel -> logits [N, n, K]; position i predicts token i.
    Tensor<T> logits(const std::vector<std::int32_t>& inputs, std::size_t batch) const;

  private:
    struct Block {
        Tensor<T> ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
        Tensor<T> ln2_g, ln2_b, w1, b1, w2, b2;
    };

    Tensor<T> linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng, Tensor<T>& bias);

    TransformerConfig cfg_;
    ad::ParameterStore<T> store_;
    Tensor<T> tok_emb_;
    Tensor<T> pos_emb_;
    std::vector<Block> blocks_;
    Tensor<T> lnf_g_, lnf_b_;
    Tensor<T> out_w_, out_b_;
};

/// Sentinel followed by all but the last token of each sequence.
std::vector<std::int32_t> teacher_inputs(const std::vector<std::vector<std::int32_t>>& sequences, std::int32_t sentinel);

/// -(1 / (N * n)) * sum of log p(s_i | s_<i) from logits [N, n, K].
template <typename T>
Tensor<T> nll_from_logits(const Tensor<T>& logits, const std::vector<std::vector<std::int32_t>>& sequences);

/// Mean negative log-likelihood per token (natural log) of full sequences.
template <typename T>
Tensor<T> nll_loss(const Transformer<T>& model, const std::vector<std::vector<std::int32_t>>& sequences);

/// p(s_i | prefix) for a prefix of i < length tokens (sentinel implied).
template <typename T>
std::vector<double> next_token_distribution(const Transformer<T>& model, const std::vector<std::int32_t>& prefix);

struct SamplingConfig {
    double temperature = 1.0;
    /// 0 means K (no truncation).
    std::size_t top_k = 0;

    void validate(std::size_t vocab) const;
};

/// Draws one index from softmax(logits / temperature) restricted to the
/// top_k largest logits (ties by lower index).
std::int32_t sample_from_logits(std::span<const double> logits, const SamplingConfig& cfg, Rng& rng);

/// Ancestral sampling of `count` sequences; sequence j uses the stream
/// derive_seed(seed, "sample", j), so results do not depend on batching.
template <typename T>
std::vector<std::vector<std::int32_t>> sample_sequences(const Transformer<T>& model, std::size_t count,
                                                        const SamplingConfig& cfg, std::uint64_t seed);

}  // namespace lgrit::ar
