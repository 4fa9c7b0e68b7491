#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "lgrit/ad/ops.hpp"
#include "lgrit/ad/optim.hpp"

namespace lgrit::vqvae {

using ad::Shape;
using ad::Tensor;

struct GpConfig {
    bool enabled = false;
    /// Chance that a batch gets a transform; the kind is then uniform over
    /// {hflip, vflip, affine}.
    double probability = 0.5;
    double rotation_deg = 5.0;
    /// Translation bounds as fractions of the image width / height.
    double translate_w = 0.10;
    double translate_h = 0.05;
    double scale_min = 0.9;
    double scale_max = 1.1;
    /// Also feed the transformed image to the encoder instead of only using
    /// it as the loss target.
    bool transform_encoder_input = false;

    void validate() const;
};

struct VqvaeConfig {
    std::size_t height = 16;
    std::size_t width = 64;
    /// One (vertical, horizontal) stride per encoder stage, each 1 or 2.
    std::vector<std::pair<std::size_t, std::size_t>> strides{{2, 2}, {2, 2}, {1, 2}};
    /// Output channels of each stage; the input convolution uses channels[0].
    std::vector<std::size_t> channels{32, 32, 64};
    std::size_t res_blocks = 1;
    std::size_t codebook_size = 512;
    std::size_t latent_dim = 64;
    double lambda = 0.1;
    /// Weight on the encoder-side commitment term.
    double beta = 1.0;
    /// false selects the baseline: the range head regresses the noisy
    /// composite and the mask comes from thresholding it.
    bool raydrop_head = true;
    GpConfig gp;

    void validate() const;
    std::size_t stride_h() const;
    std::size_t stride_w() const;
    std::size_t latent_h() const { return height / stride_h(); }
    std::size_t latent_w() const { return width / stride_w(); }
    std::size_t tokens_per_image() const { return latent_h() * latent_w(); }
};

template <typename T>
struct Quantized {
    /// Straight-through output, [N, n_z, h, w].
    Tensor<T> zq;
    /// Encoder vectors and their codebook rows, both [N*h*w, n_z].
    Tensor<T> z_rows;
    Tensor<T> code_rows;
    std::vector<std::int32_t> tokens;
};

template <typename T>
struct DecoderOutput {
    /// [N, 1, H, W] each.
    Tensor<T> range;
    Tensor<T> logits;
};

template <typename T>
struct ForwardResult {
    Tensor<T> z;
    Quantized<T> q;
    DecoderOutput<T> out;
};

/// Index of the L2-nearest codebook row for each of `m` vectors; ties go to
/// the lowest index.
template <typename T>
std::vector<std::int32_t> nearest_codes(const T* rows, std::size_t m, const T* codebook, std::size_t k, std::size_t d);

template <typename T>
class Model {
  public:
    Model(const VqvaeConfig& cfg, std::uint64_t seed);

    const VqvaeConfig& config() const { return cfg_; }
    ad::ParameterStore<T>& store() { return store_; }
    const ad::ParameterStore<T>& store() const { return store_; }
    Tensor<T> codebook() const { return codebook_; }

    /// x: [N, 1, H, W] composite -> [N, n_z, h, w].
    Tensor<T> encode(const Tensor<T>& x) const;
    Quantized<T> quantize(const Tensor<T>& z) const;
    DecoderOutput<T> decode(const Tensor<T>& zq) const;
    ForwardResult<T> forward(const Tensor<T>& x) const;

    /// Codebook rows for a token grid batch, [N, n_z, h, w].
    Tensor<T> lookup(const std::vector<std::int32_t>& tokens, std::size_t batch) const;

  private:
    struct Conv {
        Tensor<T> w;
        Tensor<T> b;
        ad::Conv2dGeometry g;
        bool transposed = false;
        Tensor<T> operator()(const Tensor<T>& x) const;
    };
    struct Residual {
        Conv a;
        Conv b;
        Tensor<T> operator()(const Tensor<T>& x) const;
    };

    Conv make_conv(const std::string& name, std::size_t in, std::size_t out, std::size_t kh, std::size_t kw,
                   ad::Conv2dGeometry g, bool transposed, Rng& rng);
    Residual make_residual(const std::string& name, std::size_t ch, Rng& rng);

    VqvaeConfig cfg_;
    ad::ParameterStore<T> store_;
    Tensor<T> codebook_;
    Conv enc_in_;
    std::vector<Conv> enc_down_;
    std::vector<std::vector<Residual>> enc_res_;
    Conv enc_out_;
    Conv dec_in_;
    std::vector<std::vector<Residual>> dec_res_;
    std::vector<Conv> dec_up_;
    Conv dec_head_;
};

/// mean(|x_m * (x - x_r)|) over pixels and batch.
template <typename T>
Tensor<T> loss_rec(const Tensor<T>& x, const Tensor<T>& mask, const Tensor<T>& range);

/// Binary cross-entropy of the mask logits, mean over pixels and batch.
template <typename T>
Tensor<T> loss_raydrop(const Tensor<T>& mask, const Tensor<T>& logits);

/// mean((sg[z] - e)^2) + beta * mean((sg[e] - z)^2).
template <typename T>
Tensor<T> loss_commit(const Tensor<T>& z_rows, const Tensor<T>& code_rows, T beta = T(1));

template <typename T>
Tensor<T> loss_total(const Tensor<T>& rec, const Tensor<T>& raydrop, const Tensor<T>& commit, T lambda);

/// Baseline objective: plain L1 against the noisy composite.
template <typename T>
Tensor<T> loss_regression(const Tensor<T>& x, const Tensor<T>& range);

}  // namespace lgrit::vqvae
