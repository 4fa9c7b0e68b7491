#pragma once

// Stop-gradient operands make the VQ-VAE objective a different function
// from the one its backward pass differentiates. The surrogate below pins
// every stop-gradient operand (tokens, sg[z], sg[e], the quantization
// residual) at the values of a base evaluation, so finite differences of
// the surrogate see exactly the function whose gradient backward computes.

#include <vector>

#include "lgrit/ad/ops.hpp"
#include "lgrit/vqvae/model.hpp"
#include "lgrit/vqvae/trainer.hpp"

namespace lgrit::test {

struct FrozenQuantization {
    std::vector<std::int32_t> tokens;
    std::vector<double> z_rows;
    std::vector<double> code_rows;
};

inline ad::Tensor<double> sample_grid(const std::vector<const vqvae::Sample*>& batch, std::size_t h, std::size_t w,
                                      bool mask) {
    std::vector<double> v;
    v.reserve(batch.size() * h * w);
    for (const auto* s : batch) {
        for (std::size_t i = 0; i < h * w; ++i) v.push_back(mask ? s->mask[i] : s->range[i]);
    }
    return ad::Tensor<double>::from({batch.size(), 1, h, w}, std::move(v));
}

inline FrozenQuantization freeze(const vqvae::Model<double>& model, const std::vector<const vqvae::Sample*>& batch) {
    ad::NoGradGuard guard;
    const auto& c = model.config();
    const auto fwd = model.forward(sample_grid(batch, c.height, c.width, false));
    FrozenQuantization f;
    f.tokens = fwd.q.tokens;
    f.z_rows.assign(fwd.q.z_rows.data().begin(), fwd.q.z_rows.data().end());
    f.code_rows.assign(fwd.q.code_rows.data().begin(), fwd.q.code_rows.data().end());
    return f;
}

struct SurrogateLosses {
    ad::Tensor<double> rec;
    ad::Tensor<double> raydrop;
    ad::Tensor<double> commit;
    ad::Tensor<double> total;
};

inline SurrogateLosses surrogate_losses(const vqvae::Model<double>& model,
                                        const std::vector<const vqvae::Sample*>& batch, const FrozenQuantization& f) {
    using ad::Tensor;
    const auto& c = model.config();
    const std::size_t n = batch.size(), h = c.latent_h(), w = c.latent_w(), d = c.latent_dim;
    const auto x = sample_grid(batch, c.height, c.width, false);
    const auto m = sample_grid(batch, c.height, c.width, true);

    const auto z_rows = ad::reshape(ad::permute(model.encode(x), {0, 2, 3, 1}), {n * h * w, d});
    const auto e = ad::embedding(model.codebook(), f.tokens, {n * h * w});
    std::vector<double> residual(f.z_rows.size());
    for (std::size_t i = 0; i < residual.size(); ++i) residual[i] = f.code_rows[i] - f.z_rows[i];
    const auto zq_rows = ad::add(z_rows, Tensor<double>::from({n * h * w, d}, residual));
    const auto out = model.decode(ad::permute(ad::reshape(zq_rows, {n, h, w, d}), {0, 3, 1, 2}));

    const auto sg_z = Tensor<double>::from({n * h * w, d}, f.z_rows);
    const auto sg_e = Tensor<double>::from({n * h * w, d}, f.code_rows);
    SurrogateLosses l;
    l.commit = ad::add(ad::mean(ad::square(ad::sub(sg_z, e))),
                       ad::scale(ad::mean(ad::square(ad::sub(sg_e, z_rows))), c.beta));
    if (c.raydrop_head) {
        l.rec = vqvae::loss_rec(x, m, out.range);
        l.raydrop = vqvae::loss_raydrop(m, out.logits);
        l.total = vqvae::loss_total(l.rec, l.raydrop, l.commit, c.lambda);
    } else {
        l.rec = vqvae::loss_regression(x, out.range);
        l.raydrop = Tensor<double>::scalar(0.0);
        l.total = ad::add(l.rec, l.commit);
    }
    return l;
}

}  // namespace lgrit::test
