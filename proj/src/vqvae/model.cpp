#include "lgrit/vqvae/model.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "lgrit/core/error.hpp"
#include "lgrit/simd/kernels.hpp"

namespace lgrit::vqvae {

void GpConfig::validate() const {
    if (!(probability >= 0.0 && probability <= 1.0)) throw ValidationError("gp: probability must be in [0, 1]");
    if (rotation_deg < 0.0 || translate_w < 0.0 || translate_h < 0.0) {
        throw ValidationError("gp: rotation and translation bounds must be >= 0");
    }
    if (!(scale_min > 0.0 && scale_min <= scale_max)) throw ValidationError("gp: need 0 < scale_min <= scale_max");
}

void VqvaeConfig::validate() const {
    if (height < 1 || width < 1) throw ValidationError("vqvae: image size must be positive");
    if (strides.empty()) throw ValidationError("vqvae: need at least one encoder stage");
    if (channels.size() != strides.size()) {
        throw ValidationError("vqvae: " + std::to_string(strides.size()) + " strides but " +
                              std::to_string(channels.size()) + " channel widths");
    }
    for (auto [sh, sw] : strides) {
        if ((sh != 1 && sh != 2) || (sw != 1 && sw != 2)) throw ValidationError("vqvae: strides must be 1 or 2");
    }
    for (auto c : channels) {
        if (c < 1) throw ValidationError("vqvae: channel widths must be >= 1");
    }
    if (height % stride_h() != 0 || width % stride_w() != 0) {
        throw ValidationError("vqvae: image " + std::to_string(height) + "x" + std::to_string(width) +
                              " is not divisible by total stride " + std::to_string(stride_h()) + "x" +
                              std::to_string(stride_w()));
    }
    if (codebook_size < 2) throw ValidationError("vqvae: codebook_size must be >= 2");
    if (codebook_size > 65535) throw ValidationError("vqvae: codebook_size must fit 16-bit token files");
    if (latent_dim < 1) throw ValidationError("vqvae: latent_dim must be >= 1");
    if (lambda < 0.0) throw ValidationError("vqvae: lambda must be >= 0");
    if (beta < 0.0) throw ValidationError("vqvae: beta must be >= 0");
    gp.validate();
}

std::size_t VqvaeConfig::stride_h() const {
    std::size_t s = 1;
    for (auto [sh, sw] : strides) s *= sh;
    return s;
}

std::size_t VqvaeConfig::stride_w() const {
    std::size_t s = 1;
    for (auto [sh, sw] : strides) s *= sw;
    return s;
}

template <typename T>
std::vector<std::int32_t> nearest_codes(const T* rows, std::size_t m, const T* codebook, std::size_t k, std::size_t d) {
    std::vector<std::int32_t> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        const T* v = rows + i * d;
        T best = std::numeric_limits<T>::infinity();
        std::int32_t arg = 0;
        for (std::size_t j = 0; j < k; ++j) {
            const T dist = simd::squared_distance(d, v, codebook + j * d);
            if (dist < best) {
                best = dist;
                arg = static_cast<std::int32_t>(j);
            }
        }
        out[i] = arg;
    }
    return out;
}

template <typename T>
Tensor<T> Model<T>::Conv::operator()(const Tensor<T>& x) const {
    return transposed ? ad::conv_transpose2d(x, w, b, g) : ad::conv2d(x, w, b, g);
}

template <typename T>
Tensor<T> Model<T>::Residual::operator()(const Tensor<T>& x) const {
    return ad::add(x, b(ad::gelu(a(ad::gelu(x)))));
}

template <typename T>
typename Model<T>::Conv Model<T>::make_conv(const std::string& name, std::size_t in, std::size_t out, std::size_t kh,
                                            std::size_t kw, ad::Conv2dGeometry g, bool transposed, Rng& rng) {
    Conv c;
    const double fan_in = static_cast<double>((transposed ? out : in) * kh * kw);
    const T bound = static_cast<T>(std::sqrt(6.0 / fan_in));
    c.w = transposed ? store_.add_uniform(name + ".w", {in, out, kh, kw}, bound, rng)
                     : store_.add_uniform(name + ".w", {out, in, kh, kw}, bound, rng);
    c.b = store_.add_zeros(name + ".b", {out});
    c.g = g;
    c.transposed = transposed;
    return c;
}

template <typename T>
typename Model<T>::Residual Model<T>::make_residual(const std::string& name, std::size_t ch, Rng& rng) {
    const ad::Conv2dGeometry same{1, 1, 1, 1};
    Residual r;
    r.a = make_conv(name + ".a", ch, ch, 3, 3, same, false, rng);
    r.b = make_conv(name + ".b", ch, ch, 3, 3, same, false, rng);
    return r;
}

template <typename T>
Model<T>::Model(const VqvaeConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    const ad::Conv2dGeometry same{1, 1, 1, 1};
    const auto& ch = cfg_.channels;
    const std::size_t stages = ch.size();
    auto kernel = [](std::size_t stride) { return stride == 2 ? std::size_t{4} : std::size_t{3}; };

    enc_in_ = make_conv("enc.in", 1, ch[0], 3, 3, same, false, rng);
    for (std::size_t s = 0; s < stages; ++s) {
        const auto [sh, sw] = cfg_.strides[s];
        const std::size_t in = s == 0 ? ch[0] : ch[s - 1];
        enc_down_.push_back(make_conv("enc.down" + std::to_string(s), in, ch[s], kernel(sh), kernel(sw), {sh, sw, 1, 1},
                                      false, rng));
        enc_res_.emplace_back();
        for (std::size_t r = 0; r < cfg_.res_blocks; ++r) {
            enc_res_.back().push_back(make_residual("enc.res" + std::to_string(s) + "." + std::to_string(r), ch[s], rng));
        }
    }
    enc_out_ = make_conv("enc.out", ch[stages - 1], cfg_.latent_dim, 1, 1, {}, false, rng);

    const T code_bound = static_cast<T>(1.0 / static_cast<double>(cfg_.codebook_size));
    codebook_ = store_.add_uniform("codebook", {cfg_.codebook_size, cfg_.latent_dim}, code_bound, rng);

    dec_in_ = make_conv("dec.in", cfg_.latent_dim, ch[stages - 1], 3, 3, same, false, rng);
    dec_res_.resize(stages);
    dec_up_.resize(stages);
    for (std::size_t s = stages; s-- > 0;) {
        for (std::size_t r = 0; r < cfg_.res_blocks; ++r) {
            dec_res_[s].push_back(make_residual("dec.res" + std::to_string(s) + "." + std::to_string(r), ch[s], rng));
        }
        const auto [sh, sw] = cfg_.strides[s];
        const std::size_t out = s == 0 ? ch[0] : ch[s - 1];
        dec_up_[s] = make_conv("dec.up" + std::to_string(s), ch[s], out, kernel(sh), kernel(sw), {sh, sw, 1, 1}, true, rng);
    }
    dec_head_ = make_conv("dec.head", ch[0], 2, 3, 3, same, false, rng);
}

template <typename T>
Tensor<T> Model<T>::encode(const Tensor<T>& x) const {
    if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != cfg_.height || x.dim(3) != cfg_.width) {
        throw ValidationError("vqvae encode: expected [N, 1, " + std::to_string(cfg_.height) + ", " +
                              std::to_string(cfg_.width) + "], got " + ad::shape_str(x.shape()));
    }
    auto h = ad::gelu(enc_in_(x));
    for (std::size_t s = 0; s < enc_down_.size(); ++s) {
        h = ad::gelu(enc_down_[s](h));
        for (const auto& r : enc_res_[s]) h = r(h);
    }
    return enc_out_(ad::gelu(h));
}

template <typename T>
Quantized<T> Model<T>::quantize(const Tensor<T>& z) const {
    const std::size_t n = z.dim(0), d = z.dim(1), h = z.dim(2), w = z.dim(3);
    if (d != cfg_.latent_dim) {
        throw ValidationError("vqvae quantize: latent has " + std::to_string(d) + " channels, codebook has " +
                              std::to_string(cfg_.latent_dim));
    }
    Quantized<T> q;
    q.z_rows = ad::reshape(ad::permute(z, {0, 2, 3, 1}), {n * h * w, d});
    q.tokens = nearest_codes(q.z_rows.data().data(), n * h * w, codebook_.data().data(), cfg_.codebook_size, d);
    q.code_rows = ad::embedding(codebook_, q.tokens, {n * h * w});
    const auto st = ad::straight_through(q.z_rows, ad::detach(q.code_rows));
    q.zq = ad::permute(ad::reshape(st, {n, h, w, d}), {0, 3, 1, 2});
    return q;
}

template <typename T>
DecoderOutput<T> Model<T>::decode(const Tensor<T>& zq) const {
    if (zq.rank() != 4 || zq.dim(1) != cfg_.latent_dim || zq.dim(2) != cfg_.latent_h() || zq.dim(3) != cfg_.latent_w()) {
        throw ValidationError("vqvae decode: expected [N, " + std::to_string(cfg_.latent_dim) + ", " +
                              std::to_string(cfg_.latent_h()) + ", " + std::to_string(cfg_.latent_w()) + "], got " +
                              ad::shape_str(zq.shape()));
    }
    auto h = dec_in_(zq);
    for (std::size_t s = dec_up_.size(); s-- > 0;) {
        for (const auto& r : dec_res_[s]) h = r(h);
        h = ad::gelu(dec_up_[s](ad::gelu(h)));
    }
    const auto head = dec_head_(h);
    return {ad::slice(head, 1, 0, 1), ad::slice(head, 1, 1, 2)};
}

template <typename T>
ForwardResult<T> Model<T>::forward(const Tensor<T>& x) const {
    ForwardResult<T> r;
    r.z = encode(x);
    r.q = quantize(r.z);
    r.out = decode(r.q.zq);
    return r;
}

template <typename T>
Tensor<T> Model<T>::lookup(const std::vector<std::int32_t>& tokens, std::size_t batch) const {
    const std::size_t h = cfg_.latent_h(), w = cfg_.latent_w();
    if (tokens.size() != batch * h * w) {
        throw ValidationError("vqvae lookup: " + std::to_string(tokens.size()) + " tokens for " + std::to_string(batch) +
                              " grids of " + std::to_string(h) + "x" + std::to_string(w));
    }
    for (auto t : tokens) {
        if (t < 0 || static_cast<std::size_t>(t) >= cfg_.codebook_size) {
            throw ValidationError("vqvae lookup: token " + std::to_string(t) + " outside codebook of size " +
                                  std::to_string(cfg_.codebook_size));
        }
    }
    return ad::permute(ad::embedding(codebook_, tokens, {batch, h, w}), {0, 3, 1, 2});
}

template <typename T>
Tensor<T> loss_rec(const Tensor<T>& x, const Tensor<T>& mask, const Tensor<T>& range) {
    return ad::mean(ad::abs(ad::mul(mask, ad::sub(x, range))));
}

template <typename T>
Tensor<T> loss_raydrop(const Tensor<T>& mask, const Tensor<T>& logits) {
    const auto keep = ad::mul(mask, ad::log(ad::sigmoid(logits)));
    const auto inv_mask = ad::add_scalar(ad::neg(mask), T(1));
    const auto drop = ad::mul(inv_mask, ad::log(ad::sigmoid(ad::neg(logits))));
    return ad::neg(ad::mean(ad::add(keep, drop)));
}

template <typename T>
Tensor<T> loss_commit(const Tensor<T>& z_rows, const Tensor<T>& code_rows, T beta) {
    const auto codebook_term = ad::mean(ad::square(ad::sub(ad::detach(z_rows), code_rows)));
    const auto encoder_term = ad::mean(ad::square(ad::sub(ad::detach(code_rows), z_rows)));
    return ad::add(codebook_term, ad::scale(encoder_term, beta));
}

template <typename T>
Tensor<T> loss_total(const Tensor<T>& rec, const Tensor<T>& raydrop, const Tensor<T>& commit, T lambda) {
    return ad::add(ad::add(rec, ad::scale(raydrop, lambda)), commit);
}

template <typename T>
Tensor<T> loss_regression(const Tensor<T>& x, const Tensor<T>& range) {
    return ad::mean(ad::abs(ad::sub(x, range)));
}

#define LGRIT_VQ_INSTANTIATE(T)                                                                                     \
    template std::vector<std::int32_t> nearest_codes<T>(const T*, std::size_t, const T*, std::size_t, std::size_t); \
    template class Model<T>;                                                                                        \
    template Tensor<T> loss_rec(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> loss_raydrop(const Tensor<T>&, const Tensor<T>&);                                            \
    template Tensor<T> loss_commit(const Tensor<T>&, const Tensor<T>&, T);                                          \
    template Tensor<T> loss_total(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                         \
    template Tensor<T> loss_regression(const Tensor<T>&, const Tensor<T>&);

LGRIT_VQ_INSTANTIATE(float)
LGRIT_VQ_INSTANTIATE(double)
#undef LGRIT_VQ_INSTANTIATE

}  // namespace lgrit::vqvae
