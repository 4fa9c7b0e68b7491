#include "lgrit/ar/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lgrit/core/error.hpp"

namespace lgrit::ar {

void TransformerConfig::validate() const {
    if (vocab < 2) throw ValidationError("transformer: vocab must be >= 2");
    if (vocab > 65535) throw ValidationError("transformer: vocab must fit 16-bit token files");
    if (length < 1) throw ValidationError("transformer: sequence length must be >= 1");
    if (d_model < 1 || heads < 1 || layers < 1 || ff_mult < 1) {
        throw ValidationError("transformer: d_model, heads, layers and ff_mult must be >= 1");
    }
    if (d_model % heads != 0) {
        throw ValidationError("transformer: d_model " + std::to_string(d_model) + " is not divisible by " +
                              std::to_string(heads) + " heads");
    }
}

namespace {

template <typename T>
std::vector<T> normal_init(std::size_t n, double stddev, Rng& rng) {
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(stddev * rng.normal());
    return v;
}

/// 1 above the diagonal of an n x n grid.
std::vector<std::uint8_t> causal_mask(std::size_t n) {
    std::vector<std::uint8_t> m(n * n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) m[i * n + j] = 1;
    return m;
}

}  // namespace

template <typename T>
Tensor<T> Transformer<T>::linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng, Tensor<T>& bias) {
    bias = store_.add_zeros(name + ".b", {out});
    return store_.add_uniform(name + ".w", {in, out}, static_cast<T>(1.0 / std::sqrt(static_cast<double>(in))), rng);
}

template <typename T>
Transformer<T>::Transformer(const TransformerConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(seed, "transformer.init"));
    const std::size_t d = cfg_.d_model, ff = cfg_.ff_mult * d;
    tok_emb_ = store_.add("tok_emb", {cfg_.vocab + 1, d}, normal_init<T>((cfg_.vocab + 1) * d, 0.02, rng));
    pos_emb_ = store_.add("pos_emb", {cfg_.length + 1, d}, normal_init<T>((cfg_.length + 1) * d, 0.02, rng));
    blocks_.resize(cfg_.layers);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        auto& b = blocks_[l];
        const std::string p = "block" + std::to_string(l);
        b.ln1_g = store_.add_full(p + ".ln1.g", {d}, T(1));
        b.ln1_b = store_.add_zeros(p + ".ln1.b", {d});
        b.wq = linear(p + ".q", d, d, rng, b.bq);
        b.wk = linear(p + ".k", d, d, rng, b.bk);
        b.wv = linear(p + ".v", d, d, rng, b.bv);
        b.wo = linear(p + ".o", d, d, rng, b.bo);
        b.ln2_g = store_.add_full(p + ".ln2.g", {d}, T(1));
        b.ln2_b = store_.add_zeros(p + ".ln2.b", {d});
        b.w1 = linear(p + ".ff1", d, ff, rng, b.b1);
        b.w2 = linear(p + ".ff2", ff, d, rng, b.b2);
    }
    lnf_g_ = store_.add_full("lnf.g", {d}, T(1));
    lnf_b_ = store_.add_zeros("lnf.b", {d});
    out_w_ = linear("out", d, cfg_.vocab, rng, out_b_);
}

template <typename T>
Tensor<T> Transformer<T>::logits(const std::vector<std::int32_t>& inputs, std::size_t batch) const {
    if (batch == 0 || inputs.empty() || inputs.size() % batch != 0) {
        throw ValidationError("transformer: " + std::to_string(inputs.size()) + " inputs do not split into " +
                              std::to_string(batch) + " rows");
    }
    const std::size_t n = inputs.size() / batch;
    if (n > cfg_.length) {
        throw ValidationError("transformer: input of " + std::to_string(n) + " positions exceeds sequence length " +
                              std::to_string(cfg_.length));
    }
    for (auto t : inputs) {
        if (t < 0 || static_cast<std::size_t>(t) > cfg_.vocab) {
            throw ValidationError("transformer: token " + std::to_string(t) + " outside [0, " +
                                  std::to_string(cfg_.vocab) + "]");
        }
    }
    const std::size_t d = cfg_.d_model, heads = cfg_.heads, dh = d / heads;
    const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    const auto mask = causal_mask(n);

    auto split = [&](const Tensor<T>& x) {
        return ad::reshape(ad::permute(ad::reshape(x, {batch, n, heads, dh}), {0, 2, 1, 3}), {batch * heads, n, dh});
    };

    auto h = ad::add(ad::embedding(tok_emb_, inputs, {batch, n}), ad::slice(pos_emb_, 0, 0, n));
    for (const auto& b : blocks_) {
        const auto a = ad::layer_norm(h, b.ln1_g, b.ln1_b);
        const auto q = split(ad::add(ad::matmul(a, b.wq), b.bq));
        const auto k = split(ad::add(ad::matmul(a, b.wk), b.bk));
        const auto v = split(ad::add(ad::matmul(a, b.wv), b.bv));
        auto scores = ad::scale(ad::bmm(q, ad::transpose(k, 1, 2)), inv_sqrt);
        scores = ad::masked_fill(scores, mask, static_cast<T>(-1e9));
        const auto o = ad::bmm(ad::softmax(scores), v);
        const auto merged = ad::reshape(ad::permute(ad::reshape(o, {batch, heads, n, dh}), {0, 2, 1, 3}), {batch, n, d});
        h = ad::add(h, ad::add(ad::matmul(merged, b.wo), b.bo));
        const auto f = ad::layer_norm(h, b.ln2_g, b.ln2_b);
        const auto inner = ad::gelu(ad::add(ad::matmul(f, b.w1), b.b1));
        h = ad::add(h, ad::add(ad::matmul(inner, b.w2), b.b2));
    }
    return ad::add(ad::matmul(ad::layer_norm(h, lnf_g_, lnf_b_), out_w_), out_b_);
}

std::vector<std::int32_t> teacher_inputs(const std::vector<std::vector<std::int32_t>>& sequences, std::int32_t sentinel) {
    std::vector<std::int32_t> in;
    for (const auto& s : sequences) {
        if (s.empty()) throw ValidationError("transformer: empty sequence");
        in.push_back(sentinel);
        in.insert(in.end(), s.begin(), s.end() - 1);
    }
    return in;
}

template <typename T>
Tensor<T> nll_from_logits(const Tensor<T>& logits, const std::vector<std::vector<std::int32_t>>& sequences) {
    if (logits.rank() != 3 || logits.dim(0) != sequences.size()) {
        throw ValidationError("nll: logits " + ad::shape_str(logits.shape()) + " for " +
                              std::to_string(sequences.size()) + " sequences");
    }
    const std::size_t n = logits.dim(1), k = logits.dim(2);
    std::vector<std::int32_t> targets;
    targets.reserve(sequences.size() * n);
    for (const auto& s : sequences) {
        if (s.size() != n) {
            throw ValidationError("nll: sequence of length " + std::to_string(s.size()) + ", expected " +
                                  std::to_string(n));
        }
        for (auto t : s) {
            if (t < 0 || static_cast<std::size_t>(t) >= k) {
                throw ValidationError("nll: token " + std::to_string(t) + " outside vocabulary of " + std::to_string(k));
            }
        }
        targets.insert(targets.end(), s.begin(), s.end());
    }
    const auto lp = ad::log_softmax(ad::reshape(logits, {sequences.size() * n, k}));
    return ad::neg(ad::mean(ad::pick(lp, targets)));
}

template <typename T>
Tensor<T> nll_loss(const Transformer<T>& model, const std::vector<std::vector<std::int32_t>>& sequences) {
    if (sequences.empty()) throw ValidationError("nll: empty batch");
    const auto& cfg = model.config();
    for (const auto& s : sequences) {
        if (s.size() != cfg.length) {
            throw ValidationError("nll: sequence of length " + std::to_string(s.size()) + ", model expects " +
                                  std::to_string(cfg.length));
        }
    }
    const auto in = teacher_inputs(sequences, static_cast<std::int32_t>(cfg.sentinel()));
    return nll_from_logits(model.logits(in, sequences.size()), sequences);
}

namespace {

std::vector<double> softmax_row(std::span<const double> l) {
    const double mx = *std::max_element(l.begin(), l.end());
    std::vector<double> p(l.size());
    double s = 0.0;
    for (std::size_t i = 0; i < l.size(); ++i) s += (p[i] = std::exp(l[i] - mx));
    for (auto& v : p) v /= s;
    return p;
}

}  // namespace

template <typename T>
std::vector<double> next_token_distribution(const Transformer<T>& model, const std::vector<std::int32_t>& prefix) {
    const auto& cfg = model.config();
    if (prefix.size() >= cfg.length) {
        throw ValidationError("next_token_distribution: prefix of " + std::to_string(prefix.size()) +
                              " tokens leaves nothing to predict in a sequence of " + std::to_string(cfg.length));
    }
    for (auto t : prefix) {
        if (t < 0 || static_cast<std::size_t>(t) >= cfg.vocab) {
            throw ValidationError("next_token_distribution: token " + std::to_string(t) + " outside vocabulary");
        }
    }
    std::vector<std::int32_t> in{static_cast<std::int32_t>(cfg.sentinel())};
    in.insert(in.end(), prefix.begin(), prefix.end());
    ad::NoGradGuard guard;
    const auto l = model.logits(in, 1);
    const auto row = l.data().subspan(prefix.size() * cfg.vocab, cfg.vocab);
    const std::vector<double> ld(row.begin(), row.end());
    return softmax_row(ld);
}

void SamplingConfig::validate(std::size_t vocab) const {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw ValidationError("sampling: temperature must be a finite value > 0");
    }
    if (top_k > vocab) {
        throw ValidationError("sampling: top_k " + std::to_string(top_k) + " exceeds vocabulary of " +
                              std::to_string(vocab));
    }
}

std::int32_t sample_from_logits(std::span<const double> logits, const SamplingConfig& cfg, Rng& rng) {
    cfg.validate(logits.size());
    const std::size_t k = cfg.top_k == 0 ? logits.size() : cfg.top_k;
    std::vector<std::size_t> idx(logits.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
    idx.resize(k);
    std::vector<double> scaled(k);
    for (std::size_t i = 0; i < k; ++i) scaled[i] = logits[idx[i]] / cfg.temperature;
    const auto p = softmax_row(scaled);
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        acc += p[i];
        if (u < acc) return static_cast<std::int32_t>(idx[i]);
    }
    return static_cast<std::int32_t>(idx[k - 1]);
}

template <typename T>
std::vector<std::vector<std::int32_t>> sample_sequences(const Transformer<T>& model, std::size_t count,
                                                        const SamplingConfig& cfg, std::uint64_t seed) {
    const auto& mc = model.config();
    cfg.validate(mc.vocab);
    std::vector<std::vector<std::int32_t>> out(count);
    if (count == 0) return out;
    std::vector<Rng> rngs;
    rngs.reserve(count);
    for (std::size_t j = 0; j < count; ++j) rngs.emplace_back(derive_seed(seed, "sample", j));

    ad::NoGradGuard guard;
    std::vector<double> row(mc.vocab);
    for (std::size_t t = 0; t < mc.length; ++t) {
        std::vector<std::int32_t> in;
        in.reserve(count * (t + 1));
        for (const auto& s : out) {
            in.push_back(static_cast<std::int32_t>(mc.sentinel()));
            in.insert(in.end(), s.begin(), s.end());
        }
        const auto l = model.logits(in, count);
        const auto data = l.data();
        for (std::size_t j = 0; j < count; ++j) {
            const auto src = data.subspan((j * (t + 1) + t) * mc.vocab, mc.vocab);
            std::copy(src.begin(), src.end(), row.begin());
            out[j].push_back(sample_from_logits(row, cfg, rngs[j]));
        }
    }
    return out;
}

#define LGRIT_AR_INSTANTIATE(T)                                                                                  \
    template class Transformer<T>;                                                                               \
    template Tensor<T> nll_from_logits(const Tensor<T>&, const std::vector<std::vector<std::int32_t>>&);         \
    template Tensor<T> nll_loss(const Transformer<T>&, const std::vector<std::vector<std::int32_t>>&);           \
    template std::vector<double> next_token_distribution(const Transformer<T>&, const std::vector<std::int32_t>&); \
    template std::vector<std::vector<std::int32_t>> sample_sequences(const Transformer<T>&, std::size_t,         \
                                                                     const SamplingConfig&, std::uint64_t);

LGRIT_AR_INSTANTIATE(float)
LGRIT_AR_INSTANTIATE(double)
#undef LGRIT_AR_INSTANTIATE

}  // namespace lgrit::ar
