#include "lgrit/vqvae/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "lgrit/ad/checkpoint.hpp"
#include "lgrit/core/error.hpp"
#include "lgrit/vqvae/output.hpp"

namespace lgrit::vqvae {

namespace {

void check_sample(const Sample& s, std::size_t h, std::size_t w, std::size_t i) {
    if (s.range.size() != h * w || s.mask.size() != h * w) {
        throw ValidationError("vqvae: sample " + std::to_string(i) + " has " + std::to_string(s.range.size()) +
                              " range values and " + std::to_string(s.mask.size()) + " mask bits; model expects " +
                              std::to_string(h) + "x" + std::to_string(w));
    }
}

template <typename T>
Tensor<T> grid_tensor(const std::vector<const Sample*>& batch, std::size_t h, std::size_t w, bool mask) {
    std::vector<T> v(batch.size() * h * w);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        for (std::size_t i = 0; i < h * w; ++i) {
            v[b * h * w + i] = mask ? static_cast<T>(batch[b]->mask[i]) : static_cast<T>(batch[b]->range[i]);
        }
    }
    return Tensor<T>::from({batch.size(), 1, h, w}, std::move(v));
}

template <typename T>
bool finite(const Tensor<T>& t) {
    for (T v : t.data()) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

[[noreturn]] void diagnose(const BatchLosses<float>& l, const Model<float>& model, std::size_t step) {
    const std::pair<const char*, const Tensor<float>*> named[] = {
        {"encoder input", &l.input},    {"encoder output z", &l.fwd.z},   {"quantized z_q", &l.fwd.q.zq},
        {"range head", &l.fwd.out.range}, {"logit head", &l.fwd.out.logits}, {"L_rec", &l.rec},
        {"L_RL", &l.raydrop},           {"L_com", &l.commit},
    };
    for (const auto& p : model.store().params()) {
        if (!finite(p.tensor)) {
            throw NumericalError("vqvae training: non-finite loss at step " + std::to_string(step) +
                                 "; first non-finite tensor is parameter '" + p.name + "'");
        }
    }
    for (const auto& [name, t] : named) {
        if (!finite(*t)) {
            throw NumericalError("vqvae training: non-finite loss at step " + std::to_string(step) +
                                 "; first non-finite tensor is '" + name + "'");
        }
    }
    throw NumericalError("vqvae training: non-finite total loss at step " + std::to_string(step));
}

/// Root-mean-square distance of row vectors from their mean.
double spread(std::span<const float> rows, std::size_t d) {
    const std::size_t m = rows.size() / d;
    std::vector<double> mu(d, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < d; ++j) mu[j] += rows[i * d + j];
    }
    for (auto& v : mu) v /= static_cast<double>(m);
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < d; ++j) s += (rows[i * d + j] - mu[j]) * (rows[i * d + j] - mu[j]);
    }
    return std::sqrt(s / static_cast<double>(m));
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

template <typename T>
BatchLosses<T> batch_losses(const Model<T>& model, const std::vector<const Sample*>& batch,
                            const GeometricTransform& transform) {
    const auto& cfg = model.config();
    const std::size_t h = cfg.height, w = cfg.width;
    if (batch.empty()) throw ValidationError("vqvae: empty batch");
    for (std::size_t i = 0; i < batch.size(); ++i) check_sample(*batch[i], h, w, i);

    std::vector<Sample> moved;
    std::vector<const Sample*> targets = batch;
    if (transform.kind != TransformKind::identity) {
        moved.reserve(batch.size());
        for (const auto* s : batch) {
            auto g = apply_geometric_preservation(s->range, s->mask, h, w, transform);
            moved.push_back({std::move(g.image), std::move(g.mask)});
        }
        for (std::size_t i = 0; i < batch.size(); ++i) targets[i] = &moved[i];
    }
    const auto& encoder_in = cfg.gp.transform_encoder_input ? targets : batch;

    BatchLosses<T> l;
    l.input = grid_tensor<T>(encoder_in, h, w, false);
    const auto x = grid_tensor<T>(targets, h, w, false);
    const auto m = grid_tensor<T>(targets, h, w, true);
    l.fwd = model.forward(l.input);
    l.commit = loss_commit(l.fwd.q.z_rows, l.fwd.q.code_rows, static_cast<T>(cfg.beta));
    if (cfg.raydrop_head) {
        l.rec = loss_rec(x, m, l.fwd.out.range);
        l.raydrop = loss_raydrop(m, l.fwd.out.logits);
        l.total = loss_total(l.rec, l.raydrop, l.commit, static_cast<T>(cfg.lambda));
    } else {
        l.rec = loss_regression(x, l.fwd.out.range);
        l.raydrop = Tensor<T>::scalar(T(0));
        l.total = ad::add(l.rec, l.commit);
    }
    return l;
}

template BatchLosses<float> batch_losses(const Model<float>&, const std::vector<const Sample*>&, const GeometricTransform&);
template BatchLosses<double> batch_losses(const Model<double>&, const std::vector<const Sample*>&,
                                          const GeometricTransform&);

void TrainConfig::validate() const {
    if (steps < 1) throw ValidationError("vqvae training: steps must be >= 1");
    if (batch_size < 1) throw ValidationError("vqvae training: batch_size must be >= 1");
    if (log_every < 1) throw ValidationError("vqvae training: log_every must be >= 1");
    if (checkpoint_every > 0 && checkpoint_dir.empty()) {
        throw ValidationError("vqvae training: checkpoint_every set without a checkpoint directory");
    }
    adam.validate();
}

void write_log_header(std::ostream& os) { os << "step,L_rec,L_RL,L_com,total,codebook_usage_fraction\n"; }

void write_log_row(std::ostream& os, const LogRow& r) {
    char buf[192];
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.6f\n", r.step, r.rec, r.raydrop, r.commit, r.total,
                  r.usage);
    os << buf;
}

TrainResult train_vqvae(Model<float>& model, const std::vector<Sample>& data, const TrainConfig& cfg, std::ostream* csv) {
    cfg.validate();
    if (data.empty()) throw ValidationError("vqvae training: empty dataset");
    const auto& mc = model.config();
    for (std::size_t i = 0; i < data.size(); ++i) check_sample(data[i], mc.height, mc.width, i);

    auto& store = model.store();
    auto* codebook = store.find("codebook");
    const std::size_t k = mc.codebook_size, d = mc.latent_dim;
    const std::size_t n = data.size();
    const std::size_t batch = std::min(cfg.batch_size, n);
    const std::size_t per_epoch = (n + batch - 1) / batch;
    const std::size_t window = std::max(per_epoch, cfg.dead_code_window);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng order_rng(derive_seed(cfg.seed, "batches"));
    Rng code_rng(derive_seed(cfg.seed, "codebook"));
    double noise = 0.0;

    if (cfg.init_codebook_from_data) {
        ad::NoGradGuard no_grad;
        std::vector<const Sample*> first;
        for (std::size_t i = 0; i < std::min<std::size_t>(n, 64); ++i) first.push_back(&data[i]);
        const auto z = model.quantize(model.encode(grid_tensor<float>(first, mc.height, mc.width, false))).z_rows;
        const std::size_t m = z.dim(0);
        noise = 0.01 * spread(z.data(), d);
        auto cb = codebook->tensor.mutable_data();
        for (std::size_t c = 0; c < k; ++c) {
            const std::size_t r = code_rng.below(m);
            for (std::size_t j = 0; j < d; ++j) {
                cb[c * d + j] = z.data()[r * d + j] + static_cast<float>(noise * code_rng.normal());
            }
        }
    }

    TrainResult result;
    std::vector<std::size_t> usage(k, 0), epoch_usage(k, 0);
    std::vector<float> last_z;
    if (csv) write_log_header(*csv);

    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        const std::size_t e = (step - 1) % per_epoch;
        if (e == 0) {
            shuffle(order, order_rng);
            std::fill(epoch_usage.begin(), epoch_usage.end(), 0);
        }
        std::vector<const Sample*> ptrs;
        for (std::size_t i = e * batch; i < std::min(n, (e + 1) * batch); ++i) ptrs.push_back(&data[order[i]]);

        GeometricTransform t;
        if (mc.gp.enabled) {
            Rng gp_rng(derive_seed(cfg.seed, "gp", step));
            t = sample_transform(mc.gp, gp_rng);
        }

        store.zero_grad();
        const auto l = batch_losses(model, ptrs, t);
        if (!std::isfinite(l.total.item())) diagnose(l, model, step);
        l.total.backward();
        ad::adam_step(store.params(), cfg.adam);
        for (const auto& p : store.params()) {
            if (!finite(p.tensor)) {
                throw NumericalError("vqvae training: parameter '" + p.name + "' became non-finite after step " +
                                     std::to_string(step));
            }
        }

        for (auto tok : l.fwd.q.tokens) {
            ++usage[static_cast<std::size_t>(tok)];
            ++epoch_usage[static_cast<std::size_t>(tok)];
        }
        last_z.assign(l.fwd.q.z_rows.data().begin(), l.fwd.q.z_rows.data().end());

        if (cfg.reseed_dead_codes && step % window == 0 && step < cfg.steps) {
            const std::size_t m = last_z.size() / d;
            noise = 0.01 * spread(last_z, d);
            auto cb = codebook->tensor.mutable_data();
            std::size_t count = 0;
            for (std::size_t c = 0; c < k; ++c) {
                if (usage[c] != 0) continue;
                const std::size_t r = code_rng.below(m);
                for (std::size_t j = 0; j < d; ++j) {
                    cb[c * d + j] = last_z[r * d + j] + static_cast<float>(noise * code_rng.normal());
                    codebook->first_moment[c * d + j] = 0.0f;
                    codebook->second_moment[c * d + j] = 0.0f;
                }
                ++count;
            }
            if (count > 0) {
                result.reseeded_codes += count;
                result.events.push_back("step " + std::to_string(step) + ": re-seeded " + std::to_string(count) +
                                        " dead codes");
            }
            std::fill(usage.begin(), usage.end(), 0);
        }

        if (step % cfg.log_every == 0 || step == cfg.steps || step == 1) {
            LogRow row;
            row.step = step;
            row.rec = l.rec.item();
            row.raydrop = l.raydrop.item();
            row.commit = l.commit.item();
            row.total = l.total.item();
            std::size_t used = 0;
            for (auto u : epoch_usage) used += u > 0;
            row.usage = static_cast<double>(used) / static_cast<double>(k);
            result.log.push_back(row);
            if (csv) write_log_row(*csv, row);
        }
        if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
            char name[40];
            std::snprintf(name, sizeof name, "vqvae_step%06zu.ckpt", step);
            std::filesystem::create_directories(cfg.checkpoint_dir);
            ad::save_checkpoint(cfg.checkpoint_dir / name, store);
        }
    }
    return result;
}

namespace {

template <typename Fn>
void for_batches(std::size_t n, std::size_t batch_size, Fn fn) {
    if (batch_size < 1) throw ValidationError("vqvae: batch_size must be >= 1");
    for (std::size_t start = 0; start < n; start += batch_size) fn(start, std::min(n, start + batch_size));
}

std::vector<Reconstruction> split_outputs(const DecoderOutput<float>& out, const std::vector<std::int32_t>* tokens,
                                          std::size_t count, std::size_t hw, std::size_t tokens_per) {
    std::vector<Reconstruction> r(count);
    for (std::size_t b = 0; b < count; ++b) {
        r[b].range.assign(out.range.data().begin() + b * hw, out.range.data().begin() + (b + 1) * hw);
        r[b].logits.assign(out.logits.data().begin() + b * hw, out.logits.data().begin() + (b + 1) * hw);
        if (tokens) r[b].tokens.assign(tokens->begin() + b * tokens_per, tokens->begin() + (b + 1) * tokens_per);
    }
    return r;
}

}  // namespace

std::vector<std::vector<std::int32_t>> encode_tokens(const Model<float>& model, const std::vector<Sample>& data,
                                                     std::size_t batch_size) {
    const auto& mc = model.config();
    const std::size_t per = mc.tokens_per_image();
    std::vector<std::vector<std::int32_t>> out;
    ad::NoGradGuard no_grad;
    for_batches(data.size(), batch_size, [&](std::size_t lo, std::size_t hi) {
        std::vector<const Sample*> ptrs;
        for (std::size_t i = lo; i < hi; ++i) {
            check_sample(data[i], mc.height, mc.width, i);
            ptrs.push_back(&data[i]);
        }
        const auto q = model.quantize(model.encode(grid_tensor<float>(ptrs, mc.height, mc.width, false)));
        for (std::size_t b = 0; b < ptrs.size(); ++b) out.emplace_back(q.tokens.begin() + b * per, q.tokens.begin() + (b + 1) * per);
    });
    return out;
}

std::vector<Reconstruction> reconstruct(const Model<float>& model, const std::vector<Sample>& data,
                                        std::size_t batch_size) {
    const auto& mc = model.config();
    std::vector<Reconstruction> out;
    ad::NoGradGuard no_grad;
    for_batches(data.size(), batch_size, [&](std::size_t lo, std::size_t hi) {
        std::vector<const Sample*> ptrs;
        for (std::size_t i = lo; i < hi; ++i) {
            check_sample(data[i], mc.height, mc.width, i);
            ptrs.push_back(&data[i]);
        }
        const auto f = model.forward(grid_tensor<float>(ptrs, mc.height, mc.width, false));
        auto part = split_outputs(f.out, &f.q.tokens, ptrs.size(), mc.height * mc.width, mc.tokens_per_image());
        for (auto& p : part) out.push_back(std::move(p));
    });
    return out;
}

std::vector<Reconstruction> decode_tokens(const Model<float>& model, const std::vector<std::vector<std::int32_t>>& grids,
                                          std::size_t batch_size) {
    const auto& mc = model.config();
    const std::size_t per = mc.tokens_per_image();
    std::vector<Reconstruction> out;
    ad::NoGradGuard no_grad;
    for_batches(grids.size(), batch_size, [&](std::size_t lo, std::size_t hi) {
        std::vector<std::int32_t> tokens;
        for (std::size_t i = lo; i < hi; ++i) {
            if (grids[i].size() != per) {
                throw ValidationError("vqvae decode: token grid " + std::to_string(i) + " has " +
                                      std::to_string(grids[i].size()) + " tokens, model expects " + std::to_string(per));
            }
            tokens.insert(tokens.end(), grids[i].begin(), grids[i].end());
        }
        const auto dec = model.decode(model.lookup(tokens, hi - lo));
        auto part = split_outputs(dec, &tokens, hi - lo, mc.height * mc.width, per);
        for (auto& p : part) out.push_back(std::move(p));
    });
    return out;
}

geom::RaydropMask predicted_mask(const VqvaeConfig& cfg, const Reconstruction& r, const geom::ProjectionConfig& proj) {
    if (cfg.raydrop_head) return threshold_mask(r.logits, cfg.height, cfg.width);
    return threshold_range(r.range, cfg.height, cfg.width, baseline_threshold(proj));
}

}  // namespace lgrit::vqvae
