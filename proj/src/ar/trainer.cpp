#include "lgrit/ar/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <string>

#include "lgrit/ad/checkpoint.hpp"
#include "lgrit/core/error.hpp"

namespace lgrit::ar {

void TransformerTrainConfig::validate() const {
    if (steps < 1) throw ValidationError("transformer training: steps must be >= 1");
    if (batch_size < 1) throw ValidationError("transformer training: batch_size must be >= 1");
    if (log_every < 1) throw ValidationError("transformer training: log_every must be >= 1");
    if (checkpoint_every > 0 && checkpoint_dir.empty()) {
        throw ValidationError("transformer training: checkpoint_every set without a checkpoint directory");
    }
    adam.validate();
}

namespace {

void check_dataset(const TransformerConfig& mc, const std::vector<std::vector<std::int32_t>>& data) {
    if (data.empty()) throw ValidationError("transformer training: empty dataset");
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data[i].size() != mc.length) {
            throw ValidationError("transformer training: sequence " + std::to_string(i) + " has " +
                                  std::to_string(data[i].size()) + " tokens, model expects " + std::to_string(mc.length));
        }
        for (auto t : data[i]) {
            if (t < 0 || static_cast<std::size_t>(t) >= mc.vocab) {
                throw ValidationError("transformer training: sequence " + std::to_string(i) + " has token " +
                                      std::to_string(t) + " outside vocabulary of " + std::to_string(mc.vocab));
            }
        }
    }
}

}  // namespace

std::vector<NllRow> train_transformer(Transformer<float>& model, const std::vector<std::vector<std::int32_t>>& data,
                                      const TransformerTrainConfig& cfg, std::ostream* csv) {
    cfg.validate();
    check_dataset(model.config(), data);
    auto& store = model.store();
    const std::size_t n = data.size();
    const std::size_t batch = std::min(cfg.batch_size, n);
    const std::size_t per_epoch = (n + batch - 1) / batch;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng order_rng(derive_seed(cfg.seed, "batches"));

    std::vector<NllRow> log;
    if (csv) *csv << "step,nll\n";
    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        const std::size_t e = (step - 1) % per_epoch;
        if (e == 0) {
            for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);
        }
        std::vector<std::vector<std::int32_t>> seqs;
        for (std::size_t i = e * batch; i < std::min(n, (e + 1) * batch); ++i) seqs.push_back(data[order[i]]);

        store.zero_grad();
        const auto loss = nll_loss(model, seqs);
        const double value = loss.item();
        if (!std::isfinite(value)) {
            for (const auto& p : store.params()) {
                for (float v : p.tensor.data()) {
                    if (!std::isfinite(v)) {
                        throw NumericalError("transformer training: non-finite loss at step " + std::to_string(step) +
                                             "; first non-finite tensor is parameter '" + p.name + "'");
                    }
                }
            }
            throw NumericalError("transformer training: non-finite loss at step " + std::to_string(step));
        }
        loss.backward();
        ad::adam_step(store.params(), cfg.adam);

        if (step % cfg.log_every == 0 || step == cfg.steps || step == 1) {
            log.push_back({step, value});
            if (csv) {
                char buf[64];
                std::snprintf(buf, sizeof buf, "%zu,%.9g\n", step, value);
                *csv << buf;
            }
        }
        if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
            char name[48];
            std::snprintf(name, sizeof name, "transformer_step%06zu.ckpt", step);
            std::filesystem::create_directories(cfg.checkpoint_dir);
            ad::save_checkpoint(cfg.checkpoint_dir / name, store);
        }
    }
    return log;
}

double evaluate_nll(const Transformer<float>& model, const std::vector<std::vector<std::int32_t>>& data,
                    std::size_t batch_size) {
    check_dataset(model.config(), data);
    if (batch_size < 1) throw ValidationError("evaluate_nll: batch_size must be >= 1");
    ad::NoGradGuard guard;
    double total = 0.0;
    for (std::size_t lo = 0; lo < data.size(); lo += batch_size) {
        const std::size_t hi = std::min(data.size(), lo + batch_size);
        const std::vector<std::vector<std::int32_t>> seqs(data.begin() + static_cast<std::ptrdiff_t>(lo),
                                                          data.begin() + static_cast<std::ptrdiff_t>(hi));
        total += nll_loss(model, seqs).item() * static_cast<double>(hi - lo);
    }
    return total / static_cast<double>(data.size());
}

}  // namespace lgrit::ar
