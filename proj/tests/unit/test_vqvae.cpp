#include <cmath>
#include <sstream>

#include "doctest.h"
#include "lgrit/ad/grad_check.hpp"
#include "lgrit/core/error.hpp"
#include "lgrit/core/rng.hpp"
#include "lgrit/vqvae/geometric.hpp"
#include "lgrit/vqvae/model.hpp"
#include "lgrit/vqvae/output.hpp"
#include "lgrit/vqvae/trainer.hpp"
#include "vqvae_oracles.hpp"

using namespace lgrit;
using namespace lgrit::vqvae;
using ad::Tensor;

namespace {

VqvaeConfig tiny_config() {
    VqvaeConfig c;
    c.height = 8;
    c.width = 16;
    c.strides = {{2, 2}, {1, 2}};
    c.channels = {4, 4};
    c.codebook_size = 8;
    c.latent_dim = 3;
    return c;
}

std::vector<Sample> random_samples(std::size_t count, std::size_t h, std::size_t w, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Sample> out(count);
    for (auto& s : out) {
        s.range.resize(h * w);
        s.mask.resize(h * w);
        for (std::size_t i = 0; i < h * w; ++i) {
            s.mask[i] = rng.bernoulli(0.8) ? 1 : 0;
            s.range[i] = s.mask[i] ? static_cast<float>(rng.uniform(0.1, 1.0)) : 0.0f;
        }
    }
    return out;
}

std::vector<const Sample*> pointers(const std::vector<Sample>& v) {
    std::vector<const Sample*> p;
    for (const auto& s : v) p.push_back(&s);
    return p;
}

Tensor<double> grid(std::size_t h, std::size_t w, std::vector<double> v) { return Tensor<double>::from({1, 1, h, w}, std::move(v)); }

template <typename T>
Tensor<T> random_tensor(ad::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
    return Tensor<T>::from(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("encoder and decoder shape arithmetic") {
    struct Case {
        std::size_t h, w;
        std::vector<std::pair<std::size_t, std::size_t>> strides;
        std::size_t lh, lw;
    };
    const Case cases[] = {
        {64, 256, {{2, 2}, {2, 2}, {2, 2}}, 8, 32},
        {64, 1024, {{2, 2}, {2, 2}, {2, 2}, {1, 2}}, 8, 64},
    };
    for (const auto& cs : cases) {
        VqvaeConfig c;
        c.height = cs.h;
        c.width = cs.w;
        c.strides = cs.strides;
        c.channels.assign(cs.strides.size(), 2);
        c.codebook_size = 4;
        c.latent_dim = 3;
        c.res_blocks = 0;
        c.validate();
        CHECK(c.latent_h() == cs.lh);
        CHECK(c.latent_w() == cs.lw);
        Model<float> m(c, 1);
        ad::NoGradGuard g;
        const auto z = m.encode(Tensor<float>::zeros({1, 1, cs.h, cs.w}));
        CHECK(z.shape() == ad::Shape{1, 3, cs.lh, cs.lw});
        const auto out = m.decode(m.quantize(z).zq);
        CHECK(out.range.shape() == ad::Shape{1, 1, cs.h, cs.w});
        CHECK(out.logits.shape() == ad::Shape{1, 1, cs.h, cs.w});
    }
}

TEST_CASE("indivisible image sizes and mismatched latents are rejected") {
    auto c = tiny_config();
    c.width = 18;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    CHECK_THROWS_AS(Model<float>(c, 1), ValidationError);

    Model<float> m(tiny_config(), 1);
    CHECK_THROWS_AS(m.decode(Tensor<float>::zeros({1, 3, 4, 5})), ValidationError);
    CHECK_THROWS_AS(m.encode(Tensor<float>::zeros({1, 1, 8, 8})), ValidationError);
}

TEST_CASE("encoding is deterministic") {
    Model<float> a(tiny_config(), 42), b(tiny_config(), 42);
    Rng rng(3);
    const auto x = random_tensor<float>({2, 1, 8, 16}, rng);
    ad::NoGradGuard g;
    const auto za = a.encode(x), zb = b.encode(x), za2 = a.encode(x);
    CHECK(std::equal(za.data().begin(), za.data().end(), zb.data().begin()));
    CHECK(std::equal(za.data().begin(), za.data().end(), za2.data().begin()));
    CHECK(a.quantize(za).tokens == b.quantize(zb).tokens);
}

TEST_CASE("quantizer picks the nearest row and breaks ties low") {
    const float codebook[] = {0, 0, 1, 1};
    const float v[] = {0.9f, 0.8f};
    CHECK(nearest_codes(v, 1, codebook, 2, 2) == std::vector<std::int32_t>{1});
    const float tie[] = {0.5f, 0.5f};
    CHECK(nearest_codes(tie, 1, codebook, 2, 2) == std::vector<std::int32_t>{0});
    const float dup[] = {1, 1, 1, 1, 0, 0};
    CHECK(nearest_codes(v, 1, dup, 3, 2) == std::vector<std::int32_t>{0});
}

TEST_CASE("quantizer matches exhaustive nearest neighbor at K = 64") {
    Rng rng(11);
    const std::size_t k = 64, d = 5, m = 8 * 8;
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> book(k * d), rows(m * d);
        for (auto& x : book) x = rng.normal();
        for (auto& x : rows) x = rng.normal();
        const auto got = nearest_codes(rows.data(), m, book.data(), k, d);
        for (std::size_t i = 0; i < m; ++i) {
            std::size_t best = 0;
            double best_d = INFINITY;
            for (std::size_t j = 0; j < k; ++j) {
                double s = 0.0;
                for (std::size_t t = 0; t < d; ++t) s += std::pow(rows[i * d + t] - book[j * d + t], 2);
                if (s < best_d) best_d = s, best = j;
            }
            CHECK(got[i] == static_cast<std::int32_t>(best));
        }
    }
}

TEST_CASE("quantize outputs codebook rows and passes gradients straight through") {
    Model<double> m(tiny_config(), 5);
    Rng rng(8);
    auto z = random_tensor<double>({2, 3, 4, 4}, rng);
    z = Tensor<double>::from(z.shape(), std::vector<double>(z.data().begin(), z.data().end()), true);
    const auto q = m.quantize(z);
    const auto book = m.codebook().data();
    for (std::size_t i = 0; i < q.tokens.size(); ++i) {
        const std::size_t n = i / 16, p = i % 16;
        for (std::size_t c = 0; c < 3; ++c) {
            CHECK(q.zq.data()[(n * 3 + c) * 16 + p] == book[static_cast<std::size_t>(q.tokens[i]) * 3 + c]);
        }
    }
    // The Jacobian along the backward path is the identity: for a random
    // cotangent r, d<r, zq>/dz = r.
    const auto r = random_tensor<double>(z.shape(), rng);
    ad::sum(ad::mul(q.zq, r)).backward();
    for (std::size_t i = 0; i < r.numel(); ++i) CHECK(z.grad()[i] == r.data()[i]);
}

TEST_CASE("all-zero parameters decode to zero") {
    Model<double> m(tiny_config(), 9);
    for (auto& p : m.store().params()) {
        for (auto& v : p.tensor.mutable_data()) v = 0.0;
    }
    ad::NoGradGuard g;
    const auto zq = m.lookup(std::vector<std::int32_t>(2 * 4 * 4, 3), 2);
    const auto out = m.decode(zq);
    for (double v : out.range.data()) CHECK(v == 0.0);
    for (double v : out.logits.data()) CHECK(v == 0.0);
}

TEST_CASE("lookup rejects bad token grids") {
    Model<float> m(tiny_config(), 9);
    CHECK_THROWS_AS(m.lookup(std::vector<std::int32_t>(15, 0), 1), ValidationError);
    CHECK_THROWS_AS(m.lookup(std::vector<std::int32_t>(16, 8), 1), ValidationError);
}

TEST_CASE("threshold_mask examples and elementwise oracle") {
    const std::vector<float> l{0.0f, -3.0f, 3.0f, -1e-7f};
    CHECK(threshold_mask(l, 1, 4).bits == std::vector<std::uint8_t>{1, 0, 1, 0});
    Rng rng(2);
    std::vector<float> logits(64 * 64);
    for (auto& v : logits) v = static_cast<float>(rng.normal() * 4.0);
    const auto m = threshold_mask(logits, 64, 64);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        CHECK(m.bits[i] == (1.0 / (1.0 + std::exp(-static_cast<double>(logits[i]))) >= 0.5 ? 1 : 0));
    }
    CHECK_THROWS_AS(threshold_mask(logits, 3, 3), ValidationError);
}

TEST_CASE("compose keeps exactly the mask support") {
    geom::ProjectionConfig cfg;
    cfg.height = 2;
    cfg.width = 3;
    const std::vector<float> r{0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f};
    CHECK(compose(r, geom::RaydropMask(2, 3, 1), cfg).values == r);
    CHECK(compose(r, geom::RaydropMask(2, 3, 0), cfg).values == std::vector<float>(6, 0.0f));
    geom::RaydropMask mixed(2, 3);
    mixed.bits = {1, 0, 0, 1, 1, 0};
    const auto img = compose(r, mixed, cfg);
    for (std::size_t i = 0; i < 6; ++i) CHECK((img.values[i] != 0.0f) == (mixed.bits[i] == 1));
}

TEST_CASE("loss_rec examples") {
    const auto x = grid(2, 2, {1, 0, 0.5, 0});
    const auto m = grid(2, 2, {1, 0, 1, 0});
    const auto r = grid(2, 2, {0.5, 0.9, 0.5, 0.1});
    CHECK(loss_rec(x, m, r).item() == doctest::Approx(0.125).epsilon(1e-15));
    CHECK(loss_rec(x, m, x).item() == 0.0);
    CHECK(loss_rec(x, grid(2, 2, {0, 0, 0, 0}), r).item() == 0.0);

    // Perturbing the range head where the mask is 0 changes nothing.
    Rng rng(4);
    for (int t = 0; t < 10; ++t) {
        const auto r2 = grid(2, 2, {0.5, rng.uniform(-5, 5), 0.5, rng.uniform(-5, 5)});
        CHECK(loss_rec(x, m, r2).item() == loss_rec(x, m, r).item());
    }
}

TEST_CASE("loss_raydrop examples and BCE oracle") {
    Rng rng(6);
    std::vector<double> mv(16);
    for (auto& v : mv) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const auto m = grid(4, 4, mv);
    CHECK(loss_raydrop(m, grid(4, 4, std::vector<double>(16, 0.0))).item() == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(loss_raydrop(grid(1, 1, {1.0}), grid(1, 1, {40.0})).item() < 1e-15);
    CHECK(loss_raydrop(grid(1, 1, {1.0}), grid(1, 1, {40.0})).item() >= 0.0);

    for (int t = 0; t < 5; ++t) {
        std::vector<double> lv(16);
        for (auto& v : lv) v = rng.uniform(-6, 6);
        double oracle = 0.0;
        for (std::size_t i = 0; i < 16; ++i) {
            const double p = 1.0 / (1.0 + std::exp(-lv[i]));
            oracle -= mv[i] * std::log(p) + (1.0 - mv[i]) * std::log(1.0 - p);
        }
        oracle /= 16.0;
        CHECK(std::abs(loss_raydrop(m, grid(4, 4, lv)).item() - oracle) < 1e-12);
    }
}

TEST_CASE("loss_commit value and stop-gradient contracts") {
    auto z = Tensor<double>::from({1, 2}, {0, 0}, true);
    auto e = Tensor<double>::from({1, 2}, {1, 1}, true);
    CHECK(loss_commit(z, e).item() == 2.0);
    CHECK(loss_commit(e, e).item() == 0.0);

    Rng rng(12);
    std::vector<double> zv(12), ev(12);
    for (auto& v : zv) v = rng.normal();
    for (auto& v : ev) v = rng.normal();
    const double beta = 0.7;
    z = Tensor<double>::from({4, 3}, zv, true);
    e = Tensor<double>::from({4, 3}, ev, true);
    loss_commit(z, e, beta).backward();
    // The codebook term reaches only e and the encoder term only z.
    for (std::size_t i = 0; i < 12; ++i) {
        CHECK(e.grad()[i] == doctest::Approx(2.0 * (ev[i] - zv[i]) / 12.0).epsilon(1e-14));
        CHECK(z.grad()[i] == doctest::Approx(beta * 2.0 * (zv[i] - ev[i]) / 12.0).epsilon(1e-14));
    }
    z.zero_grad();
    e.zero_grad();
    loss_commit(z, e, 0.0).backward();
    for (std::size_t i = 0; i < 12; ++i) CHECK(z.grad()[i] == 0.0);
}

TEST_CASE("loss_total combination") {
    using S = Tensor<double>;
    CHECK(loss_total(S::scalar(0.2), S::scalar(0.5), S::scalar(0.1), 0.1).item() == doctest::Approx(0.35).epsilon(1e-15));
    CHECK(loss_total(S::scalar(0.2), S::scalar(0.5), S::scalar(0.1), 0.0).item() == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(loss_total(S::scalar(0.0), S::scalar(0.0), S::scalar(0.0), 0.1).item() == 0.0);
}

TEST_CASE("geometric preservation transforms") {
    const std::size_t h = 4, w = 6;
    Rng rng(13);
    std::vector<float> img(h * w);
    std::vector<std::uint8_t> mask(h * w);
    for (std::size_t i = 0; i < h * w; ++i) {
        mask[i] = rng.bernoulli(0.5) ? 1 : 0;
        img[i] = static_cast<float>(rng.uniform(0.0, 1.0));
    }

    auto id = apply_geometric_preservation(img, mask, h, w, {});
    CHECK(id.image == img);
    CHECK(id.mask == mask);

    GeometricTransform hf;
    hf.kind = TransformKind::hflip;
    const auto once = apply_geometric_preservation(img, mask, h, w, hf);
    CHECK(once.image != img);
    const auto twice = apply_geometric_preservation(once.image, once.mask, h, w, hf);
    CHECK(twice.image == img);
    CHECK(twice.mask == mask);

    GeometricTransform vf;
    vf.kind = TransformKind::vflip;
    const auto v = apply_geometric_preservation({1, 0, 0, 0}, {1, 0, 0, 0}, 2, 2, vf);
    CHECK(v.mask == std::vector<std::uint8_t>{0, 0, 1, 0});

    GeometricTransform out;
    out.kind = TransformKind::affine;
    out.translate_x = 5.0;
    CHECK_THROWS_AS(apply_geometric_preservation(img, mask, h, w, out), ValidationError);

    // Image and mask see the same sampling positions: transform a mask and
    // its own indicator image together.
    std::vector<float> indicator(mask.begin(), mask.end());
    GpConfig gp;
    gp.probability = 1.0;
    for (int t = 0; t < 50; ++t) {
        const auto tr = sample_transform(gp, rng);
        CHECK(tr.kind != TransformKind::identity);
        const auto g = apply_geometric_preservation(indicator, mask, h, w, tr);
        for (std::size_t i = 0; i < h * w; ++i) {
            CHECK(g.mask[i] <= 1);
            CHECK(g.image[i] == static_cast<float>(g.mask[i]));
        }
    }
    gp.probability = 0.0;
    CHECK(sample_transform(gp, rng).kind == TransformKind::identity);
}

TEST_CASE("geometric preservation only moves the loss targets") {
    auto c = tiny_config();
    c.gp.enabled = true;
    Model<double> m(c, 3);
    const auto data = random_samples(2, 8, 16, 21);
    const auto batch = pointers(data);

    const auto plain = batch_losses(m, batch);
    const auto ident = batch_losses(m, batch, GeometricTransform{});
    CHECK(plain.rec.item() == ident.rec.item());
    CHECK(plain.raydrop.item() == ident.raydrop.item());
    CHECK(plain.commit.item() == ident.commit.item());

    GeometricTransform hf;
    hf.kind = TransformKind::hflip;
    const auto flipped = batch_losses(m, batch, hf);
    CHECK(std::equal(flipped.input.data().begin(), flipped.input.data().end(), plain.input.data().begin()));
    CHECK(flipped.commit.item() == plain.commit.item());
    CHECK(flipped.rec.item() != plain.rec.item());

    c.gp.transform_encoder_input = true;
    Model<double> m2(c, 3);
    const auto moved = batch_losses(m2, batch, hf);
    CHECK(moved.input.data()[0] == static_cast<double>(data[0].range[15]));
}

TEST_CASE("total loss gradients match finite differences in double precision") {
    for (bool raydrop_head : {true, false}) {
        CAPTURE(raydrop_head);
        auto c = tiny_config();
        c.raydrop_head = raydrop_head;
        c.beta = 0.5;
        Model<double> m(c, 17);
        const auto data = random_samples(2, 8, 16, 23);
        const auto batch = pointers(data);
        const auto frozen = test::freeze(m, batch);

        // Surrogate backward equals the real model's backward at the base point.
        m.store().zero_grad();
        batch_losses(m, batch).total.backward();
        std::vector<std::vector<double>> real;
        for (const auto& p : m.store().params()) real.emplace_back(p.tensor.grad().begin(), p.tensor.grad().end());
        m.store().zero_grad();
        test::surrogate_losses(m, batch, frozen).total.backward();
        for (std::size_t i = 0; i < real.size(); ++i) {
            const auto g = m.store().params()[i].tensor.grad();
            for (std::size_t j = 0; j < g.size(); ++j) CHECK(g[j] == doctest::Approx(real[i][j]).epsilon(1e-12));
        }

        ad::GradCheckOptions opts;
        opts.samples = 60;
        opts.seed = 99;
        const auto report =
            ad::grad_check([&] { return test::surrogate_losses(m, batch, frozen).total; }, m.store().params(), opts);
        for (const auto& e : report.entries) {
            CAPTURE(e.param);
            CHECK(e.rel_error < 1e-4);
        }
    }
}

TEST_CASE("each loss term gradient matches finite differences") {
    Model<double> m(tiny_config(), 31);
    const auto data = random_samples(1, 8, 16, 37);
    const auto batch = pointers(data);
    const auto frozen = test::freeze(m, batch);
    using Pick = ad::Tensor<double> (*)(const test::SurrogateLosses&);
    const Pick picks[] = {[](const test::SurrogateLosses& l) { return l.rec; },
                          [](const test::SurrogateLosses& l) { return l.raydrop; },
                          [](const test::SurrogateLosses& l) { return l.commit; }};
    for (auto pick : picks) {
        ad::GradCheckOptions opts;
        opts.seed = 5;
        const auto report =
            ad::grad_check([&] { return pick(test::surrogate_losses(m, batch, frozen)); }, m.store().params(), opts);
        CHECK(report.max_rel_error < 1e-4);
    }
}

TEST_CASE("training reduces the loss and is reproducible") {
    auto c = tiny_config();
    const auto data = random_samples(4, 8, 16, 41);
    TrainConfig tc;
    tc.steps = 60;
    tc.batch_size = 2;
    tc.adam.lr = 3e-3;
    tc.log_every = 20;

    Model<float> a(c, 1), b(c, 1);
    std::ostringstream csv_a, csv_b;
    const auto ra = train_vqvae(a, data, tc, &csv_a);
    const auto rb = train_vqvae(b, data, tc, &csv_b);
    CHECK(csv_a.str() == csv_b.str());
    CHECK(csv_a.str().rfind("step,L_rec,L_RL,L_com,total,codebook_usage_fraction\n", 0) == 0);
    REQUIRE(ra.log.size() >= 3);
    CHECK(ra.log.back().step == 60);
    CHECK(ra.log.back().total < ra.log.front().total);
    for (const auto& row : ra.log) {
        CHECK(row.usage > 0.0);
        CHECK(row.usage <= 1.0);
    }

    const auto rec = reconstruct(a, data);
    const auto tokens = encode_tokens(a, data);
    REQUIRE(rec.size() == 4);
    const auto dec = decode_tokens(a, tokens);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(rec[i].tokens == tokens[i]);
        CHECK(dec[i].range == rec[i].range);
        CHECK(rec[i].range.size() == 8 * 16);
    }
}

TEST_CASE("non-finite training data is reported by name") {
    auto data = random_samples(2, 8, 16, 43);
    data[1].range[5] = NAN;
    Model<float> m(tiny_config(), 1);
    TrainConfig tc;
    tc.steps = 3;
    tc.batch_size = 2;
    tc.init_codebook_from_data = false;
    try {
        train_vqvae(m, data, tc);
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("encoder input") != std::string::npos);
    }
}

TEST_CASE("training configuration errors") {
    Model<float> m(tiny_config(), 1);
    TrainConfig tc;
    CHECK_THROWS_AS(train_vqvae(m, {}, tc), ValidationError);
    auto data = random_samples(1, 8, 16, 1);
    data[0].mask.pop_back();
    CHECK_THROWS_AS(train_vqvae(m, data, tc), ValidationError);
    tc.steps = 0;
    CHECK_THROWS_AS(tc.validate(), ValidationError);
    tc.steps = 1;
    tc.adam.lr = -1.0;
    CHECK_THROWS_AS(tc.validate(), ValidationError);
}

TEST_CASE("baseline mask thresholds the regressed range") {
    geom::ProjectionConfig p;
    p.height = 1;
    p.width = 3;
    VqvaeConfig c;
    c.height = 1;
    c.width = 3;
    c.raydrop_head = false;
    const float tau = baseline_threshold(p);
    CHECK(tau > 0.0f);
    Reconstruction r;
    r.range = {0.0f, tau, tau * 0.5f};
    r.logits = {5.0f, -5.0f, 5.0f};
    CHECK(predicted_mask(c, r, p).bits == std::vector<std::uint8_t>{0, 1, 0});
    c.raydrop_head = true;
    CHECK(predicted_mask(c, r, p).bits == std::vector<std::uint8_t>{1, 0, 1});
}

TEST_CASE("mask IoU and masked L1") {
    geom::RaydropMask a(1, 4), b(1, 4);
    CHECK(mask_iou(a, b) == 1.0);
    a.bits = {1, 1, 0, 0};
    b.bits = {0, 1, 1, 0};
    CHECK(mask_iou(a, b) == doctest::Approx(1.0 / 3.0));
    const std::vector<float> x{1, 2, 3, 4}, r{0, 0, 0, 0};
    const std::vector<std::uint8_t> m{1, 0, 1, 0};
    CHECK(masked_l1(x, m, r) == doctest::Approx(1.0));
}
