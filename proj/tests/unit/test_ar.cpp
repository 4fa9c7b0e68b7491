#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "lgrit/ad/grad_check.hpp"
#include "lgrit/ar/tokens.hpp"
#include "lgrit/ar/trainer.hpp"
#include "lgrit/ar/transformer.hpp"
#include "lgrit/core/error.hpp"
#include "lgrit/core/rng.hpp"

using namespace lgrit;
using namespace lgrit::ar;

namespace {

TransformerConfig small(std::size_t vocab, std::size_t length) {
    TransformerConfig c;
    c.vocab = vocab;
    c.length = length;
    c.d_model = 8;
    c.heads = 2;
    c.layers = 2;
    c.ff_mult = 2;
    return c;
}

template <typename T>
void zero_output(Transformer<T>& m) {
    for (const char* name : {"out.w", "out.b"}) {
        for (auto& v : m.store().find(name)->tensor.mutable_data()) v = T(0);
    }
}

std::vector<std::vector<std::int32_t>> random_sequences(std::size_t count, std::size_t length, std::size_t vocab,
                                                        std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<std::int32_t>> out(count, std::vector<std::int32_t>(length));
    for (auto& s : out)
        for (auto& t : s) t = static_cast<std::int32_t>(rng.below(vocab));
    return out;
}

/// All vocab^length sequences in lexicographic order.
std::vector<std::vector<std::int32_t>> all_sequences(std::size_t vocab, std::size_t length) {
    std::vector<std::vector<std::int32_t>> out;
    std::vector<std::int32_t> s(length, 0);
    while (true) {
        out.push_back(s);
        std::size_t i = length;
        while (i > 0 && static_cast<std::size_t>(++s[i - 1]) == vocab) s[--i] = 0;
        if (i == 0) break;
    }
    return out;
}

}  // namespace

TEST_CASE("transformer configuration is validated") {
    auto c = small(8, 4);
    c.heads = 3;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    CHECK_THROWS_AS(Transformer<float>(c, 1), ValidationError);
    c = small(1, 4);
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = small(8, 0);
    CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("next-token distributions are normalized") {
    Transformer<float> m(small(16, 6), 3);
    Rng rng(1);
    for (std::size_t len = 0; len < 6; ++len) {
        std::vector<std::int32_t> prefix(len);
        for (auto& t : prefix) t = static_cast<std::int32_t>(rng.below(16));
        const auto p = next_token_distribution(m, prefix);
        REQUIRE(p.size() == 16);
        double s = 0.0;
        for (double v : p) {
            CHECK(v >= 0.0);
            s += v;
        }
        CHECK(std::abs(s - 1.0) < 1e-6);
    }
    CHECK_THROWS_AS(next_token_distribution(m, std::vector<std::int32_t>(6, 0)), ValidationError);
    CHECK_THROWS_AS(next_token_distribution(m, {16}), ValidationError);
}

TEST_CASE("zero output projection gives the uniform distribution and log K loss") {
    Transformer<double> m(small(10, 5), 4);
    zero_output(m);
    for (double p : next_token_distribution(m, {1, 2})) CHECK(p == doctest::Approx(0.1).epsilon(1e-14));
    const auto seqs = random_sequences(3, 5, 10, 9);
    CHECK(std::abs(nll_loss(m, seqs).item() - std::log(10.0)) < 1e-12);
}

TEST_CASE("attention is causal") {
    Transformer<double> m(small(12, 8), 5);
    Rng rng(6);
    auto seq = random_sequences(1, 8, 12, 7)[0];
    std::vector<std::int32_t> in{12};
    in.insert(in.end(), seq.begin(), seq.end() - 1);
    ad::NoGradGuard g;
    const auto base = m.logits(in, 1);
    for (std::size_t i = 0; i + 1 < in.size(); ++i) {
        auto changed = in;
        for (std::size_t j = i + 1; j < in.size(); ++j) changed[j] = static_cast<std::int32_t>(rng.below(12));
        const auto other = m.logits(changed, 1);
        for (std::size_t p = 0; p <= i; ++p) {
            for (std::size_t k = 0; k < 12; ++k) CHECK(other.data()[p * 12 + k] == base.data()[p * 12 + k]);
        }
    }
    // Perturbing the positional embedding of a later position leaves earlier outputs unchanged.
    auto pos = m.store().find("pos_emb")->tensor.mutable_data();
    for (std::size_t k = 0; k < 8; ++k) pos[5 * 8 + k] += 3.0;
    const auto after = m.logits(in, 1);
    for (std::size_t p = 0; p < 5 * 12; ++p) CHECK(after.data()[p] == base.data()[p]);
    bool moved = false;
    for (std::size_t p = 5 * 12; p < 6 * 12; ++p) moved |= after.data()[p] != base.data()[p];
    CHECK(moved);
}

TEST_CASE("nll of hand-specified distributions") {
    // K = 3, two positions with fixed factor distributions.
    const double p1[] = {0.2, 0.5, 0.3}, p2[] = {0.6, 0.1, 0.3};
    std::vector<double> l;
    for (double p : p1) l.push_back(std::log(p));
    for (double p : p2) l.push_back(std::log(p) + 7.0);
    double total = 0.0;
    for (const auto& s : all_sequences(3, 2)) {
        const auto logits = ad::Tensor<double>::from({1, 2, 3}, l);
        const double nll = nll_from_logits(logits, {s}).item();
        const double oracle = -std::log(p1[s[0]] * p2[s[1]]) / 2.0;
        CHECK(std::abs(nll - oracle) < 1e-10);
        total += std::exp(-2.0 * nll);
    }
    CHECK(std::abs(total - 1.0) < 1e-10);

    const auto sure = ad::Tensor<double>::from({1, 2, 3}, {60, 0, 0, 0, 0, 60});
    CHECK(nll_from_logits(sure, {{0, 2}}).item() < 1e-20);
    CHECK_THROWS_AS(nll_from_logits(sure, {{0, 3}}), ValidationError);
    CHECK_THROWS_AS(nll_from_logits(sure, {{0}}), ValidationError);
}

TEST_CASE("model nll obeys the exact chain rule over all sequences") {
    const std::size_t k = 3, n = 4;
    Transformer<double> m(small(k, n), 8);
    double total = 0.0;
    for (const auto& s : all_sequences(k, n)) {
        const double nll = nll_loss(m, {s}).item();
        double product = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::vector<std::int32_t> prefix(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(i));
            product *= next_token_distribution(m, prefix)[static_cast<std::size_t>(s[i])];
        }
        CHECK(std::abs(std::exp(-static_cast<double>(n) * nll) - product) < 1e-10);
        total += product;
    }
    CHECK(std::abs(total - 1.0) < 1e-10);
}

TEST_CASE("nll gradients match finite differences in double precision") {
    Transformer<double> m(small(6, 5), 12);
    const auto seqs = random_sequences(3, 5, 6, 13);
    ad::GradCheckOptions opts;
    opts.samples = 80;
    opts.seed = 3;
    const auto report = ad::grad_check([&] { return nll_loss(m, seqs); }, m.store().params(), opts);
    for (const auto& e : report.entries) {
        CAPTURE(e.param);
        CHECK(e.rel_error < 1e-4);
    }
}

TEST_CASE("greedy and seeded sampling") {
    Transformer<float> m(small(9, 6), 14);
    SamplingConfig greedy;
    greedy.top_k = 1;
    const auto a = sample_sequences(m, 3, greedy, 1);
    const auto b = sample_sequences(m, 3, greedy, 99);
    CHECK(a == b);
    CHECK(a[0] == a[1]);
    std::vector<std::int32_t> prefix;
    for (std::size_t i = 0; i < 6; ++i) {
        const auto p = next_token_distribution(m, prefix);
        const auto best = std::max_element(p.begin(), p.end()) - p.begin();
        CHECK(a[0][i] == best);
        prefix.push_back(a[0][i]);
    }

    SamplingConfig plain;
    const auto s1 = sample_sequences(m, 5, plain, 7);
    const auto s2 = sample_sequences(m, 5, plain, 7);
    CHECK(s1 == s2);
    CHECK(sample_sequences(m, 5, plain, 8) != s1);
    // Sequence j does not depend on how many others are drawn with it.
    CHECK(sample_sequences(m, 2, plain, 7)[1] == s1[1]);
    for (const auto& s : s1) {
        CHECK(s.size() == 6);
        for (auto t : s) CHECK((t >= 0 && t < 9));
    }
}

TEST_CASE("sampling frequency matches a fixed two-token distribution") {
    Transformer<float> m(small(2, 16), 15);
    zero_output(m);
    auto b = m.store().find("out.b")->tensor.mutable_data();
    b[0] = static_cast<float>(std::log(0.7));
    b[1] = static_cast<float>(std::log(0.3));
    const auto seqs = sample_sequences(m, 625, SamplingConfig{}, 2024);
    std::size_t zeros = 0, total = 0;
    for (const auto& s : seqs) {
        for (auto t : s) zeros += t == 0, ++total;
    }
    CHECK(total == 10000);
    CHECK(std::abs(static_cast<double>(zeros) / static_cast<double>(total) - 0.7) < 0.02);
}

TEST_CASE("sample_from_logits truncation and validation") {
    Rng rng(3);
    const std::vector<double> l{0.0, 2.0, 1.0, 2.0, -1.0};
    SamplingConfig c;
    c.top_k = 2;
    for (int i = 0; i < 200; ++i) {
        const auto t = sample_from_logits(l, c, rng);
        CHECK((t == 1 || t == 3));
    }
    c.top_k = 1;
    CHECK(sample_from_logits(l, c, rng) == 1);
    c.top_k = 6;
    CHECK_THROWS_AS(sample_from_logits(l, c, rng), ValidationError);
    c.top_k = 0;
    c.temperature = 0.0;
    CHECK_THROWS_AS(sample_from_logits(l, c, rng), ValidationError);
    c.temperature = -1.0;
    CHECK_THROWS_AS(c.validate(5), ValidationError);

    // Low temperature concentrates on the maximum.
    c.temperature = 1e-3;
    c.top_k = 0;
    for (int i = 0; i < 50; ++i) {
        const auto t = sample_from_logits(std::vector<double>{0.0, 1.0, 0.5}, c, rng);
        CHECK(t == 1);
    }
}

TEST_CASE("token grids flatten row-major") {
    TokenGrid g{2, 3, {1, 2, 3, 4, 5, 6}};
    CHECK(grid_to_sequence(g) == std::vector<std::int32_t>{1, 2, 3, 4, 5, 6});
    CHECK(g.at(1, 0) == 4);
    Rng rng(1);
    for (int t = 0; t < 20; ++t) {
        TokenGrid r{3, 5, {}};
        for (int i = 0; i < 15; ++i) r.tokens.push_back(static_cast<std::int32_t>(rng.below(100)));
        CHECK(tokens_to_grid(grid_to_sequence(r), 3, 5).tokens == r.tokens);
    }
    std::vector<std::int32_t> with_sentinel{100, 1, 2, 3, 4, 5, 6};
    CHECK(tokens_to_grid(with_sentinel, 2, 3, 100).tokens == g.tokens);
    CHECK_THROWS_AS(tokens_to_grid({1, 2, 3}, 2, 3), ValidationError);
    CHECK_THROWS_AS(tokens_to_grid(with_sentinel, 2, 3), ValidationError);
    CHECK_THROWS_AS(grid_to_sequence(TokenGrid{2, 2, {1}}), ValidationError);
}

TEST_CASE("token files round trip and reject corruption") {
    const auto dir = std::filesystem::temp_directory_path() / "lgrit_test_tokens";
    std::filesystem::create_directories(dir);
    TokenDataset d{2, 3, random_sequences(4, 6, 600, 5)};
    write_tokens(dir / "t.tok", d);
    CHECK(std::filesystem::file_size(dir / "t.tok") == 8 + 16 + 4 * 6 * 2);
    const auto back = read_tokens(dir / "t.tok");
    CHECK(back.height == 2);
    CHECK(back.width == 3);
    CHECK(back.sequences == d.sequences);

    std::filesystem::resize_file(dir / "t.tok", 8 + 16 + 10);
    CHECK_THROWS_AS(read_tokens(dir / "t.tok"), IoError);
    {
        std::ofstream os(dir / "bad.tok", std::ios::binary);
        os << "LGRITTOX";
    }
    CHECK_THROWS_AS(read_tokens(dir / "bad.tok"), IoError);
    CHECK_THROWS_AS(read_tokens(dir / "missing.tok"), IoError);
    d.sequences[0].pop_back();
    CHECK_THROWS_AS(write_tokens(dir / "x.tok", d), ValidationError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("transformer training fits a small set and is reproducible") {
    const auto data = random_sequences(4, 8, 8, 21);
    TransformerTrainConfig tc;
    tc.steps = 300;
    tc.batch_size = 4;
    tc.adam.lr = 3e-3;
    tc.log_every = 100;
    Transformer<float> a(small(8, 8), 1), b(small(8, 8), 1);
    std::ostringstream ca, cb;
    const auto la = train_transformer(a, data, tc, &ca);
    train_transformer(b, data, tc, &cb);
    CHECK(ca.str() == cb.str());
    CHECK(ca.str().rfind("step,nll\n", 0) == 0);
    CHECK(la.front().nll > 1.5);
    CHECK(evaluate_nll(a, data) < 0.5 * la.front().nll);

    auto bad = data;
    bad[0][0] = 8;
    CHECK_THROWS_AS(train_transformer(a, bad, tc), ValidationError);
    CHECK_THROWS_AS(train_transformer(a, {}, tc), ValidationError);
    tc.steps = 0;
    CHECK_THROWS_AS(tc.validate(), ValidationError);
}
