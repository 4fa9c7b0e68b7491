#include <cmath>
#include <filesystem>
#include <functional>

#include "doctest.h"
#include "lgrit/ad/checkpoint.hpp"
#include "lgrit/ad/grad_check.hpp"
#include "lgrit/ad/ops.hpp"
#include "lgrit/ad/optim.hpp"
#include "lgrit/core/error.hpp"
#include "lgrit/core/rng.hpp"

using namespace lgrit::ad;
using lgrit::Rng;
using TD = Tensor<double>;

namespace {

TD random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool requires_grad = true) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return TD::from(std::move(shape), std::move(v), requires_grad);
}

/// Values bounded away from zero, for ops with a kink there.
TD away_from_zero(Shape shape, Rng& rng) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.05, 1.0);
    return TD::from(std::move(shape), std::move(v), true);
}

/// sum(out * weights) with fixed random weights, so every output element
/// contributes a distinct gradient.
TD weighted_sum(const TD& out, std::uint64_t seed) {
    Rng rng(seed);
    auto w = random_tensor(out.shape(), rng, -1.0, 1.0, false);
    return sum(mul(out, w));
}

void expect_exact_gradients_at(int line, const std::function<TD()>& loss, std::vector<TD> inputs, double tol = 1e-6) {
    CAPTURE(line);
    std::size_t total = 0;
    for (const auto& t : inputs) total += t.numel();
    GradCheckOptions opts;
    opts.samples = std::min<std::size_t>(total * 2, 200);
    opts.tolerance = tol;
    opts.abs_floor = 1e-4;
    opts.seed = total;
    const auto report = grad_check(loss, inputs, opts);
    CAPTURE(report.max_rel_error);
    CHECK(report.passed());
}

double direct_conv(const TD& x, const TD& w, std::size_t n, std::size_t o, std::size_t oh, std::size_t ow,
                   Conv2dGeometry g) {
    const std::size_t c = x.dim(1), h = x.dim(2), wd = x.dim(3), kh = w.dim(2), kw = w.dim(3);
    double s = 0;
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t i = 0; i < kh; ++i)
            for (std::size_t j = 0; j < kw; ++j) {
                const long ih = static_cast<long>(oh * g.stride_h + i) - static_cast<long>(g.pad_h);
                const long iw = static_cast<long>(ow * g.stride_w + j) - static_cast<long>(g.pad_w);
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(h) || iw >= static_cast<long>(wd)) continue;
                s += x.data()[((n * c + ci) * h + ih) * wd + iw] * w.data()[((o * c + ci) * kh + i) * kw + j];
            }
    return s;
}

}  // namespace

#define expect_exact_gradients(...) expect_exact_gradients_at(__LINE__, __VA_ARGS__)

TEST_CASE("sigmoid at zero") {
    auto x = TD::from({1}, {0.0}, true);
    auto y = sigmoid(x);
    CHECK(y.item() == 0.5);
    y.backward();
    CHECK(x.grad()[0] == 0.25);
}

TEST_CASE("softmax of a constant vector is uniform") {
    for (std::size_t k : {1u, 2u, 7u, 64u}) {
        auto y = softmax(TD::full({k}, 3.5));
        for (double p : y.data()) CHECK(p == doctest::Approx(1.0 / static_cast<double>(k)).epsilon(1e-15));
    }
}

TEST_CASE("mean |x - y| gradient matches central differences") {
    Rng rng(1);
    auto x = random_tensor({4, 4}, rng);
    auto y = random_tensor({4, 4}, rng, -1.0, 1.0, false);
    GradCheckOptions opts;
    opts.samples = 16;
    opts.step = 1e-5;
    opts.tolerance = 1e-6;
    const auto report = grad_check([&] { return mean(abs(sub(x, y))); }, {x}, opts);
    CHECK(report.passed());
    CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("backward basics") {
    Rng rng(2);
    auto w = random_tensor({3, 2}, rng);
    sum(w).backward();
    for (double g : w.grad()) CHECK(g == 1.0);

    auto other = random_tensor({2}, rng);
    w.zero_grad();
    sum(other).backward();
    for (double g : w.grad()) CHECK(g == 0.0);

    CHECK_THROWS_AS(scale(w, 2.0).backward(), lgrit::ValidationError);
}

TEST_CASE("shared subexpressions accumulate once per use") {
    auto x = TD::from({1}, {3.0}, true);
    auto sq = mul(x, x);
    auto loss = add(sq, sq);  // 2 x^2
    loss.backward();
    CHECK(x.grad()[0] == doctest::Approx(12.0));
}

TEST_CASE("detach blocks gradient flow") {
    auto x = TD::from({2}, {1.0, 2.0}, true);
    auto loss = sum(mul(detach(x), x));
    loss.backward();
    CHECK(x.grad()[0] == 1.0);
    CHECK(x.grad()[1] == 2.0);
}

TEST_CASE("no-grad mode records nothing") {
    auto x = TD::from({1}, {1.0}, true);
    NoGradGuard guard;
    auto y = exp(x);
    CHECK_FALSE(y.requires_grad());
}

TEST_CASE("shape mismatch errors name both shapes") {
    Rng rng(3);
    auto a = random_tensor({2, 3}, rng);
    auto b = random_tensor({3, 2}, rng);
    try {
        add(a, b);
        FAIL("expected throw");
    } catch (const lgrit::ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2, 3]") != std::string::npos);
        CHECK(msg.find("[3, 2]") != std::string::npos);
    }
    CHECK_THROWS_AS(matmul(a, a), lgrit::ValidationError);
    CHECK_THROWS_AS(conv2d(random_tensor({1, 2, 4, 4}, rng), random_tensor({3, 1, 3, 3}, rng), random_tensor({3}, rng), {}),
                    lgrit::ValidationError);
    CHECK_THROWS_AS(conv2d(random_tensor({1, 1, 4, 4}, rng), random_tensor({3, 1, 3, 3}, rng), random_tensor({3}, rng),
                           {0, 1, 0, 0}),
                    lgrit::ValidationError);
}

TEST_CASE("non-finite outputs trip the checker with the op name") {
    set_check_finite(true);
    auto x = TD::from({1}, {1000.0}, true);
    try {
        exp(x);
        FAIL("expected throw");
    } catch (const lgrit::NumericalError& e) {
        CHECK(std::string(e.what()).find("'exp'") != std::string::npos);
    }
    set_check_finite(false);
    CHECK(std::isinf(exp(x).item()));
}

TEST_CASE("log and abs at their guarded points") {
    auto x = TD::from({2}, {0.0, -1.0}, true);
    auto y = log(x);
    CHECK(y.data()[0] == doctest::Approx(std::log(1e-12)));
    sum(y).backward();
    CHECK(x.grad()[0] == doctest::Approx(1e12));
    auto z = TD::from({1}, {0.0}, true);
    abs(z).backward();
    CHECK(z.grad()[0] == 0.0);
}

TEST_CASE("conv2d forward matches direct summation") {
    Rng rng(4);
    for (Conv2dGeometry g : {Conv2dGeometry{1, 1, 1, 1}, Conv2dGeometry{2, 2, 1, 1}, Conv2dGeometry{1, 2, 1, 1},
                             Conv2dGeometry{2, 1, 0, 2}}) {
        auto x = random_tensor({2, 3, 6, 8}, rng);
        auto w = random_tensor({4, 3, 3, 4}, rng);
        auto b = TD::zeros({4});
        auto y = conv2d(x, w, b, g);
        for (std::size_t n = 0; n < y.dim(0); ++n)
            for (std::size_t o = 0; o < y.dim(1); ++o)
                for (std::size_t i = 0; i < y.dim(2); ++i)
                    for (std::size_t j = 0; j < y.dim(3); ++j) {
                        const double got = y.data()[((n * y.dim(1) + o) * y.dim(2) + i) * y.dim(3) + j];
                        CHECK(got == doctest::Approx(direct_conv(x, w, n, o, i, j, g)).epsilon(1e-12));
                    }
    }
}

TEST_CASE("transposed convolution is the adjoint of convolution") {
    Rng rng(5);
    const Conv2dGeometry g{2, 2, 1, 1};
    auto w = random_tensor({3, 2, 4, 4}, rng);  // conv: 2 -> 3 channels; transposed: 3 -> 2
    auto x = random_tensor({1, 2, 8, 8}, rng);
    auto y = random_tensor({1, 3, 4, 4}, rng);
    auto cx = conv2d(x, w, TD::zeros({3}), g);
    REQUIRE(cx.shape() == Shape{1, 3, 4, 4});
    auto ty = conv_transpose2d(y, w, TD::zeros({2}), g);
    REQUIRE(ty.shape() == Shape{1, 2, 8, 8});
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < cx.numel(); ++i) lhs += cx.data()[i] * y.data()[i];
    for (std::size_t i = 0; i < ty.numel(); ++i) rhs += x.data()[i] * ty.data()[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("every primitive's gradient matches central differences (property)") {
    Rng rng(77);
    for (int trial = 0; trial < 3; ++trial) {
        const std::size_t a = 1 + rng.below(3), b = 2 + rng.below(4), c = 2 + rng.below(3);
        CAPTURE(trial);

        auto x = random_tensor({a, b, c}, rng);
        auto y = random_tensor({a, b, c}, rng);
        auto row = random_tensor({c}, rng);
        auto one = random_tensor({1}, rng);
        expect_exact_gradients([&] { return weighted_sum(add(x, y), 1); }, {x, y});
        expect_exact_gradients([&] { return weighted_sum(sub(x, row), 2); }, {x, row});
        expect_exact_gradients([&] { return weighted_sum(mul(x, row), 3); }, {x, row});
        expect_exact_gradients([&] { return weighted_sum(mul(x, one), 4); }, {x, one});
        expect_exact_gradients([&] { return weighted_sum(neg(scale(add_scalar(x, 0.3), 1.7)), 5); }, {x});
        expect_exact_gradients([&] { return weighted_sum(square(x), 6); }, {x});
        expect_exact_gradients([&] { return weighted_sum(exp(x), 7); }, {x});
        auto pos = random_tensor({a, b, c}, rng, 0.2, 2.0);
        expect_exact_gradients([&] { return weighted_sum(log(pos), 8); }, {pos});
        auto kinked = away_from_zero({a, b, c}, rng);
        expect_exact_gradients([&] { return weighted_sum(abs(kinked), 9); }, {kinked});
        expect_exact_gradients([&] { return weighted_sum(relu(kinked), 10); }, {kinked});
        expect_exact_gradients([&] { return weighted_sum(sigmoid(x), 11); }, {x});
        expect_exact_gradients([&] { return weighted_sum(gelu(x), 12); }, {x});
        expect_exact_gradients([&] { return weighted_sum(softmax(x), 13); }, {x});
        expect_exact_gradients([&] { return weighted_sum(log_softmax(x), 14); }, {x});
        auto gamma = random_tensor({c}, rng);
        auto beta = random_tensor({c}, rng);
        expect_exact_gradients([&] { return weighted_sum(layer_norm(x, gamma, beta), 15); }, {x, gamma, beta});

        auto mat = random_tensor({c, b}, rng);
        expect_exact_gradients([&] { return weighted_sum(matmul(x, mat), 16); }, {x, mat});
        auto rhs = random_tensor({a, c, 3}, rng);
        expect_exact_gradients([&] { return weighted_sum(bmm(x, rhs), 17); }, {x, rhs});

        expect_exact_gradients([&] { return weighted_sum(reshape(x, {a * b, c}), 18); }, {x});
        expect_exact_gradients([&] { return weighted_sum(permute(x, {2, 0, 1}), 19); }, {x});
        expect_exact_gradients([&] { return weighted_sum(transpose(x, 1, 2), 20); }, {x});
        expect_exact_gradients([&] { return weighted_sum(slice(x, 1, 1, b), 21); }, {x});
        expect_exact_gradients([&] { return weighted_sum(concat<double>({x, y, x}, 2), 22); }, {x, y});
        expect_exact_gradients([&] { return scale(sum(x), 0.5); }, {x});
        expect_exact_gradients([&] { return mean(mul(x, y)); }, {x, y});

        std::vector<std::uint8_t> mask(b * c);
        for (auto& m : mask) m = rng.bernoulli(0.3);
        expect_exact_gradients([&] { return weighted_sum(masked_fill(x, mask, -5.0), 23); }, {x});

        auto table = random_tensor({5, c}, rng);
        std::vector<std::int32_t> idx{4, 0, 4, 2};
        expect_exact_gradients([&] { return weighted_sum(embedding(table, idx, {2, 2}), 24); }, {table});

        auto logits = random_tensor({4, 5}, rng);
        expect_exact_gradients([&] { return weighted_sum(pick(logits, {0, 4, 2, 2}), 25); }, {logits});
    }
}

TEST_CASE("convolution gradients match central differences") {
    Rng rng(8);
    for (Conv2dGeometry g : {Conv2dGeometry{1, 1, 1, 1}, Conv2dGeometry{2, 2, 1, 1}, Conv2dGeometry{1, 2, 1, 1}}) {
        const std::size_t kh = g.stride_h == 2 ? 4 : 3, kw = g.stride_w == 2 ? 4 : 3;
        auto x = random_tensor({2, 2, 4, 8}, rng);
        auto w = random_tensor({3, 2, kh, kw}, rng);
        auto b = random_tensor({3}, rng);
        expect_exact_gradients([&] { return weighted_sum(conv2d(x, w, b, g), 30); }, {x, w, b});
        auto wt = random_tensor({2, 3, kh, kw}, rng);
        auto bt = random_tensor({3}, rng);
        expect_exact_gradients([&] { return weighted_sum(conv_transpose2d(x, wt, bt, g), 31); }, {x, wt, bt});
    }
}

TEST_CASE("adam: first step moves by about lr") {
    ParameterStore<double> store;
    auto w = store.add("w", {1}, {1.0});
    sum(w).backward();
    AdamConfig cfg;
    cfg.lr = 0.1;
    adam_step(store.params(), cfg);
    CHECK(w.data()[0] == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("adam: zero gradient leaves the parameter unchanged") {
    ParameterStore<double> store;
    auto w = store.add("w", {3}, {1.0, -2.0, 0.5});
    store.zero_grad();
    AdamConfig cfg;
    cfg.lr = 0.1;
    adam_step(store.params(), cfg);
    CHECK(w.data()[0] == 1.0);
    CHECK(w.data()[1] == -2.0);
    CHECK(w.data()[2] == 0.5);
}

TEST_CASE("adam: rejects non-positive learning rates") {
    ParameterStore<double> store;
    store.add("w", {1}, {1.0});
    AdamConfig cfg;
    cfg.lr = 0.0;
    CHECK_THROWS_AS(adam_step(store.params(), cfg), lgrit::ValidationError);
    cfg.lr = -1.0;
    CHECK_THROWS_AS(adam_step(store.params(), cfg), lgrit::ValidationError);
}

TEST_CASE("adam: converges on least squares y = 2x within 200 steps") {
    ParameterStore<double> store;
    auto w = store.add("w", {1}, {0.0});
    auto xs = TD::from({8}, {-1.0, -0.5, 0.1, 0.4, 0.8, 1.0, 1.5, 2.0});
    auto ys = scale(xs, 2.0);
    AdamConfig cfg;
    cfg.lr = 0.1;
    for (int step = 0; step < 200; ++step) {
        store.zero_grad();
        mean(square(sub(mul(xs, w), ys))).backward();
        adam_step(store.params(), cfg);
    }
    CHECK(std::abs(w.data()[0] - 2.0) < 1e-3);
}

TEST_CASE("checkpoint round trip and mismatch diagnostics") {
    const auto dir = std::filesystem::temp_directory_path() / "lgrit_ckpt";
    std::filesystem::create_directories(dir);
    Rng rng(9);
    ParameterStore<float> a;
    a.add_uniform("enc.w", {2, 3}, 1.0f, rng);
    a.add_uniform("enc.b", {3}, 1.0f, rng);
    save_checkpoint(dir / "a.ckpt", a);

    ParameterStore<float> b;
    b.add_zeros("enc.w", {2, 3});
    b.add_zeros("enc.b", {3});
    load_checkpoint(dir / "a.ckpt", b);
    for (std::size_t i = 0; i < 6; ++i) CHECK(b.params()[0].tensor.data()[i] == a.params()[0].tensor.data()[i]);

    ParameterStore<float> wrong_shape;
    wrong_shape.add_zeros("enc.w", {3, 3});
    wrong_shape.add_zeros("enc.b", {3});
    CHECK_THROWS_AS(load_checkpoint(dir / "a.ckpt", wrong_shape), lgrit::ValidationError);

    ParameterStore<float> extra;
    extra.add_zeros("enc.w", {2, 3});
    extra.add_zeros("enc.b", {3});
    extra.add_zeros("dec.w", {1});
    CHECK_THROWS_AS(load_checkpoint(dir / "a.ckpt", extra), lgrit::ValidationError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt", extra), lgrit::IoError);

    // 8 magic + 4 version + 4 count + ("enc.w": 4+5+4+8+24) + ("enc.b": 4+5+4+4+12)
    CHECK(std::filesystem::file_size(dir / "a.ckpt") == 16 + 45 + 29);
}
