#include <cmath>
#include <vector>

#include "doctest.h"
#include "lgrit/core/rng.hpp"
#include "lgrit/simd/kernels.hpp"

namespace simd = lgrit::simd;

namespace {

template <typename T>
std::vector<T> random_vec(std::size_t n, lgrit::Rng& rng) {
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(rng.uniform(-1.0, 1.0));
    return v;
}

template <typename T>
double max_abs_diff(const std::vector<T>& a, const std::vector<T>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
    return m;
}

template <typename T>
void check_gemm_equivalence(double tol) {
    lgrit::Rng rng(11);
    // Odd sizes exercise every remainder path of the blocked kernel.
    const std::size_t dims[][3] = {{1, 1, 1}, {3, 5, 7}, {4, 16, 9}, {5, 17, 3}, {8, 33, 31}, {13, 64, 50}, {32, 257, 19}};
    for (const auto& d : dims) {
        const std::size_t m = d[0], n = d[1], k = d[2];
        const auto a = random_vec<T>(m * k, rng);
        const auto b = random_vec<T>(k * n, rng);
        auto c_ref = random_vec<T>(m * n, rng);
        auto c_simd = c_ref;
        simd::scalar::gemm_nn(m, n, k, a.data(), b.data(), c_ref.data());
        simd::avx2::gemm_nn(m, n, k, a.data(), b.data(), c_simd.data());
        CAPTURE(m);
        CAPTURE(n);
        CAPTURE(k);
        CHECK(max_abs_diff(c_ref, c_simd) < tol * static_cast<double>(k));
    }
}

template <typename T>
void check_vector_kernels(double tol) {
    lgrit::Rng rng(5);
    for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 9u, 15u, 16u, 17u, 64u, 100u}) {
        const auto a = random_vec<T>(n, rng);
        const auto b = random_vec<T>(n, rng);
        CHECK(std::abs(simd::scalar::dot(n, a.data(), b.data()) - simd::avx2::dot(n, a.data(), b.data())) <
              tol * (n + 1));
        CHECK(std::abs(simd::scalar::squared_distance(n, a.data(), b.data()) -
                       simd::avx2::squared_distance(n, a.data(), b.data())) < tol * (n + 1));
        auto y1 = b;
        auto y2 = b;
        simd::scalar::axpy(n, T(0.37), a.data(), y1.data());
        simd::avx2::axpy(n, T(0.37), a.data(), y2.data());
        CHECK(max_abs_diff(y1, y2) < tol);
    }
}

}  // namespace

TEST_CASE("avx2 gemm matches scalar reference") {
    if (!simd::cpu_has_avx2()) return;
    check_gemm_equivalence<float>(1e-6);
    check_gemm_equivalence<double>(1e-14);
}

TEST_CASE("avx2 vector kernels match scalar reference") {
    if (!simd::cpu_has_avx2()) return;
    check_vector_kernels<float>(1e-6);
    check_vector_kernels<double>(1e-14);
}

TEST_CASE("transposed gemm variants agree with explicit transposes") {
    lgrit::Rng rng(3);
    const std::size_t m = 5, n = 7, k = 6;
    const auto a = random_vec<double>(m * k, rng);
    const auto bt = random_vec<double>(n * k, rng);  // B^T stored [n, k]
    std::vector<double> b(k * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) b[j * n + i] = bt[i * k + j];
    std::vector<double> c1(m * n, 0.0), c2(m * n, 0.0);
    simd::gemm_nn(m, n, k, a.data(), b.data(), c1.data());
    simd::gemm_nt(m, n, k, a.data(), bt.data(), c2.data());
    CHECK(max_abs_diff(c1, c2) < 1e-14);

    std::vector<double> at(k * m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) at[j * m + i] = a[i * k + j];
    std::vector<double> c3(m * n, 0.0);
    simd::gemm_tn(m, n, k, at.data(), b.data(), c3.data());
    CHECK(max_abs_diff(c1, c3) < 1e-14);
}

TEST_CASE("isa selection can be pinned") {
    const auto before = simd::active_isa();
    CHECK(simd::set_isa(simd::Isa::scalar));
    CHECK(simd::active_isa() == simd::Isa::scalar);
    CHECK(simd::set_isa(before));
    CHECK(simd::isa_name(simd::Isa::avx2) == "avx2");
}
