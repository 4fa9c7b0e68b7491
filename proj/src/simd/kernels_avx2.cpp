// Compiled with -mavx2 -mfma; only reached when CPUID reports AVX2+FMA.

#include <immintrin.h>

#include <vector>

#include "lgrit/simd/kernels.hpp"

namespace lgrit::simd::avx2 {
namespace {

template <typename T>
struct vec;

template <>
struct vec<float> {
    using reg = __m256;
    static constexpr std::size_t width = 8;
    static reg zero() { return _mm256_setzero_ps(); }
    static reg load(const float* p) { return _mm256_loadu_ps(p); }
    static void store(float* p, reg v) { _mm256_storeu_ps(p, v); }
    static reg set1(float v) { return _mm256_set1_ps(v); }
    static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
    static reg sub(reg a, reg b) { return _mm256_sub_ps(a, b); }
    static reg add(reg a, reg b) { return _mm256_add_ps(a, b); }
    static float hsum(reg v) {
        __m128 lo = _mm256_castps256_ps128(v);
        __m128 hi = _mm256_extractf128_ps(v, 1);
        lo = _mm_add_ps(lo, hi);
        __m128 sh = _mm_movehdup_ps(lo);
        __m128 s = _mm_add_ps(lo, sh);
        sh = _mm_movehl_ps(sh, s);
        s = _mm_add_ss(s, sh);
        return _mm_cvtss_f32(s);
    }
};

template <>
struct vec<double> {
    using reg = __m256d;
    static constexpr std::size_t width = 4;
    static reg zero() { return _mm256_setzero_pd(); }
    static reg load(const double* p) { return _mm256_loadu_pd(p); }
    static void store(double* p, reg v) { _mm256_storeu_pd(p, v); }
    static reg set1(double v) { return _mm256_set1_pd(v); }
    static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
    static reg sub(reg a, reg b) { return _mm256_sub_pd(a, b); }
    static reg add(reg a, reg b) { return _mm256_add_pd(a, b); }
    static double hsum(reg v) {
        __m128d lo = _mm256_castpd256_pd128(v);
        __m128d hi = _mm256_extractf128_pd(v, 1);
        lo = _mm_add_pd(lo, hi);
        __m128d h = _mm_unpackhi_pd(lo, lo);
        return _mm_cvtsd_f64(_mm_add_sd(lo, h));
    }
};

// 4 x (2 * width) register block of C.
template <typename T>
inline void block_4x2(std::size_t ldb, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    using V = vec<T>;
    constexpr std::size_t w = V::width;
    typename V::reg c00 = V::load(c), c01 = V::load(c + w);
    typename V::reg c10 = V::load(c + n), c11 = V::load(c + n + w);
    typename V::reg c20 = V::load(c + 2 * n), c21 = V::load(c + 2 * n + w);
    typename V::reg c30 = V::load(c + 3 * n), c31 = V::load(c + 3 * n + w);
    const T* a0 = a;
    const T* a1 = a + k;
    const T* a2 = a + 2 * k;
    const T* a3 = a + 3 * k;
    for (std::size_t p = 0; p < k; ++p) {
        const T* bp = b + p * ldb;
        const auto b0 = V::load(bp);
        const auto b1 = V::load(bp + w);
        auto av = V::set1(a0[p]);
        c00 = V::fmadd(av, b0, c00);
        c01 = V::fmadd(av, b1, c01);
        av = V::set1(a1[p]);
        c10 = V::fmadd(av, b0, c10);
        c11 = V::fmadd(av, b1, c11);
        av = V::set1(a2[p]);
        c20 = V::fmadd(av, b0, c20);
        c21 = V::fmadd(av, b1, c21);
        av = V::set1(a3[p]);
        c30 = V::fmadd(av, b0, c30);
        c31 = V::fmadd(av, b1, c31);
    }
    V::store(c, c00);
    V::store(c + w, c01);
    V::store(c + n, c10);
    V::store(c + n + w, c11);
    V::store(c + 2 * n, c20);
    V::store(c + 2 * n + w, c21);
    V::store(c + 3 * n, c30);
    V::store(c + 3 * n + w, c31);
}

// One row of C, columns [j0, j1), j1 - j0 a multiple of the vector width.
template <typename T>
inline void row_vectors(std::size_t n, std::size_t k, const T* arow, const T* b, T* crow,
                        std::size_t j0, std::size_t j1) {
    using V = vec<T>;
    for (std::size_t j = j0; j < j1; j += V::width) {
        auto acc = V::load(crow + j);
        for (std::size_t p = 0; p < k; ++p) acc = V::fmadd(V::set1(arow[p]), V::load(b + p * n + j), acc);
        V::store(crow + j, acc);
    }
}

}  // namespace

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    using V = vec<T>;
    constexpr std::size_t w = V::width;
    const std::size_t n_block = n - n % (2 * w);
    const std::size_t n_vec = n - n % w;
    thread_local std::vector<T> panel;
    panel.resize(k * 2 * w);
    for (std::size_t j = 0; j < n_block; j += 2 * w) {
        for (std::size_t p = 0; p < k; ++p) {
            V::store(panel.data() + p * 2 * w, V::load(b + p * n + j));
            V::store(panel.data() + p * 2 * w + w, V::load(b + p * n + j + w));
        }
        std::size_t i = 0;
        for (; i + 4 <= m; i += 4) block_4x2(2 * w, n, k, a + i * k, panel.data(), c + i * n + j);
        for (; i < m; ++i) row_vectors(2 * w, k, a + i * k, panel.data(), c + i * n + j, 0, 2 * w);
    }
    if (n_block < n_vec) {
        for (std::size_t i = 0; i < m; ++i) row_vectors(n, k, a + i * k, b, c + i * n, n_block, n_vec);
    }
    if (n_vec < n) {
        for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t p = 0; p < k; ++p) {
                const T av = a[r * k + p];
                for (std::size_t j = n_vec; j < n; ++j) c[r * n + j] += av * b[p * n + j];
            }
        }
    }
}

template <typename T>
T dot(std::size_t n, const T* a, const T* b) {
    using V = vec<T>;
    constexpr std::size_t w = V::width;
    auto acc0 = V::zero();
    auto acc1 = V::zero();
    std::size_t i = 0;
    for (; i + 2 * w <= n; i += 2 * w) {
        acc0 = V::fmadd(V::load(a + i), V::load(b + i), acc0);
        acc1 = V::fmadd(V::load(a + i + w), V::load(b + i + w), acc1);
    }
    for (; i + w <= n; i += w) acc0 = V::fmadd(V::load(a + i), V::load(b + i), acc0);
    T s = V::hsum(V::add(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
    using V = vec<T>;
    constexpr std::size_t w = V::width;
    const auto av = V::set1(alpha);
    std::size_t i = 0;
    for (; i + w <= n; i += w) V::store(y + i, V::fmadd(av, V::load(x + i), V::load(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
T squared_distance(std::size_t n, const T* a, const T* b) {
    using V = vec<T>;
    constexpr std::size_t w = V::width;
    auto acc = V::zero();
    std::size_t i = 0;
    for (; i + w <= n; i += w) {
        const auto d = V::sub(V::load(a + i), V::load(b + i));
        acc = V::fmadd(d, d, acc);
    }
    T s = V::hsum(acc);
    for (; i < n; ++i) {
        const T d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

template void gemm_nn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);
template void gemm_nn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);
template float dot<float>(std::size_t, const float*, const float*);
template double dot<double>(std::size_t, const double*, const double*);
template void axpy<float>(std::size_t, float, const float*, float*);
template void axpy<double>(std::size_t, double, const double*, double*);
template float squared_distance<float>(std::size_t, const float*, const float*);
template double squared_distance<double>(std::size_t, const double*, const double*);

}  // namespace lgrit::simd::avx2
