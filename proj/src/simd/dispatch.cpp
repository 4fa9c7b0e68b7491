#include <atomic>
#include <cstdlib>
#include <cstring>
#include <vector>

#include "lgrit/simd/kernels.hpp"

namespace lgrit::simd {
namespace {

Isa initial_isa() {
    const bool has = cpu_has_avx2();
    if (const char* env = std::getenv("LGRIT_SIMD")) {
        if (std::strcmp(env, "scalar") == 0) return Isa::scalar;
        if (std::strcmp(env, "avx2") == 0 && has) return Isa::avx2;
    }
    return has ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& isa_slot() {
    static std::atomic<Isa> slot{initial_isa()};
    return slot;
}

template <typename T>
std::vector<T>& scratch() {
    thread_local std::vector<T> buf;
    return buf;
}

// dst[cols, rows] = src[rows, cols]^T
template <typename T>
void transpose_into(std::size_t rows, std::size_t cols, const T* src, std::vector<T>& dst) {
    dst.resize(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

}  // namespace

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Isa active_isa() { return isa_slot().load(std::memory_order_relaxed); }

bool set_isa(Isa isa) {
    if (isa == Isa::avx2 && !cpu_has_avx2()) return false;
    isa_slot().store(isa, std::memory_order_relaxed);
    return true;
}

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    if (m == 0 || n == 0 || k == 0) return;
    if (active_isa() == Isa::avx2) {
        avx2::gemm_nn(m, n, k, a, b, c);
    } else {
        scalar::gemm_nn(m, n, k, a, b, c);
    }
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    if (m == 0 || n == 0 || k == 0) return;
    auto& bt = scratch<T>();
    transpose_into(n, k, b, bt);
    gemm_nn(m, n, k, a, bt.data(), c);
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    if (m == 0 || n == 0 || k == 0) return;
    auto& at = scratch<T>();
    transpose_into(k, m, a, at);
    gemm_nn(m, n, k, at.data(), b, c);
}

template <typename T>
T dot(std::size_t n, const T* a, const T* b) {
    return active_isa() == Isa::avx2 ? avx2::dot(n, a, b) : scalar::dot(n, a, b);
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
    if (active_isa() == Isa::avx2) {
        avx2::axpy(n, alpha, x, y);
    } else {
        scalar::axpy(n, alpha, x, y);
    }
}

template <typename T>
T squared_distance(std::size_t n, const T* a, const T* b) {
    return active_isa() == Isa::avx2 ? avx2::squared_distance(n, a, b) : scalar::squared_distance(n, a, b);
}

#define LGRIT_INSTANTIATE(T)                                                                   \
    template void gemm_nn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*); \
    template void gemm_nt<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*); \
    template void gemm_tn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*); \
    template T dot<T>(std::size_t, const T*, const T*);                                       \
    template void axpy<T>(std::size_t, T, const T*, T*);                                      \
    template T squared_distance<T>(std::size_t, const T*, const T*);

LGRIT_INSTANTIATE(float)
LGRIT_INSTANTIATE(double)
#undef LGRIT_INSTANTIATE

}  // namespace lgrit::simd
