#pragma once

// Dense arithmetic kernels used by the autodiff engine, the quantizer and
// the point-cloud metrics. Every kernel has a portable scalar reference
// implementation and an AVX2/FMA variant; the variant is picked once at
// startup from CPUID and can be pinned with LGRIT_SIMD=scalar|avx2.

#include <cstddef>
#include <string_view>

namespace lgrit::simd {

enum class Isa { scalar, avx2 };

/// Instruction set the dispatcher currently routes to.
Isa active_isa();

/// Forces a specific variant. Returns false (and leaves the selection
/// unchanged) if the CPU lacks the requested extension.
bool set_isa(Isa isa);

bool cpu_has_avx2();

std::string_view isa_name(Isa isa);

// All matrices are row-major and densely packed.

/// C[m,n] += A[m,k] * B[k,n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);

/// C[m,n] += A[m,k] * B[n,k]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);

/// C[m,n] += A[k,m]^T * B[k,n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);

template <typename T>
T dot(std::size_t n, const T* a, const T* b);

/// y += alpha * x
template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y);

/// Squared Euclidean distance between two n-vectors.
template <typename T>
T squared_distance(std::size_t n, const T* a, const T* b);

// Per-ISA entry points. The dispatching functions above forward to one of
// these; tests call them directly to check the variants agree.
namespace scalar {
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);
template <typename T>
T dot(std::size_t n, const T* a, const T* b);
template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y);
template <typename T>
T squared_distance(std::size_t n, const T* a, const T* b);
}  // namespace scalar

namespace avx2 {
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);
template <typename T>
T dot(std::size_t n, const T* a, const T* b);
template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y);
template <typename T>
T squared_distance(std::size_t n, const T* a, const T* b);
}  // namespace avx2

}  // namespace lgrit::simd
