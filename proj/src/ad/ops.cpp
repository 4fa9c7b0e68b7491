#include "lgrit/ad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lgrit/core/error.hpp"
#include "lgrit/simd/kernels.hpp"
#include "node_factory.hpp"

namespace lgrit::ad {

using detail::make_result;
using detail::make_result_n;

namespace {

template <typename T>
Node<T>& input(Node<T>& self, std::size_t i) {
    return *self.inputs[i];
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
    throw ValidationError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

/// Number of elements of `b` repeated along a's leading axes. b broadcasts
/// against a if it equals a, has one element, or matches a trailing suffix.
std::size_t broadcast_inner(const char* op, const Shape& a, const Shape& b) {
    const std::size_t nb = shape_numel(b);
    if (a == b) return nb;
    if (nb == 1) return 1;
    if (b.size() <= a.size() && std::equal(b.begin(), b.end(), a.end() - static_cast<std::ptrdiff_t>(b.size()))) {
        return nb;
    }
    shape_error(op, a, b);
}

template <typename T, typename Fwd, typename GradA, typename GradB>
Tensor<T> binary(const char* op, const Tensor<T>& a, const Tensor<T>& b, Fwd fwd, GradA ga, GradB gb) {
    const std::size_t inner = broadcast_inner(op, a.shape(), b.shape());
    const auto av = a.data();
    const auto bv = b.data();
    std::vector<T> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i % inner]);
    return make_result<T>(op, a.shape(), std::move(out), {&a, &b}, [inner, ga, gb](Node<T>& self) {
        auto& na = input(self, 0);
        auto& nb = input(self, 1);
        const T* g = self.grad.data();
        if (na.requires_grad) {
            T* da = na.grad_buffer();
            for (std::size_t i = 0; i < self.value.size(); ++i) da[i] += ga(g[i], na.value[i], nb.value[i % inner]);
        }
        if (nb.requires_grad) {
            T* db = nb.grad_buffer();
            for (std::size_t i = 0; i < self.value.size(); ++i) db[i % inner] += gb(g[i], na.value[i], nb.value[i % inner]);
        }
    });
}

/// Elementwise unary op whose derivative is a function of (input, output).
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const char* op, const Tensor<T>& a, Fwd fwd, Deriv deriv) {
    const auto av = a.data();
    std::vector<T> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
    return make_result<T>(op, a.shape(), std::move(out), {&a}, [deriv](Node<T>& self) {
        auto& na = input(self, 0);
        T* da = na.grad_buffer();
        for (std::size_t i = 0; i < self.value.size(); ++i) da[i] += self.grad[i] * deriv(na.value[i], self.value[i]);
    });
}

// Output columns [lo, hi) of one kernel tap read inside the input row.
struct TapRange {
    std::size_t lo;
    std::size_t hi;
};

TapRange tap_range(std::size_t k, std::size_t stride, std::size_t pad, std::size_t in, std::size_t out) {
    const auto off = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(pad);
    const auto s = static_cast<std::ptrdiff_t>(stride);
    std::ptrdiff_t lo = off >= 0 ? 0 : (-off + s - 1) / s;
    std::ptrdiff_t hi = (static_cast<std::ptrdiff_t>(in) - off + s - 1) / s;
    hi = std::clamp<std::ptrdiff_t>(hi, 0, static_cast<std::ptrdiff_t>(out));
    lo = std::min(lo, hi);
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

template <typename T>
void im2col(const T* img, std::size_t channels, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
            const Conv2dGeometry& g, std::size_t out_h, std::size_t out_w, T* col) {
    const std::size_t plane = out_h * out_w;
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t ki = 0; ki < kh; ++ki) {
            const TapRange rows = tap_range(ki, g.stride_h, g.pad_h, h, out_h);
            for (std::size_t kj = 0; kj < kw; ++kj) {
                const TapRange cols = tap_range(kj, g.stride_w, g.pad_w, w, out_w);
                T* dst = col + ((c * kh + ki) * kw + kj) * plane;
                std::fill(dst, dst + rows.lo * out_w, T(0));
                std::fill(dst + rows.hi * out_w, dst + plane, T(0));
                for (std::size_t oh = rows.lo; oh < rows.hi; ++oh) {
                    T* d = dst + oh * out_w;
                    const T* src = img + (c * h + oh * g.stride_h + ki - g.pad_h) * w + kj - g.pad_w;
                    std::fill(d, d + cols.lo, T(0));
                    std::fill(d + cols.hi, d + out_w, T(0));
                    if (g.stride_w == 1) {
                        std::copy(src + cols.lo, src + cols.hi, d + cols.lo);
                    } else {
                        for (std::size_t ow = cols.lo; ow < cols.hi; ++ow) d[ow] = src[ow * g.stride_w];
                    }
                }
            }
        }
    }
}

// Accumulating adjoint of im2col.
template <typename T>
void col2im(const T* col, std::size_t channels, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
            const Conv2dGeometry& g, std::size_t out_h, std::size_t out_w, T* img) {
    const std::size_t plane = out_h * out_w;
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t ki = 0; ki < kh; ++ki) {
            const TapRange rows = tap_range(ki, g.stride_h, g.pad_h, h, out_h);
            for (std::size_t kj = 0; kj < kw; ++kj) {
                const TapRange cols = tap_range(kj, g.stride_w, g.pad_w, w, out_w);
                const T* src = col + ((c * kh + ki) * kw + kj) * plane;
                for (std::size_t oh = rows.lo; oh < rows.hi; ++oh) {
                    const T* s = src + oh * out_w;
                    T* d = img + (c * h + oh * g.stride_h + ki - g.pad_h) * w + kj - g.pad_w;
                    if (g.stride_w == 1) {
                        for (std::size_t ow = cols.lo; ow < cols.hi; ++ow) d[ow] += s[ow];
                    } else {
                        for (std::size_t ow = cols.lo; ow < cols.hi; ++ow) d[ow * g.stride_w] += s[ow];
                    }
                }
            }
        }
    }
}

std::vector<std::size_t> strides_of(const Shape& shape) {
    std::vector<std::size_t> s(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
    return s;
}

}  // namespace

// ---------------------------------------------------------------- elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return binary<T>(
        "add", a, b, [](T x, T y) { return x + y; }, [](T g, T, T) { return g; }, [](T g, T, T) { return g; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return binary<T>(
        "sub", a, b, [](T x, T y) { return x - y; }, [](T g, T, T) { return g; }, [](T g, T, T) { return -g; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return binary<T>(
        "mul", a, b, [](T x, T y) { return x * y; }, [](T g, T, T y) { return g * y; },
        [](T g, T x, T) { return g * x; });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
    return unary<T>("neg", a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    return unary<T>("scale", a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value) {
    return unary<T>("add_scalar", a, [value](T x) { return x + value; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
    return unary<T>("square", a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
    return unary<T>("exp", a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
    constexpr T eps = static_cast<T>(kLogEpsilon);
    return unary<T>(
        "log", a, [eps](T x) { return std::log(std::max(x, eps)); },
        [eps](T x, T) { return T(1) / std::max(x, eps); });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
    return unary<T>(
        "abs", a, [](T x) { return std::abs(x); }, [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    return unary<T>(
        "sigmoid", a,
        [](T x) {
            if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
            const T e = std::exp(x);
            return e / (T(1) + e);
        },
        [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    return unary<T>("relu", a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
    constexpr T c = static_cast<T>(0.7978845608028654);  // sqrt(2 / pi)
    constexpr T k = static_cast<T>(0.044715);
    const auto tanh_of = [](T x) {
        const T u = c * (x + k * x * x * x);
        return T(1) - T(2) / (T(1) + std::exp(T(2) * u));
    };
    return unary<T>(
        "gelu", a, [tanh_of](T x) { return T(0.5) * x * (T(1) + tanh_of(x)); },
        [tanh_of](T x, T) {
            const T t = tanh_of(x);
            return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * c * (T(1) + T(3) * k * x * x);
        });
}

// ---------------------------------------------------------------- matmul

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() < 1 || b.rank() != 2 || a.shape().back() != b.dim(0)) shape_error("matmul", a.shape(), b.shape());
    const std::size_t k = b.dim(0);
    const std::size_t n = b.dim(1);
    const std::size_t m = a.numel() / k;
    std::vector<T> out(m * n, T(0));
    simd::gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data());
    Shape shape = a.shape();
    shape.back() = n;
    return make_result<T>("matmul", std::move(shape), std::move(out), {&a, &b}, [m, n, k](Node<T>& self) {
        auto& na = input(self, 0);
        auto& nb = input(self, 1);
        if (na.requires_grad) simd::gemm_nt(m, k, n, self.grad.data(), nb.value.data(), na.grad_buffer());
        if (nb.requires_grad) simd::gemm_tn(k, n, m, na.value.data(), self.grad.data(), nb.grad_buffer());
    });
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
        shape_error("bmm", a.shape(), b.shape());
    }
    const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
    std::vector<T> out(batch * m * n, T(0));
    for (std::size_t i = 0; i < batch; ++i) {
        simd::gemm_nn(m, n, k, a.data().data() + i * m * k, b.data().data() + i * k * n, out.data() + i * m * n);
    }
    return make_result<T>("bmm", {batch, m, n}, std::move(out), {&a, &b}, [batch, m, n, k](Node<T>& self) {
        auto& na = input(self, 0);
        auto& nb = input(self, 1);
        for (std::size_t i = 0; i < batch; ++i) {
            const T* g = self.grad.data() + i * m * n;
            if (na.requires_grad) simd::gemm_nt(m, k, n, g, nb.value.data() + i * k * n, na.grad_buffer() + i * m * k);
            if (nb.requires_grad) simd::gemm_tn(k, n, m, na.value.data() + i * m * k, g, nb.grad_buffer() + i * k * n);
        }
    });
}

// ---------------------------------------------------------------- convolution

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, Conv2dGeometry g) {
    if (x.rank() != 4 || weight.rank() != 4 || x.dim(1) != weight.dim(1)) shape_error("conv2d", x.shape(), weight.shape());
    if (bias.rank() != 1 || bias.dim(0) != weight.dim(0)) shape_error("conv2d (bias)", weight.shape(), bias.shape());
    if (g.stride_h < 1 || g.stride_w < 1) throw ValidationError("conv2d: strides must be >= 1");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t o = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    if (h + 2 * g.pad_h < kh || w + 2 * g.pad_w < kw) shape_error("conv2d (kernel larger than input)", x.shape(), weight.shape());
    const std::size_t oh = (h + 2 * g.pad_h - kh) / g.stride_h + 1;
    const std::size_t ow = (w + 2 * g.pad_w - kw) / g.stride_w + 1;
    const std::size_t ckk = c * kh * kw, plane = oh * ow;

    std::vector<T> out(n * o * plane);
    std::vector<T> col(ckk * plane);
    const T* bv = bias.data().data();
    for (std::size_t s = 0; s < n; ++s) {
        T* dst = out.data() + s * o * plane;
        for (std::size_t f = 0; f < o; ++f) std::fill(dst + f * plane, dst + (f + 1) * plane, bv[f]);
        im2col(x.data().data() + s * c * h * w, c, h, w, kh, kw, g, oh, ow, col.data());
        simd::gemm_nn(o, plane, ckk, weight.data().data(), col.data(), dst);
    }
    return make_result<T>("conv2d", {n, o, oh, ow}, std::move(out), {&x, &weight, &bias}, [=](Node<T>& self) {
        auto& nx = input(self, 0);
        auto& nw = input(self, 1);
        auto& nb = input(self, 2);
        std::vector<T> col(ckk * plane);
        std::vector<T> gcol;
        for (std::size_t s = 0; s < n; ++s) {
            const T* go = self.grad.data() + s * o * plane;
            if (nb.requires_grad) {
                T* db = nb.grad_buffer();
                for (std::size_t f = 0; f < o; ++f)
                    for (std::size_t p = 0; p < plane; ++p) db[f] += go[f * plane + p];
            }
            if (nw.requires_grad) {
                im2col(nx.value.data() + s * c * h * w, c, h, w, kh, kw, g, oh, ow, col.data());
                simd::gemm_nt(o, ckk, plane, go, col.data(), nw.grad_buffer());
            }
            if (nx.requires_grad) {
                gcol.assign(ckk * plane, T(0));
                simd::gemm_tn(ckk, plane, o, nw.value.data(), go, gcol.data());
                col2im(gcol.data(), c, h, w, kh, kw, g, oh, ow, nx.grad_buffer() + s * c * h * w);
            }
        }
    });
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, Conv2dGeometry g) {
    if (x.rank() != 4 || weight.rank() != 4 || x.dim(1) != weight.dim(0)) {
        shape_error("conv_transpose2d", x.shape(), weight.shape());
    }
    if (bias.rank() != 1 || bias.dim(0) != weight.dim(1)) shape_error("conv_transpose2d (bias)", weight.shape(), bias.shape());
    if (g.stride_h < 1 || g.stride_w < 1) throw ValidationError("conv_transpose2d: strides must be >= 1");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t o = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
    const auto full_h = static_cast<std::ptrdiff_t>((h - 1) * g.stride_h + kh) - 2 * static_cast<std::ptrdiff_t>(g.pad_h);
    const auto full_w = static_cast<std::ptrdiff_t>((w - 1) * g.stride_w + kw) - 2 * static_cast<std::ptrdiff_t>(g.pad_w);
    if (full_h < 1 || full_w < 1) shape_error("conv_transpose2d (padding too large)", x.shape(), weight.shape());
    const auto oh = static_cast<std::size_t>(full_h), ow = static_cast<std::size_t>(full_w);
    const std::size_t okk = o * kh * kw, in_plane = h * w, out_plane = oh * ow;

    std::vector<T> out(n * o * out_plane);
    std::vector<T> col(okk * in_plane);
    const T* bv = bias.data().data();
    for (std::size_t s = 0; s < n; ++s) {
        T* dst = out.data() + s * o * out_plane;
        for (std::size_t f = 0; f < o; ++f) std::fill(dst + f * out_plane, dst + (f + 1) * out_plane, bv[f]);
        std::fill(col.begin(), col.end(), T(0));
        simd::gemm_tn(okk, in_plane, c, weight.data().data(), x.data().data() + s * c * in_plane, col.data());
        col2im(col.data(), o, oh, ow, kh, kw, g, h, w, dst);
    }
    return make_result<T>("conv_transpose2d", {n, o, oh, ow}, std::move(out), {&x, &weight, &bias}, [=](Node<T>& self) {
        auto& nx = input(self, 0);
        auto& nw = input(self, 1);
        auto& nb = input(self, 2);
        std::vector<T> gcol(okk * in_plane);
        for (std::size_t s = 0; s < n; ++s) {
            const T* go = self.grad.data() + s * o * out_plane;
            if (nb.requires_grad) {
                T* db = nb.grad_buffer();
                for (std::size_t f = 0; f < o; ++f)
                    for (std::size_t p = 0; p < out_plane; ++p) db[f] += go[f * out_plane + p];
            }
            if (!nx.requires_grad && !nw.requires_grad) continue;
            im2col(go, o, oh, ow, kh, kw, g, h, w, gcol.data());
            if (nx.requires_grad) {
                simd::gemm_nn(c, in_plane, okk, nw.value.data(), gcol.data(), nx.grad_buffer() + s * c * in_plane);
            }
            if (nw.requires_grad) {
                simd::gemm_nt(c, okk, in_plane, nx.value.data() + s * c * in_plane, gcol.data(), nw.grad_buffer());
            }
        }
    });
}

// ---------------------------------------------------------------- normalization

template <typename T>
Tensor<T> softmax(const Tensor<T>& a) {
    const std::size_t d = a.shape().back();
    const std::size_t rows = a.numel() / d;
    std::vector<T> out(a.numel());
    const T* av = a.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* x = av + r * d;
        T* y = out.data() + r * d;
        const T mx = *std::max_element(x, x + d);
        T total = 0;
        for (std::size_t j = 0; j < d; ++j) total += (y[j] = std::exp(x[j] - mx));
        for (std::size_t j = 0; j < d; ++j) y[j] /= total;
    }
    return make_result<T>("softmax", a.shape(), std::move(out), {&a}, [rows, d](Node<T>& self) {
        T* da = input(self, 0).grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            const T* y = self.value.data() + r * d;
            const T* g = self.grad.data() + r * d;
            T dotp = 0;
            for (std::size_t j = 0; j < d; ++j) dotp += g[j] * y[j];
            for (std::size_t j = 0; j < d; ++j) da[r * d + j] += y[j] * (g[j] - dotp);
        }
    });
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& a) {
    const std::size_t d = a.shape().back();
    const std::size_t rows = a.numel() / d;
    std::vector<T> out(a.numel());
    const T* av = a.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* x = av + r * d;
        T* y = out.data() + r * d;
        const T mx = *std::max_element(x, x + d);
        T total = 0;
        for (std::size_t j = 0; j < d; ++j) total += std::exp(x[j] - mx);
        const T lse = mx + std::log(total);
        for (std::size_t j = 0; j < d; ++j) y[j] = x[j] - lse;
    }
    return make_result<T>("log_softmax", a.shape(), std::move(out), {&a}, [rows, d](Node<T>& self) {
        T* da = input(self, 0).grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            const T* y = self.value.data() + r * d;
            const T* g = self.grad.data() + r * d;
            T gsum = 0;
            for (std::size_t j = 0; j < d; ++j) gsum += g[j];
            for (std::size_t j = 0; j < d; ++j) da[r * d + j] += g[j] - std::exp(y[j]) * gsum;
        }
    });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    const std::size_t d = x.shape().back();
    if (gamma.numel() != d || beta.numel() != d) shape_error("layer_norm", x.shape(), gamma.shape());
    const std::size_t rows = x.numel() / d;
    std::vector<T> out(x.numel());
    const T* xv = x.data().data();
    const T* gv = gamma.data().data();
    const T* bv = beta.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = xv + r * d;
        T mu = 0;
        for (std::size_t j = 0; j < d; ++j) mu += xr[j];
        mu /= static_cast<T>(d);
        T var = 0;
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<T>(d);
        const T rstd = T(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = (xr[j] - mu) * rstd * gv[j] + bv[j];
    }
    return make_result<T>("layer_norm", x.shape(), std::move(out), {&x, &gamma, &beta}, [rows, d, eps](Node<T>& self) {
        auto& nx = input(self, 0);
        auto& ng = input(self, 1);
        auto& nb = input(self, 2);
        std::vector<T> xhat(d), gxhat(d);
        for (std::size_t r = 0; r < rows; ++r) {
            const T* xr = nx.value.data() + r * d;
            const T* g = self.grad.data() + r * d;
            T mu = 0;
            for (std::size_t j = 0; j < d; ++j) mu += xr[j];
            mu /= static_cast<T>(d);
            T var = 0;
            for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
            var /= static_cast<T>(d);
            const T rstd = T(1) / std::sqrt(var + eps);
            T mean_g = 0, mean_gx = 0;
            for (std::size_t j = 0; j < d; ++j) {
                xhat[j] = (xr[j] - mu) * rstd;
                gxhat[j] = g[j] * ng.value[j];
                mean_g += gxhat[j];
                mean_gx += gxhat[j] * xhat[j];
            }
            mean_g /= static_cast<T>(d);
            mean_gx /= static_cast<T>(d);
            if (ng.requires_grad) {
                T* dg = ng.grad_buffer();
                for (std::size_t j = 0; j < d; ++j) dg[j] += g[j] * xhat[j];
            }
            if (nb.requires_grad) {
                T* db = nb.grad_buffer();
                for (std::size_t j = 0; j < d; ++j) db[j] += g[j];
            }
            if (nx.requires_grad) {
                T* dx = nx.grad_buffer() + r * d;
                for (std::size_t j = 0; j < d; ++j) dx[j] += rstd * (gxhat[j] - mean_g - xhat[j] * mean_gx);
            }
        }
    });
}

// ---------------------------------------------------------------- indexing

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, const std::vector<std::int32_t>& indices, Shape index_shape) {
    if (table.rank() != 2) throw ValidationError("embedding: table must be 2-D, got " + shape_str(table.shape()));
    if (shape_numel(index_shape) != indices.size()) {
        throw ValidationError("embedding: index shape " + shape_str(index_shape) + " does not match " +
                              std::to_string(indices.size()) + " indices");
    }
    const std::size_t v = table.dim(0), d = table.dim(1);
    std::vector<T> out(indices.size() * d);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto idx = indices[i];
        if (idx < 0 || static_cast<std::size_t>(idx) >= v) {
            throw ValidationError("embedding: index " + std::to_string(idx) + " outside table of " + std::to_string(v) +
                                  " rows");
        }
        std::copy_n(table.data().data() + static_cast<std::size_t>(idx) * d, d, out.data() + i * d);
    }
    Shape shape = std::move(index_shape);
    shape.push_back(d);
    return make_result<T>("embedding", std::move(shape), std::move(out), {&table}, [indices, d](Node<T>& self) {
        T* dt = input(self, 0).grad_buffer();
        for (std::size_t i = 0; i < indices.size(); ++i) {
            simd::axpy(d, T(1), self.grad.data() + i * d, dt + static_cast<std::size_t>(indices[i]) * d);
        }
    });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) shape_error("reshape", a.shape(), shape);
    std::vector<T> out(a.data().begin(), a.data().end());
    return make_result<T>("reshape", std::move(shape), std::move(out), {&a}, [](Node<T>& self) {
        simd::axpy(self.value.size(), T(1), self.grad.data(), input(self, 0).grad_buffer());
    });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& axes) {
    const std::size_t r = a.rank();
    std::vector<std::size_t> check(axes);
    std::sort(check.begin(), check.end());
    for (std::size_t i = 0; i < check.size(); ++i) {
        if (check.size() != r || check[i] != i) throw ValidationError("permute: invalid axes for shape " + shape_str(a.shape()));
    }
    Shape out_shape(r);
    for (std::size_t i = 0; i < r; ++i) out_shape[i] = a.dim(axes[i]);
    const auto in_strides = strides_of(a.shape());
    // Source offset of each output element.
    std::vector<std::size_t> src(a.numel());
    std::vector<std::size_t> idx(r, 0);
    for (std::size_t flat = 0; flat < src.size(); ++flat) {
        std::size_t off = 0;
        for (std::size_t i = 0; i < r; ++i) off += idx[i] * in_strides[axes[i]];
        src[flat] = off;
        for (std::size_t i = r; i-- > 0;) {
            if (++idx[i] < out_shape[i]) break;
            idx[i] = 0;
        }
    }
    std::vector<T> out(a.numel());
    const T* av = a.data().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[src[i]];
    return make_result<T>("permute", std::move(out_shape), std::move(out), {&a}, [src = std::move(src)](Node<T>& self) {
        T* da = input(self, 0).grad_buffer();
        for (std::size_t i = 0; i < src.size(); ++i) da[src[i]] += self.grad[i];
    });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a, std::size_t axis0, std::size_t axis1) {
    std::vector<std::size_t> axes(a.rank());
    std::iota(axes.begin(), axes.end(), std::size_t{0});
    if (axis0 >= axes.size() || axis1 >= axes.size()) throw ValidationError("transpose: axis out of range");
    std::swap(axes[axis0], axes[axis1]);
    return permute(a, axes);
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin, std::size_t end) {
    if (axis >= a.rank() || begin >= end || end > a.dim(axis)) {
        throw ValidationError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) + ") on axis " +
                              std::to_string(axis) + " invalid for shape " + shape_str(a.shape()));
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
    for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
    const std::size_t len = end - begin, full = a.dim(axis);
    std::vector<T> out(outer * len * inner);
    const T* av = a.data().data();
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(av + (o * full + begin) * inner, len * inner, out.data() + o * len * inner);
    }
    Shape shape = a.shape();
    shape[axis] = len;
    return make_result<T>("slice", std::move(shape), std::move(out), {&a}, [=](Node<T>& self) {
        T* da = input(self, 0).grad_buffer();
        for (std::size_t o = 0; o < outer; ++o) {
            simd::axpy(len * inner, T(1), self.grad.data() + o * len * inner, da + (o * full + begin) * inner);
        }
    });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
    if (parts.empty()) throw ValidationError("concat: no inputs");
    const Shape& ref = parts[0].shape();
    if (axis >= ref.size()) throw ValidationError("concat: axis out of range for " + shape_str(ref));
    std::size_t total = 0;
    std::vector<std::size_t> lens;
    for (const auto& p : parts) {
        if (p.rank() != ref.size()) shape_error("concat", ref, p.shape());
        for (std::size_t i = 0; i < ref.size(); ++i) {
            if (i != axis && p.dim(i) != ref[i]) shape_error("concat", ref, p.shape());
        }
        lens.push_back(p.dim(axis));
        total += p.dim(axis);
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= ref[i];
    for (std::size_t i = axis + 1; i < ref.size(); ++i) inner *= ref[i];
    std::vector<T> out(outer * total * inner);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const T* pv = parts[k].data().data();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(pv + o * lens[k] * inner, lens[k] * inner, out.data() + (o * total + offset) * inner);
        }
        offset += lens[k];
    }
    Shape shape = ref;
    shape[axis] = total;
    return make_result_n<T>("concat", std::move(shape), std::move(out), parts, [=](Node<T>& self) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < lens.size(); ++k) {
            auto& nk = input(self, k);
            if (nk.requires_grad) {
                T* dk = nk.grad_buffer();
                for (std::size_t o = 0; o < outer; ++o) {
                    simd::axpy(lens[k] * inner, T(1), self.grad.data() + (o * total + off) * inner, dk + o * lens[k] * inner);
                }
            }
            off += lens[k];
        }
    });
}

// ---------------------------------------------------------------- reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    T s = 0;
    for (T v : a.data()) s += v;
    return make_result<T>("sum", {1}, {s}, {&a}, [](Node<T>& self) {
        auto& na = input(self, 0);
        T* da = na.grad_buffer();
        for (std::size_t i = 0; i < na.value.size(); ++i) da[i] += self.grad[0];
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
    T s = 0;
    for (T v : a.data()) s += v;
    const T inv = T(1) / static_cast<T>(a.numel());
    return make_result<T>("mean", {1}, {s * inv}, {&a}, [inv](Node<T>& self) {
        auto& na = input(self, 0);
        T* da = na.grad_buffer();
        const T g = self.grad[0] * inv;
        for (std::size_t i = 0; i < na.value.size(); ++i) da[i] += g;
    });
}

template <typename T>
Tensor<T> masked_fill(const Tensor<T>& a, const std::vector<std::uint8_t>& mask, T value) {
    if (mask.empty() || a.numel() % mask.size() != 0) {
        throw ValidationError("masked_fill: mask of " + std::to_string(mask.size()) + " entries does not tile shape " +
                              shape_str(a.shape()));
    }
    const std::size_t period = mask.size();
    std::vector<T> out(a.data().begin(), a.data().end());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (mask[i % period]) out[i] = value;
    }
    return make_result<T>("masked_fill", a.shape(), std::move(out), {&a}, [mask](Node<T>& self) {
        T* da = input(self, 0).grad_buffer();
        const std::size_t p = mask.size();
        for (std::size_t i = 0; i < self.value.size(); ++i) {
            if (!mask[i % p]) da[i] += self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> pick(const Tensor<T>& a, const std::vector<std::int32_t>& columns) {
    if (a.rank() != 2 || columns.size() != a.dim(0)) {
        throw ValidationError("pick: need [R, C] input and R columns, got " + shape_str(a.shape()) + " and " +
                              std::to_string(columns.size()));
    }
    const std::size_t cols = a.dim(1);
    std::vector<T> out(columns.size());
    for (std::size_t r = 0; r < columns.size(); ++r) {
        if (columns[r] < 0 || static_cast<std::size_t>(columns[r]) >= cols) {
            throw ValidationError("pick: column " + std::to_string(columns[r]) + " out of range");
        }
        out[r] = a.data()[r * cols + static_cast<std::size_t>(columns[r])];
    }
    return make_result<T>("pick", {columns.size()}, std::move(out), {&a}, [columns, cols](Node<T>& self) {
        T* da = input(self, 0).grad_buffer();
        for (std::size_t r = 0; r < columns.size(); ++r) da[r * cols + static_cast<std::size_t>(columns[r])] += self.grad[r];
    });
}

template <typename T>
Tensor<T> detach(const Tensor<T>& a) {
    return Tensor<T>::from(a.shape(), std::vector<T>(a.data().begin(), a.data().end()));
}

template <typename T>
Tensor<T> straight_through(const Tensor<T>& source, const Tensor<T>& value) {
    if (source.shape() != value.shape()) {
        throw ValidationError("straight_through: shape mismatch " + shape_str(source.shape()) + " vs " +
                              shape_str(value.shape()));
    }
    return make_result<T>("straight_through", source.shape(), std::vector<T>(value.data().begin(), value.data().end()),
                          {&source}, [](Node<T>& self) {
                              T* da = input(self, 0).grad_buffer();
                              for (std::size_t i = 0; i < self.value.size(); ++i) da[i] += self.grad[i];
                          });
}

#define LGRIT_AD_INSTANTIATE(T)                                                                                \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                                \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                                \
    template Tensor<T> neg(const Tensor<T>&);                                                                  \
    template Tensor<T> scale(const Tensor<T>&, T);                                                             \
    template Tensor<T> add_scalar(const Tensor<T>&, T);                                                        \
    template Tensor<T> square(const Tensor<T>&);                                                               \
    template Tensor<T> exp(const Tensor<T>&);                                                                  \
    template Tensor<T> log(const Tensor<T>&);                                                                  \
    template Tensor<T> abs(const Tensor<T>&);                                                                  \
    template Tensor<T> sigmoid(const Tensor<T>&);                                                              \
    template Tensor<T> relu(const Tensor<T>&);                                                                 \
    template Tensor<T> gelu(const Tensor<T>&);                                                                 \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                             \
    template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&);                                                \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dGeometry);           \
    template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dGeometry); \
    template Tensor<T> softmax(const Tensor<T>&);                                                              \
    template Tensor<T> log_softmax(const Tensor<T>&);                                                          \
    template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                    \
    template Tensor<T> embedding(const Tensor<T>&, const std::vector<std::int32_t>&, Shape);                   \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                                       \
    template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                             \
    template Tensor<T> transpose(const Tensor<T>&, std::size_t, std::size_t);                                  \
    template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                         \
    template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                                     \
    template Tensor<T> sum(const Tensor<T>&);                                                                  \
    template Tensor<T> mean(const Tensor<T>&);                                                                 \
    template Tensor<T> masked_fill(const Tensor<T>&, const std::vector<std::uint8_t>&, T);                     \
    template Tensor<T> pick(const Tensor<T>&, const std::vector<std::int32_t>&);                               \
    template Tensor<T> detach(const Tensor<T>&);                                                               \
    template Tensor<T> straight_through(const Tensor<T>&, const Tensor<T>&);

LGRIT_AD_INSTANTIATE(float)
LGRIT_AD_INSTANTIATE(double)
#undef LGRIT_AD_INSTANTIATE

}  // namespace lgrit::ad
