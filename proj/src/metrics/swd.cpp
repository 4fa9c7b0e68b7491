#include "lgrit/metrics/swd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lgrit/core/error.hpp"
#include "lgrit/core/parallel.hpp"
#include "lgrit/core/rng.hpp"

namespace lgrit::metrics {

void SwdConfig::validate() const {
    if (patch_size < 1) throw ValidationError("swd: patch_size must be >= 1");
    if (patches_per_image < 1) throw ValidationError("swd: patches_per_image must be >= 1");
    if (levels < 1) throw ValidationError("swd: levels must be >= 1");
    if (projections < 1) throw ValidationError("swd: projections must be >= 1");
}

namespace {

constexpr double kBinomial[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

std::size_t mirror(std::ptrdiff_t i, std::size_t n) {
    if (n == 1) return 0;
    const auto last = static_cast<std::ptrdiff_t>(n) - 1;
    while (i < 0 || i > last) i = i < 0 ? -i : 2 * last - i;
    return static_cast<std::size_t>(i);
}

/// Separable binomial blur, scaled by `gain` per axis.
Image blur(const Image& img, double gain) {
    const std::size_t h = img.height, w = img.width;
    std::vector<double> tmp(h * w);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            double s = 0.0;
            for (int k = -2; k <= 2; ++k) s += kBinomial[k + 2] * img.values[r * w + mirror(static_cast<std::ptrdiff_t>(c) + k, w)];
            tmp[r * w + c] = gain * s;
        }
    }
    Image out{h, w, std::vector<float>(h * w)};
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            double s = 0.0;
            for (int k = -2; k <= 2; ++k) s += kBinomial[k + 2] * tmp[mirror(static_cast<std::ptrdiff_t>(r) + k, h) * w + c];
            out.values[r * w + c] = static_cast<float>(gain * s);
        }
    }
    return out;
}

Image downsample(const Image& img) {
    const auto b = blur(img, 1.0);
    Image out{(img.height + 1) / 2, (img.width + 1) / 2, {}};
    out.values.resize(out.height * out.width);
    for (std::size_t r = 0; r < out.height; ++r)
        for (std::size_t c = 0; c < out.width; ++c) out.values[r * out.width + c] = b.values[2 * r * img.width + 2 * c];
    return out;
}

Image upsample(const Image& coarse, std::size_t h, std::size_t w) {
    Image stuffed{h, w, std::vector<float>(h * w, 0.0f)};
    for (std::size_t r = 0; r < h; r += 2)
        for (std::size_t c = 0; c < w; c += 2) stuffed.values[r * w + c] = coarse.values[(r / 2) * coarse.width + c / 2];
    return blur(stuffed, 2.0);
}

}  // namespace

std::vector<Image> laplacian_pyramid(const Image& img, std::size_t levels) {
    if (img.values.size() != img.height * img.width || img.values.empty()) {
        throw ValidationError("laplacian_pyramid: image buffer does not match its " + std::to_string(img.height) + "x" +
                              std::to_string(img.width) + " size");
    }
    std::vector<Image> gauss{img};
    for (std::size_t l = 1; l < levels; ++l) gauss.push_back(downsample(gauss.back()));
    std::vector<Image> out(levels);
    for (std::size_t l = 0; l + 1 < levels; ++l) {
        const auto up = upsample(gauss[l + 1], gauss[l].height, gauss[l].width);
        out[l] = gauss[l];
        for (std::size_t i = 0; i < up.values.size(); ++i) out[l].values[i] -= up.values[i];
    }
    out.back() = gauss.back();
    return out;
}

std::vector<float> patch_descriptors(const std::vector<Image>& set, const SwdConfig& cfg, std::size_t level) {
    const std::size_t p = cfg.patch_size, dim = p * p;
    std::vector<float> out(set.size() * cfg.patches_per_image * dim);
    parallel_for(set.size(), [&](std::size_t i) {
        const auto pyr = laplacian_pyramid(set[i], cfg.levels);
        const Image& img = pyr[level];
        if (img.height < p || img.width < p) {
            throw ValidationError("swd: pyramid level " + std::to_string(level) + " is " + std::to_string(img.height) +
                                  "x" + std::to_string(img.width) + ", smaller than the " + std::to_string(p) + "x" +
                                  std::to_string(p) + " patch");
        }
        Rng rng(derive_seed(cfg.seed, "swd.patches", (static_cast<std::uint64_t>(level) << 32) + i));
        float* dst = out.data() + i * cfg.patches_per_image * dim;
        for (std::size_t k = 0; k < cfg.patches_per_image; ++k) {
            const std::size_t r0 = rng.below(img.height - p + 1), c0 = rng.below(img.width - p + 1);
            for (std::size_t r = 0; r < p; ++r)
                for (std::size_t c = 0; c < p; ++c) *dst++ = img.values[(r0 + r) * img.width + c0 + c];
        }
    });
    return out;
}

std::vector<double> swd_directions(std::uint64_t seed, std::size_t level, std::size_t dim, std::size_t count) {
    Rng rng(derive_seed(seed, "swd.directions", level));
    std::vector<double> d(dim * count);
    for (std::size_t k = 0; k < count; ++k) {
        double norm = 0.0;
        while (norm == 0.0) {
            for (std::size_t j = 0; j < dim; ++j) {
                d[k * dim + j] = rng.normal();
                norm += d[k * dim + j] * d[k * dim + j];
            }
        }
        norm = std::sqrt(norm);
        for (std::size_t j = 0; j < dim; ++j) d[k * dim + j] /= norm;
    }
    return d;
}

double wasserstein_1d(std::vector<double>& a, std::vector<double>& b) {
    if (a.empty() || b.empty()) throw ValidationError("wasserstein_1d: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const std::size_t na = a.size(), nb = b.size();
    // Quantile functions are step functions with breaks at i/na and j/nb;
    // positions are kept as integers scaled by na*nb.
    double acc = 0.0;
    std::size_t i = 0, j = 0, t = 0;
    while (i < na && j < nb) {
        const std::size_t ea = (i + 1) * nb, eb = (j + 1) * na;
        const std::size_t next = std::min(ea, eb);
        acc += static_cast<double>(next - t) * std::abs(a[i] - b[j]);
        t = next;
        if (ea == next) ++i;
        if (eb == next) ++j;
    }
    return acc / (static_cast<double>(na) * static_cast<double>(nb));
}

double sliced_wasserstein(std::span<const float> a, std::span<const float> b, std::size_t dim,
                          std::span<const double> directions) {
    if (dim == 0 || a.size() % dim != 0 || b.size() % dim != 0 || directions.size() % dim != 0) {
        throw ValidationError("sliced_wasserstein: buffers are not multiples of the descriptor size");
    }
    const std::size_t na = a.size() / dim, nb = b.size() / dim, nd = directions.size() / dim;
    if (na == 0 || nb == 0 || nd == 0) throw ValidationError("sliced_wasserstein: empty descriptor set or direction list");
    std::vector<double> per_direction(nd);
    parallel_for(nd, [&](std::size_t k) {
        const double* dir = directions.data() + k * dim;
        auto project = [&](std::span<const float> set, std::size_t n) {
            std::vector<double> v(n);
            for (std::size_t i = 0; i < n; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < dim; ++j) s += dir[j] * set[i * dim + j];
                v[i] = s;
            }
            return v;
        };
        auto pa = project(a, na);
        auto pb = project(b, nb);
        per_direction[k] = wasserstein_1d(pa, pb);
    });
    double s = 0.0;
    for (double v : per_direction) s += v;
    return s / static_cast<double>(nd);
}

double swd(const std::vector<Image>& a, const std::vector<Image>& b, const SwdConfig& cfg) {
    cfg.validate();
    if (a.empty() || b.empty()) throw ValidationError("swd: both image sets must be non-empty");
    for (const auto* set : {&a, &b}) {
        for (const auto& img : *set) {
            if (img.height != a.front().height || img.width != a.front().width) {
                throw ValidationError("swd: image sizes differ (" + std::to_string(img.height) + "x" +
                                      std::to_string(img.width) + " vs " + std::to_string(a.front().height) + "x" +
                                      std::to_string(a.front().width) + ")");
            }
        }
    }
    const std::size_t dim = cfg.patch_size * cfg.patch_size;
    double total = 0.0;
    for (std::size_t level = 0; level < cfg.levels; ++level) {
        const auto da = patch_descriptors(a, cfg, level);
        const auto db = patch_descriptors(b, cfg, level);
        const auto dirs = swd_directions(cfg.seed, level, dim, cfg.projections);
        total += sliced_wasserstein(da, db, dim, dirs);
    }
    return total / static_cast<double>(cfg.levels);
}

}  // namespace lgrit::metrics
