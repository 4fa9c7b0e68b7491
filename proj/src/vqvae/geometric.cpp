#include "lgrit/vqvae/geometric.hpp"

#include <cmath>
#include <numbers>

#include "lgrit/core/error.hpp"

namespace lgrit::vqvae {

GeometricTransform sample_transform(const GpConfig& cfg, Rng& rng) {
    GeometricTransform t;
    if (!rng.bernoulli(cfg.probability)) return t;
    switch (rng.below(3)) {
        case 0: t.kind = TransformKind::hflip; break;
        case 1: t.kind = TransformKind::vflip; break;
        default:
            t.kind = TransformKind::affine;
            t.rotation_deg = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg);
            t.translate_x = rng.uniform(-cfg.translate_w, cfg.translate_w);
            t.translate_y = rng.uniform(-cfg.translate_h, cfg.translate_h);
            t.scale = rng.uniform(cfg.scale_min, cfg.scale_max);
            break;
    }
    return t;
}

GridPair apply_geometric_preservation(const std::vector<float>& image, const std::vector<std::uint8_t>& mask,
                                      std::size_t height, std::size_t width, const GeometricTransform& t) {
    if (image.size() != height * width || mask.size() != height * width) {
        throw ValidationError("geometric transform: image and mask must both be " + std::to_string(height) + "x" +
                              std::to_string(width));
    }
    GridPair out{std::vector<float>(image.size(), 0.0f), std::vector<std::uint8_t>(mask.size(), 0)};
    const auto h = static_cast<std::ptrdiff_t>(height), w = static_cast<std::ptrdiff_t>(width);

    if (t.kind == TransformKind::identity) return {image, mask};
    if (t.kind == TransformKind::hflip || t.kind == TransformKind::vflip) {
        for (std::ptrdiff_t r = 0; r < h; ++r) {
            for (std::ptrdiff_t c = 0; c < w; ++c) {
                const auto sr = t.kind == TransformKind::vflip ? h - 1 - r : r;
                const auto sc = t.kind == TransformKind::hflip ? w - 1 - c : c;
                out.image[r * w + c] = image[sr * w + sc];
                out.mask[r * w + c] = mask[sr * w + sc];
            }
        }
        return out;
    }

    if (!(t.scale > 0.0)) throw ValidationError("geometric transform: scale must be > 0");
    const double a = t.rotation_deg * std::numbers::pi / 180.0;
    const double cos_a = std::cos(a), sin_a = std::sin(a);
    const double cy = (static_cast<double>(height) - 1.0) / 2.0, cx = (static_cast<double>(width) - 1.0) / 2.0;
    const double ty = t.translate_y * static_cast<double>(height), tx = t.translate_x * static_cast<double>(width);
    std::size_t inside = 0;
    for (std::ptrdiff_t r = 0; r < h; ++r) {
        for (std::ptrdiff_t c = 0; c < w; ++c) {
            const double dy = static_cast<double>(r) - cy - ty;
            const double dx = static_cast<double>(c) - cx - tx;
            const double sx = (cos_a * dx + sin_a * dy) / t.scale + cx;
            const double sy = (-sin_a * dx + cos_a * dy) / t.scale + cy;
            const auto sr = static_cast<std::ptrdiff_t>(std::lround(sy));
            const auto sc = static_cast<std::ptrdiff_t>(std::lround(sx));
            if (sr < 0 || sr >= h || sc < 0 || sc >= w) continue;
            out.image[r * w + c] = image[sr * w + sc];
            out.mask[r * w + c] = mask[sr * w + sc];
            ++inside;
        }
    }
    if (inside == 0) throw ValidationError("geometric transform: affine map sends every pixel out of frame");
    return out;
}

}  // namespace lgrit::vqvae
