#pragma once

#include <cstdint>
#include <vector>

#include "lgrit/core/rng.hpp"
#include "lgrit/vqvae/model.hpp"

namespace lgrit::vqvae {

enum class TransformKind { identity, hflip, vflip, affine };

/// Affine maps act in pixel coordinates about the image center: output
/// pixel p samples the input at S^-1 R^-1 (p - c - t) + c, nearest neighbor.
struct GeometricTransform {
    TransformKind kind = TransformKind::identity;
    double rotation_deg = 0.0;
    /// Fractions of the image width and height.
    double translate_x = 0.0;
    double translate_y = 0.0;
    double scale = 1.0;
};

/// Identity with probability 1 - cfg.probability, else a uniformly chosen
/// flip or affine map with parameters drawn from the configured ranges.
GeometricTransform sample_transform(const GpConfig& cfg, Rng& rng);

struct GridPair {
    std::vector<float> image;
    std::vector<std::uint8_t> mask;
};

/// Applies one transform to an image and its mask with identical sampling
/// positions. Pixels sampled from outside the frame become 0 in both.
/// Throws ValidationError when every output pixel falls outside.
GridPair apply_geometric_preservation(const std::vector<float>& image, const std::vector<std::uint8_t>& mask,
                                      std::size_t height, std::size_t width, const GeometricTransform& t);

}  // namespace lgrit::vqvae
