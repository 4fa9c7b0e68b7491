#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace lgrit::metrics {

struct SwdConfig {
    std::size_t patch_size = 7;
    std::size_t patches_per_image = 64;
    std::size_t levels = 2;
    std::size_t projections = 512;
    std::uint64_t seed = 1;

    void validate() const;
};

/// A single-channel image, row-major.
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> values;
};

/// Laplacian pyramid: levels[0] has full resolution; the last level is the
/// coarsest Gaussian level itself. Blur is the 5-tap binomial kernel with
/// mirrored borders; each level halves both sides (rounding up).
std::vector<Image> laplacian_pyramid(const Image& img, std::size_t levels);

/// Flattened patch_size^2 descriptors at patches_per_image positions drawn
/// from derive_seed(seed, "swd.patches", level * 2^32 + image_index), so
/// image i of two sets is sampled at the same positions.
std::vector<float> patch_descriptors(const std::vector<Image>& set, const SwdConfig& cfg, std::size_t level);

/// `count` unit vectors in `dim` dimensions from derive_seed(seed, "swd.directions", level).
std::vector<double> swd_directions(std::uint64_t seed, std::size_t level, std::size_t dim, std::size_t count);

/// Exact 1-Wasserstein distance between two empirical 1D distributions
/// with uniform weights. Sorts its inputs in place.
double wasserstein_1d(std::vector<double>& a, std::vector<double>& b);

/// Mean over directions of the 1D Wasserstein distance between the
/// projected descriptor sets.
double sliced_wasserstein(std::span<const float> a, std::span<const float> b, std::size_t dim,
                          std::span<const double> directions);

/// Mean over pyramid levels of sliced_wasserstein of the patch descriptors.
double swd(const std::vector<Image>& a, const std::vector<Image>& b, const SwdConfig& cfg);

}  // namespace lgrit::metrics
