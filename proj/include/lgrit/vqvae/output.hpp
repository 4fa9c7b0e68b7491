#pragma once

#include <span>
#include <vector>

#include "lgrit/geom/projection.hpp"

namespace lgrit::vqvae {

/// bit = 1 iff sigmoid(logit) >= 0.5, i.e. logit >= 0.
geom::RaydropMask threshold_mask(std::span<const float> logits, std::size_t height, std::size_t width);

/// Baseline mask: bit = 1 iff the regressed range is at least tau.
geom::RaydropMask threshold_range(std::span<const float> range, std::size_t height, std::size_t width, float tau);

/// Default tau: half the normalized value of the nearest valid range.
float baseline_threshold(const geom::ProjectionConfig& cfg);

/// x = mask * range elementwise.
geom::RangeImage compose(std::span<const float> range, const geom::RaydropMask& mask, const geom::ProjectionConfig& cfg);

/// |A and B| / |A or B|; 1 when both masks are empty.
double mask_iou(const geom::RaydropMask& a, const geom::RaydropMask& b);

/// mean over pixels of |mask * (x - range)|.
double masked_l1(std::span<const float> x, std::span<const std::uint8_t> mask, std::span<const float> range);

}  // namespace lgrit::vqvae
