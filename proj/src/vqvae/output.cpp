#include "lgrit/vqvae/output.hpp"

#include <cmath>

#include "lgrit/core/error.hpp"

namespace lgrit::vqvae {

namespace {

void check_size(std::size_t got, std::size_t height, std::size_t width, const char* what) {
    if (got != height * width) {
        throw ValidationError(std::string(what) + ": " + std::to_string(got) + " values for a " +
                              std::to_string(height) + "x" + std::to_string(width) + " grid");
    }
}

}  // namespace

geom::RaydropMask threshold_mask(std::span<const float> logits, std::size_t height, std::size_t width) {
    check_size(logits.size(), height, width, "threshold_mask");
    geom::RaydropMask m(height, width);
    for (std::size_t i = 0; i < logits.size(); ++i) m.bits[i] = logits[i] >= 0.0f ? 1 : 0;
    return m;
}

geom::RaydropMask threshold_range(std::span<const float> range, std::size_t height, std::size_t width, float tau) {
    check_size(range.size(), height, width, "threshold_range");
    geom::RaydropMask m(height, width);
    for (std::size_t i = 0; i < range.size(); ++i) m.bits[i] = range[i] >= tau ? 1 : 0;
    return m;
}

float baseline_threshold(const geom::ProjectionConfig& cfg) {
    return static_cast<float>(cfg.normalize(cfg.range_min) / 2.0);
}

geom::RangeImage compose(std::span<const float> range, const geom::RaydropMask& mask, const geom::ProjectionConfig& cfg) {
    check_size(range.size(), mask.height, mask.width, "compose");
    geom::RangeImage img;
    img.height = mask.height;
    img.width = mask.width;
    img.config = cfg;
    img.values.resize(range.size());
    for (std::size_t i = 0; i < range.size(); ++i) img.values[i] = mask.bits[i] ? range[i] : 0.0f;
    return img;
}

double mask_iou(const geom::RaydropMask& a, const geom::RaydropMask& b) {
    if (a.bits.size() != b.bits.size()) throw ValidationError("mask_iou: masks differ in size");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        inter += a.bits[i] && b.bits[i];
        uni += a.bits[i] || b.bits[i];
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double masked_l1(std::span<const float> x, std::span<const std::uint8_t> mask, std::span<const float> range) {
    if (x.size() != mask.size() || x.size() != range.size() || x.empty()) {
        throw ValidationError("masked_l1: inputs differ in size");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (mask[i]) s += std::abs(static_cast<double>(x[i]) - static_cast<double>(range[i]));
    }
    return s / static_cast<double>(x.size());
}

}  // namespace lgrit::vqvae
