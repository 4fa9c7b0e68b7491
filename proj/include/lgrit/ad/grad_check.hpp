#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lgrit/ad/optim.hpp"

namespace lgrit::ad {

struct GradCheckEntry {
    std::string param;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_error = 0.0;
    std::size_t failures = 0;
    double tolerance = 0.0;

    bool passed() const { return failures == 0; }
};

struct GradCheckOptions {
    std::size_t samples = 20;
    double step = 1e-5;
    double tolerance = 1e-4;
    /// Denominator floor: rel = |a - n| / max(|a|, |n|, floor).
    double abs_floor = 1e-6;
    std::uint64_t seed = 0;
};

/// Compares analytic gradients of `loss` against central differences at
/// `samples` coordinates drawn uniformly over all entries of `params`.
/// `loss` is re-evaluated for every probe and must be deterministic.
GradCheckReport grad_check(const std::function<Tensor<double>()>& loss, std::vector<Parameter<double>>& params,
                           const GradCheckOptions& opts);

/// Same, over plain tensors (named t0, t1, ...).
GradCheckReport grad_check(const std::function<Tensor<double>()>& loss, std::vector<Tensor<double>> inputs,
                           const GradCheckOptions& opts);

}  // namespace lgrit::ad
