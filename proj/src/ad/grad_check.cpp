#include "lgrit/ad/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "lgrit/core/rng.hpp"

namespace lgrit::ad {
namespace {

struct Target {
    std::string name;
    Tensor<double> tensor;
};

GradCheckReport run(const std::function<Tensor<double>()>& loss, std::vector<Target>& targets, const GradCheckOptions& opts) {
    GradCheckReport report;
    report.tolerance = opts.tolerance;
    for (auto& t : targets) t.tensor.zero_grad();
    loss().backward();

    std::size_t total = 0;
    for (const auto& t : targets) total += t.tensor.numel();
    if (total == 0) return report;

    Rng rng(opts.seed);
    NoGradGuard no_grad;
    for (std::size_t s = 0; s < opts.samples; ++s) {
        std::size_t flat = rng.below(total);
        std::size_t k = 0;
        while (flat >= targets[k].tensor.numel()) flat -= targets[k++].tensor.numel();
        auto& t = targets[k].tensor;
        auto w = t.mutable_data();
        const double saved = w[flat];
        w[flat] = saved + opts.step;
        const double up = loss().item();
        w[flat] = saved - opts.step;
        const double down = loss().item();
        w[flat] = saved;

        GradCheckEntry e;
        e.param = targets[k].name;
        e.index = flat;
        e.analytic = t.has_grad() ? t.grad()[flat] : 0.0;
        e.numeric = (up - down) / (2.0 * opts.step);
        e.rel_error = std::abs(e.analytic - e.numeric) /
                      std::max({std::abs(e.analytic), std::abs(e.numeric), opts.abs_floor});
        report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
        if (!(e.rel_error < opts.tolerance)) ++report.failures;
        report.entries.push_back(std::move(e));
    }
    return report;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor<double>()>& loss, std::vector<Parameter<double>>& params,
                           const GradCheckOptions& opts) {
    std::vector<Target> targets;
    for (auto& p : params) targets.push_back({p.name, p.tensor});
    return run(loss, targets, opts);
}

GradCheckReport grad_check(const std::function<Tensor<double>()>& loss, std::vector<Tensor<double>> inputs,
                           const GradCheckOptions& opts) {
    std::vector<Target> targets;
    for (std::size_t i = 0; i < inputs.size(); ++i) targets.push_back({"t" + std::to_string(i), inputs[i]});
    return run(loss, targets, opts);
}

}  // namespace lgrit::ad
