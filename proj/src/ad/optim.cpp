#include "lgrit/ad/optim.hpp"

#include <cmath>

#include "lgrit/core/error.hpp"

namespace lgrit::ad {

template <typename T>
Tensor<T> ParameterStore<T>::add(const std::string& name, Shape shape, std::vector<T> init) {
    if (find(name)) throw ValidationError("parameter '" + name + "' registered twice");
    Parameter<T> p;
    p.name = name;
    p.tensor = Tensor<T>::from(std::move(shape), std::move(init), true);
    p.first_moment.assign(p.tensor.numel(), T(0));
    p.second_moment.assign(p.tensor.numel(), T(0));
    params_.push_back(std::move(p));
    return params_.back().tensor;
}

template <typename T>
Tensor<T> ParameterStore<T>::add_zeros(const std::string& name, Shape shape) {
    return add_full(name, std::move(shape), T(0));
}

template <typename T>
Tensor<T> ParameterStore<T>::add_full(const std::string& name, Shape shape, T value) {
    const auto n = shape_numel(shape);
    return add(name, std::move(shape), std::vector<T>(n, value));
}

template <typename T>
Tensor<T> ParameterStore<T>::add_uniform(const std::string& name, Shape shape, T bound, Rng& rng) {
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(rng.uniform(-static_cast<double>(bound), static_cast<double>(bound)));
    return add(name, std::move(shape), std::move(v));
}

template <typename T>
Parameter<T>* ParameterStore<T>::find(const std::string& name) {
    for (auto& p : params_) {
        if (p.name == name) return &p;
    }
    return nullptr;
}

template <typename T>
const Parameter<T>* ParameterStore<T>::find(const std::string& name) const {
    for (const auto& p : params_) {
        if (p.name == name) return &p;
    }
    return nullptr;
}

template <typename T>
std::size_t ParameterStore<T>::total_size() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

void AdamConfig::validate() const {
    if (!(lr > 0.0)) throw ValidationError("adam: learning rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ValidationError("adam: betas must be in [0, 1)");
    }
    if (!(eps > 0.0)) throw ValidationError("adam: eps must be > 0");
    if (clip_norm < 0.0) throw ValidationError("adam: clip_norm must be >= 0");
}

template <typename T>
void adam_step(std::vector<Parameter<T>>& params, const AdamConfig& cfg) {
    cfg.validate();
    double clip = 1.0;
    if (cfg.clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& p : params) {
            for (T g : p.tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
        }
        const double norm = std::sqrt(sq);
        if (norm > cfg.clip_norm) clip = cfg.clip_norm / norm;
    }
    for (auto& p : params) {
        ++p.step;
        const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p.step));
        const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p.step));
        auto w = p.tensor.mutable_data();
        const auto g = p.tensor.grad();
        const bool has = p.tensor.has_grad();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = has ? static_cast<double>(g[i]) * clip : 0.0;
            const double m = cfg.beta1 * static_cast<double>(p.first_moment[i]) + (1.0 - cfg.beta1) * gi;
            const double v = cfg.beta2 * static_cast<double>(p.second_moment[i]) + (1.0 - cfg.beta2) * gi * gi;
            p.first_moment[i] = static_cast<T>(m);
            p.second_moment[i] = static_cast<T>(v);
            const double update = cfg.lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps);
            w[i] = static_cast<T>(static_cast<double>(w[i]) - update);
        }
    }
}

template <typename Dst, typename Src>
void copy_values(ParameterStore<Dst>& dst, const ParameterStore<Src>& src) {
    for (auto& p : dst.params()) {
        const auto* s = src.find(p.name);
        if (!s) throw ValidationError("copy_values: source has no parameter '" + p.name + "'");
        if (s->tensor.shape() != p.tensor.shape()) {
            throw ValidationError("copy_values: shape mismatch for '" + p.name + "': " + shape_str(p.tensor.shape()) +
                                  " vs " + shape_str(s->tensor.shape()));
        }
        auto out = p.tensor.mutable_data();
        const auto in = s->tensor.data();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<Dst>(in[i]);
    }
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template void adam_step<float>(std::vector<Parameter<float>>&, const AdamConfig&);
template void adam_step<double>(std::vector<Parameter<double>>&, const AdamConfig&);
template void copy_values<float, float>(ParameterStore<float>&, const ParameterStore<float>&);
template void copy_values<float, double>(ParameterStore<float>&, const ParameterStore<double>&);
template void copy_values<double, float>(ParameterStore<double>&, const ParameterStore<float>&);
template void copy_values<double, double>(ParameterStore<double>&, const ParameterStore<double>&);

}  // namespace lgrit::ad
