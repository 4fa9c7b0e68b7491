#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lgrit/ad/tensor.hpp"
#include "lgrit/core/rng.hpp"

namespace lgrit::ad {

/// A trainable tensor with its Adam state.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> tensor;
    std::vector<T> first_moment;
    std::vector<T> second_moment;
    std::uint64_t step = 0;
};

/// Named parameters in registration order. Models hold the Tensor handles
/// returned by add(); the store owns the optimizer state.
template <typename T>
class ParameterStore {
  public:
    /// Registers a parameter; names must be unique.
    Tensor<T> add(const std::string& name, Shape shape, std::vector<T> init);
    Tensor<T> add_zeros(const std::string& name, Shape shape);
    Tensor<T> add_full(const std::string& name, Shape shape, T value);
    /// Uniform in [-bound, bound].
    Tensor<T> add_uniform(const std::string& name, Shape shape, T bound, Rng& rng);

    std::vector<Parameter<T>>& params() { return params_; }
    const std::vector<Parameter<T>>& params() const { return params_; }
    Parameter<T>* find(const std::string& name);
    const Parameter<T>* find(const std::string& name) const;

    std::size_t total_size() const;
    void zero_grad();

  private:
    std::vector<Parameter<T>> params_;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Global gradient-norm clip; 0 disables.
    double clip_norm = 0.0;

    void validate() const;
};

/// Bias-corrected Adam. Parameters without a gradient buffer are treated
/// as having zero gradient.
template <typename T>
void adam_step(std::vector<Parameter<T>>& params, const AdamConfig& cfg);

/// Copies every parameter value of `src` into the same-named parameter of
/// `dst` (shapes must match). Used to move a trained float model into a
/// double replica for gradient checks and back.
template <typename Dst, typename Src>
void copy_values(ParameterStore<Dst>& dst, const ParameterStore<Src>& src);

}  // namespace lgrit::ad
