#pragma once

#include <cmath>
#include <initializer_list>

#include "lgrit/ad/tensor.hpp"
#include "lgrit/core/error.hpp"

namespace lgrit::ad::detail {

std::uint64_t next_sequence();

/// Wraps a freshly computed value into a result tensor. The graph edge and
/// backward closure are only recorded when grad mode is on and at least one
/// input needs a gradient.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> value, std::initializer_list<const Tensor<T>*> inputs,
                      std::function<void(Node<T>&)> backward) {
    auto node = std::make_shared<Node<T>>();
    node->op = op;
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->seq = next_sequence();
    if (check_finite_enabled()) {
        for (std::size_t i = 0; i < node->value.size(); ++i) {
            if (!std::isfinite(node->value[i])) {
                throw NumericalError(std::string("non-finite value produced by op '") + op + "' (output shape " +
                                     shape_str(node->shape) + ", flat index " + std::to_string(i) + ")");
            }
        }
    }
    if (grad_enabled()) {
        bool any = false;
        for (const auto* in : inputs) any = any || in->requires_grad();
        if (any) {
            node->requires_grad = true;
            for (const auto* in : inputs) node->inputs.push_back(in->node());
            node->backward = std::move(backward);
        }
    }
    return Tensor<T>(std::move(node));
}

/// Same as make_result for ops with a variable number of inputs.
template <typename T>
Tensor<T> make_result_n(const char* op, Shape shape, std::vector<T> value, const std::vector<Tensor<T>>& inputs,
                        std::function<void(Node<T>&)> backward) {
    auto node = std::make_shared<Node<T>>();
    node->op = op;
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->seq = next_sequence();
    if (check_finite_enabled()) {
        for (std::size_t i = 0; i < node->value.size(); ++i) {
            if (!std::isfinite(node->value[i])) {
                throw NumericalError(std::string("non-finite value produced by op '") + op + "' (output shape " +
                                     shape_str(node->shape) + ")");
            }
        }
    }
    if (grad_enabled()) {
        bool any = false;
        for (const auto& in : inputs) any = any || in.requires_grad();
        if (any) {
            node->requires_grad = true;
            for (const auto& in : inputs) node->inputs.push_back(in.node());
            node->backward = std::move(backward);
        }
    }
    return Tensor<T>(std::move(node));
}

}  // namespace lgrit::ad::detail
