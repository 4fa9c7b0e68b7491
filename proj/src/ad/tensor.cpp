#include "lgrit/ad/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

#include "lgrit/core/error.hpp"
#include "node_factory.hpp"

namespace lgrit::ad {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace {
thread_local bool t_grad_enabled = true;
std::atomic<bool> g_check_finite{false};
std::atomic<std::uint64_t> g_sequence{0};
}  // namespace

namespace detail {
std::uint64_t next_sequence() { return g_sequence.fetch_add(1, std::memory_order_relaxed) + 1; }
}  // namespace detail

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

void set_check_finite(bool enabled) { g_check_finite.store(enabled); }
bool check_finite_enabled() { return g_check_finite.load(); }

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
    for (auto d : shape) {
        if (d == 0) throw ValidationError("tensor: zero-sized dimension in shape " + shape_str(shape));
    }
    if (shape_numel(shape) != values.size()) {
        throw ValidationError("tensor: shape " + shape_str(shape) + " needs " + std::to_string(shape_numel(shape)) +
                              " values, got " + std::to_string(values.size()));
    }
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    node->seq = detail::next_sequence();
    return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    const auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
    const auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<T>(n, value));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
    return from({1}, {value});
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) throw ValidationError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
}

template <typename T>
void Tensor<T>::zero_grad() {
    node_->grad.assign(node_->value.size(), T(0));
}

template <typename T>
void Tensor<T>::backward() const {
    if (numel() != 1) throw ValidationError("backward: loss must be a scalar, got shape " + shape_str(shape()));
    if (!node_->requires_grad) return;

    // Build the tape: every reachable node that takes part in differentiation.
    std::vector<std::shared_ptr<Node<T>>> tape;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::shared_ptr<Node<T>>> stack{node_};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto n = std::move(stack.back());
        stack.pop_back();
        for (const auto& in : n->inputs) {
            if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in);
        }
        tape.push_back(std::move(n));
    }
    std::sort(tape.begin(), tape.end(), [](const auto& a, const auto& b) { return a->seq > b->seq; });

    node_->grad_buffer()[0] += T(1);
    for (const auto& n : tape) {
        if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
    }
    for (const auto& n : tape) {
        n->backward = nullptr;
        n->inputs.clear();
    }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace lgrit::ad
