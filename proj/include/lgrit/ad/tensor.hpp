#pragma once

// Reverse-mode differentiation over dense row-major tensors.
//
// Every op allocates a result node that remembers its inputs and a closure
// computing input gradients from the output gradient. Nodes carry a global
// creation sequence number; creation order is a topological order, so the
// tape for a backward pass is simply the reachable nodes sorted by
// descending sequence number.
//
// Tensor<double> is used for gradient checks, Tensor<float> for training.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lgrit::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    std::uint64_t seq = 0;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    /// Gradient buffer, zero-initialized on first access.
    T* grad_buffer() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
        return grad.data();
    }
};

template <typename T>
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T value);
    static Tensor scalar(T value);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->value.size(); }

    std::span<const T> data() const { return node_->value; }
    /// Direct write access for parameter initialization and optimizer
    /// updates. Never call on a tensor that is part of a live graph.
    std::span<T> mutable_data() { return node_->value; }
    std::span<const T> grad() const { return node_->grad; }
    bool has_grad() const { return node_->grad.size() == node_->value.size(); }
    T item() const;

    bool requires_grad() const { return node_->requires_grad; }
    const char* op_name() const { return node_->op; }
    void zero_grad();

    /// Seeds d(this)/d(this) = 1 and accumulates gradients into every
    /// reachable tensor that requires them, then releases the graph.
    /// Throws ValidationError if this tensor is not a scalar.
    void backward() const;

    const std::shared_ptr<Node<T>>& node() const { return node_; }

  private:
    std::shared_ptr<Node<T>> node_;
};

/// Thread-local switch: while disabled, ops record no graph.
bool grad_enabled();

class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};

/// When enabled, every op verifies its output is finite and throws
/// NumericalError naming the op otherwise.
void set_check_finite(bool enabled);
bool check_finite_enabled();

}  // namespace lgrit::ad
