#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mtpd {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One vertex of the gradient tape. Tensors are handles onto shared nodes, so
// an op result keeps its inputs alive for as long as it may be differentiated.
struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first touched by backward()
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

}  // namespace detail

/// Dense row-major fp64 array that can take part in reverse-mode differentiation.
///
/// Copies are shallow: two Tensor objects created by copy refer to the same
/// storage and the same tape node. Use clone() for an independent, detached copy.
class Tensor {
public:
    Tensor();
    explicit Tensor(Shape shape, bool requires_grad = false);
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    const Shape& shape() const { return node_->shape; }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->data.size(); }
    bool empty() const { return node_->data.empty(); }

    std::span<double> data() { return node_->data; }
    std::span<const double> data() const { return node_->data; }
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool value);

    bool has_grad() const { return node_->grad.size() == node_->data.size() && numel() > 0; }
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad();
    void zero_grad();

    /// Reverse pass from a scalar. Leaf gradients accumulate across calls;
    /// interior gradients reflect only the most recent call.
    void backward() const;

    /// Deep copy without tape history.
    Tensor clone() const;
    /// Shares storage, drops tape history and requires_grad.
    Tensor detach() const;

    /// Rounds every element to the nearest binary32 value.
    void round_to_float();

    bool is_leaf() const { return !node_->backward_fn; }
    const std::shared_ptr<detail::Node>& node() const { return node_; }

    // Used by op implementations.
    static Tensor make_result(Shape shape, std::vector<double> data,
                              std::vector<Tensor> inputs,
                              std::function<void(detail::Node&)> backward_fn);

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;
};

/// True unless a NoGradGuard is alive on this thread.
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

}  // namespace mtpd
