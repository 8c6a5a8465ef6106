#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "reidkit/errors.hpp"

namespace reidkit {

namespace detail {

struct TensorNode {
    std::vector<std::size_t> shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until first use
    bool requires_grad = false;

    std::size_t numel() const { return value.size(); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

}  // namespace detail

std::string format_shape(const std::vector<std::size_t>& shape);

// Dense row-major tensor of 64-bit floats with optional gradient tracking.
// Copies are shallow: they share the underlying storage and gradient.
class Tensor {
  public:
    Tensor() : node_(std::make_shared<detail::TensorNode>()) {}

    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<std::size_t> shape, double fill, bool requires_grad = false);
    static Tensor from(std::vector<std::size_t> shape, std::vector<double> values,
                       bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    const std::vector<std::size_t>& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t numel() const { return node_->numel(); }

    std::vector<double>& values() { return node_->value; }
    const std::vector<double>& values() const { return node_->value; }

    // Value of a one-element tensor.
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool b) {
        node_->requires_grad = b;
        return *this;
    }

    bool has_grad() const { return !node_->grad.empty(); }
    std::vector<double>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    const std::vector<double>& grad() const;
    void zero_grad() { node_->ensure_grad(); std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

    const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

  private:
    std::shared_ptr<detail::TensorNode> node_;
};

// Ordered record of executed primitive operations. Ops append their
// backward rule as they execute, so replaying the record in reverse is a
// reverse topological traversal by construction. A graph must be made
// current (see Scope) for ops to record into it; forward math without a
// current graph runs grad-free.
class Graph {
  public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // Seeds d(loss)/d(loss) = 1 and replays all recorded backward rules in
    // reverse order, accumulating into .grad() of every tracked tensor.
    // The record is kept, so a second backward after zero_grads() yields
    // identical gradients.
    void backward(const Tensor& loss);

    // Zeroes the gradients of every tensor touched by recorded ops.
    void zero_grads();

    std::size_t size() const { return steps_.size(); }

    static Graph* current();

    class Scope {
      public:
        explicit Scope(Graph& g);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

      private:
        Graph* previous_;
    };

    // Registers one executed op: the tensors it touched plus its backward
    // rule. Called by op implementations, not user code.
    void record(std::vector<std::shared_ptr<detail::TensorNode>> touched,
                std::function<void()> backward_rule);

  private:
    struct Step {
        std::vector<std::shared_ptr<detail::TensorNode>> touched;
        std::function<void()> backward_rule;
    };
    std::vector<Step> steps_;
};

// ---- Primitive operations ----------------------------------------------
// Forward values are bit-deterministic: every reduction runs in a fixed
// order. Each op validates shapes and reports both offending shapes.

Tensor matmul(const Tensor& a, const Tensor& b);
// stride in {1, 2}; zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int padding);
Tensor relu(const Tensor& x);  // subgradient at 0 is 0
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor sum(const Tensor& x);                   // -> scalar
// (N,D)+(D) or (N,C,H,W)+(C); the only broadcasts supported besides scale().
Tensor bias_add(const Tensor& x, const Tensor& b);
Tensor global_avg_pool(const Tensor& x);             // (N,C,H,W) -> (N,C)
Tensor max_pool2d(const Tensor& x, int k, int stride);
Tensor reshape(const Tensor& x, std::vector<std::size_t> shape);
Tensor concat(const std::vector<Tensor>& xs, std::size_t axis);

// ---- Batch normalization -------------------------------------------------

enum class BNMode { Train, Eval };

// One feature-wise BN layer over (N, D) inputs. gamma/beta are trainable;
// running statistics follow running <- (1-m)*running + m*batch with the
// biased (population) variance estimator, matching the normalization path.
struct BNState {
    Tensor gamma;  // (D), init 1
    Tensor beta;   // (D), init 0
    std::vector<double> running_mean;  // init 0
    std::vector<double> running_var;   // init 1
    double eps = 1e-5;
    double momentum = 0.1;

    explicit BNState(std::size_t dim);
    std::size_t dim() const { return running_mean.size(); }
};

// Train mode normalizes with batch statistics (batch size >= 2 required)
// and updates the running statistics; eval mode uses the running
// statistics and leaves them untouched.
Tensor batch_norm(const Tensor& x, BNState& state, BNMode mode);

}  // namespace reidkit
