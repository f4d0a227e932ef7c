#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "core/error.hpp"
#include "core/rng.hpp"

namespace synth::nn {

// Reverse-mode autodiff over dense row-major tensors. A Tensor is a
// cheap handle onto a graph node; ops (see ops.hpp) build the graph and
// backward() replays it in reverse topological order.
//
// Scalar type S is float for model state and double for the
// finite-difference oracle harness.

template <class S>
struct Node {
    std::vector<int> shape;
    std::vector<S> value;
    std::vector<S> grad;  // allocated iff requires_grad
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Pulls this->grad into the parents' grad buffers.
    std::function<void(Node&)> backward;

    size_t size() const { return value.size(); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), S(0));
    }
};

template <class S>
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, S fill, bool requires_grad = false);
    static Tensor from(std::vector<int> shape, std::vector<S> data, bool requires_grad = false);
    static Tensor scalar(S v, bool requires_grad = false);
    static Tensor rand_uniform(std::vector<int> shape, S lo, S hi, Rng& rng, bool requires_grad = false);
    static Tensor rand_normal(std::vector<int> shape, S mean, S stddev, Rng& rng, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    size_t size() const { return node_->value.size(); }

    // Rows/cols view of the trailing two (or one) dims; most ops treat
    // tensors as [rows x cols] with any leading dims collapsed into rows.
    int rows() const;
    int cols() const;

    std::span<S> value() { return {node_->value.data(), node_->value.size()}; }
    std::span<const S> value() const { return {node_->value.data(), node_->value.size()}; }
    std::span<const S> grad() const { return {node_->grad.data(), node_->grad.size()}; }
    bool has_grad() const { return !node_->grad.empty(); }
    S item() const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v);
    void zero_grad();

    std::shared_ptr<Node<S>> node() const { return node_; }
    static Tensor wrap(std::shared_ptr<Node<S>> n) {
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }

  private:
    std::shared_ptr<Node<S>> node_;
};

// Runs reverse-mode accumulation from a scalar loss. Every reachable
// node with requires_grad receives its gradient contribution.
template <class S>
void backward(const Tensor<S>& loss);

// Leaf copy of x: same values, no graph history, no grad tracking.
template <class S>
Tensor<S> detach(const Tensor<S>& x);

template <class S>
bool all_finite(const Tensor<S>& x);

// Trainable (or frozen) model state. trainable=false parameters must be
// bit-identical across optimizer steps.
template <class S>
struct Parameter {
    Tensor<S> t;
    bool trainable = true;
    std::string name;
};

template <class S>
using ParamList = std::vector<Parameter<S>*>;

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace synth::nn
