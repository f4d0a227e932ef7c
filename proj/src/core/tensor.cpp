#include "core/tensor.hpp"

#include <cmath>
#include <unordered_set>

namespace synth::nn {

namespace {

template <class S>
std::shared_ptr<Node<S>> make_node(std::vector<int> shape, bool requires_grad) {
    size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimensionError("tensor dims must be positive");
        n *= static_cast<size_t>(d);
    }
    auto node = std::make_shared<Node<S>>();
    node->shape = std::move(shape);
    node->value.assign(n, S(0));
    node->requires_grad = requires_grad;
    if (requires_grad) node->grad.assign(n, S(0));
    return node;
}

}  // namespace

template <class S>
Tensor<S> Tensor<S>::zeros(std::vector<int> shape, bool requires_grad) {
    return wrap(make_node<S>(std::move(shape), requires_grad));
}

template <class S>
Tensor<S> Tensor<S>::full(std::vector<int> shape, S fill, bool requires_grad) {
    auto n = make_node<S>(std::move(shape), requires_grad);
    std::fill(n->value.begin(), n->value.end(), fill);
    return wrap(std::move(n));
}

template <class S>
Tensor<S> Tensor<S>::from(std::vector<int> shape, std::vector<S> data, bool requires_grad) {
    auto n = make_node<S>(std::move(shape), requires_grad);
    if (data.size() != n->value.size()) throw DimensionError("data length does not match shape");
    n->value = std::move(data);
    return wrap(std::move(n));
}

template <class S>
Tensor<S> Tensor<S>::scalar(S v, bool requires_grad) {
    return from({1}, {v}, requires_grad);
}

template <class S>
Tensor<S> Tensor<S>::rand_uniform(std::vector<int> shape, S lo, S hi, Rng& rng, bool requires_grad) {
    auto n = make_node<S>(std::move(shape), requires_grad);
    for (auto& v : n->value) v = static_cast<S>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
    return wrap(std::move(n));
}

template <class S>
Tensor<S> Tensor<S>::rand_normal(std::vector<int> shape, S mean, S stddev, Rng& rng, bool requires_grad) {
    auto n = make_node<S>(std::move(shape), requires_grad);
    for (auto& v : n->value)
        v = static_cast<S>(static_cast<double>(mean) + static_cast<double>(stddev) * rng.normal());
    return wrap(std::move(n));
}

template <class S>
int Tensor<S>::rows() const {
    const auto& sh = node_->shape;
    if (sh.empty()) return 1;
    int r = 1;
    for (size_t i = 0; i + 1 < sh.size(); ++i) r *= sh[i];
    return sh.size() == 1 ? 1 : r;
}

template <class S>
int Tensor<S>::cols() const {
    const auto& sh = node_->shape;
    return sh.empty() ? 1 : sh.back();
}

template <class S>
S Tensor<S>::item() const {
    if (size() != 1) throw ContractError("item() requires a scalar tensor");
    return node_->value[0];
}

template <class S>
void Tensor<S>::set_requires_grad(bool v) {
    node_->requires_grad = v;
    if (v)
        node_->ensure_grad();
    else
        node_->grad.clear();
}

template <class S>
void Tensor<S>::zero_grad() {
    if (node_->requires_grad) node_->grad.assign(node_->value.size(), S(0));
}

template <class S>
void backward(const Tensor<S>& loss) {
    if (loss.size() != 1) throw ContractError("backward() requires a scalar loss");
    auto root = loss.node();
    if (!root->requires_grad) return;

    // Iterative post-order DFS; order then reversed for accumulation.
    std::vector<Node<S>*> topo;
    std::unordered_set<Node<S>*> seen;
    struct Frame {
        Node<S>* n;
        size_t next_child;
    };
    std::vector<Frame> stack;
    stack.push_back({root.get(), 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_child < f.n->parents.size()) {
            Node<S>* p = f.n->parents[f.next_child++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            topo.push_back(f.n);
            stack.pop_back();
        }
    }

    for (Node<S>* n : topo) n->ensure_grad();
    root->grad[0] = S(1);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node<S>* n = *it;
        if (n->backward) n->backward(*n);
    }
}

template <class S>
Tensor<S> detach(const Tensor<S>& x) {
    auto n = std::make_shared<Node<S>>();
    n->shape = x.shape();
    n->value.assign(x.value().begin(), x.value().end());
    n->requires_grad = false;
    return Tensor<S>::wrap(std::move(n));
}

template <class S>
bool all_finite(const Tensor<S>& x) {
    for (S v : x.value())
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

template class Tensor<float>;
template class Tensor<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);
template Tensor<float> detach<float>(const Tensor<float>&);
template Tensor<double> detach<double>(const Tensor<double>&);
template bool all_finite<float>(const Tensor<float>&);
template bool all_finite<double>(const Tensor<double>&);

}  // namespace synth::nn
