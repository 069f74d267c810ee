#include "sci/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "sci/rng.hpp"

namespace sci {

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

namespace detail {

void TensorNode::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0f);
}

void TensorNode::accumulate(std::span<const float> g) {
    ensure_grad();
    for (size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
}

} // namespace detail

namespace {

thread_local int g_no_grad_depth = 0;

std::shared_ptr<detail::TensorNode> new_node(Shape shape, std::vector<float> data, bool requires_grad) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        throw ShapeError("tensor: shape " + shape_str(shape) + " does not match data length " +
                         std::to_string(data.size()));
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return node;
}

} // namespace

bool grad_enabled() { return g_no_grad_depth == 0; }

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::vector<float> data(static_cast<size_t>(shape_numel(shape)), 0.0f);
    return Tensor(new_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
    std::vector<float> data(static_cast<size_t>(shape_numel(shape)), value);
    return Tensor(new_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data, bool requires_grad) {
    return Tensor(new_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(float value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::randn(Shape shape, Rng& rng, float stddev, bool requires_grad) {
    std::vector<float> data(static_cast<size_t>(shape_numel(shape)));
    for (float& v : data) v = stddev * rng.gaussian();
    return Tensor(new_node(std::move(shape), std::move(data), requires_grad));
}

const Shape& Tensor::shape() const {
    if (!node_) throw ContractError("tensor: undefined handle");
    return node_->shape;
}

int Tensor::dim(int axis) const {
    const Shape& s = shape();
    if (axis < 0) axis += static_cast<int>(s.size());
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    return s[static_cast<size_t>(axis)];
}

int64_t Tensor::numel() const { return shape_numel(shape()); }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool value) {
    if (!node_) throw ContractError("tensor: undefined handle");
    node_->requires_grad = value;
}

std::span<float> Tensor::data() {
    if (!node_) throw ContractError("tensor: undefined handle");
    return node_->data;
}

std::span<const float> Tensor::data() const {
    if (!node_) throw ContractError("tensor: undefined handle");
    return node_->data;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const float> Tensor::grad() const {
    if (!has_grad())
        throw ContractError("tensor: gradient not populated (run backward first)");
    return node_->grad;
}

std::span<float> Tensor::grad_mut() {
    if (!node_) throw ContractError("tensor: undefined handle");
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_) node_->grad.clear();
}

float Tensor::item() const {
    if (numel() != 1) throw ContractError("tensor: item() requires a scalar, got " + shape_str(shape()));
    return node_->data[0];
}

Tensor Tensor::make_node(Shape shape, std::vector<float> data,
                         std::vector<Tensor> parents,
                         std::function<void(detail::TensorNode&)> backward_fn) {
    bool track = grad_enabled();
    if (track) {
        track = false;
        for (const Tensor& p : parents)
            if (p.defined() && (p.requires_grad() || p.node()->backward_fn || !p.node()->parents.empty())) {
                track = true;
                break;
            }
    }
    auto node = new_node(std::move(shape), std::move(data), false);
    if (track) {
        node->parents.reserve(parents.size());
        for (Tensor& p : parents) node->parents.push_back(p.node());
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor(node);
}

void backward(const Tensor& loss) {
    if (!loss.defined()) throw ContractError("backward: undefined loss tensor");
    if (loss.numel() != 1)
        throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape()));

    using Node = detail::TensorNode;
    // Owning topological order: freeing tape edges mid-sweep must not
    // destroy nodes the sweep still has to visit.
    std::vector<std::shared_ptr<Node>> order;
    std::unordered_set<Node*> visited;
    // Iterative post-order DFS over tape edges.
    std::vector<std::pair<std::shared_ptr<Node>, size_t>> stack;
    stack.emplace_back(loss.node(), 0);
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            const std::shared_ptr<Node>& parent = node->parents[idx++];
            if (visited.insert(parent.get()).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->ensure_grad();
    loss.node()->grad[0] += 1.0f;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = it->get();
        if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
        if (node->backward_fn) {
            // Free the tape as we go; only leaf parameters keep their grads.
            node->backward_fn = nullptr;
            node->parents.clear();
            node->grad.clear();
            node->grad.shrink_to_fit();
        } else if (node->requires_grad) {
            node->ensure_grad(); // reachable leaf: grad fully populated, possibly zeros
        }
    }
}

uint64_t tensor_checksum(const Tensor& t) {
    return bytes_checksum(t.data());
}

uint64_t params_checksum(std::span<const Tensor> params) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const Tensor& p : params) h = bytes_checksum(p.data(), h);
    return h;
}

} // namespace sci
