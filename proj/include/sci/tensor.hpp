#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sci/common.hpp"

namespace sci {

class Rng;
using Shape = std::vector<int>;

std::string shape_str(const Shape& shape);
int64_t shape_numel(const Shape& shape);

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad; // empty until first accumulation
    bool requires_grad = false;

    // Tape edge: parents kept alive via handles, backward reads this node's
    // grad and accumulates into the parents'. Cleared after backward().
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    void ensure_grad();
    void accumulate(std::span<const float> g);
};

} // namespace detail

/// Dense row-major f32 tensor with an optional gradient slot. Value-semantic
/// handle: copies share the underlying buffer (move freely across threads,
/// but no shared mutable graph — the training graph is single-threaded).
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, float value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<float> data, bool requires_grad = false);
    static Tensor scalar(float value, bool requires_grad = false);
    /// Seeded Gaussian init, N(0, stddev²).
    static Tensor randn(Shape shape, Rng& rng, float stddev = 1.0f, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int ndim() const { return static_cast<int>(shape().size()); }
    int dim(int axis) const;
    int64_t numel() const;
    bool requires_grad() const;
    void set_requires_grad(bool value);

    std::span<float> data();
    std::span<const float> data() const;

    bool has_grad() const;
    /// Gradient buffer; ContractError if backward has not populated it.
    std::span<const float> grad() const;
    std::span<float> grad_mut();
    void zero_grad();

    /// Scalar extraction; ContractError unless numel() == 1.
    float item() const;

    /// Same underlying buffer identity (not value equality).
    bool same_storage(const Tensor& other) const { return node_ == other.node_; }

    // Internal: tape construction (used by ops).
    static Tensor make_node(Shape shape, std::vector<float> data,
                            std::vector<Tensor> parents,
                            std::function<void(detail::TensorNode&)> backward_fn);
    const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::TensorNode> node_;
};

/// Reverse-mode sweep from a scalar loss. Populates grad on every
/// requires_grad leaf reachable from the loss and frees the traversed graph
/// (intermediate grads and tape edges). Grad accumulation across separate
/// forward/backward passes is additive until zero_grad().
void backward(const Tensor& loss);

/// True while gradient taping is enabled on this thread.
bool grad_enabled();

/// RAII scope that disables taping (inference paths, data preprocessing).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

uint64_t tensor_checksum(const Tensor& t);
uint64_t params_checksum(std::span<const Tensor> params);

} // namespace sci
