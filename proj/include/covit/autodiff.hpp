#pragma once

// Define-by-run reverse-mode differentiation.
//
// A Graph records every op executed through covit::ops in creation order,
// which is a valid topological order. backward() walks it once in reverse,
// accumulates gradients into the tensors bound with param(), and then
// clears the graph. A Graph must stay on one thread.

#include "covit/tensor.hpp"

#include <cstdint>
#include <functional>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace covit {

class Graph;

// Handle to a value recorded in a Graph. Cheap to copy; invalid once the
// graph has been consumed by backward() or cleared.
class Var {
public:
    Var() = default;

    Graph& graph() const;
    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return graph_ != nullptr; }

private:
    friend class Graph;
    Var(Graph* g, std::size_t id, std::uint64_t generation) : graph_(g), id_(id), generation_(generation) {}

    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
    std::uint64_t generation_ = 0;
};

// View handed to an op's backward closure.
class BackwardContext {
public:
    const Tensor& output() const;
    const std::vector<double>& output_grad() const;
    const Tensor& input(std::size_t i) const;
    bool needs_grad(std::size_t i) const;
    // Zero-initialized on first access.
    std::vector<double>& input_grad(std::size_t i);

private:
    friend class Graph;
    BackwardContext(Graph& g, std::size_t node) : graph_(g), node_(node) {}
    Graph& graph_;
    std::size_t node_;
};

using BackwardFn = std::function<void(BackwardContext&)>;

class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // Leaf that never receives a gradient.
    Var constant(Tensor value);

    // Leaf whose gradient is added into `bound.grad()` by backward().
    // Binding the same tensor twice returns the same node.
    Var param(Tensor& bound);

    // Used by op implementations. Throws NumericError if the value is not finite.
    Var record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

    void backward(const Var& loss);

    // Drops all nodes without touching bound gradients.
    void clear();

    std::size_t size() const noexcept { return nodes_.size(); }

    const Tensor& value(const Var& v) const;

private:
    friend class Var;
    friend class BackwardContext;

    struct Node {
        std::string_view op;
        Tensor value;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        Tensor* bound = nullptr;
        bool needs_grad = false;
        std::vector<double> grad;
    };

    void check(const Var& v) const;

    std::vector<Node> nodes_;
    std::unordered_map<const Tensor*, std::size_t> bound_index_;
    std::uint64_t generation_ = 1;
};

}  // namespace covit
