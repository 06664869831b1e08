#include "covit/autodiff.hpp"

#include "covit/error.hpp"

#include <string>

namespace covit {

Graph& Var::graph() const {
    if (graph_ == nullptr) throw Error("use of an empty Var");
    return *graph_;
}

const Tensor& Var::value() const { return graph().value(*this); }

const Tensor& BackwardContext::output() const { return graph_.nodes_[node_].value; }

const std::vector<double>& BackwardContext::output_grad() const { return graph_.nodes_[node_].grad; }

const Tensor& BackwardContext::input(std::size_t i) const {
    return graph_.nodes_[graph_.nodes_[node_].inputs.at(i)].value;
}

bool BackwardContext::needs_grad(std::size_t i) const {
    return graph_.nodes_[graph_.nodes_[node_].inputs.at(i)].needs_grad;
}

std::vector<double>& BackwardContext::input_grad(std::size_t i) {
    auto& in = graph_.nodes_[graph_.nodes_[node_].inputs.at(i)];
    if (in.grad.empty()) in.grad.assign(in.value.numel(), 0.0);
    return in.grad;
}

void Graph::check(const Var& v) const {
    if (v.graph_ != this) throw Error("Var belongs to a different graph");
    if (v.generation_ != generation_ || v.id_ >= nodes_.size())
        throw Error("Var refers to a graph that was already consumed by backward()");
}

const Tensor& Graph::value(const Var& v) const {
    check(v);
    return nodes_[v.id_].value;
}

Var Graph::constant(Tensor value) {
    nodes_.push_back(Node{"constant", std::move(value), {}, {}, nullptr, false, {}});
    return Var(this, nodes_.size() - 1, generation_);
}

Var Graph::param(Tensor& bound) {
    if (auto it = bound_index_.find(&bound); it != bound_index_.end())
        return Var(this, it->second, generation_);
    Tensor copy(bound.shape(), bound.storage());
    nodes_.push_back(Node{"param", std::move(copy), {}, {}, &bound, true, {}});
    bound_index_.emplace(&bound, nodes_.size() - 1);
    return Var(this, nodes_.size() - 1, generation_);
}

Var Graph::record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
    if (!value.all_finite())
        throw NumericError("op '" + std::string(op) + "' produced a non-finite value");
    Node node{op, std::move(value), {}, {}, nullptr, false, {}};
    node.inputs.reserve(inputs.size());
    for (const Var& in : inputs) {
        check(in);
        node.inputs.push_back(in.id_);
        node.needs_grad = node.needs_grad || nodes_[in.id_].needs_grad;
    }
    if (node.needs_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1, generation_);
}

void Graph::backward(const Var& loss) {
    check(loss);
    Node& root = nodes_[loss.id_];
    if (root.value.numel() != 1)
        throw ShapeError("backward() needs a scalar loss, got shape " + shape_string(root.value.shape()));
    root.grad.assign(1, 1.0);
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.grad.empty() || !n.needs_grad) continue;
        if (n.backward) {
            BackwardContext ctx(*this, i);
            n.backward(ctx);
        }
        if (n.bound != nullptr) {
            auto& g = n.bound->grad();
            for (std::size_t j = 0; j < g.size(); ++j) g[j] += n.grad[j];
        }
    }
    clear();
}

void Graph::clear() {
    nodes_.clear();
    bound_index_.clear();
    ++generation_;
}

}  // namespace covit
