#include "covit/optim.hpp"

#include "covit/error.hpp"

#include <cmath>
#include <string>

namespace covit {
namespace {

void check_layout(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
                  std::vector<std::vector<double>>& slot) {
    if (params.size() != grads.size()) throw ShapeError("optimizer: parameter and gradient counts differ");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (params[i].size() != grads[i].size())
            throw ShapeError("optimizer: parameter " + std::to_string(i) + " has " + std::to_string(params[i].size()) +
                             " values but gradient has " + std::to_string(grads[i].size()));
    if (slot.empty()) {
        slot.reserve(params.size());
        for (const auto& p : params) slot.emplace_back(p.size(), 0.0);
    } else if (slot.size() != params.size()) {
        throw ShapeError("optimizer: state does not match parameter list");
    }
    for (std::size_t i = 0; i < params.size(); ++i)
        if (slot[i].size() != params[i].size()) throw ShapeError("optimizer: state does not match parameter list");
}

}  // namespace

void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
               AdamState& state, const AdamConfig& config) {
    check_layout(params, grads, state.m);
    check_layout(params, grads, state.v);
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < params[i].size(); ++j) {
            const double g = grads[i][j];
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g;
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g * g;
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            params[i][j] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
        }
    }
}

void sgd_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
              SgdState& state, const SgdConfig& config) {
    check_layout(params, grads, state.velocity);
    ++state.step;
    for (std::size_t i = 0; i < params.size(); ++i)
        for (std::size_t j = 0; j < params[i].size(); ++j) {
            double& vel = state.velocity[i][j];
            vel = config.momentum * vel + grads[i][j];
            params[i][j] -= config.lr * vel;
        }
}

Optimizer::Optimizer(OptimizerKind kind, double lr, double momentum) : kind_(kind) {
    adam_cfg_.lr = lr;
    sgd_cfg_.lr = lr;
    sgd_cfg_.momentum = momentum;
}

void Optimizer::step(std::span<Tensor* const> params) {
    std::vector<std::span<double>> p;
    std::vector<std::span<const double>> g;
    p.reserve(params.size());
    g.reserve(params.size());
    for (Tensor* t : params) {
        p.emplace_back(t->data());
        g.emplace_back(t->grad());
    }
    if (kind_ == OptimizerKind::adam)
        adam_step(p, g, adam_, adam_cfg_);
    else
        sgd_step(p, g, sgd_, sgd_cfg_);
}

std::vector<std::vector<double>> Optimizer::export_state() const {
    if (kind_ == OptimizerKind::sgd) return sgd_.velocity;
    std::vector<std::vector<double>> out = adam_.m;
    out.insert(out.end(), adam_.v.begin(), adam_.v.end());
    return out;
}

void Optimizer::import_state(std::uint64_t step, std::vector<std::vector<double>> buffers) {
    if (kind_ == OptimizerKind::sgd) {
        sgd_.step = step;
        sgd_.velocity = std::move(buffers);
        return;
    }
    if (buffers.size() % 2 != 0) throw FormatError("Adam state must hold matching m and v buffers");
    const std::size_t half = buffers.size() / 2;
    adam_.step = step;
    adam_.m.assign(std::make_move_iterator(buffers.begin()), std::make_move_iterator(buffers.begin() + half));
    adam_.v.assign(std::make_move_iterator(buffers.begin() + half), std::make_move_iterator(buffers.end()));
}

}  // namespace covit
