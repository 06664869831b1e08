#pragma once

#include "covit/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace covit {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First and second moment estimates, one entry per parameter tensor.
struct AdamState {
    std::uint64_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

// One bias-corrected Adam update of `params` from `grads`. State is lazily
// sized on the first call; later calls must pass the same layout.
void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
               AdamState& state, const AdamConfig& config);

struct SgdConfig {
    double lr = 1e-2;
    double momentum = 0.9;
};

struct SgdState {
    std::uint64_t step = 0;
    std::vector<std::vector<double>> velocity;
};

void sgd_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
              SgdState& state, const SgdConfig& config);

enum class OptimizerKind { adam, sgd };

// Optimizer over a fixed list of tensors, reading each tensor's grad().
class Optimizer {
public:
    Optimizer(OptimizerKind kind, double lr, double momentum = 0.9);

    void step(std::span<Tensor* const> params);

    OptimizerKind kind() const noexcept { return kind_; }
    std::uint64_t steps() const noexcept { return kind_ == OptimizerKind::adam ? adam_.step : sgd_.step; }

    // Flattened moment buffers for checkpointing. Adam: m then v; SGD: velocity.
    std::vector<std::vector<double>> export_state() const;
    void import_state(std::uint64_t step, std::vector<std::vector<double>> buffers);

    AdamConfig& adam_config() noexcept { return adam_cfg_; }
    SgdConfig& sgd_config() noexcept { return sgd_cfg_; }

private:
    OptimizerKind kind_;
    AdamConfig adam_cfg_;
    SgdConfig sgd_cfg_;
    AdamState adam_;
    SgdState sgd_;
};

}  // namespace covit
