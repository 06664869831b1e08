#pragma once

// Mini-batch training with cross-entropy and Adam (or SGD with momentum),
// seeded shuffling, and checkpoints that resume bit-identically.

#include "covit/optim.hpp"
#include "covit/vit.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace covit {

struct TrainConfig {
    std::size_t epochs = 80;
    std::size_t batch_size = 8;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    std::size_t checkpoint_interval = 0;  // steps; 0 = only at the end
    std::size_t max_steps = 0;            // 0 = run all epochs
    OptimizerKind optimizer = OptimizerKind::adam;
    double momentum = 0.9;

    void validate() const;
    std::vector<std::pair<std::string, std::string>> to_pairs() const;
    static TrainConfig from_pairs(const std::map<std::string, std::string>& kv);

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct Sample {
    Tensor tokens;
    int label = 0;  // 1 = COVID, 0 = nonCOVID
    std::string subject_id;
    std::size_t slice_index = 0;
};

struct Checkpoint {
    ModelConfig model;
    TrainConfig train;
    ModelParams params;
    std::uint64_t step = 0;
    std::vector<std::vector<double>> optimizer_buffers;
    std::size_t epoch = 0;
    std::size_t cursor = 0;          // position in `order`
    std::vector<std::size_t> order;  // current epoch permutation
    std::string rng_state;
    std::vector<double> loss_history;  // one entry per step

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void save_checkpoint(const std::filesystem::path& stem, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& stem);

struct TrainHooks {
    std::ostream* progress = nullptr;
    // Called every checkpoint_interval steps with the current state.
    std::function<void(const Checkpoint&)> on_checkpoint;
};

// Throws DataError for an empty set, NumericError if a loss is not finite.
Checkpoint train(std::span<const Sample> samples, const ModelConfig& model, const TrainConfig& config,
                 const std::optional<Checkpoint>& resume = std::nullopt, const TrainHooks& hooks = {});

struct SliceEvaluation {
    std::vector<double> scores;  // COVID probability per sample
    double accuracy = 0.0;       // under slice_is_covid
};

// Independent per-sample inference, split across `threads` workers.
SliceEvaluation evaluate_slices(const ModelParams& params, const ModelConfig& model, std::span<const Sample> samples,
                                unsigned threads = 1);

void write_loss_history(const std::filesystem::path& path, std::span<const double> losses);

}  // namespace covit
