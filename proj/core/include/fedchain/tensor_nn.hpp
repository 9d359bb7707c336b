#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedchain/dataset.hpp"

namespace fedchain {

struct LayerShape {
    std::uint32_t rows = 0;  // fan-in
    std::uint32_t cols = 0;  // fan-out
    bool has_bias = true;

    bool operator==(const LayerShape&) const = default;
    std::size_t param_count() const {
        return static_cast<std::size_t>(rows) * cols + (has_bias ? cols : 0);
    }
};

/// Flat vector of network weights, layer-major: for each layer the row-major
/// weight matrix followed by its bias. This is the unit that gets trained,
/// exchanged, hashed, signed, and averaged.
struct ModelParams {
    std::vector<LayerShape> layer_shapes;
    std::vector<double> values;

    bool operator==(const ModelParams&) const = default;
    std::size_t param_count() const { return values.size(); }
    bool same_shape(const ModelParams& other) const { return layer_shapes == other.layer_shapes; }
    std::uint32_t input_dim() const { return layer_shapes.empty() ? 0 : layer_shapes.front().rows; }
    std::uint32_t output_dim() const { return layer_shapes.empty() ? 0 : layer_shapes.back().cols; }
};

struct TrainingConfig {
    double learning_rate = 0.01;
    std::uint32_t batch_size = 32;
    std::uint32_t local_epochs = 5;
    std::uint64_t seed = 0;
};

struct EvalReport {
    double accuracy = 0.0;
    double mean_loss = 0.0;
    std::size_t sample_count = 0;
};

enum class ArchitectureId {
    simple_nn_cifar,  // 3072 -> 20 relu -> 10 softmax, 61670 params
    mlp_synthetic,    // 8 -> 16 relu -> 4 softmax
};

/// Dense MLP with ReLU between layers, softmax head. Weights uniform in
/// [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero, deterministic per seed.
ModelParams init_mlp(const std::vector<std::uint32_t>& layer_sizes, std::uint64_t seed);
ModelParams init_model(ArchitectureId architecture, std::uint64_t seed);

/// Row-major class-probability matrix (batch.rows() x output_dim). Each row
/// is a softmax distribution.
std::vector<double> forward(const ModelParams& model, const ExampleBatch& batch);

/// Mean cross-entropy over the batch plus its gradient w.r.t. every
/// parameter (same flat layout as ModelParams::values).
struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
};
LossGrad batch_loss_grad(const ModelParams& model, const ExampleBatch& batch);

/// One full pass over the shard: seeded Fisher-Yates batch order (permutation
/// seed = mix(cfg.seed, epoch_index)), per batch w <- w - lr * grad. Throws
/// TrainingError on a non-finite gradient.
ModelParams sgd_epoch(const ModelParams& model, const DataShard& shard, const TrainingConfig& cfg,
                      std::uint32_t epoch_index = 0);

/// cfg.local_epochs chained sgd_epoch calls with epoch_index 0..E-1.
ModelParams local_training(std::uint32_t peer_id, const ModelParams& model, const DataShard& shard,
                           const TrainingConfig& cfg);

/// Accuracy (argmax vs label, first index wins ties) and mean cross-entropy.
EvalReport evaluate(const ModelParams& model, const DataShard& testset);

}  // namespace fedchain
