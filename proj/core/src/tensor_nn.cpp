#include "fedchain/tensor_nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "fedchain/rng.hpp"

namespace fedchain {

namespace {

std::size_t total_params(const std::vector<LayerShape>& shapes) {
    std::size_t n = 0;
    for (const auto& s : shapes) n += s.param_count();
    return n;
}

void check_batch(const ModelParams& model, const ExampleBatch& batch) {
    if (model.layer_shapes.empty()) throw ShapeError("forward: model has no layers");
    if (batch.feature_dim != model.input_dim()) {
        throw ShapeError("forward: batch feature width " + std::to_string(batch.feature_dim) +
                         " does not match model input " + std::to_string(model.input_dim()));
    }
}

// out[b, j] = sum_i in[b, i] * w[i, j] + bias[j]; w row-major rows x cols.
void dense_forward(const double* in, std::size_t batch, std::size_t rows, std::size_t cols,
                   const double* w, const double* bias, double* out) {
    for (std::size_t b = 0; b < batch; ++b) {
        double* o = out + b * cols;
        if (bias) {
            std::memcpy(o, bias, cols * sizeof(double));
        } else {
            std::fill(o, o + cols, 0.0);
        }
        const double* x = in + b * rows;
        for (std::size_t i = 0; i < rows; ++i) {
            const double xi = x[i];
            if (xi == 0.0) continue;
            const double* wr = w + i * cols;
            for (std::size_t j = 0; j < cols; ++j) o[j] += xi * wr[j];
        }
    }
}

void softmax_rows(double* m, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = m + r * cols;
        double mx = row[0];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (std::size_t j = 0; j < cols; ++j) row[j] /= sum;
    }
}

struct ForwardTrace {
    // activations[l] holds the input to layer l (post-ReLU for l > 0);
    // activations[L] holds the softmax output.
    std::vector<std::vector<double>> activations;
};

std::vector<double> forward_impl(const ModelParams& model, const ExampleBatch& batch,
                                 ForwardTrace* trace) {
    check_batch(model, batch);
    const std::size_t rows = batch.rows();
    std::vector<double> cur(rows * batch.feature_dim);
    for (std::size_t i = 0; i < cur.size(); ++i) cur[i] = static_cast<double>(batch.features[i]);

    const double* params = model.values.data();
    std::size_t offset = 0;
    const std::size_t layer_count = model.layer_shapes.size();
    if (trace) trace->activations.push_back(cur);

    for (std::size_t l = 0; l < layer_count; ++l) {
        const LayerShape& s = model.layer_shapes[l];
        const double* w = params + offset;
        const double* bias = s.has_bias ? w + static_cast<std::size_t>(s.rows) * s.cols : nullptr;
        offset += s.param_count();

        std::vector<double> next(rows * s.cols);
        dense_forward(cur.data(), rows, s.rows, s.cols, w, bias, next.data());
        if (l + 1 < layer_count) {
            for (double& v : next) v = v > 0.0 ? v : 0.0;  // ReLU
        } else {
            softmax_rows(next.data(), rows, s.cols);
        }
        cur = std::move(next);
        if (trace) trace->activations.push_back(cur);
    }
    return cur;
}

}  // namespace

ModelParams init_mlp(const std::vector<std::uint32_t>& layer_sizes, std::uint64_t seed) {
    if (layer_sizes.size() < 2) throw ShapeError("init_mlp: need at least input and output sizes");
    ModelParams m;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        m.layer_shapes.push_back({layer_sizes[l], layer_sizes[l + 1], true});
    }
    m.values.resize(total_params(m.layer_shapes));

    Rng rng(seed);
    std::size_t offset = 0;
    for (const auto& s : m.layer_shapes) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(s.rows));
        const std::size_t weights = static_cast<std::size_t>(s.rows) * s.cols;
        for (std::size_t i = 0; i < weights; ++i) {
            m.values[offset + i] = rng.uniform(-bound, bound);
        }
        // biases stay zero
        offset += s.param_count();
    }
    return m;
}

ModelParams init_model(ArchitectureId architecture, std::uint64_t seed) {
    switch (architecture) {
        case ArchitectureId::simple_nn_cifar:
            return init_mlp({3072, 20, 10}, seed);
        case ArchitectureId::mlp_synthetic:
            return init_mlp({8, 16, 4}, seed);
    }
    throw ConfigError("init_model: unknown architecture");
}

std::vector<double> forward(const ModelParams& model, const ExampleBatch& batch) {
    return forward_impl(model, batch, nullptr);
}

LossGrad batch_loss_grad(const ModelParams& model, const ExampleBatch& batch) {
    ForwardTrace trace;
    std::vector<double> probs = forward_impl(model, batch, &trace);

    const std::size_t rows = batch.rows();
    const std::size_t layer_count = model.layer_shapes.size();
    const std::size_t classes = model.output_dim();

    LossGrad out;
    out.grad.assign(model.values.size(), 0.0);

    double loss = 0.0;
    // delta starts as d(mean CE)/d(logits) = (p - onehot) / batch
    std::vector<double> delta = std::move(probs);
    for (std::size_t r = 0; r < rows; ++r) {
        const auto label = static_cast<std::size_t>(batch.labels[r]);
        if (label >= classes) throw ShapeError("batch_loss_grad: label out of range");
        const double p = delta[r * classes + label];
        loss -= std::log(std::max(p, 1e-300));
        for (std::size_t j = 0; j < classes; ++j) {
            delta[r * classes + j] = (delta[r * classes + j] - (j == label ? 1.0 : 0.0)) /
                                     static_cast<double>(rows);
        }
    }
    out.loss = loss / static_cast<double>(rows);

    // Per-layer parameter offsets.
    std::vector<std::size_t> offsets(layer_count);
    std::size_t off = 0;
    for (std::size_t l = 0; l < layer_count; ++l) {
        offsets[l] = off;
        off += model.layer_shapes[l].param_count();
    }

    for (std::size_t l = layer_count; l-- > 0;) {
        const LayerShape& s = model.layer_shapes[l];
        const std::vector<double>& input = trace.activations[l];
        const double* w = model.values.data() + offsets[l];
        double* gw = out.grad.data() + offsets[l];
        double* gb = s.has_bias ? gw + static_cast<std::size_t>(s.rows) * s.cols : nullptr;

        // dW[i, j] = sum_b input[b, i] * delta[b, j]; db[j] = sum_b delta[b, j]
        for (std::size_t b = 0; b < rows; ++b) {
            const double* x = input.data() + b * s.rows;
            const double* d = delta.data() + b * s.cols;
            for (std::size_t i = 0; i < s.rows; ++i) {
                const double xi = x[i];
                if (xi == 0.0) continue;
                double* g = gw + i * s.cols;
                for (std::size_t j = 0; j < s.cols; ++j) g[j] += xi * d[j];
            }
            if (gb) {
                for (std::size_t j = 0; j < s.cols; ++j) gb[j] += d[j];
            }
        }

        if (l == 0) break;
        // Propagate: d_prev[b, i] = sum_j delta[b, j] * w[i, j], masked by ReLU.
        std::vector<double> prev(rows * s.rows, 0.0);
        for (std::size_t b = 0; b < rows; ++b) {
            const double* d = delta.data() + b * s.cols;
            const double* a = input.data() + b * s.rows;
            double* p = prev.data() + b * s.rows;
            for (std::size_t i = 0; i < s.rows; ++i) {
                if (a[i] <= 0.0) continue;  // ReLU gate (input is post-ReLU)
                const double* wr = w + i * s.cols;
                double acc = 0.0;
                for (std::size_t j = 0; j < s.cols; ++j) acc += d[j] * wr[j];
                p[i] = acc;
            }
        }
        delta = std::move(prev);
    }
    return out;
}

ModelParams sgd_epoch(const ModelParams& model, const DataShard& shard, const TrainingConfig& cfg,
                      std::uint32_t epoch_index) {
    if (shard.rows() == 0) throw TrainingError("sgd_epoch: empty shard");
    if (cfg.batch_size < 1) throw ConfigError("sgd_epoch: batch_size must be >= 1");

    const std::vector<std::size_t> order =
        seeded_permutation(shard.rows(), seed_mix(cfg.seed, epoch_index));

    ModelParams w = model;
    std::vector<std::size_t> batch_idx;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        batch_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
        const ExampleBatch batch = shard.gather(batch_idx);
        LossGrad lg = batch_loss_grad(w, batch);
        for (double g : lg.grad) {
            if (!std::isfinite(g)) {
                throw TrainingError("sgd_epoch: non-finite gradient at batch offset " +
                                    std::to_string(start) + " (learning rate blow-up?)");
            }
        }
        for (std::size_t i = 0; i < w.values.size(); ++i) {
            w.values[i] -= cfg.learning_rate * lg.grad[i];
        }
    }
    return w;
}

ModelParams local_training(std::uint32_t peer_id, const ModelParams& model, const DataShard& shard,
                           const TrainingConfig& cfg) {
    if (cfg.local_epochs < 1) throw ConfigError("local_training: local_epochs must be >= 1");
    ModelParams w = model;
    for (std::uint32_t e = 0; e < cfg.local_epochs; ++e) {
        try {
            w = sgd_epoch(w, shard, cfg, e);
        } catch (const TrainingError& err) {
            throw TrainingError("peer " + std::to_string(peer_id) + ": " + err.what());
        }
    }
    return w;
}

EvalReport evaluate(const ModelParams& model, const DataShard& testset) {
    if (testset.rows() == 0) throw ShapeError("evaluate: empty testset");
    const std::size_t classes = model.output_dim();

    EvalReport report;
    report.sample_count = testset.rows();

    // Chunked to bound the activation buffers on large test sets.
    constexpr std::size_t kChunk = 512;
    std::size_t correct = 0;
    double loss = 0.0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < testset.rows(); start += kChunk) {
        const std::size_t end = std::min(testset.rows(), start + kChunk);
        idx.resize(end - start);
        for (std::size_t i = start; i < end; ++i) idx[i - start] = i;
        const ExampleBatch chunk = testset.gather(idx);
        const std::vector<double> probs = forward(model, chunk);
        for (std::size_t r = 0; r < chunk.rows(); ++r) {
            const double* p = probs.data() + r * classes;
            std::size_t arg = 0;
            for (std::size_t j = 1; j < classes; ++j) {
                if (p[j] > p[arg]) arg = j;
            }
            const auto label = static_cast<std::size_t>(chunk.labels[r]);
            if (arg == label) ++correct;
            loss -= std::log(std::max(p[label], 1e-300));
        }
    }
    report.accuracy = static_cast<double>(correct) / static_cast<double>(report.sample_count);
    report.mean_loss = loss / static_cast<double>(report.sample_count);
    return report;
}

}  // namespace fedchain
