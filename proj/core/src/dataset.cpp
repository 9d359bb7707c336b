#include "fedchain/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "fedchain/rng.hpp"

namespace fedchain {

DataShard DataShard::gather(const std::vector<std::size_t>& indices) const {
    DataShard out;
    out.feature_dim = feature_dim;
    out.class_count = class_count;
    out.features.reserve(indices.size() * feature_dim);
    out.labels.reserve(indices.size());
    for (std::size_t idx : indices) {
        const float* r = row(idx);
        out.features.insert(out.features.end(), r, r + feature_dim);
        out.labels.push_back(labels[idx]);
    }
    return out;
}

namespace {

constexpr std::size_t kCifarRecordBytes = 3073;  // 1 label + 32*32*3 pixels
constexpr std::size_t kCifarPixels = 3072;

void load_cifar_file(const std::filesystem::path& path, DataShard& shard) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cifar10: cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    if (size % kCifarRecordBytes != 0) {
        throw IoError("cifar10: truncated record in " + path.string() + " (file length " +
                      std::to_string(size) + " is not a multiple of 3073)");
    }
    const std::size_t records = size / kCifarRecordBytes;
    std::vector<std::uint8_t> raw(size);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(size));
    if (!in) throw IoError("cifar10: short read from " + path.string());

    shard.features.reserve(shard.features.size() + records * kCifarPixels);
    shard.labels.reserve(shard.labels.size() + records);
    for (std::size_t r = 0; r < records; ++r) {
        const std::uint8_t* rec = raw.data() + r * kCifarRecordBytes;
        shard.labels.push_back(rec[0]);
        for (std::size_t i = 0; i < kCifarPixels; ++i) {
            shard.features.push_back(static_cast<float>(rec[1 + i]) / 255.0f);
        }
    }
}

}  // namespace

Cifar10Data load_cifar10(const std::string& dir_path) {
    const std::filesystem::path dir(dir_path);
    Cifar10Data data;
    data.train.feature_dim = kCifarPixels;
    data.train.class_count = 10;
    data.test.feature_dim = kCifarPixels;
    data.test.class_count = 10;
    for (int i = 1; i <= 5; ++i) {
        load_cifar_file(dir / ("data_batch_" + std::to_string(i) + ".bin"), data.train);
    }
    load_cifar_file(dir / "test_batch.bin", data.test);
    return data;
}

SyntheticData gen_synthetic(std::size_t n, std::int32_t classes, std::size_t dim, double margin,
                            std::uint64_t seed) {
    if (dim < 1) throw ConfigError("gen_synthetic: dim must be >= 1");
    if (classes < 1) throw ConfigError("gen_synthetic: classes must be >= 1");
    if (n < static_cast<std::size_t>(classes)) throw ConfigError("gen_synthetic: n must be >= classes");
    if (margin <= 0) throw ConfigError("gen_synthetic: margin must be > 0");

    // Center for class k sits on axis (k % dim) at level (k / dim + 1) * margin,
    // which keeps every pair of centers at distance >= margin.
    auto center = [&](std::int32_t k, std::size_t d) -> double {
        if (d != static_cast<std::size_t>(k) % dim) return 0.0;
        return margin * (static_cast<double>(k) / static_cast<double>(dim) + 1.0);
    };

    Rng rng(seed);
    const double blob_sigma = margin / 8.0;
    std::vector<double> raw(n * dim);
    std::vector<std::int32_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::int32_t>(i % static_cast<std::size_t>(classes));
        labels[i] = k;
        for (std::size_t d = 0; d < dim; ++d) {
            raw[i * dim + d] = center(k, d) + blob_sigma * rng.normal();
        }
    }

    // Min-max scale each dimension into [0,1]; separability is affine-invariant.
    for (std::size_t d = 0; d < dim; ++d) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            lo = std::min(lo, raw[i * dim + d]);
            hi = std::max(hi, raw[i * dim + d]);
        }
        const double span = hi - lo;
        for (std::size_t i = 0; i < n; ++i) {
            raw[i * dim + d] = span > 0 ? (raw[i * dim + d] - lo) / span : 0.0;
        }
    }

    std::vector<std::size_t> order = seeded_permutation(n, seed_mix(seed, 0x5917));
    const std::size_t train_rows = n * 8 / 10 > 0 ? n * 8 / 10 : n;  // 80/20, all-train if tiny

    SyntheticData out;
    for (DataShard* s : {&out.train, &out.test}) {
        s->feature_dim = dim;
        s->class_count = classes;
    }
    for (std::size_t pos = 0; pos < n; ++pos) {
        DataShard& dst = pos < train_rows ? out.train : out.test;
        const std::size_t i = order[pos];
        for (std::size_t d = 0; d < dim; ++d) {
            dst.features.push_back(static_cast<float>(raw[i * dim + d]));
        }
        dst.labels.push_back(labels[i]);
    }
    return out;
}

PartitionPlan partition(const DataShard& shard, std::uint32_t peer_count,
                        PartitionStrategy strategy, std::uint64_t seed) {
    if (peer_count < 1) throw ConfigError("partition: peer_count must be >= 1");
    if (peer_count > shard.rows()) {
        throw ConfigError("partition: peer_count " + std::to_string(peer_count) +
                          " exceeds row count " + std::to_string(shard.rows()));
    }
    PartitionPlan plan;
    plan.peer_count = peer_count;
    plan.strategy = strategy;
    plan.seed = seed;
    plan.assignment.resize(peer_count);

    std::vector<std::size_t> order = seeded_permutation(shard.rows(), seed);
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        plan.assignment[pos % peer_count].push_back(order[pos]);
    }
    return plan;
}

}  // namespace fedchain
