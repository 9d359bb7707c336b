#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedchain/common.hpp"

namespace fedchain {

/// A batch (or full shard) of examples. Features are row-major, one example
/// per row, values in [0, 1]. Labels are class indices in [0, class_count).
struct DataShard {
    std::vector<float> features;  // rows * feature_dim
    std::vector<std::int32_t> labels;
    std::size_t feature_dim = 0;
    std::int32_t class_count = 0;

    std::size_t rows() const { return labels.size(); }
    const float* row(std::size_t i) const { return features.data() + i * feature_dim; }

    /// New shard holding the given rows of this one.
    DataShard gather(const std::vector<std::size_t>& indices) const;
};

using ExampleBatch = DataShard;

enum class PartitionStrategy { iid_equal };

struct PartitionPlan {
    std::uint32_t peer_count = 0;
    std::vector<std::vector<std::size_t>> assignment;  // per-peer row indices
    PartitionStrategy strategy = PartitionStrategy::iid_equal;
    std::uint64_t seed = 0;
};

/// Loads the CIFAR-10 binary batches (data_batch_1..5.bin + test_batch.bin)
/// from `dir_path`. Each record is 3073 bytes: one label byte followed by
/// 3072 pixel bytes; pixels are scaled by 1/255. A file whose length is not
/// a multiple of 3073 is rejected as truncated.
struct Cifar10Data {
    DataShard train;
    DataShard test;
};
Cifar10Data load_cifar10(const std::string& dir_path);

/// Linearly separable synthetic data: one Gaussian blob per class, centers
/// at pairwise distance >= margin, min-max scaled into [0,1], 80/20
/// train/test split. Example i belongs to class i % C, so n == C yields one
/// example per class before the split.
struct SyntheticData {
    DataShard train;
    DataShard test;
};
SyntheticData gen_synthetic(std::size_t n, std::int32_t classes, std::size_t dim, double margin,
                            std::uint64_t seed);

/// iid_equal: seeded shuffle of row indices, then round-robin deal. Assigned
/// lists are disjoint, cover every row, and differ in size by at most one.
PartitionPlan partition(const DataShard& shard, std::uint32_t peer_count,
                        PartitionStrategy strategy, std::uint64_t seed);

}  // namespace fedchain
