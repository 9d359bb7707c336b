#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "fedchain/tensor_nn.hpp"

namespace fedchain {

using PeerId = std::uint32_t;
using MemberSet = std::vector<PeerId>;  // sorted ascending, no duplicates

/// An aggregated candidate model with its accuracy on the evaluation set.
struct CombinationScore {
    MemberSet member_ids;
    ModelParams aggregated;
    EvalReport report;
};

enum class SelectionMode { not_consider, consider_best, threshold_filter };

struct SelectionPolicy {
    SelectionMode mode = SelectionMode::not_consider;
    double threshold = 0.0;  // threshold_filter only
    std::uint64_t tie_seed = 0;

    bool operator==(const SelectionPolicy&) const = default;
};

/// Elementwise arithmetic mean. Callers pass models in ascending peer-id
/// order so repeated runs are bit-stable.
ModelParams aggregate(const std::vector<ModelParams>& models);

/// Candidate member sets for a peer: its own singleton plus every subset of
/// the available ids with size >= 2, ordered by size then lexicographically.
std::vector<MemberSet> enumerate_candidates(PeerId own_id, const MemberSet& available_ids);

/// Every nonempty subset, ordered by size then lexicographically. Used by a
/// central aggregator, which has no own model to pin the singleton rule to.
std::vector<MemberSet> enumerate_all_combinations(const MemberSet& available_ids);

/// Aggregates and evaluates each candidate set. Member models are averaged
/// in ascending-id order; inputs are not modified.
std::vector<CombinationScore> score_combinations(const std::vector<MemberSet>& candidates,
                                                 const std::map<PeerId, ModelParams>& models_by_id,
                                                 const DataShard& testset);

/// Applies the selection policy:
///  - not_consider: the candidate covering every available id.
///  - consider_best: argmax accuracy, ties broken uniformly with
///    seed = mix(policy.tie_seed, round).
///  - threshold_filter: keep each member model whose standalone accuracy is
///    >= threshold, average the survivors (own model if none survive).
/// `own_id`, `models_by_id` and `testset` are consulted only by
/// threshold_filter, which must evaluate individual models.
CombinationScore select(const std::vector<CombinationScore>& scores, const SelectionPolicy& policy,
                        PeerId own_id, const std::map<PeerId, ModelParams>& models_by_id,
                        const DataShard& testset, std::uint64_t round = 0);

}  // namespace fedchain
