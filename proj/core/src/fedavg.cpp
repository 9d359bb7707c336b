#include "fedchain/fedavg.hpp"

#include <algorithm>
#include <cmath>

#include "fedchain/rng.hpp"

namespace fedchain {

ModelParams aggregate(const std::vector<ModelParams>& models) {
    if (models.empty()) throw ShapeError("aggregate: empty model list");
    const ModelParams& first = models.front();
    for (const ModelParams& m : models) {
        if (!m.same_shape(first)) throw ShapeError("aggregate: layer shapes differ");
    }
    ModelParams out;
    out.layer_shapes = first.layer_shapes;
    out.values.assign(first.values.size(), 0.0);
    for (const ModelParams& m : models) {
        for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += m.values[i];
    }
    const double inv = 1.0 / static_cast<double>(models.size());
    for (double& v : out.values) {
        v *= inv;
        if (!std::isfinite(v)) throw TrainingError("aggregate: non-finite mean");
    }
    return out;
}

namespace {

// Subsets of `ids` with exactly k members, in lexicographic order.
void emit_subsets_of_size(const MemberSet& ids, std::size_t k, std::vector<MemberSet>& out) {
    MemberSet current;
    auto rec = [&](auto&& self, std::size_t start) -> void {
        if (current.size() == k) {
            out.push_back(current);
            return;
        }
        for (std::size_t i = start; i < ids.size(); ++i) {
            current.push_back(ids[i]);
            self(self, i + 1);
            current.pop_back();
        }
    };
    rec(rec, 0);
}

MemberSet sorted_unique(MemberSet ids) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

}  // namespace

std::vector<MemberSet> enumerate_candidates(PeerId own_id, const MemberSet& available_ids) {
    const MemberSet ids = sorted_unique(available_ids);
    if (!std::binary_search(ids.begin(), ids.end(), own_id)) {
        throw ConfigError("enumerate_candidates: own id not among available ids");
    }
    std::vector<MemberSet> out;
    out.push_back({own_id});
    for (std::size_t k = 2; k <= ids.size(); ++k) emit_subsets_of_size(ids, k, out);
    return out;
}

std::vector<MemberSet> enumerate_all_combinations(const MemberSet& available_ids) {
    const MemberSet ids = sorted_unique(available_ids);
    std::vector<MemberSet> out;
    for (std::size_t k = 1; k <= ids.size(); ++k) emit_subsets_of_size(ids, k, out);
    return out;
}

std::vector<CombinationScore> score_combinations(const std::vector<MemberSet>& candidates,
                                                 const std::map<PeerId, ModelParams>& models_by_id,
                                                 const DataShard& testset) {
    std::vector<CombinationScore> out;
    out.reserve(candidates.size());
    for (const MemberSet& members : candidates) {
        std::vector<ModelParams> models;
        models.reserve(members.size());
        for (PeerId id : members) {
            auto it = models_by_id.find(id);
            if (it == models_by_id.end()) {
                throw ConfigError("score_combinations: no model for peer " + std::to_string(id));
            }
            models.push_back(it->second);
        }
        CombinationScore score;
        score.member_ids = members;
        score.aggregated = aggregate(models);
        score.report = evaluate(score.aggregated, testset);
        out.push_back(std::move(score));
    }
    return out;
}

namespace {

CombinationScore select_not_consider(const std::vector<CombinationScore>& scores) {
    MemberSet all;
    for (const CombinationScore& s : scores) {
        all.insert(all.end(), s.member_ids.begin(), s.member_ids.end());
    }
    all = sorted_unique(all);
    for (const CombinationScore& s : scores) {
        if (s.member_ids == all) return s;
    }
    throw ConfigError("select: not_consider requires the full-set candidate");
}

CombinationScore select_consider_best(const std::vector<CombinationScore>& scores,
                                      std::uint64_t tie_seed, std::uint64_t round) {
    double best = scores.front().report.accuracy;
    for (const CombinationScore& s : scores) best = std::max(best, s.report.accuracy);
    std::vector<std::size_t> maximal;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i].report.accuracy == best) maximal.push_back(i);
    }
    if (maximal.size() == 1) return scores[maximal.front()];
    Rng rng(seed_mix(tie_seed, round));
    return scores[maximal[rng.below(maximal.size())]];
}

CombinationScore select_threshold(const std::vector<CombinationScore>& scores, double threshold,
                                  PeerId own_id, const std::map<PeerId, ModelParams>& models_by_id,
                                  const DataShard& testset) {
    MemberSet available;
    for (const CombinationScore& s : scores) {
        available.insert(available.end(), s.member_ids.begin(), s.member_ids.end());
    }
    available = sorted_unique(available);

    MemberSet survivors;
    for (PeerId id : available) {
        auto it = models_by_id.find(id);
        if (it == models_by_id.end()) {
            throw ConfigError("select: threshold_filter is missing the model for peer " +
                              std::to_string(id));
        }
        if (evaluate(it->second, testset).accuracy >= threshold) survivors.push_back(id);
    }
    if (survivors.empty()) survivors = {own_id};

    std::vector<ModelParams> models;
    for (PeerId id : survivors) models.push_back(models_by_id.at(id));
    CombinationScore out;
    out.member_ids = survivors;
    out.aggregated = aggregate(models);
    out.report = evaluate(out.aggregated, testset);
    return out;
}

}  // namespace

CombinationScore select(const std::vector<CombinationScore>& scores, const SelectionPolicy& policy,
                        PeerId own_id, const std::map<PeerId, ModelParams>& models_by_id,
                        const DataShard& testset, std::uint64_t round) {
    if (scores.empty()) throw ConfigError("select: empty score list");
    switch (policy.mode) {
        case SelectionMode::not_consider:
            return select_not_consider(scores);
        case SelectionMode::consider_best:
            return select_consider_best(scores, policy.tie_seed, round);
        case SelectionMode::threshold_filter:
            return select_threshold(scores, policy.threshold, own_id, models_by_id, testset);
    }
    throw ConfigError("select: unknown policy mode");
}

}  // namespace fedchain
