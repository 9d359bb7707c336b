#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedchain/fedavg.hpp"
#include "fedchain/netsim.hpp"

namespace fedchain {

enum class RunMode { centralized, decentralized };
enum class DatasetKind { cifar10, synthetic };

struct SyntheticSpec {
    std::uint64_t n = 600;
    std::int32_t classes = 4;
    std::uint32_t dim = 8;
    double margin = 6.0;

    bool operator==(const SyntheticSpec&) const = default;
};

/// When a peer stops waiting and aggregates what it has.
struct AggregationTrigger {
    enum class Mode { wait_all, quorum, timeout };
    Mode mode = Mode::wait_all;
    std::uint32_t quorum_size = 1;  // quorum only; own update counts
    SimTime timeout = 0;            // timeout only, simulated units

    bool operator==(const AggregationTrigger&) const = default;
};

/// Full experiment description; `seed` is the determinism root.
struct ScenarioConfig {
    RunMode mode = RunMode::decentralized;
    DatasetKind dataset = DatasetKind::synthetic;
    SyntheticSpec synthetic;
    std::string cifar_dir;  // falls back to $FEDCHAIN_DATA when empty

    std::uint32_t peers = 3;
    std::uint32_t rounds = 10;
    std::uint32_t epochs = 5;
    double learning_rate = 0.01;
    std::uint32_t batch_size = 32;

    SelectionPolicy policy;
    AggregationTrigger trigger;
    NetConfig net;

    std::uint32_t difficulty = 12;
    std::uint64_t seed = 42;
    bool strict_chain = false;

    // Per-peer knobs; a single entry applies to every peer.
    std::vector<std::uint64_t> per_example_cost = {1};
    std::vector<double> hash_rate = {1.0};

    std::uint32_t threads = 1;  // CLI-level, not part of the file schema

    bool operator==(const ScenarioConfig&) const = default;
};

/// Throws ConfigError naming the offending key.
void validate_config(const ScenarioConfig& cfg);

struct MetricsRow {
    std::uint64_t round = 0;
    PeerId peer = 0;
    MemberSet combo;
    double accuracy = 0.0;
    bool selected = false;
};

struct MetricsTable {
    std::vector<MetricsRow> rows;
};

struct RunResult {
    RunMode mode = RunMode::decentralized;

    /// Decentralized: per (round, peer) one row per candidate combination,
    /// exactly one of them selected.
    MetricsTable metrics;

    /// Centralized: one selected row per (round, peer) per aggregation type.
    MetricsTable metrics_consider;
    MetricsTable metrics_not_consider;

    /// Digest of the model carried into the next round, [round-1][peer].
    std::vector<std::vector<Hash32>> selected_digest;
    /// Centralized global-model digests per round.
    std::vector<Hash32> digest_consider;
    std::vector<Hash32> digest_not_consider;

    std::optional<ChainState> chain;  // peer 0's view (decentralized)
    std::vector<Hash32> peer_tips;
    std::vector<TraceRow> trace;
    std::map<std::string, std::uint64_t> counters;
};

}  // namespace fedchain
