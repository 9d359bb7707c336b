#pragma once

#include <map>
#include <memory>
#include <set>

#include "fedchain/scenario.hpp"

namespace fedchain {

enum class PeerPhase { training, awaiting_updates, aggregated, done, halted };

/// One fully coupled participant: trainer, aggregator, and miner.
struct PeerRuntime {
    PeerRuntime(PeerId id_, std::uint32_t difficulty) : id(id_), chain(difficulty) {}

    PeerId id;
    KeyPair keys;
    ModelParams current_model;
    std::uint64_t round = 1;
    PeerPhase phase = PeerPhase::training;
    SimTime round_start_time = 0;
    bool timeout_fired = false;

    /// Verified models buffered for aggregation, by round then peer.
    std::map<std::uint64_t, std::map<PeerId, ModelParams>> buffers;

    /// Every verified update ever seen; mining works off the subset not yet
    /// confirmed on the canonical chain.
    std::map<std::pair<std::uint64_t, PeerId>, LocalUpdate> known_updates;

    ChainState chain;
    std::uint64_t mining_generation = 0;
    bool mining_scheduled = false;
    std::unique_ptr<Rng> mining_rng;

    // metrics
    std::uint64_t rejected_updates = 0;  // bad signature or digest
    std::uint64_t stale_updates = 0;     // past-round, discarded for aggregation
    std::uint64_t updates_received = 0;
    std::uint64_t blocks_mined = 0;
    std::uint64_t blocks_accepted = 0;
    std::uint64_t blocks_rejected = 0;
    std::uint64_t blocks_orphaned = 0;
};

/// Event-driven decentralized run: N fully coupled peers over the simulated
/// network with mining enabled. Public stepping methods exist so tests can
/// drive single transitions.
class ScenarioEngine {
public:
    explicit ScenarioEngine(ScenarioConfig cfg);

    RunResult run();

    Simulator& net() { return sim_; }
    PeerRuntime& peer(PeerId id) { return *peers_.at(id); }
    std::uint32_t peer_count() const { return cfg_.peers; }
    const DataShard& testset() const { return testset_; }
    const DataShard& shard(PeerId id) const { return shards_.at(id); }
    const MetricsTable& metrics() const { return metrics_; }

    void start_round(PeerRuntime& p);
    void handle_event(const Event& event);
    void on_update_received(PeerRuntime& p, const LocalUpdate& update);
    void on_block_received(PeerRuntime& p, const Block& block);
    void check_trigger(PeerRuntime& p);
    void aggregate_round(PeerRuntime& p);

private:
    void on_training_done(PeerRuntime& p, const Event& event);
    void on_mining_done(PeerRuntime& p, const Event& event);
    void on_round_timeout(PeerRuntime& p, const Event& event);
    void ensure_mining(PeerRuntime& p);
    std::map<PeerId, ModelParams> effective_models(PeerRuntime& p) const;
    RunResult finish();

    ScenarioConfig cfg_;
    Simulator sim_;
    DataShard testset_;
    std::vector<DataShard> shards_;
    std::vector<std::unique_ptr<PeerRuntime>> peers_;
    MetricsTable metrics_;
    std::vector<std::vector<Hash32>> selected_digest_;
};

/// Straight-line Vanilla FedAvg: one aggregator, N trainers, no network and
/// no chain. Runs both aggregation types from the same initial weights.
/// Doubles as the independent oracle for the decentralized path.
RunResult run_centralized(const ScenarioConfig& cfg);

/// Dispatches on cfg.mode.
RunResult run_scenario(const ScenarioConfig& cfg);

/// Deterministic sub-seeds derived from the scenario seed.
namespace seed_domain {
constexpr std::uint64_t init = 1;
constexpr std::uint64_t partition = 2;
constexpr std::uint64_t synthetic = 3;
constexpr std::uint64_t net = 4;
constexpr std::uint64_t mining = 5;
constexpr std::uint64_t training = 6;
constexpr std::uint64_t tie = 7;
constexpr std::uint64_t nonce = 8;
constexpr std::uint64_t keys = 9;
constexpr std::uint64_t central_tie = 10;
}  // namespace seed_domain

std::uint64_t train_seed(std::uint64_t scenario_seed, PeerId peer, std::uint64_t round);

/// Shards + shared test set + initial model for a config (synthetic or
/// CIFAR-10), all derived deterministically from cfg.seed.
struct PreparedData {
    std::vector<DataShard> shards;
    DataShard testset;
    ModelParams initial_model;
};
PreparedData prepare_data(const ScenarioConfig& cfg);

}  // namespace fedchain
