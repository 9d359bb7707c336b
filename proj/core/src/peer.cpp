#include "fedchain/peer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <future>

namespace fedchain {

std::uint64_t train_seed(std::uint64_t scenario_seed, PeerId peer, std::uint64_t round) {
    return seed_mix(seed_mix(scenario_seed, seed_domain::training), seed_mix(peer, round));
}

namespace {

template <typename T>
T per_peer(const std::vector<T>& values, PeerId peer, const char* key) {
    if (values.size() == 1) return values.front();
    if (peer < values.size()) return values[peer];
    throw ConfigError(std::string(key) + ": need 1 or `peers` entries");
}

std::shared_future<ModelParams> launch_training(PeerId peer, ModelParams start,
                                                const DataShard* shard, TrainingConfig tcfg,
                                                std::uint32_t threads) {
    const auto policy = threads > 1 ? std::launch::async : std::launch::deferred;
    return std::async(policy, [peer, start = std::move(start), shard, tcfg] {
               return local_training(peer, start, *shard, tcfg);
           }).share();
}

}  // namespace

void validate_config(const ScenarioConfig& cfg) {
    if (cfg.peers < 1) throw ConfigError("peers: must be >= 1");
    if (cfg.learning_rate <= 0) throw ConfigError("learning_rate: must be > 0");
    if (cfg.batch_size < 1) throw ConfigError("batch_size: must be >= 1");
    if (cfg.epochs < 1) throw ConfigError("epochs: must be >= 1");
    if (cfg.net.latency_min > cfg.net.latency_max) {
        throw ConfigError("latency_min: exceeds latency_max");
    }
    if (cfg.net.drop_probability < 0.0 || cfg.net.drop_probability >= 1.0) {
        throw ConfigError("drop_probability: must be in [0, 1)");
    }
    if (cfg.trigger.mode == AggregationTrigger::Mode::quorum) {
        if (cfg.trigger.quorum_size < 1 || cfg.trigger.quorum_size > cfg.peers) {
            throw ConfigError("quorum_size: must be in [1, peers]");
        }
    }
    if (cfg.trigger.mode == AggregationTrigger::Mode::timeout && cfg.trigger.timeout == 0) {
        throw ConfigError("timeout: must be > 0");
    }
    if (cfg.policy.mode == SelectionMode::threshold_filter) {
        if (cfg.policy.threshold < 0.0 || cfg.policy.threshold > 1.0) {
            throw ConfigError("threshold: must be in [0, 1]");
        }
    }
    if (cfg.dataset == DatasetKind::synthetic) {
        if (cfg.synthetic.classes < 2) throw ConfigError("synthetic_classes: must be >= 2");
        if (cfg.synthetic.dim < 1) throw ConfigError("synthetic_dim: must be >= 1");
        if (cfg.synthetic.n < static_cast<std::uint64_t>(cfg.synthetic.classes)) {
            throw ConfigError("synthetic_n: must be >= synthetic_classes");
        }
        if (cfg.synthetic.margin <= 0) throw ConfigError("synthetic_margin: must be > 0");
    }
    if (cfg.difficulty > 24) throw ConfigError("difficulty: must be <= 24 at desk scale");
    if (cfg.per_example_cost.size() != 1 && cfg.per_example_cost.size() != cfg.peers) {
        throw ConfigError("per_example_cost: need 1 or `peers` entries");
    }
    if (cfg.hash_rate.size() != 1 && cfg.hash_rate.size() != cfg.peers) {
        throw ConfigError("hash_rate: need 1 or `peers` entries");
    }
    for (double r : cfg.hash_rate) {
        if (r <= 0) throw ConfigError("hash_rate: must be > 0");
    }
}

PreparedData prepare_data(const ScenarioConfig& cfg) {
    PreparedData out;
    DataShard train;
    if (cfg.dataset == DatasetKind::synthetic) {
        SyntheticData d =
            gen_synthetic(cfg.synthetic.n, cfg.synthetic.classes, cfg.synthetic.dim,
                          cfg.synthetic.margin, seed_mix(cfg.seed, seed_domain::synthetic));
        train = std::move(d.train);
        out.testset = std::move(d.test);
        out.initial_model =
            init_mlp({cfg.synthetic.dim, 16, static_cast<std::uint32_t>(cfg.synthetic.classes)},
                     seed_mix(cfg.seed, seed_domain::init));
    } else {
        std::string dir = cfg.cifar_dir;
        if (dir.empty()) {
            if (const char* env = std::getenv("FEDCHAIN_DATA")) dir = env;
        }
        if (dir.empty()) {
            throw ConfigError("cifar_dir: not set and FEDCHAIN_DATA is unset");
        }
        Cifar10Data d = load_cifar10(dir);
        train = std::move(d.train);
        out.testset = std::move(d.test);
        out.initial_model =
            init_model(ArchitectureId::simple_nn_cifar, seed_mix(cfg.seed, seed_domain::init));
    }
    const PartitionPlan plan = partition(train, cfg.peers, PartitionStrategy::iid_equal,
                                         seed_mix(cfg.seed, seed_domain::partition));
    out.shards.reserve(cfg.peers);
    for (std::uint32_t k = 0; k < cfg.peers; ++k) {
        out.shards.push_back(train.gather(plan.assignment[k]));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Decentralized engine
// ---------------------------------------------------------------------------

namespace {
NetConfig validated_net_config(const ScenarioConfig& cfg) {
    validate_config(cfg);
    NetConfig net = cfg.net;
    net.seed = seed_mix(cfg.seed, seed_domain::net);
    return net;
}
}  // namespace

ScenarioEngine::ScenarioEngine(ScenarioConfig cfg)
    : cfg_(std::move(cfg)), sim_(validated_net_config(cfg_)) {
    PreparedData data = prepare_data(cfg_);
    testset_ = std::move(data.testset);
    shards_ = std::move(data.shards);

    peers_.reserve(cfg_.peers);
    for (PeerId id = 0; id < cfg_.peers; ++id) {
        auto p = std::make_unique<PeerRuntime>(id, cfg_.difficulty);
        p->keys = keypair_from_seed(seed_mix(seed_mix(cfg_.seed, seed_domain::keys), id));
        p->current_model = data.initial_model;
        p->mining_rng =
            std::make_unique<Rng>(seed_mix(seed_mix(cfg_.seed, seed_domain::mining), id));
        sim_.register_peer(id);
        peers_.push_back(std::move(p));
    }
    selected_digest_.assign(cfg_.rounds, std::vector<Hash32>(cfg_.peers, Hash32{}));
}

void ScenarioEngine::start_round(PeerRuntime& p) {
    p.phase = PeerPhase::training;
    p.round_start_time = sim_.now();
    p.timeout_fired = false;
    if (cfg_.trigger.mode == AggregationTrigger::Mode::timeout) {
        sim_.schedule(cfg_.trigger.timeout, EventKind::round_timeout, p.id, p.id,
                      TimeoutPayload{p.round});
    }
    TrainingConfig tcfg;
    tcfg.learning_rate = cfg_.learning_rate;
    tcfg.batch_size = cfg_.batch_size;
    tcfg.local_epochs = cfg_.epochs;
    tcfg.seed = train_seed(cfg_.seed, p.id, p.round);

    const DataShard* shard = &shards_[p.id];
    const SimTime duration = static_cast<SimTime>(shard->rows()) * cfg_.epochs *
                             per_peer(cfg_.per_example_cost, p.id, "per_example_cost");
    sim_.schedule(duration, EventKind::training_done, p.id, p.id,
                  TrainingPayload{p.round, launch_training(p.id, p.current_model, shard, tcfg,
                                                           cfg_.threads)});
}

void ScenarioEngine::handle_event(const Event& event) {
    PeerRuntime& p = *peers_.at(event.to);
    switch (event.kind) {
        case EventKind::deliver_message: {
            const NetMessage& msg = std::get<DeliverPayload>(event.payload).message;
            if (msg.is_update()) {
                on_update_received(p, msg.update());
            } else {
                on_block_received(p, msg.block());
            }
            break;
        }
        case EventKind::training_done:
            on_training_done(p, event);
            break;
        case EventKind::mining_done:
            on_mining_done(p, event);
            break;
        case EventKind::round_timeout:
            on_round_timeout(p, event);
            break;
    }
}

void ScenarioEngine::on_training_done(PeerRuntime& p, const Event& event) {
    const auto& tp = std::get<TrainingPayload>(event.payload);
    if (p.phase != PeerPhase::training || tp.round != p.round) return;

    ModelParams trained;
    try {
        trained = tp.result.get();
    } catch (const std::exception&) {
        p.phase = PeerPhase::halted;
        return;
    }
    p.current_model = trained;

    LocalUpdate update = sign_update(p.round, p.id, trained, p.keys);
    p.known_updates.emplace(std::make_pair(p.round, p.id), update);
    p.buffers[p.round].emplace(p.id, std::move(trained));
    sim_.broadcast(p.id, NetMessage{update});
    ensure_mining(p);

    p.phase = PeerPhase::awaiting_updates;
    check_trigger(p);
}

void ScenarioEngine::on_update_received(PeerRuntime& p, const LocalUpdate& update) {
    ++p.updates_received;
    if (!verify_update(update)) {
        ++p.rejected_updates;
        return;
    }
    ModelParams model;
    try {
        model = canonical_decode(update.model_payload);
    } catch (const Error&) {
        ++p.rejected_updates;
        return;
    }
    const auto key = std::make_pair(update.round, update.peer_id);
    const bool newly_known = p.known_updates.emplace(key, update).second;
    if (update.round < p.round) {
        ++p.stale_updates;
    } else {
        p.buffers[update.round].emplace(update.peer_id, std::move(model));
    }
    if (newly_known) ensure_mining(p);
    if (p.phase == PeerPhase::awaiting_updates && update.round == p.round) check_trigger(p);
}

void ScenarioEngine::on_block_received(PeerRuntime& p, const Block& block) {
    const auto result = p.chain.submit_block(block);
    switch (result.status) {
        case ChainState::SubmitStatus::accepted:
            ++p.blocks_accepted;
            break;
        case ChainState::SubmitStatus::rejected:
            ++p.blocks_rejected;
            break;
        case ChainState::SubmitStatus::orphaned:
            ++p.blocks_orphaned;
            break;
        case ChainState::SubmitStatus::already_known:
            return;
    }
    if (result.tip_changed) {
        // Stale parent: invalidate the current mining draw and redraw.
        ++p.mining_generation;
        p.mining_scheduled = false;
        ensure_mining(p);
        if (cfg_.strict_chain && p.phase == PeerPhase::awaiting_updates) check_trigger(p);
    }
}

void ScenarioEngine::on_round_timeout(PeerRuntime& p, const Event& event) {
    const auto& tp = std::get<TimeoutPayload>(event.payload);
    if (tp.round != p.round || p.phase == PeerPhase::done || p.phase == PeerPhase::halted) return;
    p.timeout_fired = true;
    if (p.phase == PeerPhase::awaiting_updates) check_trigger(p);
}

std::map<PeerId, ModelParams> ScenarioEngine::effective_models(PeerRuntime& p) const {
    std::map<PeerId, ModelParams> models;
    if (cfg_.strict_chain) {
        for (PeerId id = 0; id < cfg_.peers; ++id) {
            if (const LocalUpdate* u = p.chain.find_confirmed(p.round, id)) {
                models.emplace(id, canonical_decode(u->model_payload));
            }
        }
    } else {
        auto it = p.buffers.find(p.round);
        if (it != p.buffers.end()) models = it->second;
    }
    return models;
}

void ScenarioEngine::check_trigger(PeerRuntime& p) {
    if (p.phase != PeerPhase::awaiting_updates) return;
    const auto models = effective_models(p);
    if (models.count(p.id) == 0) return;  // own update is the floor for every mode

    bool fire = false;
    switch (cfg_.trigger.mode) {
        case AggregationTrigger::Mode::wait_all:
            fire = models.size() == cfg_.peers;
            break;
        case AggregationTrigger::Mode::quorum:
            fire = models.size() >= cfg_.trigger.quorum_size;
            break;
        case AggregationTrigger::Mode::timeout:
            fire = p.timeout_fired;
            break;
    }
    if (fire) aggregate_round(p);
}

void ScenarioEngine::aggregate_round(PeerRuntime& p) {
    const auto models = effective_models(p);
    MemberSet ids;
    for (const auto& [id, _] : models) ids.push_back(id);

    const auto candidates = enumerate_candidates(p.id, ids);
    const auto scores = score_combinations(candidates, models, testset_);

    SelectionPolicy policy = cfg_.policy;
    policy.tie_seed = seed_mix(seed_mix(cfg_.seed, seed_domain::tie), p.id);
    CombinationScore selected = select(scores, policy, p.id, models, testset_, p.round);

    bool matched = false;
    for (const CombinationScore& s : scores) {
        const bool is_selected = s.member_ids == selected.member_ids;
        matched = matched || is_selected;
        metrics_.rows.push_back({p.round, p.id, s.member_ids, s.report.accuracy, is_selected});
    }
    if (!matched) {
        // threshold_filter may settle on a set outside the candidate list
        metrics_.rows.push_back(
            {p.round, p.id, selected.member_ids, selected.report.accuracy, true});
    }
    selected_digest_[p.round - 1][p.id] = sha256(canonical_encode(selected.aggregated));

    p.current_model = std::move(selected.aggregated);
    p.phase = PeerPhase::aggregated;
    p.buffers.erase(p.buffers.begin(), p.buffers.upper_bound(p.round));

    if (p.round >= cfg_.rounds) {
        p.phase = PeerPhase::done;
        return;
    }
    ++p.round;
    start_round(p);
}

namespace {
std::vector<LocalUpdate> pending_updates(const PeerRuntime& p) {
    std::vector<LocalUpdate> pending;
    for (const auto& [key, update] : p.known_updates) {
        if (!p.chain.is_confirmed(key.first, key.second)) pending.push_back(update);
    }
    return pending;
}
}  // namespace

void ScenarioEngine::ensure_mining(PeerRuntime& p) {
    if (p.mining_scheduled) return;
    if (pending_updates(p).empty()) return;
    const double rate = per_peer(cfg_.hash_rate, p.id, "hash_rate");
    const double mean = std::ldexp(1.0, static_cast<int>(cfg_.difficulty)) / rate;
    const double draw = std::min(p.mining_rng->exponential(mean), 1e15);
    const SimTime delay = std::max<SimTime>(1, static_cast<SimTime>(std::llround(draw)));
    sim_.schedule(delay, EventKind::mining_done, p.id, p.id, MiningPayload{p.mining_generation});
    p.mining_scheduled = true;
}

void ScenarioEngine::on_mining_done(PeerRuntime& p, const Event& event) {
    const auto& mp = std::get<MiningPayload>(event.payload);
    if (mp.generation != p.mining_generation) return;  // invalidated draw
    p.mining_scheduled = false;

    std::vector<LocalUpdate> pending = pending_updates(p);
    if (pending.empty()) return;

    const Block* parent = p.chain.find_block(p.chain.tip_hash());
    const std::uint64_t nonce_start = seed_mix(seed_mix(cfg_.seed, seed_domain::nonce),
                                               seed_mix(p.id, parent->height + 1));
    MineResult mined = mine_block(std::move(pending), *parent, cfg_.difficulty, p.id, nonce_start,
                                  sim_.now());
    const auto result = p.chain.submit_block(mined.block);
    if (result.status == ChainState::SubmitStatus::accepted) {
        ++p.blocks_mined;
        sim_.broadcast(p.id, NetMessage{mined.block});
        if (cfg_.strict_chain && p.phase == PeerPhase::awaiting_updates) check_trigger(p);
    }
    ensure_mining(p);
}

RunResult ScenarioEngine::finish() {
    RunResult result;
    result.mode = RunMode::decentralized;
    std::stable_sort(metrics_.rows.begin(), metrics_.rows.end(),
                     [](const MetricsRow& a, const MetricsRow& b) {
                         return std::tie(a.round, a.peer) < std::tie(b.round, b.peer);
                     });
    result.metrics = std::move(metrics_);
    result.selected_digest = std::move(selected_digest_);
    for (const auto& p : peers_) result.peer_tips.push_back(p->chain.tip_hash());
    result.chain = peers_.front()->chain;
    result.trace = sim_.trace();

    result.counters["events"] = sim_.trace().size();
    for (const auto& p : peers_) {
        const std::string prefix = "peer" + std::to_string(p->id) + ".";
        result.counters[prefix + "updates_received"] = p->updates_received;
        result.counters[prefix + "rejected_updates"] = p->rejected_updates;
        result.counters[prefix + "stale_updates"] = p->stale_updates;
        result.counters[prefix + "blocks_mined"] = p->blocks_mined;
        result.counters[prefix + "blocks_accepted"] = p->blocks_accepted;
        result.counters[prefix + "blocks_rejected"] = p->blocks_rejected;
        result.counters[prefix + "blocks_orphaned"] = p->blocks_orphaned;
        result.counters[prefix + "halted"] = p->phase == PeerPhase::halted ? 1 : 0;
    }
    return result;
}

RunResult ScenarioEngine::run() {
    if (cfg_.rounds > 0) {
        for (const auto& p : peers_) start_round(*p);
        sim_.run([this](const Event& e) { handle_event(e); });
    }
    return finish();
}

// ---------------------------------------------------------------------------
// Centralized (Vanilla) runner — also the oracle for the decentralized path
// ---------------------------------------------------------------------------

RunResult run_centralized(const ScenarioConfig& cfg) {
    validate_config(cfg);
    const PreparedData data = prepare_data(cfg);

    RunResult result;
    result.mode = RunMode::centralized;

    MemberSet all_ids;
    for (PeerId id = 0; id < cfg.peers; ++id) all_ids.push_back(id);

    for (const SelectionMode track : {SelectionMode::not_consider, SelectionMode::consider_best}) {
        ModelParams w = data.initial_model;
        MetricsTable& table = track == SelectionMode::not_consider ? result.metrics_not_consider
                                                                   : result.metrics_consider;
        auto& digests = track == SelectionMode::not_consider ? result.digest_not_consider
                                                             : result.digest_consider;
        for (std::uint64_t round = 1; round <= cfg.rounds; ++round) {
            TrainingConfig tcfg;
            tcfg.learning_rate = cfg.learning_rate;
            tcfg.batch_size = cfg.batch_size;
            tcfg.local_epochs = cfg.epochs;

            std::vector<std::shared_future<ModelParams>> futures;
            for (PeerId k = 0; k < cfg.peers; ++k) {
                TrainingConfig peer_cfg = tcfg;
                peer_cfg.seed = train_seed(cfg.seed, k, round);
                futures.push_back(launch_training(k, w, &data.shards[k], peer_cfg, cfg.threads));
            }
            std::map<PeerId, ModelParams> models;
            for (PeerId k = 0; k < cfg.peers; ++k) models.emplace(k, futures[k].get());

            CombinationScore selected;
            if (track == SelectionMode::not_consider) {
                selected = score_combinations({all_ids}, models, data.testset).front();
            } else {
                const auto candidates = enumerate_all_combinations(all_ids);
                const auto scores = score_combinations(candidates, models, data.testset);
                SelectionPolicy policy;
                policy.mode = SelectionMode::consider_best;
                policy.tie_seed = seed_mix(cfg.seed, seed_domain::central_tie);
                selected = select(scores, policy, 0, models, data.testset, round);
            }
            w = selected.aggregated;
            digests.push_back(sha256(canonical_encode(w)));
            for (PeerId k = 0; k < cfg.peers; ++k) {
                table.rows.push_back(
                    {round, k, selected.member_ids, selected.report.accuracy, true});
            }
        }
    }
    return result;
}

RunResult run_scenario(const ScenarioConfig& cfg) {
    validate_config(cfg);
    if (cfg.mode == RunMode::centralized) return run_centralized(cfg);
    ScenarioEngine engine(cfg);
    return engine.run();
}

}  // namespace fedchain
