#pragma once

#include <cstdint>
#include <functional>
#include <future>
#include <iosfwd>
#include <queue>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "fedchain/chain.hpp"
#include "fedchain/rng.hpp"

namespace fedchain {

using SimTime = std::uint64_t;
constexpr SimTime kSimForever = UINT64_MAX;

struct Partition {
    std::set<PeerId> peers;
    SimTime start = 0;
    SimTime end = 0;  // half-open [start, end)

    bool operator==(const Partition&) const = default;
};

struct NetConfig {
    SimTime latency_min = 1;
    SimTime latency_max = 10;
    double drop_probability = 0.0;
    std::vector<Partition> partitions;
    std::uint64_t seed = 0;

    bool operator==(const NetConfig&) const = default;
};

enum class EventKind { deliver_message, training_done, mining_done, round_timeout };
const char* to_string(EventKind kind);

/// What travels on the wire: a signed model update or a mined block.
struct NetMessage {
    std::variant<LocalUpdate, Block> body;

    bool is_update() const { return std::holds_alternative<LocalUpdate>(body); }
    const LocalUpdate& update() const { return std::get<LocalUpdate>(body); }
    const Block& block() const { return std::get<Block>(body); }
    std::size_t wire_size() const;
    std::string describe() const;
};

struct DeliverPayload {
    NetMessage message;
};
struct TrainingPayload {
    std::uint64_t round = 0;
    std::shared_future<ModelParams> result;
};
struct MiningPayload {
    std::uint64_t generation = 0;
};
struct TimeoutPayload {
    std::uint64_t round = 0;
};

using EventPayload = std::variant<DeliverPayload, TrainingPayload, MiningPayload, TimeoutPayload>;

struct Event {
    SimTime fire_time = 0;
    std::uint64_t sequence = 0;  // unique, monotonically increasing
    EventKind kind = EventKind::deliver_message;
    PeerId from = 0;
    PeerId to = 0;
    EventPayload payload;
};

struct TraceRow {
    SimTime time = 0;
    std::uint64_t sequence = 0;
    EventKind kind = EventKind::deliver_message;
    PeerId from = 0;
    PeerId to = 0;
    std::size_t size_bytes = 0;
    std::string note;
};

/// Single-threaded discrete-event loop with a seeded network model:
/// uniform latency, independent drops, and timed partitions. Events execute
/// in (fire_time, sequence) order; identical seeds give identical traces.
class Simulator {
public:
    explicit Simulator(NetConfig cfg);

    void register_peer(PeerId peer);
    const std::set<PeerId>& peers() const { return peers_; }
    SimTime now() const { return now_; }

    void schedule(SimTime delay, EventKind kind, PeerId from, PeerId to, EventPayload payload);

    /// One deliver_message per other registered peer, each with its own
    /// latency draw, drop draw, and partition check. Returns how many
    /// deliveries were scheduled.
    std::size_t broadcast(PeerId from, const NetMessage& message);

    std::size_t pending_events() const { return queue_.size(); }

    using Handler = std::function<void(const Event&)>;

    /// Runs until quiescence or until the simulated clock would pass
    /// `until`. Throws when more than event_cap events execute (live-lock
    /// guard). Returns the number of events executed.
    std::size_t run(const Handler& handler, SimTime until = kSimForever);

    std::uint64_t event_cap = 10'000'000;

    const std::vector<TraceRow>& trace() const { return trace_; }
    void export_trace_csv(std::ostream& out) const;

private:
    bool partition_blocks(PeerId from, PeerId to, SimTime at) const;

    NetConfig cfg_;
    Rng rng_;
    std::set<PeerId> peers_;
    std::uint64_t next_sequence_ = 0;
    SimTime now_ = 0;

    struct EventOrder {
        bool operator()(const Event& a, const Event& b) const {
            return std::tie(a.fire_time, a.sequence) > std::tie(b.fire_time, b.sequence);
        }
    };
    std::priority_queue<Event, std::vector<Event>, EventOrder> queue_;
    std::vector<TraceRow> trace_;
};

}  // namespace fedchain
