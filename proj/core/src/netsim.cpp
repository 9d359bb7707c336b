#include "fedchain/netsim.hpp"

#include <ostream>

namespace fedchain {

const char* to_string(EventKind kind) {
    switch (kind) {
        case EventKind::deliver_message: return "deliver_message";
        case EventKind::training_done: return "training_done";
        case EventKind::mining_done: return "mining_done";
        case EventKind::round_timeout: return "round_timeout";
    }
    return "unknown";
}

std::size_t NetMessage::wire_size() const {
    if (is_update()) return encode_update(update()).size();
    return block_wire_size(block());
}

std::string NetMessage::describe() const {
    if (is_update()) {
        const LocalUpdate& u = update();
        return "upd r" + std::to_string(u.round) + " p" + std::to_string(u.peer_id);
    }
    return "blk h" + std::to_string(block().height);
}

Simulator::Simulator(NetConfig cfg) : cfg_(std::move(cfg)), rng_(seed_mix(cfg_.seed, 0x4e455453)) {
    if (cfg_.latency_min > cfg_.latency_max) {
        throw ConfigError("netsim: latency_min exceeds latency_max");
    }
    if (cfg_.drop_probability < 0.0 || cfg_.drop_probability >= 1.0) {
        throw ConfigError("netsim: drop_probability must be in [0, 1)");
    }
}

void Simulator::register_peer(PeerId peer) { peers_.insert(peer); }

void Simulator::schedule(SimTime delay, EventKind kind, PeerId from, PeerId to,
                         EventPayload payload) {
    Event e;
    e.fire_time = now_ + delay;
    e.sequence = next_sequence_++;
    e.kind = kind;
    e.from = from;
    e.to = to;
    e.payload = std::move(payload);
    queue_.push(std::move(e));
}

bool Simulator::partition_blocks(PeerId from, PeerId to, SimTime at) const {
    for (const Partition& p : cfg_.partitions) {
        if (at < p.start || at >= p.end) continue;
        const bool from_in = p.peers.count(from) > 0;
        const bool to_in = p.peers.count(to) > 0;
        if (from_in != to_in) return true;
    }
    return false;
}

std::size_t Simulator::broadcast(PeerId from, const NetMessage& message) {
    if (peers_.count(from) == 0) throw ConfigError("broadcast: sender not registered");
    std::size_t scheduled = 0;
    for (PeerId to : peers_) {
        if (to == from) continue;
        if (partition_blocks(from, to, now_)) continue;
        if (cfg_.drop_probability > 0.0 && rng_.uniform01() < cfg_.drop_probability) continue;
        const SimTime latency =
            cfg_.latency_min + rng_.below(cfg_.latency_max - cfg_.latency_min + 1);
        schedule(latency, EventKind::deliver_message, from, to, DeliverPayload{message});
        ++scheduled;
    }
    return scheduled;
}

std::size_t Simulator::run(const Handler& handler, SimTime until) {
    std::size_t executed = 0;
    while (!queue_.empty()) {
        const Event& top = queue_.top();
        if (top.fire_time > until) break;
        Event e = top;
        queue_.pop();
        now_ = e.fire_time;

        TraceRow row;
        row.time = e.fire_time;
        row.sequence = e.sequence;
        row.kind = e.kind;
        row.from = e.from;
        row.to = e.to;
        if (e.kind == EventKind::deliver_message) {
            const NetMessage& msg = std::get<DeliverPayload>(e.payload).message;
            row.size_bytes = msg.wire_size();
            row.note = msg.describe();
        } else if (e.kind == EventKind::training_done) {
            row.note = "train r" + std::to_string(std::get<TrainingPayload>(e.payload).round);
        } else if (e.kind == EventKind::mining_done) {
            row.note = "mine g" + std::to_string(std::get<MiningPayload>(e.payload).generation);
        } else {
            row.note = "timeout r" + std::to_string(std::get<TimeoutPayload>(e.payload).round);
        }
        trace_.push_back(std::move(row));

        handler(e);
        if (++executed > event_cap) {
            throw Error("netsim: event cap exceeded (" + std::to_string(event_cap) +
                        "), likely a live-lock");
        }
    }
    return executed;
}

void Simulator::export_trace_csv(std::ostream& out) const {
    out << "time,sequence,kind,from,to,size_bytes,note\n";
    for (const TraceRow& r : trace_) {
        out << r.time << ',' << r.sequence << ',' << to_string(r.kind) << ',' << r.from << ','
            << r.to << ',' << r.size_bytes << ',' << r.note << '\n';
    }
}

}  // namespace fedchain
