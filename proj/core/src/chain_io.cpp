#include "fedchain/chain_io.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace fedchain {

using ordered_json = nlohmann::ordered_json;

namespace {

template <std::size_t N>
std::array<std::uint8_t, N> hex_to_array(const std::string& hex, const char* what) {
    const Bytes bytes = hex_decode(hex);
    if (bytes.size() != N) {
        throw IoError(std::string("chain dump: ") + what + " has wrong length");
    }
    std::array<std::uint8_t, N> out{};
    std::copy(bytes.begin(), bytes.end(), out.begin());
    return out;
}

ordered_json update_to_json(const LocalUpdate& u, bool elide_payloads) {
    ordered_json j;
    j["round"] = u.round;
    j["peer_id"] = u.peer_id;
    j["model_digest"] = hex_encode(u.model_digest);
    if (!elide_payloads) j["model_payload"] = hex_encode(u.model_payload);
    j["public_key"] = hex_encode(u.public_key.data(), u.public_key.size());
    j["signature"] = hex_encode(u.signature.data(), u.signature.size());
    return j;
}

LocalUpdate update_from_json(const ordered_json& j) {
    LocalUpdate u;
    u.round = j.at("round").get<std::uint64_t>();
    u.peer_id = j.at("peer_id").get<PeerId>();
    u.model_digest = hex_to_array<32>(j.at("model_digest").get<std::string>(), "model_digest");
    if (j.contains("model_payload")) {
        u.model_payload = hex_decode(j.at("model_payload").get<std::string>());
    }
    u.public_key = hex_to_array<32>(j.at("public_key").get<std::string>(), "public_key");
    u.signature = hex_to_array<64>(j.at("signature").get<std::string>(), "signature");
    return u;
}

}  // namespace

void write_chain_dump(std::ostream& out, const ChainState& chain, bool elide_payloads) {
    ordered_json header;
    header["format"] = "fedchain-chain-v1";
    header["difficulty"] = chain.difficulty();
    header["payloads"] = !elide_payloads;
    out << header.dump() << '\n';

    for (const Block& b : chain.canonical_chain()) {
        ordered_json j;
        j["height"] = b.height;
        j["prev_hash"] = hex_encode(b.prev_hash);
        j["miner_id"] = b.miner_id;
        j["nonce"] = b.nonce;
        j["timestamp"] = b.timestamp;
        j["block_hash"] = hex_encode(b.block_hash);
        j["updates"] = ordered_json::array();
        for (const LocalUpdate& u : b.updates) {
            j["updates"].push_back(update_to_json(u, elide_payloads));
        }
        out << j.dump() << '\n';
    }
}

void write_chain_dump_file(const std::string& path, const ChainState& chain, bool elide_payloads) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write chain dump: " + path);
    write_chain_dump(out, chain, elide_payloads);
}

ChainDump read_chain_dump(std::istream& in) {
    ChainDump dump;
    std::string line;
    bool saw_header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw IoError("chain dump line " + std::to_string(line_no) +
                          ": invalid JSON: " + e.what());
        }
        if (!saw_header) {
            if (j.value("format", "") != "fedchain-chain-v1") {
                throw IoError("chain dump: missing or unknown format header");
            }
            dump.difficulty = j.at("difficulty").get<std::uint32_t>();
            dump.has_payloads = j.value("payloads", true);
            saw_header = true;
            continue;
        }
        try {
            Block b;
            b.height = j.at("height").get<std::uint64_t>();
            b.prev_hash = hex_to_array<32>(j.at("prev_hash").get<std::string>(), "prev_hash");
            b.miner_id = j.at("miner_id").get<PeerId>();
            b.nonce = j.at("nonce").get<std::uint64_t>();
            b.timestamp = j.at("timestamp").get<std::uint64_t>();
            b.block_hash = hex_to_array<32>(j.at("block_hash").get<std::string>(), "block_hash");
            for (const auto& ju : j.at("updates")) b.updates.push_back(update_from_json(ju));
            dump.blocks.push_back(std::move(b));
        } catch (const std::exception& e) {
            throw IoError("chain dump line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!saw_header) throw IoError("chain dump: empty file");
    return dump;
}

ChainDump read_chain_dump_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open chain dump: " + path);
    return read_chain_dump(in);
}

ReplayReport replay_chain_dump(const ChainDump& dump) {
    ReplayReport report;
    report.blocks = dump.blocks.size();
    report.payload_checks_skipped = !dump.has_payloads;

    auto fail = [&](std::uint64_t height, std::string reason) {
        report.ok = false;
        report.violation_height = height;
        report.reason = std::move(reason);
        return report;
    };

    if (dump.blocks.empty()) return fail(0, "dump contains no blocks");

    const Block& g = dump.blocks.front();
    const Block& expected_genesis = genesis_block();
    if (g.height != 0) return fail(g.height, "first block is not height 0");
    if (g.block_hash != expected_genesis.block_hash || !g.updates.empty()) {
        return fail(0, "genesis block malformed");
    }

    SeenUpdateIndex seen;
    for (std::size_t i = 1; i < dump.blocks.size(); ++i) {
        const Block& b = dump.blocks[i];
        const Block& parent = dump.blocks[i - 1];
        report.updates += b.updates.size();

        if (dump.has_payloads) {
            const ValidationResult v = validate_block(b, parent, dump.difficulty, seen);
            if (!v.ok) {
                return fail(b.height, std::string(to_string(v.reason)) +
                                          (v.detail.empty() ? "" : " (" + v.detail + ")"));
            }
        } else {
            // No payloads: header-hash and digest checks are impossible;
            // everything else still holds.
            if (b.prev_hash != parent.block_hash) return fail(b.height, "bad_prev_hash");
            if (b.height != parent.height + 1) return fail(b.height, "bad_height");
            if (leading_zero_bits(b.block_hash) < static_cast<int>(dump.difficulty)) {
                return fail(b.height, "insufficient_pow");
            }
            for (const LocalUpdate& u : b.updates) {
                if (!verify_update_signature(u)) {
                    return fail(b.height, std::string("bad_signature (peer ") +
                                              std::to_string(u.peer_id) + ")");
                }
            }
            for (const LocalUpdate& u : b.updates) {
                if (!seen.emplace(u.round, u.peer_id).second) {
                    return fail(b.height, "duplicate_update");
                }
            }
            continue;
        }
        for (const LocalUpdate& u : b.updates) seen.emplace(u.round, u.peer_id);
    }
    return report;
}

}  // namespace fedchain
