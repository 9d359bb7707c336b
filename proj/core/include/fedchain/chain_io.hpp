#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fedchain/chain.hpp"

namespace fedchain {

/// Writes the canonical chain as JSON lines: a header record
/// {"format","difficulty","payloads"} followed by one block per line with
/// hex-encoded hashes, keys, and signatures. With elide_payloads the model
/// bytes are dropped and only digests remain.
void write_chain_dump(std::ostream& out, const ChainState& chain, bool elide_payloads = false);
void write_chain_dump_file(const std::string& path, const ChainState& chain,
                           bool elide_payloads = false);

struct ChainDump {
    std::uint32_t difficulty = 0;
    bool has_payloads = true;
    std::vector<Block> blocks;  // in file order (genesis first for valid dumps)
};

ChainDump read_chain_dump(std::istream& in);
ChainDump read_chain_dump_file(const std::string& path);

struct ReplayReport {
    bool ok = true;
    std::uint64_t violation_height = 0;
    std::string reason;  // first violation, empty when ok
    std::size_t blocks = 0;
    std::size_t updates = 0;
    bool payload_checks_skipped = false;
};

/// Re-validates a dump end-to-end: genesis shape, linkage, heights, PoW,
/// header hash, signatures, digests, duplicate updates. Dumps without
/// payloads skip the two payload-dependent checks and say so.
ReplayReport replay_chain_dump(const ChainDump& dump);

}  // namespace fedchain
