#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fedchain/common.hpp"
#include "fedchain/tensor_nn.hpp"

namespace fedchain {

using PeerId = std::uint32_t;
using PublicKey = std::array<std::uint8_t, 32>;
using SecretKey = std::array<std::uint8_t, 64>;
using Signature = std::array<std::uint8_t, 64>;

struct KeyPair {
    PublicKey public_key{};
    SecretKey secret_key{};
};

/// Ed25519 keypair derived deterministically from a 64-bit seed.
KeyPair keypair_from_seed(std::uint64_t seed);

Hash32 sha256(const std::uint8_t* data, std::size_t len);
Hash32 sha256(const Bytes& data);

/// Number of leading zero bits of the hash read big-endian.
int leading_zero_bits(const Hash32& h);

/// Canonical model encoding: magic "FCM1", layer count, per-layer
/// (rows, cols, has_bias) as little-endian u32, then values as little-endian
/// IEEE-754 doubles. decode(encode(m)) == m bit-exactly.
Bytes canonical_encode(const ModelParams& model);
ModelParams canonical_decode(const Bytes& bytes);

/// A peer's signed model contribution for one round; the transaction payload.
struct LocalUpdate {
    std::uint64_t round = 0;
    PeerId peer_id = 0;
    Hash32 model_digest{};
    Bytes model_payload;
    PublicKey public_key{};
    Signature signature{};
};

LocalUpdate sign_update(std::uint64_t round, PeerId peer_id, const ModelParams& model,
                        const KeyPair& keypair);

/// Signature valid for (round, peer_id, model_digest) under the bundled key.
/// Does not touch the payload; payload/digest consistency is a separate check.
bool verify_update_signature(const LocalUpdate& update);

/// Full check: signature valid and model_digest == sha256(model_payload).
bool verify_update(const LocalUpdate& update);

Bytes encode_update(const LocalUpdate& update);

constexpr PeerId kGenesisMiner = 0xffffffffu;

struct Block {
    std::uint64_t height = 0;
    Hash32 prev_hash{};
    std::vector<LocalUpdate> updates;
    PeerId miner_id = kGenesisMiner;
    std::uint64_t nonce = 0;
    std::uint64_t timestamp = 0;
    Hash32 block_hash{};
};

/// Hash of the concatenated canonical update encodings; commits the update
/// list into the header so the nonce scan re-hashes only header bytes.
Hash32 updates_root(const std::vector<LocalUpdate>& updates);

/// Canonical header: every field except block_hash, with the update list
/// represented by updates_root.
Bytes block_header_bytes(const Block& block);
Hash32 compute_block_hash(const Block& block);

std::size_t block_wire_size(const Block& block);

const Block& genesis_block();

struct MineResult {
    Block block;
    std::uint64_t attempts = 0;
};

/// Linear nonce scan from nonce_start until the block hash clears the
/// difficulty. Updates are ordered by (round, peer_id). Throws Error once
/// attempt_limit is exhausted. Callers guarantee mempool updates are valid.
MineResult mine_block(std::vector<LocalUpdate> mempool, const Block& parent,
                      std::uint32_t difficulty, PeerId miner_id, std::uint64_t nonce_start,
                      std::uint64_t timestamp, std::uint64_t attempt_limit = 1ull << 26);

enum class RejectReason {
    bad_prev_hash,
    bad_height,
    insufficient_pow,
    bad_block_hash,
    bad_signature,
    digest_mismatch,
    duplicate_update,
};
const char* to_string(RejectReason reason);

struct ValidationResult {
    bool ok = true;
    RejectReason reason = RejectReason::bad_prev_hash;
    std::string detail;

    static ValidationResult accept() { return {}; }
    static ValidationResult reject(RejectReason r, std::string d) {
        return {false, r, std::move(d)};
    }
};

using SeenUpdateIndex = std::set<std::pair<std::uint64_t, PeerId>>;

/// Checks, in order: prev_hash linkage, height, PoW target, block_hash
/// integrity, every signature, digest consistency, (peer, round) uniqueness
/// against `seen` and within the block. First failure wins.
ValidationResult validate_block(const Block& block, const Block& parent, std::uint32_t difficulty,
                                const SeenUpdateIndex& seen);

/// Block tree with longest-chain fork choice; height ties go to the tip
/// whose hash is smaller as a 256-bit big-endian integer. Blocks with an
/// unknown parent are parked until the parent arrives.
class ChainState {
public:
    explicit ChainState(std::uint32_t difficulty);

    enum class SubmitStatus { accepted, rejected, orphaned, already_known };

    struct SubmitResult {
        SubmitStatus status = SubmitStatus::accepted;
        ValidationResult validation;
        bool tip_changed = false;
    };

    SubmitResult submit_block(const Block& block);

    std::uint32_t difficulty() const { return difficulty_; }
    const Hash32& tip_hash() const { return tip_; }
    std::uint64_t tip_height() const { return blocks_.at(tip_).height; }
    const Block* find_block(const Hash32& hash) const;
    std::size_t block_count() const { return blocks_.size(); }
    std::size_t orphan_count() const;

    /// Confirmed update for (round, peer) on the canonical chain, if any.
    const LocalUpdate* find_confirmed(std::uint64_t round, PeerId peer_id) const;
    bool is_confirmed(std::uint64_t round, PeerId peer_id) const;
    std::size_t confirmed_count() const { return confirmed_.size(); }

    /// Genesis..tip, in height order.
    std::vector<Block> canonical_chain() const;

    /// (round, peer) pairs confirmed along the ancestry of `tip` (inclusive).
    SeenUpdateIndex seen_on_branch(const Hash32& tip) const;

private:
    void rebuild_confirmed_index();
    bool better_tip(const Hash32& candidate) const;
    std::vector<SubmitResult> drain_orphans(const Hash32& parent);

    std::uint32_t difficulty_;
    std::map<Hash32, Block> blocks_;
    Hash32 tip_{};
    std::map<std::pair<std::uint64_t, PeerId>, Hash32> confirmed_;  // -> containing block
    std::map<Hash32, std::vector<Block>> orphans_;                  // keyed by missing parent
};

}  // namespace fedchain
