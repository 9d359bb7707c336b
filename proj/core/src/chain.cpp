#include "fedchain/chain.hpp"

#include <sodium.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "fedchain/rng.hpp"

namespace fedchain {

namespace {

void ensure_sodium() {
    static const int rc = sodium_init();
    if (rc < 0) throw Error("libsodium initialization failed");
}

constexpr char kModelMagic[4] = {'F', 'C', 'M', '1'};
constexpr char kUpdateMagic[4] = {'F', 'C', 'U', '1'};
constexpr char kSignMagic[4] = {'F', 'C', 'S', '1'};
constexpr char kBlockMagic[4] = {'F', 'C', 'B', '1'};

void append_magic(Bytes& out, const char (&magic)[4]) {
    out.insert(out.end(), magic, magic + 4);
}

struct ByteReader {
    const Bytes& bytes;
    std::size_t pos = 0;

    void expect_magic(const char (&magic)[4], const char* what) {
        if (bytes.size() < pos + 4 || std::memcmp(bytes.data() + pos, magic, 4) != 0) {
            throw Error(std::string(what) + ": bad magic");
        }
        pos += 4;
    }
    std::uint32_t read_u32(const char* what) {
        if (bytes.size() < pos + 4) throw Error(std::string(what) + ": truncated");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t read_u64(const char* what) {
        if (bytes.size() < pos + 8) throw Error(std::string(what) + ": truncated");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    double read_f64(const char* what) {
        const std::uint64_t bits = read_u64(what);
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }
};

Bytes signed_tuple_bytes(std::uint64_t round, PeerId peer_id, const Hash32& digest) {
    Bytes msg;
    append_magic(msg, kSignMagic);
    append_u64le(msg, round);
    append_u32le(msg, peer_id);
    msg.insert(msg.end(), digest.begin(), digest.end());
    return msg;
}

}  // namespace

KeyPair keypair_from_seed(std::uint64_t seed) {
    ensure_sodium();
    std::array<std::uint8_t, crypto_sign_SEEDBYTES> sk_seed{};
    std::uint64_t state = seed;
    for (std::size_t i = 0; i < sk_seed.size(); i += 8) {
        state = splitmix64(state);
        for (std::size_t b = 0; b < 8; ++b) {
            sk_seed[i + b] = static_cast<std::uint8_t>(state >> (8 * b));
        }
    }
    KeyPair kp;
    crypto_sign_seed_keypair(kp.public_key.data(), kp.secret_key.data(), sk_seed.data());
    return kp;
}

Hash32 sha256(const std::uint8_t* data, std::size_t len) {
    ensure_sodium();
    Hash32 out;
    crypto_hash_sha256(out.data(), data, len);
    return out;
}

Hash32 sha256(const Bytes& data) { return sha256(data.data(), data.size()); }

int leading_zero_bits(const Hash32& h) {
    int bits = 0;
    for (std::uint8_t byte : h) {
        if (byte == 0) {
            bits += 8;
            continue;
        }
        for (int b = 7; b >= 0; --b) {
            if (byte & (1u << b)) return bits;
            ++bits;
        }
    }
    return bits;
}

Bytes canonical_encode(const ModelParams& model) {
    for (double v : model.values) {
        if (!std::isfinite(v)) throw Error("canonical_encode: non-finite model value");
    }
    Bytes out;
    out.reserve(8 + model.layer_shapes.size() * 12 + model.values.size() * 8);
    append_magic(out, kModelMagic);
    append_u32le(out, static_cast<std::uint32_t>(model.layer_shapes.size()));
    for (const LayerShape& s : model.layer_shapes) {
        append_u32le(out, s.rows);
        append_u32le(out, s.cols);
        append_u32le(out, s.has_bias ? 1 : 0);
    }
    for (double v : model.values) append_f64le(out, v);
    return out;
}

ModelParams canonical_decode(const Bytes& bytes) {
    ByteReader r{bytes};
    r.expect_magic(kModelMagic, "canonical_decode");
    const std::uint32_t layers = r.read_u32("canonical_decode: layer count");
    ModelParams m;
    std::size_t expected = 0;
    for (std::uint32_t l = 0; l < layers; ++l) {
        LayerShape s;
        s.rows = r.read_u32("canonical_decode: rows");
        s.cols = r.read_u32("canonical_decode: cols");
        s.has_bias = r.read_u32("canonical_decode: has_bias") != 0;
        expected += s.param_count();
        m.layer_shapes.push_back(s);
    }
    m.values.reserve(expected);
    for (std::size_t i = 0; i < expected; ++i) {
        const double v = r.read_f64("canonical_decode: values");
        if (!std::isfinite(v)) throw Error("canonical_decode: non-finite model value");
        m.values.push_back(v);
    }
    if (r.pos != bytes.size()) throw Error("canonical_decode: trailing bytes");
    return m;
}

LocalUpdate sign_update(std::uint64_t round, PeerId peer_id, const ModelParams& model,
                        const KeyPair& keypair) {
    ensure_sodium();
    LocalUpdate u;
    u.round = round;
    u.peer_id = peer_id;
    u.model_payload = canonical_encode(model);
    u.model_digest = sha256(u.model_payload);
    u.public_key = keypair.public_key;
    const Bytes msg = signed_tuple_bytes(round, peer_id, u.model_digest);
    crypto_sign_detached(u.signature.data(), nullptr, msg.data(), msg.size(),
                         keypair.secret_key.data());
    return u;
}

bool verify_update_signature(const LocalUpdate& update) {
    ensure_sodium();
    const Bytes msg = signed_tuple_bytes(update.round, update.peer_id, update.model_digest);
    return crypto_sign_verify_detached(update.signature.data(), msg.data(), msg.size(),
                                       update.public_key.data()) == 0;
}

bool verify_update(const LocalUpdate& update) {
    return sha256(update.model_payload) == update.model_digest && verify_update_signature(update);
}

Bytes encode_update(const LocalUpdate& update) {
    Bytes out;
    out.reserve(4 + 8 + 4 + 32 + 8 + update.model_payload.size() + 32 + 64);
    append_magic(out, kUpdateMagic);
    append_u64le(out, update.round);
    append_u32le(out, update.peer_id);
    out.insert(out.end(), update.model_digest.begin(), update.model_digest.end());
    append_u64le(out, update.model_payload.size());
    out.insert(out.end(), update.model_payload.begin(), update.model_payload.end());
    out.insert(out.end(), update.public_key.begin(), update.public_key.end());
    out.insert(out.end(), update.signature.begin(), update.signature.end());
    return out;
}

Hash32 updates_root(const std::vector<LocalUpdate>& updates) {
    Bytes concat;
    for (const LocalUpdate& u : updates) {
        const Bytes enc = encode_update(u);
        concat.insert(concat.end(), enc.begin(), enc.end());
    }
    return sha256(concat);
}

Bytes block_header_bytes(const Block& block) {
    Bytes out;
    out.reserve(4 + 8 + 32 + 32 + 4 + 4 + 8 + 8);
    append_magic(out, kBlockMagic);
    append_u64le(out, block.height);
    out.insert(out.end(), block.prev_hash.begin(), block.prev_hash.end());
    const Hash32 root = updates_root(block.updates);
    out.insert(out.end(), root.begin(), root.end());
    append_u32le(out, static_cast<std::uint32_t>(block.updates.size()));
    append_u32le(out, block.miner_id);
    append_u64le(out, block.nonce);
    append_u64le(out, block.timestamp);
    return out;
}

Hash32 compute_block_hash(const Block& block) { return sha256(block_header_bytes(block)); }

std::size_t block_wire_size(const Block& block) {
    std::size_t size = block_header_bytes(block).size() + 32;  // header + block_hash
    for (const LocalUpdate& u : block.updates) size += encode_update(u).size();
    return size;
}

const Block& genesis_block() {
    static const Block genesis = [] {
        Block b;
        b.height = 0;
        b.prev_hash.fill(0);
        b.miner_id = kGenesisMiner;
        b.nonce = 0;
        b.timestamp = 0;
        b.block_hash = compute_block_hash(b);
        return b;
    }();
    return genesis;
}

MineResult mine_block(std::vector<LocalUpdate> mempool, const Block& parent,
                      std::uint32_t difficulty, PeerId miner_id, std::uint64_t nonce_start,
                      std::uint64_t timestamp, std::uint64_t attempt_limit) {
    MineResult result;
    Block& block = result.block;
    block.height = parent.height + 1;
    block.prev_hash = parent.block_hash;
    block.updates = std::move(mempool);
    std::sort(block.updates.begin(), block.updates.end(),
              [](const LocalUpdate& a, const LocalUpdate& b) {
                  return std::tie(a.round, a.peer_id) < std::tie(b.round, b.peer_id);
              });
    block.miner_id = miner_id;
    block.timestamp = timestamp;

    // The update root is nonce-independent; only the nonce bytes change
    // between attempts.
    Bytes header = block_header_bytes(block);
    const std::size_t nonce_offset = header.size() - 16;  // nonce u64 then timestamp u64

    std::uint64_t nonce = nonce_start;
    for (std::uint64_t attempt = 1; attempt <= attempt_limit; ++attempt, ++nonce) {
        for (int i = 0; i < 8; ++i) {
            header[nonce_offset + i] = static_cast<std::uint8_t>(nonce >> (8 * i));
        }
        const Hash32 h = sha256(header);
        if (leading_zero_bits(h) >= static_cast<int>(difficulty)) {
            block.nonce = nonce;
            block.block_hash = h;
            result.attempts = attempt;
            return result;
        }
    }
    throw Error("mine_block: nonce space exhausted after " + std::to_string(attempt_limit) +
                " attempts at difficulty " + std::to_string(difficulty));
}

const char* to_string(RejectReason reason) {
    switch (reason) {
        case RejectReason::bad_prev_hash: return "bad_prev_hash";
        case RejectReason::bad_height: return "bad_height";
        case RejectReason::insufficient_pow: return "insufficient_pow";
        case RejectReason::bad_block_hash: return "bad_block_hash";
        case RejectReason::bad_signature: return "bad_signature";
        case RejectReason::digest_mismatch: return "digest_mismatch";
        case RejectReason::duplicate_update: return "duplicate_update";
    }
    return "unknown";
}

ValidationResult validate_block(const Block& block, const Block& parent, std::uint32_t difficulty,
                                const SeenUpdateIndex& seen) {
    if (block.prev_hash != parent.block_hash) {
        return ValidationResult::reject(RejectReason::bad_prev_hash,
                                        "prev_hash does not match parent");
    }
    if (block.height != parent.height + 1) {
        return ValidationResult::reject(
            RejectReason::bad_height, "height " + std::to_string(block.height) + " after parent " +
                                          std::to_string(parent.height));
    }
    if (leading_zero_bits(block.block_hash) < static_cast<int>(difficulty)) {
        return ValidationResult::reject(RejectReason::insufficient_pow,
                                        "hash misses difficulty " + std::to_string(difficulty));
    }
    if (compute_block_hash(block) != block.block_hash) {
        return ValidationResult::reject(RejectReason::bad_block_hash,
                                        "stored hash does not match header");
    }
    for (const LocalUpdate& u : block.updates) {
        if (!verify_update_signature(u)) {
            return ValidationResult::reject(
                RejectReason::bad_signature,
                "peer " + std::to_string(u.peer_id) + " round " + std::to_string(u.round));
        }
    }
    for (const LocalUpdate& u : block.updates) {
        if (sha256(u.model_payload) != u.model_digest) {
            return ValidationResult::reject(
                RejectReason::digest_mismatch,
                "peer " + std::to_string(u.peer_id) + " round " + std::to_string(u.round));
        }
    }
    SeenUpdateIndex in_block;
    for (const LocalUpdate& u : block.updates) {
        const auto key = std::make_pair(u.round, u.peer_id);
        if (seen.count(key) || !in_block.insert(key).second) {
            return ValidationResult::reject(
                RejectReason::duplicate_update,
                "peer " + std::to_string(u.peer_id) + " round " + std::to_string(u.round));
        }
    }
    return ValidationResult::accept();
}

ChainState::ChainState(std::uint32_t difficulty) : difficulty_(difficulty) {
    const Block& g = genesis_block();
    blocks_.emplace(g.block_hash, g);
    tip_ = g.block_hash;
}

const Block* ChainState::find_block(const Hash32& hash) const {
    auto it = blocks_.find(hash);
    return it == blocks_.end() ? nullptr : &it->second;
}

std::size_t ChainState::orphan_count() const {
    std::size_t n = 0;
    for (const auto& [_, list] : orphans_) n += list.size();
    return n;
}

bool ChainState::better_tip(const Hash32& candidate) const {
    const Block& cand = blocks_.at(candidate);
    const Block& cur = blocks_.at(tip_);
    if (cand.height != cur.height) return cand.height > cur.height;
    return candidate < tip_;  // lexicographic == big-endian numeric on 32 bytes
}

SeenUpdateIndex ChainState::seen_on_branch(const Hash32& tip) const {
    SeenUpdateIndex seen;
    const Block* b = find_block(tip);
    while (b != nullptr) {
        for (const LocalUpdate& u : b->updates) seen.emplace(u.round, u.peer_id);
        if (b->height == 0) break;
        b = find_block(b->prev_hash);
    }
    return seen;
}

void ChainState::rebuild_confirmed_index() {
    confirmed_.clear();
    const Block* b = find_block(tip_);
    while (b != nullptr) {
        for (const LocalUpdate& u : b->updates) {
            confirmed_.emplace(std::make_pair(u.round, u.peer_id), b->block_hash);
        }
        if (b->height == 0) break;
        b = find_block(b->prev_hash);
    }
}

const LocalUpdate* ChainState::find_confirmed(std::uint64_t round, PeerId peer_id) const {
    auto it = confirmed_.find(std::make_pair(round, peer_id));
    if (it == confirmed_.end()) return nullptr;
    const Block& b = blocks_.at(it->second);
    for (const LocalUpdate& u : b.updates) {
        if (u.round == round && u.peer_id == peer_id) return &u;
    }
    return nullptr;
}

bool ChainState::is_confirmed(std::uint64_t round, PeerId peer_id) const {
    return confirmed_.count(std::make_pair(round, peer_id)) > 0;
}

std::vector<Block> ChainState::canonical_chain() const {
    std::vector<Block> chain;
    const Block* b = find_block(tip_);
    while (b != nullptr) {
        chain.push_back(*b);
        if (b->height == 0) break;
        b = find_block(b->prev_hash);
    }
    std::reverse(chain.begin(), chain.end());
    return chain;
}

std::vector<ChainState::SubmitResult> ChainState::drain_orphans(const Hash32& parent) {
    std::vector<SubmitResult> results;
    auto it = orphans_.find(parent);
    if (it == orphans_.end()) return results;
    std::vector<Block> waiting = std::move(it->second);
    orphans_.erase(it);
    for (const Block& b : waiting) results.push_back(submit_block(b));
    return results;
}

ChainState::SubmitResult ChainState::submit_block(const Block& block) {
    SubmitResult result;
    if (blocks_.count(block.block_hash)) {
        result.status = SubmitStatus::already_known;
        return result;
    }
    auto parent_it = blocks_.find(block.prev_hash);
    if (parent_it == blocks_.end()) {
        orphans_[block.prev_hash].push_back(block);
        result.status = SubmitStatus::orphaned;
        return result;
    }
    result.validation =
        validate_block(block, parent_it->second, difficulty_, seen_on_branch(block.prev_hash));
    if (!result.validation.ok) {
        result.status = SubmitStatus::rejected;
        return result;
    }
    blocks_.emplace(block.block_hash, block);
    result.status = SubmitStatus::accepted;
    if (better_tip(block.block_hash)) {
        tip_ = block.block_hash;
        rebuild_confirmed_index();
        result.tip_changed = true;
    }
    const auto drained = drain_orphans(block.block_hash);
    for (const SubmitResult& r : drained) result.tip_changed = result.tip_changed || r.tip_changed;
    return result;
}

}  // namespace fedchain
