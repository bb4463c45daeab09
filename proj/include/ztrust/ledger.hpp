// Simulated blockchain: smart-contract-style verification of submitted
// updates, round-robin block mining, chain validation, trust-snapshot
// storage, and the line-delimited export format.
//
// Canonical byte layouts (all little-endian, doubles as IEEE-754 bits):
//   record digest = sha256( device_id:i64 || round:i64 || dim:u64 || values:f64... )
//   block hash    = sha256( index:u64 || prev_hash:32B || round:i64 || miner_id:i64
//                           || n_records:u64 || per record (digest:32B || submitted_at:f64)
//                           || has_snapshot:u8 || [n_entries:u64 || per entry
//                              (device_id:i64 || trust:f64), ascending device_id] )
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ztrust/errors.hpp"
#include "ztrust/hash.hpp"
#include "ztrust/model.hpp"

namespace ztrust {

struct UpdateRecord {
    std::int64_t device_id = 0;
    std::int64_t round = 0;
    ParamVector update;
    Hash32 update_digest{};
    double submitted_at = 0.0; // simulated seconds within the round
};

inline Hash32 record_digest(std::int64_t device_id, std::int64_t round,
                            const ParamVector& update) {
    ByteSink sink;
    sink.i64(device_id);
    sink.i64(round);
    sink.u64(update.size());
    for (double v : update) sink.f64(v);
    return sink.digest();
}

inline UpdateRecord make_record(std::int64_t device_id, std::int64_t round, ParamVector update,
                                double submitted_at) {
    UpdateRecord r;
    r.device_id = device_id;
    r.round = round;
    r.update = std::move(update);
    r.update_digest = record_digest(device_id, round, r.update);
    r.submitted_at = submitted_at;
    return r;
}

struct VerificationPolicy {
    std::size_t expected_dim = 0;
    double max_update_norm = 1.0;
    bool allow_duplicate_per_round = false;

    void validate() const {
        if (expected_dim == 0) {
            throw std::invalid_argument("VerificationPolicy: expected_dim must be >= 1");
        }
        if (!(max_update_norm > 0.0)) {
            throw std::invalid_argument("VerificationPolicy: max_update_norm must be > 0");
        }
    }
};

enum class RejectReason { dim, nonfinite, norm, stale_round, duplicate, digest };

inline const char* reject_reason_name(RejectReason r) {
    switch (r) {
        case RejectReason::dim: return "dim";
        case RejectReason::nonfinite: return "nonfinite";
        case RejectReason::norm: return "norm";
        case RejectReason::stale_round: return "stale_round";
        case RejectReason::duplicate: return "duplicate";
        case RejectReason::digest: return "digest";
    }
    return "?";
}

struct VerifyResult {
    bool accepted = false;
    RejectReason reason = RejectReason::dim; // meaningful only when rejected
};

// What verification can see of the chain: the open round and which devices
// already had a record accepted in it.
struct RoundState {
    std::int64_t round = 0;
    std::set<std::int64_t> accepted_devices;
};

// The smart-contract predicate suite. Checks run in a fixed order and the
// first failure names the rejection; acceptance requires all of: expected
// dimension, finite entries, L2 norm within bound (closed), matching round,
// no duplicate from the device this round, and a digest that recomputes.
inline VerifyResult verify_update(const UpdateRecord& record, const VerificationPolicy& policy,
                                  const RoundState& state) {
    policy.validate();
    auto reject = [](RejectReason r) { return VerifyResult{false, r}; };

    if (record.update.size() != policy.expected_dim) return reject(RejectReason::dim);
    for (double v : record.update) {
        if (!std::isfinite(v)) return reject(RejectReason::nonfinite);
    }
    double sq = 0.0;
    for (double v : record.update) sq += v * v;
    if (std::sqrt(sq) > policy.max_update_norm) return reject(RejectReason::norm);
    if (record.round != state.round) return reject(RejectReason::stale_round);
    if (!policy.allow_duplicate_per_round && state.accepted_devices.count(record.device_id)) {
        return reject(RejectReason::duplicate);
    }
    if (record.update_digest != record_digest(record.device_id, record.round, record.update)) {
        return reject(RejectReason::digest);
    }
    return VerifyResult{true, RejectReason::dim};
}

struct Block {
    std::uint64_t index = 0;
    Hash32 prev_hash{};
    std::int64_t round = 0;
    std::vector<UpdateRecord> records;
    std::optional<std::map<std::int64_t, double>> trust_snapshot;
    std::int64_t miner_id = 0;
    Hash32 block_hash{};
};

inline Hash32 block_content_hash(const Block& b) {
    ByteSink sink;
    sink.u64(b.index);
    sink.raw(b.prev_hash);
    sink.i64(b.round);
    sink.i64(b.miner_id);
    sink.u64(b.records.size());
    for (const auto& r : b.records) {
        sink.raw(r.update_digest);
        sink.f64(r.submitted_at);
    }
    sink.u8(b.trust_snapshot ? 1 : 0);
    if (b.trust_snapshot) {
        sink.u64(b.trust_snapshot->size());
        for (const auto& [id, trust] : *b.trust_snapshot) {
            sink.i64(id);
            sink.f64(trust);
        }
    }
    return sink.digest();
}

// Append-only hash chain. Construction mines the genesis block (index 0,
// zero prev_hash, round -1, no records); miners take turns round-robin.
class Ledger {
  public:
    Ledger() {
        Block genesis;
        genesis.index = 0;
        genesis.prev_hash = Hash32{};
        genesis.round = -1;
        genesis.miner_id = 0;
        genesis.block_hash = block_content_hash(genesis);
        blocks_.push_back(std::move(genesis));
    }

    // Reassembles a chain exactly as given (import path); no validation here,
    // validate_chain judges it.
    static Ledger from_blocks(std::vector<Block> blocks) {
        if (blocks.empty()) throw std::invalid_argument("Ledger::from_blocks: empty chain");
        Ledger l;
        l.blocks_ = std::move(blocks);
        return l;
    }

    const std::vector<Block>& blocks() const { return blocks_; }
    const Block& back() const { return blocks_.back(); }

    const Block& mine_block(std::int64_t round, std::vector<UpdateRecord> records,
                            std::optional<std::map<std::int64_t, double>> trust_snapshot,
                            std::int64_t n_miners) {
        if (n_miners < 1) throw std::invalid_argument("mine_block: n_miners must be >= 1");
        if (round < 0) throw std::invalid_argument("mine_block: round must be >= 0");
        if (trust_snapshot) {
            for (const auto& [id, trust] : *trust_snapshot) {
                (void)id;
                if (!(trust >= 0.0 && trust <= 1.0)) {
                    throw std::invalid_argument("mine_block: trust values must be in [0, 1]");
                }
            }
        }
        Block b;
        b.index = blocks_.back().index + 1;
        b.prev_hash = blocks_.back().block_hash;
        b.round = round;
        b.records = std::move(records);
        b.trust_snapshot = std::move(trust_snapshot);
        b.miner_id = round % n_miners;
        b.block_hash = block_content_hash(b);
        blocks_.push_back(std::move(b));
        return blocks_.back();
    }

    // nullopt when the chain is intact; otherwise the index of the first
    // block whose stored bytes no longer recompute or link.
    std::optional<std::uint64_t> validate_chain() const {
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            const Block& b = blocks_[i];
            if (b.index != i) return i;
            if (i == 0) {
                if (b.prev_hash != Hash32{}) return 0;
            } else if (b.prev_hash != blocks_[i - 1].block_hash) {
                return i;
            }
            for (const auto& r : b.records) {
                if (r.update_digest != record_digest(r.device_id, r.round, r.update)) return i;
            }
            if (b.block_hash != block_content_hash(b)) return i;
        }
        return std::nullopt;
    }

    // Snapshot from the highest-index block carrying one, raw.
    std::optional<std::map<std::int64_t, double>> latest_trust_snapshot() const {
        for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
            if (it->trust_snapshot) return it->trust_snapshot;
        }
        return std::nullopt;
    }

    // Same, materialized over the device universe: devices missing from the
    // snapshot (or the whole fleet, when none was ever stored) sit at t0.
    std::map<std::int64_t, double> latest_trust(double t0, std::int64_t n_devices) const {
        std::map<std::int64_t, double> out;
        for (std::int64_t id = 0; id < n_devices; ++id) out[id] = t0;
        if (auto snap = latest_trust_snapshot()) {
            for (const auto& [id, trust] : *snap) out[id] = trust;
        }
        return out;
    }

    // One JSON object per line, hashes hex-encoded; doubles round-trip
    // exactly, so an export revalidates bit-for-bit.
    void export_jsonl(std::ostream& out) const {
        for (const Block& b : blocks_) {
            nlohmann::json jb;
            jb["index"] = b.index;
            jb["prev_hash"] = to_hex(b.prev_hash);
            jb["round"] = b.round;
            jb["miner_id"] = b.miner_id;
            auto& recs = jb["records"] = nlohmann::json::array();
            for (const auto& r : b.records) {
                nlohmann::json jr;
                jr["device_id"] = r.device_id;
                jr["round"] = r.round;
                jr["update"] = r.update;
                jr["digest"] = to_hex(r.update_digest);
                jr["submitted_at"] = r.submitted_at;
                recs.push_back(std::move(jr));
            }
            if (b.trust_snapshot) {
                auto& snap = jb["trust_snapshot"] = nlohmann::json::object();
                for (const auto& [id, trust] : *b.trust_snapshot) {
                    snap[std::to_string(id)] = trust;
                }
            } else {
                jb["trust_snapshot"] = nullptr;
            }
            jb["block_hash"] = to_hex(b.block_hash);
            out << jb.dump() << '\n';
        }
    }

    void export_file(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot open for writing: " + path);
        export_jsonl(out);
        if (!out) throw IoError("write failed: " + path);
    }

    static Ledger import_jsonl(std::istream& in) {
        std::vector<Block> blocks;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            nlohmann::json jb;
            try {
                jb = nlohmann::json::parse(line);
                Block b;
                b.index = jb.at("index").get<std::uint64_t>();
                b.prev_hash = hash_from_hex(jb.at("prev_hash").get<std::string>());
                b.round = jb.at("round").get<std::int64_t>();
                b.miner_id = jb.at("miner_id").get<std::int64_t>();
                for (const auto& jr : jb.at("records")) {
                    UpdateRecord r;
                    r.device_id = jr.at("device_id").get<std::int64_t>();
                    r.round = jr.at("round").get<std::int64_t>();
                    r.update = jr.at("update").get<ParamVector>();
                    r.update_digest = hash_from_hex(jr.at("digest").get<std::string>());
                    r.submitted_at = jr.at("submitted_at").get<double>();
                    b.records.push_back(std::move(r));
                }
                const auto& snap = jb.at("trust_snapshot");
                if (!snap.is_null()) {
                    std::map<std::int64_t, double> m;
                    for (const auto& [key, value] : snap.items()) {
                        m[std::stoll(key)] = value.get<double>();
                    }
                    b.trust_snapshot = std::move(m);
                }
                b.block_hash = hash_from_hex(jb.at("block_hash").get<std::string>());
                blocks.push_back(std::move(b));
            } catch (const std::exception& e) {
                throw FormatError("ledger line " + std::to_string(lineno) + ": " + e.what());
            }
        }
        if (blocks.empty()) throw FormatError("ledger file has no blocks");
        return from_blocks(std::move(blocks));
    }

    static Ledger import_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open: " + path);
        return import_jsonl(in);
    }

  private:
    std::vector<Block> blocks_;
};

}  // namespace ztrust
