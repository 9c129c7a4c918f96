#pragma once

// Independent ground truth for the test harness. This file deliberately
// shares no code with the engine: it re-implements the documented log-record
// layout (docs/format.md) with its own reader and checksum, replays acked
// operations for logical state, and blindly applies physical images for page
// state. Keep it free of engine includes.

#include <array>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace credo::oracle {

inline constexpr std::size_t kOraclePageSize = 8192;
using OraclePage = std::array<std::uint8_t, kOraclePageSize>;

namespace raw {

inline std::uint16_t rd16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline std::uint32_t rd32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}
inline std::uint64_t rd64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

inline std::uint32_t checksum(const std::uint8_t* data, std::size_t len) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : (c >> 1);
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

}  // namespace raw

struct RawRecord {
    std::uint64_t lsn = 0;  // byte offset
    std::uint8_t type = 0;  // 1 Update, 2 Commit, 3 SystemCommit, 4 Checkpoint
    std::uint64_t txn_id = 0;
    std::uint64_t page_id = 0;
    std::uint64_t stored_lsn_field = 0;
    std::uint64_t prev_page_lsn = 0;
    std::vector<std::uint8_t> undo;
    std::vector<std::uint8_t> redo;
};

struct LogScan {
    std::vector<RawRecord> records;      // records of complete groups only
    std::vector<std::uint64_t> winners;  // txn ids in group order
    std::uint64_t valid_end = 0;
    bool interleaved_groups = false;     // any group interrupted by another txn
    bool commitless_group_midlog = false;
    std::set<std::uint8_t> types_seen;
};

// Walks the raw log, keeping only groups that end in a commit-type record.
// The trailing torn/commit-less region is reported via valid_end.
inline LogScan scan_log(std::span<const std::uint8_t> log) {
    LogScan out;
    constexpr std::size_t kFixed = 53;
    std::size_t pos = 0;
    std::vector<RawRecord> group;
    std::uint64_t group_txn = 0;
    while (pos + kFixed <= log.size()) {
        const std::uint32_t total = raw::rd32(log.data() + pos);
        if (total < kFixed || pos + total > log.size()) break;
        if (raw::rd32(log.data() + pos + total - 4) != raw::checksum(log.data() + pos, total - 4))
            break;
        const std::uint8_t type = log[pos + 4];
        if (type < 1 || type > 4) break;
        const std::uint16_t undo_len = raw::rd16(log.data() + pos + 45);
        const std::uint16_t redo_len = raw::rd16(log.data() + pos + 47);
        if (kFixed + undo_len + redo_len != total) break;

        RawRecord rec;
        rec.lsn = pos;
        rec.type = type;
        rec.txn_id = raw::rd64(log.data() + pos + 5);
        rec.page_id = raw::rd64(log.data() + pos + 13);
        rec.stored_lsn_field = raw::rd64(log.data() + pos + 21);
        rec.prev_page_lsn = raw::rd64(log.data() + pos + 29);
        rec.undo.assign(log.data() + pos + 49, log.data() + pos + 49 + undo_len);
        rec.redo.assign(log.data() + pos + 49 + undo_len, log.data() + pos + total - 4);
        out.types_seen.insert(type);

        if (group.empty()) {
            group_txn = rec.txn_id;
        } else if (rec.txn_id != group_txn) {
            // Atomic copy forbids this; report it and resynchronize.
            out.interleaved_groups = true;
            out.commitless_group_midlog = true;
            group.clear();
            group_txn = rec.txn_id;
        }
        const bool commits = type == 2 || type == 3;
        group.push_back(std::move(rec));
        pos += total;
        if (commits) {
            for (auto& r : group) out.records.push_back(std::move(r));
            out.winners.push_back(group_txn);
            group.clear();
            out.valid_end = pos;
        }
    }
    return out;
}

// Committed state of one page as of LSN l: blind replay of Update images
// with lsn <= l, in log order, onto zeroes. The page_lsn header field is
// maintained the way the redo rule defines it (last applied LSN + 1).
inline OraclePage expected_page(const LogScan& scan, std::uint64_t pid, std::uint64_t l) {
    OraclePage img;
    img.fill(0);
    std::uint64_t stored = 0;
    for (const auto& rec : scan.records) {
        if (rec.type != 1 || rec.page_id != pid || rec.lsn > l) continue;
        if (rec.redo.size() < 2) continue;
        const std::uint16_t off = raw::rd16(rec.redo.data());
        const std::size_t len = rec.redo.size() - 2;
        if (off + len > kOraclePageSize) continue;
        std::memcpy(img.data() + off, rec.redo.data() + 2, len);
        stored = rec.lsn + 1;
    }
    for (int i = 0; i < 8; ++i) img[i] = static_cast<std::uint8_t>(stored >> (8 * i));
    return img;
}

// Group-boundary LSNs of committed updates to one page (useful for choosing
// time-travel probe points): pairs of (first update lsn, commit record lsn).
inline std::vector<std::pair<std::uint64_t, std::uint64_t>> page_groups(const LogScan& scan,
                                                                        std::uint64_t pid) {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> out;
    std::optional<std::uint64_t> first;
    std::uint64_t txn = 0;
    for (const auto& rec : scan.records) {
        if (rec.type == 1 && rec.page_id == pid) {
            if (!first || rec.txn_id != txn) {
                first = rec.lsn;
                txn = rec.txn_id;
            }
        } else if ((rec.type == 2 || rec.type == 3) && first && rec.txn_id == txn) {
            out.emplace_back(*first, rec.lsn);
            first.reset();
        }
    }
    return out;
}

// --- logical oracle: acked operations, replayed in log (commit) order ---

struct Op {
    enum Kind : std::uint8_t { Insert, Update, Delete } kind;
    std::uint64_t page = 0;
    std::uint16_t slot = 0;
    std::vector<std::uint8_t> payload;
};

using LogicalState = std::map<std::pair<std::uint64_t, std::uint16_t>, std::vector<std::uint8_t>>;

class Journal {
  public:
    // Recorded only upon the engine's durable acknowledgment.
    void record_committed(std::uint64_t txn, std::vector<Op> ops) {
        acked_[txn] = std::move(ops);
    }
    void record_aborted(std::uint64_t txn) { aborted_.insert(txn); }
    // A commit that was submitted but not acknowledged before a crash; the
    // raw log decides whether it won.
    void record_in_flight(std::uint64_t txn, std::vector<Op> ops) {
        in_flight_[txn] = std::move(ops);
    }

    bool is_acked(std::uint64_t txn) const { return acked_.count(txn) != 0; }
    bool is_aborted(std::uint64_t txn) const { return aborted_.count(txn) != 0; }
    bool is_in_flight(std::uint64_t txn) const { return in_flight_.count(txn) != 0; }
    std::size_t acked_count() const { return acked_.size(); }

    // Winners in log order: every acked transaction must be present in the
    // durable log (ack honesty), aborted ones must not, and in-flight ones
    // count iff their commit record survived.
    struct Verdict {
        LogicalState state;
        bool ack_honest = true;
        bool no_aborted_winners = true;
        std::vector<std::uint64_t> missing_acked;
        std::vector<std::uint64_t> durable_aborted;
    };

    Verdict expected_state(const LogScan& scan) const {
        Verdict v;
        std::set<std::uint64_t> durable(scan.winners.begin(), scan.winners.end());
        for (auto& [txn, ops] : acked_) {
            // Read-only transactions leave no trace in the log.
            if (!ops.empty() && !durable.count(txn)) {
                v.ack_honest = false;
                v.missing_acked.push_back(txn);
            }
        }
        for (auto txn : aborted_) {
            if (durable.count(txn)) {
                v.no_aborted_winners = false;
                v.durable_aborted.push_back(txn);
            }
        }
        for (auto txn : scan.winners) {
            auto it = acked_.find(txn);
            const std::vector<Op>* ops = nullptr;
            if (it != acked_.end()) {
                ops = &it->second;
            } else {
                auto fl = in_flight_.find(txn);
                if (fl != in_flight_.end()) ops = &fl->second;
            }
            if (!ops) continue;  // system transaction
            for (const auto& op : *ops) apply(v.state, op);
        }
        // Acked read-only (or no-op) transactions have no log presence but
        // also no state effect; nothing further to fold in.
        return v;
    }

  private:
    static void apply(LogicalState& s, const Op& op) {
        const auto key = std::make_pair(op.page, op.slot);
        switch (op.kind) {
            case Op::Insert:
            case Op::Update:
                s[key] = op.payload;
                break;
            case Op::Delete:
                s.erase(key);
                break;
        }
    }

    std::map<std::uint64_t, std::vector<Op>> acked_;
    std::map<std::uint64_t, std::vector<Op>> in_flight_;
    std::set<std::uint64_t> aborted_;
};

// --- committed-persistent-state scanner ---

struct DiskCheck {
    bool ok = true;
    std::vector<std::string> violations;
};

// Every raw page must equal the replay of committed updates up to its own
// header LSN, and the log (after tail truncation) must contain only complete
// committed groups of the four known record types.
template <typename PageReader>
DiskCheck check_committed_disk(std::span<const std::uint8_t> log,
                               const std::vector<std::uint64_t>& page_ids,
                               PageReader&& read_page) {
    DiskCheck out;
    const LogScan scan = scan_log(log);
    if (scan.interleaved_groups || scan.commitless_group_midlog) {
        out.ok = false;
        out.violations.push_back("incomplete or interleaved group before the valid tail");
    }
    for (std::uint8_t t : scan.types_seen) {
        if (t < 1 || t > 4) {
            out.ok = false;
            out.violations.push_back("unknown record type in the log");
        }
    }
    for (std::uint64_t pid : page_ids) {
        const OraclePage actual = read_page(pid);
        const std::uint64_t stored = raw::rd64(actual.data());
        if (stored == 0) {
            out.ok = false;
            out.violations.push_back("on-disk page " + std::to_string(pid) +
                                     " has no committed state header");
            continue;
        }
        const OraclePage expect = expected_page(scan, pid, stored - 1);
        if (std::memcmp(actual.data(), expect.data(), kOraclePageSize) != 0) {
            out.ok = false;
            out.violations.push_back("page " + std::to_string(pid) +
                                     " diverges from the state named by its PageLSN");
        }
    }
    return out;
}

}  // namespace credo::oracle
