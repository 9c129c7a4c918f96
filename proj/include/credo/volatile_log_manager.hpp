#pragma once

#include <algorithm>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <unordered_map>
#include <vector>

#include "credo/log_record.hpp"
#include "credo/types.hpp"

namespace credo {

struct Extent {
    std::uint32_t id = 0;
    std::vector<std::uint8_t> buf;
    std::size_t used = 0;

    std::size_t remaining() const { return buf.size() - used; }
};

// Fixed-size volatile memory blocks handed to private logs; freed extents go
// back on a freelist.
class ExtentPool {
  public:
    ExtentPool(std::uint32_t extent_size, std::uint32_t max_extents)
        : extent_size_(extent_size), max_extents_(max_extents) {}

    std::unique_ptr<Extent> acquire() {
        std::lock_guard g(mtx_);
        if (!free_.empty()) {
            auto e = std::move(free_.back());
            free_.pop_back();
            e->used = 0;
            return e;
        }
        if (allocated_ >= max_extents_) throw ResourceError("extent pool exhausted");
        auto e = std::make_unique<Extent>();
        e->id = allocated_++;
        e->buf.resize(extent_size_);
        return e;
    }

    void release(std::unique_ptr<Extent> e) {
        std::lock_guard g(mtx_);
        free_.push_back(std::move(e));
    }

    std::uint32_t extent_size() const { return extent_size_; }
    std::uint32_t allocated() const { std::lock_guard g(mtx_); return allocated_; }
    std::size_t free_count() const { std::lock_guard g(mtx_); return free_.size(); }

  private:
    mutable std::mutex mtx_;
    std::uint32_t extent_size_;
    std::uint32_t max_extents_;
    std::uint32_t allocated_ = 0;
    std::vector<std::unique_ptr<Extent>> free_;
};

// One transaction's volatile log: a chain of extents holding encoded records,
// plus per-entry bookkeeping. Entries are immutable once the log leaves
// Active, except for the UndoneFlag and the commit-time LSN rewrite.
class PrivateLog {
  public:
    struct Entry {
        std::uint32_t extent_index = 0;
        std::uint32_t offset = 0;     // within the extent
        std::uint32_t size = 0;       // encoded size
        PageId page_id = kNullPage;
        Vlsn vlsn = 0;                // meaningful only for page records
        Lsn local_lsn = 0;            // offset within this private log at append time
        Lsn final_lsn = kNullLsn;
        bool lsn_assigned = false;
        bool undone = false;
        LogRecordType type = LogRecordType::Update;
    };

    PrivateLog(TxnId txn, Vlsn start_vlsn) : txn_id_(txn), start_vlsn_(start_vlsn) {}

    TxnId txn_id() const { return txn_id_; }
    Vlsn start_vlsn() const { return start_vlsn_; }

    // The latch serializes entry/state access against candidate collection.
    std::mutex& latch() { return latch_; }

    TxnState state() const { return state_; }
    bool released() const { return released_; }

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }

    std::span<std::uint8_t> entry_bytes(const Entry& e) {
        return {extents_[e.extent_index]->buf.data() + e.offset, e.size};
    }
    std::span<const std::uint8_t> entry_bytes(const Entry& e) const {
        return {extents_[e.extent_index]->buf.data() + e.offset, e.size};
    }

    LogRecord decode_entry(const Entry& e) const {
        auto rec = decode(entry_bytes(e));
        if (!rec) throw IntegrityError("private log entry corrupt");
        rec->vlsn = e.vlsn;
        return *rec;
    }

    std::size_t extent_count() const { return extents_.size(); }
    Lsn next_local_lsn() const { return next_local_lsn_; }

  private:
    friend class VolatileLogManager;

    TxnId txn_id_;
    Vlsn start_vlsn_;
    TxnState state_ = TxnState::Active;
    bool released_ = false;
    Lsn next_local_lsn_ = 0;
    std::mutex latch_;
    std::vector<std::unique_ptr<Extent>> extents_;
    std::vector<Entry> entries_;
};

struct UndoCandidate {
    LogRecord rec;
    Vlsn vlsn = 0;
    TxnId txn_id = 0;
    TxnState log_state = TxnState::Active;
    bool undone = false;
    bool lsn_assigned = false;
};

// Owns all private logs, the global VLSN counter, and candidate retrieval for
// single-page rollback. Appends by distinct transactions never contend.
class VolatileLogManager {
  public:
    VolatileLogManager(std::uint32_t extent_size, std::uint32_t max_extents)
        : pool_(extent_size, max_extents) {}

    Vlsn current_vlsn() const { return counter_.load(std::memory_order_seq_cst); }

    std::shared_ptr<PrivateLog> open_log(TxnId txn) {
        std::lock_guard g(registry_mtx_);
        if (registry_.count(txn)) throw LogicError("private log already open for txn");
        auto log = std::make_shared<PrivateLog>(txn, current_vlsn());
        log->extents_.push_back(pool_.acquire());
        registry_[txn] = log;
        return log;
    }

    // Appends an encoded record. For page records the caller holds the target
    // page's latch; the returned ticket is stored as the page's PageVLSN.
    Vlsn append(PrivateLog& log, LogRecord rec) {
        std::lock_guard g(log.latch_);
        if (log.state_ != TxnState::Active) throw LogicError("append to a non-active log");
        rec.lsn = log.next_local_lsn_;
        Vlsn ticket = 0;
        if (rec.page_id != kNullPage) {
            ticket = counter_.fetch_add(1, std::memory_order_seq_cst);
            rec.vlsn = ticket;
        }
        const std::size_t size = rec.encoded_size();
        if (size > pool_.extent_size()) throw LogicError("record larger than an extent");
        Extent* tail = log.extents_.back().get();
        if (tail->remaining() < size) {
            log.extents_.push_back(pool_.acquire());  // records never straddle extents
            tail = log.extents_.back().get();
        }
        PrivateLog::Entry e;
        e.extent_index = static_cast<std::uint32_t>(log.extents_.size() - 1);
        e.offset = static_cast<std::uint32_t>(tail->used);
        e.size = static_cast<std::uint32_t>(size);
        e.page_id = rec.page_id;
        e.vlsn = ticket;
        e.local_lsn = rec.lsn;
        e.type = rec.type;
        encode_into(rec, tail->buf.data() + tail->used);
        tail->used += size;
        log.next_local_lsn_ += size;
        log.entries_.push_back(e);
        return ticket;
    }

    void set_state(PrivateLog& log, TxnState next) {
        std::lock_guard g(log.latch_);
        set_state_locked(log, next);
    }

    // Every record for `pid` with vlsn <= upper across all live private logs,
    // sorted by descending VLSN. A log is skipped only when start_vlsn >
    // upper: a ticket equal to the counter value at open can still be drawn
    // by that log's first append, so equality must be scanned.
    std::vector<UndoCandidate> collect_undo_candidates(PageId pid, Vlsn upper) const {
        std::vector<std::shared_ptr<PrivateLog>> logs;
        {
            std::lock_guard g(registry_mtx_);
            logs.reserve(registry_.size());
            for (auto& [_, log] : registry_) logs.push_back(log);
        }
        std::vector<UndoCandidate> out;
        for (auto& log : logs) {
            std::lock_guard g(log->latch_);
            if (log->released_) continue;
            if (log->start_vlsn_ > upper) continue;
            for (const auto& e : log->entries_) {
                if (e.page_id != pid || e.page_id == kNullPage) continue;
                if (e.vlsn > upper) continue;
                UndoCandidate c;
                c.rec = log->decode_entry(e);
                c.vlsn = e.vlsn;
                c.txn_id = log->txn_id_;
                c.log_state = log->state_;
                c.undone = e.undone;
                c.lsn_assigned = e.lsn_assigned;
                out.push_back(std::move(c));
            }
        }
        std::sort(out.begin(), out.end(),
                  [](const UndoCandidate& a, const UndoCandidate& b) { return a.vlsn > b.vlsn; });
        return out;
    }

    // Returns the extents to the pool. Blocks on the log latch, so a scan in
    // progress finishes before the memory is recycled.
    void release_log(TxnId txn) {
        std::shared_ptr<PrivateLog> log;
        {
            std::lock_guard g(registry_mtx_);
            auto it = registry_.find(txn);
            if (it == registry_.end()) throw LogicError("no private log for txn");
            log = it->second;
            if (log->state_ != TxnState::Committed && log->state_ != TxnState::Aborted)
                throw LogicError("release of a live private log");
            registry_.erase(it);
        }
        std::lock_guard g(log->latch_);
        log->released_ = true;
        for (auto& e : log->extents_) pool_.release(std::move(e));
        log->extents_.clear();
    }

    std::shared_ptr<PrivateLog> find(TxnId txn) const {
        std::lock_guard g(registry_mtx_);
        auto it = registry_.find(txn);
        return it == registry_.end() ? nullptr : it->second;
    }

    std::size_t open_count() const {
        std::lock_guard g(registry_mtx_);
        return registry_.size();
    }

    ExtentPool& pool() { return pool_; }

    static void set_state_locked(PrivateLog& log, TxnState next) {
        const TxnState cur = log.state_;
        const bool ok = (cur == TxnState::Active &&
                         (next == TxnState::Committing || next == TxnState::Aborting)) ||
                        (cur == TxnState::Committing && next == TxnState::Committed) ||
                        (cur == TxnState::Aborting && next == TxnState::Aborted);
        if (!ok)
            throw LogicError(std::string("illegal log state transition ") + to_string(cur) +
                             " -> " + to_string(next));
        log.state_ = next;
    }

  private:
    std::atomic<Vlsn> counter_{0};
    ExtentPool pool_;
    mutable std::mutex registry_mtx_;
    std::unordered_map<TxnId, std::shared_ptr<PrivateLog>> registry_;
};

}  // namespace credo
