#pragma once

#include <condition_variable>
#include <deque>
#include <mutex>
#include <unordered_map>
#include <vector>

#include "credo/page.hpp"
#include "credo/types.hpp"

namespace credo {

enum class LockMode : std::uint8_t { Shared, Exclusive };

// Per-record S/X locks with FIFO wait queues and a timeout that doubles as
// deadlock resolution.
class LockTable {
  public:
    explicit LockTable(Stats& stats) : stats_(stats) {}

    void acquire(TxnId txn, const RecordId& rid, LockMode mode,
                 std::chrono::milliseconds timeout) {
        std::unique_lock g(mtx_);
        Entry& e = table_[rid];
        if (holds_sufficient(e, txn, mode)) return;
        const std::uint64_t ticket = next_ticket_++;
        e.queue.push_back({txn, mode, ticket});
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        while (!grantable(e, txn, mode, ticket)) {
            if (cv_.wait_until(g, deadline) == std::cv_status::timeout &&
                !grantable(e, txn, mode, ticket)) {
                remove_from_queue(e, ticket);
                throw LockTimeoutError("lock wait timed out");
            }
        }
        remove_from_queue(e, ticket);
        grant(e, txn, mode);
        stats_.lock_acquires.fetch_add(1);
    }

    bool try_acquire(TxnId txn, const RecordId& rid, LockMode mode) {
        std::lock_guard g(mtx_);
        Entry& e = table_[rid];
        if (holds_sufficient(e, txn, mode)) return true;
        if (!compatible_now(e, txn, mode) || !e.queue.empty()) return false;
        grant(e, txn, mode);
        stats_.lock_acquires.fetch_add(1);
        return true;
    }

    void release_all(TxnId txn) {
        {
            std::lock_guard g(mtx_);
            for (auto it = table_.begin(); it != table_.end();) {
                auto& holders = it->second.holders;
                for (auto h = holders.begin(); h != holders.end();) {
                    if (h->txn == txn)
                        h = holders.erase(h);
                    else
                        ++h;
                }
                if (holders.empty() && it->second.queue.empty())
                    it = table_.erase(it);
                else
                    ++it;
            }
        }
        cv_.notify_all();
    }

    bool holds(TxnId txn, const RecordId& rid, LockMode mode) const {
        std::lock_guard g(mtx_);
        auto it = table_.find(rid);
        if (it == table_.end()) return false;
        for (const auto& h : it->second.holders)
            if (h.txn == txn && (h.mode == LockMode::Exclusive || mode == LockMode::Shared))
                return true;
        return false;
    }

    std::size_t held_count() const {
        std::lock_guard g(mtx_);
        std::size_t n = 0;
        for (auto& [_, e] : table_) n += e.holders.size();
        return n;
    }

  private:
    struct Holder {
        TxnId txn;
        LockMode mode;
    };
    struct Waiter {
        TxnId txn;
        LockMode mode;
        std::uint64_t ticket;
    };
    struct Entry {
        std::vector<Holder> holders;
        std::deque<Waiter> queue;
    };

    static bool holds_sufficient(const Entry& e, TxnId txn, LockMode mode) {
        for (const auto& h : e.holders)
            if (h.txn == txn && (h.mode == LockMode::Exclusive || mode == LockMode::Shared))
                return true;
        return false;
    }

    // Compatibility against current holders, ignoring the requester's own
    // shared hold (upgrade path).
    static bool compatible_now(const Entry& e, TxnId txn, LockMode mode) {
        for (const auto& h : e.holders) {
            if (h.txn == txn) continue;
            if (mode == LockMode::Exclusive || h.mode == LockMode::Exclusive) return false;
        }
        return true;
    }

    bool grantable(const Entry& e, TxnId txn, LockMode mode, std::uint64_t ticket) const {
        if (!compatible_now(e, txn, mode)) return false;
        const bool upgrading = holds_sufficient(e, txn, LockMode::Shared);
        if (upgrading) return true;  // upgrades jump the queue once compatible
        for (const auto& w : e.queue) {
            if (w.ticket == ticket) return true;
            // FIFO: an older compatible shared batch may be granted together.
            if (w.mode == LockMode::Exclusive || mode == LockMode::Exclusive) return false;
        }
        return true;
    }

    static void remove_from_queue(Entry& e, std::uint64_t ticket) {
        for (auto it = e.queue.begin(); it != e.queue.end(); ++it) {
            if (it->ticket == ticket) {
                e.queue.erase(it);
                return;
            }
        }
    }

    void grant(Entry& e, TxnId txn, LockMode mode) {
        for (auto& h : e.holders) {
            if (h.txn == txn) {
                h.mode = LockMode::Exclusive;  // upgrade
                return;
            }
        }
        e.holders.push_back({txn, mode});
    }

    Stats& stats_;
    mutable std::mutex mtx_;
    std::condition_variable cv_;
    std::unordered_map<RecordId, Entry, RecordIdHash> table_;
    std::uint64_t next_ticket_ = 0;
};

}  // namespace credo
