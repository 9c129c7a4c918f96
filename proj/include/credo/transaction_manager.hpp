#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "credo/buffer_pool.hpp"
#include "credo/lock_table.hpp"
#include "credo/persistent_log.hpp"
#include "credo/types.hpp"
#include "credo/volatile_log_manager.hpp"

namespace credo {

enum class TxnKind : std::uint8_t { User, System };

class Transaction {
  public:
    Transaction(TxnId id, TxnKind kind, std::shared_ptr<PrivateLog> log)
        : id_(id), kind_(kind), log_(std::move(log)) {}

    TxnId id() const { return id_; }
    TxnKind kind() const { return kind_; }
    PrivateLog& log() { return *log_; }
    TxnState state() const { return log_->state(); }

    Lsn first_record_lsn() const { return first_record_lsn_; }
    Lsn commit_record_lsn() const { return commit_record_lsn_; }

  private:
    friend class TransactionManager;

    TxnId id_;
    TxnKind kind_;
    std::shared_ptr<PrivateLog> log_;
    std::vector<std::pair<std::string, std::size_t>> savepoints_;
    std::map<PageId, std::uint32_t> live_page_records_;
    Lsn first_record_lsn_ = kNullLsn;
    Lsn commit_record_lsn_ = kNullLsn;

    // Commit completion handshake with the daemon.
    std::mutex done_mtx_;
    std::condition_variable done_cv_;
    bool done_ = false;
    bool failed_ = false;
};

// Transaction lifecycle: update logging under WAL order, commit through LSN
// assignment plus one atomic copy into the persistent log (group committed),
// abort as a backward scan over the private log, savepoints as partial
// backward scans. System transactions run the same commit path with a
// SystemCommit record and take no record locks.
class TransactionManager {
  public:
    TransactionManager(const Config& cfg, Stats& stats, VolatileLogManager& vlm,
                       PersistentLog& plog, BufferPool& pool, LockTable& locks,
                       std::shared_mutex& coord)
        : cfg_(cfg), stats_(stats), vlm_(vlm), plog_(plog), pool_(pool), locks_(locks),
          coord_(coord) {
        if (!cfg_.inline_commit) daemon_ = std::thread([this] { daemon_loop(); });
    }

    ~TransactionManager() { stop(); }

    void stop() {
        {
            std::lock_guard g(queue_mtx_);
            stopping_ = true;
        }
        queue_cv_.notify_all();
        if (daemon_.joinable()) daemon_.join();
        // Fail anything still queued.
        std::deque<Transaction*> leftovers;
        {
            std::lock_guard g(queue_mtx_);
            leftovers.swap(queue_);
        }
        for (Transaction* t : leftovers) signal_done(*t, /*failed=*/true);
    }

    void mark_crashed() {
        crashed_.store(true);
        stop();
    }
    bool crashed() const { return crashed_.load(); }

    // Quiesce barrier for raw-disk inspection: the daemon parks between
    // batches and no queued commit is processed while paused.
    void pause(bool on) {
        std::unique_lock g(queue_mtx_);
        paused_ = on;
        if (on) {
            if (!daemon_.joinable()) return;
            pause_cv_.wait(g, [&] { return daemon_idle_ || stopping_; });
        } else {
            queue_cv_.notify_all();
        }
    }

    // After commit_count() multiples of checkpoint_interval, the hook runs on
    // the committing thread (daemon or inline caller).
    void set_checkpoint_hook(std::function<void()> hook) { checkpoint_hook_ = std::move(hook); }

    Transaction& begin(TxnKind kind = TxnKind::User) {
        if (crashed_.load()) throw CrashInjected{};
        const TxnId id = next_txn_.fetch_add(1);
        auto log = vlm_.open_log(id);
        auto txn = std::make_unique<Transaction>(id, kind, std::move(log));
        Transaction* raw = txn.get();
        std::lock_guard g(registry_mtx_);
        registry_[id] = std::move(txn);
        return *raw;
    }

    // Applies the after image in place and logs the update. Caller holds the
    // page's exclusive latch; the PageLSN is not touched here.
    void log_update(Transaction& t, BufferFrame& frame, std::uint16_t offset,
                    std::span<const std::uint8_t> before, std::span<const std::uint8_t> after) {
        if (t.state() != TxnState::Active) throw LogicError("update on a non-active txn");
        if (before.size() != after.size()) throw LogicError("before/after image size mismatch");
        if (!frame.latched_exclusive_by_me()) throw LogicError("update without the page latch");
        if (before.empty()) return;  // zero-length update: no record
        if (std::memcmp(frame.image().data() + offset, before.data(), before.size()) != 0)
            throw LogicError("before-image does not match the page content");

        LogRecord rec;
        rec.type = LogRecordType::Update;
        rec.txn_id = t.id();
        rec.page_id = frame.pid();
        rec.undo = make_image_payload(offset, before);
        rec.redo = make_image_payload(offset, after);

        std::memcpy(frame.image().data() + offset, after.data(), after.size());
        const Vlsn ticket = vlm_.append(t.log(), std::move(rec));
        frame.set_page_vlsn(ticket);
        frame.add_uncommitted(+1);
        t.live_page_records_[frame.pid()]++;
    }

    // Checkpoint records ride the same commit path.
    void append_raw(Transaction& t, LogRecord rec) {
        rec.txn_id = t.id();
        vlm_.append(t.log(), std::move(rec));
    }

    struct CommitInfo {
        Lsn first_record_lsn = kNullLsn;
        Lsn commit_record_lsn = kNullLsn;
    };

    CommitInfo commit(Transaction& t) {
        if (crashed_.load()) throw CrashInjected{};
        if (t.state() != TxnState::Active) throw LogicError("commit on a non-active txn");

        if (live_bytes(t) == 0) {
            // Read-only (or fully rolled back): no reservation, nothing written.
            vlm_.set_state(t.log(), TxnState::Committing);
            finalize_committed(t);
            drop(t);
            run_checkpoint_hook_if_due();
            return {};
        }

        LogRecord commit_rec;
        commit_rec.type = t.kind() == TxnKind::System ? LogRecordType::SystemCommit
                                                      : LogRecordType::Commit;
        commit_rec.txn_id = t.id();
        commit_rec.page_id = kNullPage;
        vlm_.append(t.log(), std::move(commit_rec));
        vlm_.set_state(t.log(), TxnState::Committing);

        if (cfg_.inline_commit) {
            std::vector<Transaction*> batch{&t};
            commit_batch(batch);
        } else {
            {
                std::lock_guard g(queue_mtx_);
                if (stopping_) throw EngineStoppedError("commit daemon is down");
                queue_.push_back(&t);
            }
            queue_cv_.notify_all();
        }
        const CommitInfo info = wait_done(t);
        run_checkpoint_hook_if_due();
        return info;
    }

    // Backward scan over the private log; no compensation records, no
    // undo-next. Held exclusively against flushers for the whole undo window.
    void abort(Transaction& t) {
        if (t.state() != TxnState::Active) throw LogicError("abort on a non-active txn");
        vlm_.set_state(t.log(), TxnState::Aborting);
        if (!t.live_page_records_.empty()) {
            std::unique_lock coord(coord_);
            undo_entries_from(t, 0);
        }
        vlm_.set_state(t.log(), TxnState::Aborted);
        locks_.release_all(t.id());
        vlm_.release_log(t.id());
        stats_.aborts.fetch_add(1);
        drop(t);
    }

    void savepoint(Transaction& t, const std::string& name) {
        if (t.state() != TxnState::Active) throw LogicError("savepoint on a non-active txn");
        t.savepoints_.emplace_back(name, t.log().entries().size());
    }

    void rollback_to(Transaction& t, const std::string& name) {
        if (t.state() != TxnState::Active) throw LogicError("rollback on a non-active txn");
        std::size_t mark = 0;
        bool found = false;
        std::size_t keep = 0;
        for (std::size_t i = t.savepoints_.size(); i-- > 0;) {
            if (t.savepoints_[i].first == name) {
                mark = t.savepoints_[i].second;
                keep = i + 1;  // the savepoint itself survives
                found = true;
                break;
            }
        }
        if (!found) throw NotFoundError("unknown savepoint: " + name);
        {
            std::unique_lock coord(coord_);
            undo_entries_from(t, mark);
        }
        t.savepoints_.resize(keep);
    }

    // Runs `body` as a system transaction: physical representation changes
    // only, page latches for protection, committed immediately.
    Transaction& begin_system() { return begin(TxnKind::System); }

    template <typename Body>
    CommitInfo run_system_txn(Body&& body) {
        Transaction& t = begin(TxnKind::System);
        try {
            body(t);
        } catch (...) {
            abort(t);
            throw;
        }
        const CommitInfo info = commit(t);
        stats_.system_commits.fetch_add(1);
        return info;
    }

    std::uint64_t commit_count() const { return stats_.commits.load(); }

    LockTable& locks() { return locks_; }

    // Exact log-space footprint of the live records, known at commit time.
    static std::uint64_t live_bytes(Transaction& t) {
        std::lock_guard g(t.log().latch());
        std::uint64_t s = 0;
        for (const auto& e : t.log().entries())
            if (!e.undone) s += e.size;
        return s;
    }

  private:
    // --- commit machinery ---

    void daemon_loop() {
        for (;;) {
            std::vector<Transaction*> batch;
            {
                std::unique_lock g(queue_mtx_);
                daemon_idle_ = true;
                pause_cv_.notify_all();
                queue_cv_.wait(g, [&] { return stopping_ || (!queue_.empty() && !paused_); });
                if (queue_.empty()) {
                    if (stopping_) return;
                    continue;
                }
                daemon_idle_ = false;
                g.unlock();
                // Group commit window: let more members arrive.
                if (cfg_.group_commit_window.count() > 0)
                    std::this_thread::sleep_for(cfg_.group_commit_window);
                g.lock();
                while (!queue_.empty() && batch.size() < cfg_.max_commit_batch) {
                    batch.push_back(queue_.front());
                    queue_.pop_front();
                }
            }
            try {
                commit_batch(batch);
            } catch (const CrashInjected&) {
                crashed_.store(true);
                plog_.stop();
                for (Transaction* t : batch) signal_done(*t, /*failed=*/true);
                // Drain and fail the rest; the engine is gone.
                std::lock_guard g(queue_mtx_);
                stopping_ = true;
                while (!queue_.empty()) {
                    signal_done(*queue_.front(), true);
                    queue_.pop_front();
                }
                return;
            }
            for (Transaction* t : batch) signal_done(*t, /*failed=*/false);
        }
    }

    // One reservation for the whole batch, one atomic copy per member over
    // contiguous sub-ranges in list order, one sync.
    void commit_batch(std::vector<Transaction*>& batch) {
        std::vector<std::uint64_t> sizes(batch.size());
        std::uint64_t total = 0;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            sizes[i] = live_bytes(*batch[i]);
            total += sizes[i];
        }
        const Lsn base = plog_.reserve_space(total);
        Lsn at = base;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            assign_lsns(*batch[i], at);
            at += sizes[i];
        }
        at = base;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            auto bytes = gather_live_bytes(*batch[i]);
            plog_.write_group(at, bytes);
            at += sizes[i];
        }
        plog_.sync_to(base + total);
        for (Transaction* t : batch) finalize_committed(*t);
    }

    // LSN assignment: local offsets are recomputed over the live records so
    // LSN = byte offset holds after partial rollbacks, then each page record
    // is chained through the current PageLSN under that page's latch.
    void assign_lsns(Transaction& t, Lsn base) {
        std::lock_guard g(t.log().latch());
        Lsn at = base;
        for (auto& e : t.log().entries()) {
            if (e.undone) continue;
            auto bytes = t.log().entry_bytes(e);
            Lsn prev = kNullLsn;
            if (e.page_id != kNullPage) {
                FrameGuard frame = pool_.lookup(e.page_id);
                if (!frame) throw LogicError("page with live records not resident");
                XLatch x(*frame);
                const auto stored = frame->stored_lsn();
                prev = stored == kVirginStoredLsn ? kNullLsn : from_stored_lsn(stored);
                patch_lsn_fields(bytes, at, prev);
                frame->set_stored_lsn(to_stored_lsn(at));
            } else {
                patch_lsn_fields(bytes, at, prev);
            }
            e.final_lsn = at;
            e.lsn_assigned = true;
            if (t.first_record_lsn_ == kNullLsn) t.first_record_lsn_ = at;
            if (is_commit_type(e.type)) t.commit_record_lsn_ = at;
            at += e.size;
        }
    }

    std::vector<std::uint8_t> gather_live_bytes(Transaction& t) {
        std::lock_guard g(t.log().latch());
        std::vector<std::uint8_t> out;
        for (const auto& e : t.log().entries()) {
            if (e.undone) continue;
            auto b = t.log().entry_bytes(e);
            out.insert(out.end(), b.begin(), b.end());
        }
        return out;
    }

    void finalize_committed(Transaction& t) {
        for (auto& [pid, count] : t.live_page_records_) {
            if (FrameGuard f = pool_.lookup(pid)) f->add_uncommitted(-static_cast<std::int32_t>(count));
        }
        t.live_page_records_.clear();
        vlm_.set_state(t.log(), TxnState::Committed);
        locks_.release_all(t.id());
        vlm_.release_log(t.id());
        stats_.commits.fetch_add(1);
    }

    CommitInfo wait_done(Transaction& t) {
        if (cfg_.inline_commit) {
            const CommitInfo info{t.first_record_lsn_, t.commit_record_lsn_};
            drop(t);
            return info;
        }
        std::unique_lock g(t.done_mtx_);
        t.done_cv_.wait(g, [&] { return t.done_; });
        const bool failed = t.failed_;
        const CommitInfo info{t.first_record_lsn_, t.commit_record_lsn_};
        g.unlock();
        drop(t);
        if (failed) {
            if (crashed_.load()) throw CrashInjected{};
            throw EngineStoppedError("commit failed: engine stopping");
        }
        return info;
    }

    void signal_done(Transaction& t, bool failed) {
        // Notify under the mutex: the waiter may destroy the transaction the
        // moment it observes done_.
        std::lock_guard g(t.done_mtx_);
        t.done_ = true;
        t.failed_ = failed;
        t.done_cv_.notify_all();
    }

    void run_checkpoint_hook_if_due() {
        if (!checkpoint_hook_ || cfg_.checkpoint_interval == 0) return;
        const std::uint64_t c = stats_.commits.load();
        std::uint64_t expected = last_checkpoint_commits_.load();
        if (c >= expected + cfg_.checkpoint_interval &&
            last_checkpoint_commits_.compare_exchange_strong(expected, c)) {
            checkpoint_hook_();
        }
    }

    // --- abort machinery ---

    // Undoes entries at index >= from, newest first, in the buffered frames.
    void undo_entries_from(Transaction& t, std::size_t from) {
        auto& entries = t.log().entries();
        for (std::size_t i = entries.size(); i-- > from;) {
            PrivateLog::Entry& e = entries[i];
            if (e.undone || e.page_id == kNullPage) continue;
            const LogRecord rec = [&] {
                std::lock_guard g(t.log().latch());
                return t.log().decode_entry(e);
            }();
            FrameGuard frame = pool_.lookup(e.page_id);
            if (!frame) throw LogicError("page with live records not resident");
            {
                XLatch x(*frame);
                page::apply_image(frame->image(), rec.undo);
                frame->add_uncommitted(-1);
            }
            {
                std::lock_guard g(t.log().latch());
                e.undone = true;
            }
            auto it = t.live_page_records_.find(e.page_id);
            if (it != t.live_page_records_.end() && --it->second == 0)
                t.live_page_records_.erase(it);
        }
    }

    void drop(Transaction& t) {
        std::lock_guard g(registry_mtx_);
        registry_.erase(t.id());
    }

    const Config& cfg_;
    Stats& stats_;
    VolatileLogManager& vlm_;
    PersistentLog& plog_;
    BufferPool& pool_;
    LockTable& locks_;
    std::shared_mutex& coord_;

    std::atomic<TxnId> next_txn_{1};
    std::mutex registry_mtx_;
    std::unordered_map<TxnId, std::unique_ptr<Transaction>> registry_;

    std::thread daemon_;
    std::mutex queue_mtx_;
    std::condition_variable queue_cv_;
    std::deque<Transaction*> queue_;
    bool stopping_ = false;
    bool paused_ = false;
    bool daemon_idle_ = false;
    std::condition_variable pause_cv_;
    std::atomic<bool> crashed_{false};
    std::function<void()> checkpoint_hook_;
    std::atomic<std::uint64_t> last_checkpoint_commits_{0};
};

}  // namespace credo
