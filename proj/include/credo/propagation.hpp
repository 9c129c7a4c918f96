#pragma once

#include <algorithm>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <shared_mutex>
#include <thread>
#include <vector>

#include "credo/buffer_pool.hpp"
#include "credo/persistent_log.hpp"
#include "credo/transaction_manager.hpp"
#include "credo/types.hpp"
#include "credo/volatile_log_manager.hpp"

namespace credo {

enum class FlushOutcome : std::uint8_t { Flushed, Abandoned, Skipped };

// Checkpoint payload: packed (page_id u64, redo_bound u64) pairs; the bound is
// the page's last propagated LSN, 0 when nothing was ever propagated.
inline std::vector<std::uint8_t> encode_checkpoint_entries(
    std::span<const std::pair<PageId, Lsn>> entries) {
    std::vector<std::uint8_t> out(entries.size() * 16);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        detail::put_u64(out.data() + i * 16, entries[i].first);
        detail::put_u64(out.data() + i * 16 + 8, entries[i].second);
    }
    return out;
}

inline std::vector<std::pair<PageId, Lsn>> decode_checkpoint_entries(
    std::span<const std::uint8_t> payload) {
    if (payload.size() % 16 != 0) throw IntegrityError("malformed checkpoint payload");
    std::vector<std::pair<PageId, Lsn>> out(payload.size() / 16);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].first = detail::get_u64(payload.data() + i * 16);
        out[i].second = detail::get_u64(payload.data() + i * 16 + 8);
    }
    return out;
}

// The page cleaner: copies a frame, rolls the copy back to its latest
// committed state, and writes it WAL-safely. Also takes fuzzy checkpoints
// listing only unpropagated pages.
class Propagation {
  public:
    Propagation(const Config& cfg, Stats& stats, VolatileLogManager& vlm, PersistentLog& plog,
                BufferPool& pool, TransactionManager& tm, std::shared_mutex& coord)
        : cfg_(cfg), stats_(stats), vlm_(vlm), plog_(plog), pool_(pool), tm_(tm), coord_(coord) {}

    ~Propagation() { stop(); }

    void start_cleaner() {
        if (cleaner_.joinable()) return;
        cleaner_ = std::thread([this] { cleaner_loop(); });
    }

    void stop() {
        {
            std::lock_guard g(stop_mtx_);
            stopping_ = true;
        }
        stop_cv_.notify_all();
        if (cleaner_.joinable()) cleaner_.join();
    }

    void pause(bool on) {
        {
            std::lock_guard g(stop_mtx_);
            paused_ = on;
            if (!on) cleaner_idle_ = false;
        }
        stop_cv_.notify_all();
        if (on) {
            // Wait until the cleaner parks between passes.
            std::unique_lock g(stop_mtx_);
            stop_cv_.wait(g, [&] { return cleaner_idle_ || stopping_ || !cleaner_.joinable(); });
        }
    }

    FlushOutcome flush_page(PageId pid) {
        FrameGuard frame = pool_.lookup(pid);
        if (!frame) return FlushOutcome::Skipped;

        PageImage copy;
        std::uint64_t copy_stored;
        Vlsn copy_vlsn;
        {
            // Shared against aborts/partial rollbacks for the whole
            // copy+scan+undo window, so an in-place undo can never land
            // between the copy and the candidate scan.
            std::shared_lock coord(coord_);
            {
                XLatch x(*frame);
                copy = frame->image();
                copy_stored = frame->stored_lsn();
                copy_vlsn = frame->page_vlsn();
            }
            if (copy_stored == kVirginStoredLsn)
                return FlushOutcome::Skipped;  // nothing committed to propagate

            configurable_wait();

            auto candidates = vlm_.collect_undo_candidates(pid, copy_vlsn);
            const Lsn copy_lsn = from_stored_lsn(copy_stored);
            for (const auto& c : candidates) {
                if (c.log_state == TxnState::Aborted || c.undone) continue;
                if (c.lsn_assigned && c.rec.lsn <= copy_lsn) continue;
                // Undoing a record whose transaction commits concurrently just
                // leaves the copy at an older committed state.
                page::apply_image(copy, c.rec.undo);
                stats_.spr_undos.fetch_add(1);
            }
        }

        // WAL: the image names state copy_lsn, so that record's whole group
        // must be durable first.
        plog_.wait_durable_above(from_stored_lsn(copy_stored));

        // If a commit assigned a new PageLSN since the copy was taken, the
        // copy may carry an update whose private log is already released;
        // abandon and let a later pass retry from a fresh copy.
        if (frame->stored_lsn() != copy_stored) {
            stats_.flush_abandons.fetch_add(1);
            return FlushOutcome::Abandoned;
        }

        plog_.disk().write_page(pid, copy);
        stats_.pages_flushed.fetch_add(1);

        {
            XLatch x(*frame);
            if (frame->stored_lsn() == copy_stored) frame->set_propagated_stored(copy_stored);
        }
        return FlushOutcome::Flushed;
    }

    // Flushes up to `budget` unpropagated frames, oldest propagated LSN first.
    std::size_t clean_pass(std::size_t budget) {
        struct Item {
            PageId pid;
            std::uint64_t order;
        };
        std::vector<Item> todo;
        pool_.for_each_resident([&](BufferFrame& f) {
            if (f.stored_lsn() == kVirginStoredLsn) return;
            if (f.is_propagated()) return;
            const auto p = f.propagated_stored();
            todo.push_back({f.pid(), p == kNeverPropagated ? 0 : p});
        });
        std::sort(todo.begin(), todo.end(), [](const Item& a, const Item& b) {
            return a.order < b.order || (a.order == b.order && a.pid < b.pid);
        });
        std::size_t flushed = 0;
        for (const auto& item : todo) {
            if (flushed >= budget) break;
            if (flush_page(item.pid) == FlushOutcome::Flushed) ++flushed;
        }
        return flushed;
    }

    void flush_all() {
        for (int round = 0; round < 1000; ++round) {
            if (clean_pass(std::numeric_limits<std::size_t>::max()) == 0) {
                bool any = false;
                pool_.for_each_resident([&](BufferFrame& f) {
                    if (f.stored_lsn() != kVirginStoredLsn && !f.is_propagated()) any = true;
                });
                if (!any) return;
            }
        }
        throw LogicError("flush_all did not converge");
    }

    // Fuzzy checkpoint: no page writes, no transaction list — only the
    // unpropagated set, written through the atomic-copy path and then named
    // by the master record.
    Lsn take_checkpoint() {
        std::vector<std::pair<PageId, Lsn>> entries;
        pool_.for_each_resident([&](BufferFrame& f) {
            if (f.stored_lsn() == kVirginStoredLsn) return;
            if (f.is_propagated()) return;
            const auto p = f.propagated_stored();
            entries.emplace_back(f.pid(), p == kNeverPropagated ? 0 : from_stored_lsn(p));
        });
        std::sort(entries.begin(), entries.end());

        const auto info = tm_.run_system_txn([&](Transaction& t) {
            constexpr std::size_t kMaxPerRecord = 0xFFFF / 16;
            std::size_t at = 0;
            do {
                const std::size_t n = std::min(kMaxPerRecord, entries.size() - at);
                LogRecord rec;
                rec.type = LogRecordType::Checkpoint;
                rec.page_id = kNullPage;
                rec.redo = encode_checkpoint_entries(
                    std::span<const std::pair<PageId, Lsn>>(entries).subspan(at, n));
                tm_.append_raw(t, std::move(rec));
                at += n;
            } while (at < entries.size());
        });
        plog_.disk().write_master(info.first_record_lsn);
        stats_.checkpoints.fetch_add(1);
        return info.first_record_lsn;
    }

  private:
    void configurable_wait() {
        if (cfg_.spr_wait.count() == 0) return;
        std::unique_lock g(stop_mtx_);
        stop_cv_.wait_for(g, cfg_.spr_wait, [&] { return stopping_; });
    }

    void cleaner_loop() {
        for (;;) {
            {
                std::unique_lock g(stop_mtx_);
                cleaner_idle_ = true;
                stop_cv_.notify_all();
                stop_cv_.wait_for(g, cfg_.cleaner_interval, [&] { return stopping_; });
                if (stopping_) return;
                if (paused_) continue;
                cleaner_idle_ = false;
            }
            try {
                clean_pass(cfg_.cleaner_budget);
            } catch (const CrashInjected&) {
                std::lock_guard g(stop_mtx_);
                cleaner_idle_ = true;
                stopping_ = true;
                stop_cv_.notify_all();
                return;
            } catch (const EngineStoppedError&) {
                std::lock_guard g(stop_mtx_);
                cleaner_idle_ = true;
                stop_cv_.notify_all();
                return;
            }
        }
    }

    const Config& cfg_;
    Stats& stats_;
    VolatileLogManager& vlm_;
    PersistentLog& plog_;
    BufferPool& pool_;
    TransactionManager& tm_;
    std::shared_mutex& coord_;

    std::thread cleaner_;
    std::mutex stop_mtx_;
    std::condition_variable stop_cv_;
    bool stopping_ = false;
    bool paused_ = false;
    bool cleaner_idle_ = false;
};

}  // namespace credo
